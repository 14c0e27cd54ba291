#include "dexlet/parser.hpp"

#include <cmath>
#include <cstdlib>
#include <optional>
#include <set>

#include "dexlet/errors.hpp"
#include "dexlet/index_set.hpp"

namespace dexlet {

ExprPtr ElabProgram::whole() const {
  ExprPtr e = finalExpr;
  for (auto it = decls.rbegin(); it != decls.rend(); ++it) {
    e = eLet(it->binder, nullptr, it->bound, e, it->span);
  }
  return e;
}

const ElabDecl* ElabProgram::find(const std::string& name) const {
  for (const auto& d : decls) {
    if (d.surfaceName == name) return &d;
  }
  return nullptr;
}

namespace {

// ---------------------------------------------------------------------------
// Lexer. Shared between surface and core modes; core mode folds name.uid
// pairs into a single token so printed binders round-trip.

enum class TK { Ident, VarUid, IntLit, FloatLit, AtLit, Sym, Eof };

struct Token {
  TK k = TK::Eof;
  std::string text;
  long long i = 0;
  double f = 0;
  std::uint64_t uid = 0;
  int line = 1, col = 1;

  Span span() const { return Span{line, col}; }
};

bool identStart(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool identChar(char c) { return identStart(c) || (c >= '0' && c <= '9') || c == '\''; }
bool digit(char c) { return c >= '0' && c <= '9'; }

std::vector<Token> lex(const std::string& src, bool coreMode) {
  std::vector<Token> out;
  int line = 1, col = 1;
  size_t i = 0;
  auto bump = [&](size_t n) {
    for (size_t k = 0; k < n; ++k) {
      if (src[i + k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    i += n;
  };
  auto push = [&](TK k, std::string text, int l, int c) {
    Token t;
    t.k = k;
    t.text = std::move(text);
    t.line = l;
    t.col = c;
    out.push_back(std::move(t));
    return &out.back();
  };
  auto number = [&](int l, int c, bool neg) {
    size_t start = i;
    while (i < src.size() && digit(src[i])) bump(1);
    bool isFloat = false;
    if (i + 1 < src.size() && src[i] == '.' && digit(src[i + 1])) {
      isFloat = true;
      bump(1);
      while (i < src.size() && digit(src[i])) bump(1);
    }
    if (i < src.size() && (src[i] == 'e' || src[i] == 'E')) {
      size_t j = i + 1;
      if (j < src.size() && (src[j] == '+' || src[j] == '-')) ++j;
      if (j < src.size() && digit(src[j])) {
        isFloat = true;
        bump(j - i);
        while (i < src.size() && digit(src[i])) bump(1);
      }
    }
    std::string text = src.substr(start, i - start);
    if (isFloat) {
      Token* t = push(TK::FloatLit, text, l, c);
      t->f = std::strtod(text.c_str(), nullptr);
      if (neg) t->f = -t->f;
    } else {
      Token* t = push(TK::IntLit, text, l, c);
      t->i = std::strtoll(text.c_str(), nullptr, 10);
      if (neg) t->i = -t->i;
    }
  };

  while (i < src.size()) {
    char c = src[i];
    int l = line, cl = col;
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      bump(1);
      continue;
    }
    if (c == '-' && i + 1 < src.size() && src[i + 1] == '-') {
      while (i < src.size() && src[i] != '\n') bump(1);
      continue;
    }
    if (identStart(c)) {
      size_t start = i;
      while (i < src.size() && identChar(src[i])) bump(1);
      std::string text = src.substr(start, i - start);
      if (text == "inf" || text == "nan") {
        Token* t = push(TK::FloatLit, text, l, cl);
        t->f = text == "inf" ? HUGE_VAL : std::nan("");
        continue;
      }
      if (coreMode && i + 1 < src.size() && src[i] == '.' && digit(src[i + 1])) {
        bump(1);
        size_t ds = i;
        while (i < src.size() && digit(src[i])) bump(1);
        Token* t = push(TK::VarUid, text, l, cl);
        t->uid = std::strtoull(src.substr(ds, i - ds).c_str(), nullptr, 10);
        continue;
      }
      push(TK::Ident, text, l, cl);
      continue;
    }
    if (digit(c)) {
      number(l, cl, false);
      continue;
    }
    if (c == '-' && i + 1 < src.size() && digit(src[i + 1])) {
      bump(1);
      number(l, cl, true);
      continue;
    }
    if (c == '-' && i + 3 < src.size() && src.compare(i + 1, 3, "inf") == 0 &&
        (i + 4 >= src.size() || !identChar(src[i + 4]))) {
      bump(4);
      Token* t = push(TK::FloatLit, "-inf", l, cl);
      t->f = -HUGE_VAL;
      continue;
    }
    if (c == '@' && i + 1 < src.size() && digit(src[i + 1])) {
      bump(1);
      size_t ds = i;
      while (i < src.size() && digit(src[i])) bump(1);
      Token* t = push(TK::AtLit, src.substr(ds, i - ds), l, cl);
      t->i = std::strtoll(t->text.c_str(), nullptr, 10);
      continue;
    }
    auto sym2 = [&](const char* s) {
      if (i + 1 < src.size() && src[i] == s[0] && src[i + 1] == s[1]) {
        push(TK::Sym, s, l, cl);
        bump(2);
        return true;
      }
      return false;
    };
    if (sym2(":=") || sym2("+=") || sym2("->") || sym2("=>")) continue;
    static const std::string singles = "()[]{},.!:=<+-*/$&|\\@";
    if (singles.find(c) != std::string::npos) {
      push(TK::Sym, std::string(1, c), l, cl);
      bump(1);
      continue;
    }
    throw DexError(ErrCode::Parse, std::string("unexpected character '") + c + "'",
                   Span{l, cl});
  }
  push(TK::Eof, "", line, col);
  return out;
}

// ---------------------------------------------------------------------------
// Shared parser state.

struct EV {
  ValuePtr v;
  ValuePtr type;  // may be null when the elaborator cannot tell structurally
  // Pending accumulator plumbing: the root ref binder whose type is still
  // being inferred, plus the index types of slices taken along the way.
  std::uint64_t pendingRoot = 0;
  std::vector<ValuePtr> sliceIdx;
};

const std::set<std::string> kReserved = {"then", "else", "of", "let", "def", "in"};

struct Parser {
  std::vector<Token> toks;
  size_t pos = 0;
  std::string file;

  std::map<std::string, std::vector<Name>> env;
  std::map<std::uint64_t, ValuePtr> varTypes;
  std::map<std::uint64_t, Name> pendingRegion;  // accum ref binder -> region
  int curStmtCol = 1;

  const Token& peek(size_t k = 0) const {
    size_t p = pos + k;
    return p < toks.size() ? toks[p] : toks.back();
  }
  const Token& prevTok() const { return toks[pos == 0 ? 0 : pos - 1]; }
  Token eat() { return toks[pos == toks.size() - 1 ? pos : pos++]; }

  [[noreturn]] void perr(const std::string& msg, const Token& t,
                         ErrCode code = ErrCode::Parse) {
    throw DexError(code, msg, t.span());
  }

  bool isSym(const char* s, size_t k = 0) const {
    const Token& t = peek(k);
    return t.k == TK::Sym && t.text == s;
  }
  bool isIdent(const char* s, size_t k = 0) const {
    const Token& t = peek(k);
    return t.k == TK::Ident && t.text == s;
  }
  void expectSym(const char* s) {
    if (!isSym(s)) perr(std::string("expected '") + s + "'", peek());
    ++pos;
  }
  void expectIdent(const char* s) {
    if (!isIdent(s)) perr(std::string("expected '") + s + "'", peek());
    ++pos;
  }

  // Whether the next token can continue the current expression (same line,
  // or a continuation line indented past the statement start).
  bool cont() const {
    const Token& t = peek();
    if (t.k == TK::Eof) return false;
    return t.line == prevTok().line || t.col > curStmtCol;
  }

  // ----- scoping ----------------------------------------------------------

  void bindName(const std::string& s, const Name& n) { env[s].push_back(n); }
  void unbindName(const std::string& s) {
    auto it = env.find(s);
    if (it != env.end() && !it->second.empty()) it->second.pop_back();
  }
  const Name* lookupName(const std::string& s) const {
    auto it = env.find(s);
    if (it == env.end() || it->second.empty()) return nullptr;
    return &it->second.back();
  }
  ValuePtr typeOf(const Name& n) const {
    auto it = varTypes.find(n.uid);
    return it == varTypes.end() ? nullptr : it->second;
  }

  struct Blk {
    std::vector<Binding> lets;
  };

  ValuePtr emit(Blk& b, ExprPtr e, ValuePtr type, const char* hint = "t") {
    Name n = NameSupply::fresh(hint);
    if (type) varTypes[n.uid] = type;
    Span sp = e ? e->span : Span{};
    b.lets.push_back(Binding{n, nullptr, std::move(e)});
    return vVar(n, sp);
  }

  static ExprPtr finish(Blk& b, ExprPtr result) {
    for (auto it = b.lets.rbegin(); it != b.lets.rend(); ++it) {
      result = eLet(it->binder, it->annot, it->bound, std::move(result));
    }
    return result;
  }

  // ----- surface types ----------------------------------------------------

  ValuePtr parseType() {
    ValuePtr a = parseTypeAtom();
    if (isSym("=>")) {
      ++pos;
      return vArray(a, parseType());
    }
    if (isSym("->")) {
      ++pos;
      EffectRow row;
      if (isSym("{")) row = parseRow();
      ValuePtr cod = parseType();
      return vArrow(NameSupply::fresh("_"), a, row, cod);
    }
    return a;
  }

  EffectRow parseRow() {
    expectSym("{");
    EffectRow row;
    while (!isSym("}")) {
      EffectKind kind;
      if (isIdent("State")) {
        kind = EffectKind::State;
      } else if (isIdent("Accum")) {
        kind = EffectKind::Accum;
      } else {
        perr("expected State or Accum in effect row", peek());
      }
      ++pos;
      row.entries.push_back({kind, parseSizeAtom()});
      if (isSym(",")) ++pos;
    }
    ++pos;
    return row;
  }

  ValuePtr parseSizeAtom() {
    const Token& t = peek();
    if (t.k == TK::IntLit) {
      ++pos;
      return vInt(t.i);
    }
    if (t.k == TK::Ident) {
      const Name* n = lookupName(t.text);
      if (!n) perr("unbound variable '" + t.text + "'", t, ErrCode::UnboundVariable);
      ++pos;
      return vVar(*n, t.span());
    }
    if (isSym("(")) {
      ++pos;
      ValuePtr v = parseSizeAtom();
      expectSym(")");
      return v;
    }
    perr("expected a size", t);
  }

  ValuePtr parseTypeAtom() {
    const Token& t = peek();
    if (t.k == TK::Ident) {
      if (t.text == "Float") { ++pos; return vBase(BaseKind::Float); }
      if (t.text == "Int") { ++pos; return vBase(BaseKind::Int); }
      if (t.text == "Unit") { ++pos; return vBase(BaseKind::Unit); }
      if (t.text == "Type") { ++pos; return vBase(BaseKind::Type); }
      if (t.text == "Bool") {
        ++pos;
        return vEitherType(vBase(BaseKind::Unit), vBase(BaseKind::Unit));
      }
      if (t.text == "Fin") {
        ++pos;
        return vFin(parseSizeAtom());
      }
      if (t.text == "Either") {
        ++pos;
        ValuePtr l = parseTypeAtom();
        return vEitherType(l, parseTypeAtom());
      }
      const Name* n = lookupName(t.text);
      if (!n) perr("unbound type variable '" + t.text + "'", t, ErrCode::UnboundVariable);
      ++pos;
      return vVar(*n, t.span());
    }
    if (isSym("(")) {
      ++pos;
      ValuePtr a = parseType();
      if (isSym("&")) {
        ++pos;
        ValuePtr b = parseType();
        expectSym(")");
        return vPairType(a, b);
      }
      expectSym(")");
      return a;
    }
    perr("expected a type", t);
  }

  // ----- structural type helpers -----------------------------------------

  static ValuePtr arrayDom(const ValuePtr& t) {
    const auto* a = as<VArrayType>(t);
    return a ? a->dom : nullptr;
  }
  static ValuePtr arrayCod(const ValuePtr& t) {
    const auto* a = as<VArrayType>(t);
    return a ? a->cod : nullptr;
  }

  void fillSlot(const ValuePtr& var, const ValuePtr& type) {
    const auto* v = as<VVar>(var);
    if (!v || !type) return;
    if (varTypes.find(v->name.uid) == varTypes.end()) varTypes[v->name.uid] = type;
  }

  // ----- expressions ------------------------------------------------------

  EV elabExpr(Blk& b, ValuePtr expected = nullptr) {
    EV lhs = elabLow(b, expected);
    while (isSym("$") && cont()) {
      ++pos;
      EV rhs = elabExpr(b);
      lhs = apply(b, lhs, rhs, peek().span());
    }
    return lhs;
  }

  EV elabLow(Blk& b, ValuePtr expected = nullptr) {
    if (isSym("\\")) return elabLam(b);
    if (isIdent("for")) return elabFor(b, false);
    if (isIdent("view")) return elabFor(b, true);
    if (isIdent("case")) return elabCase(b);
    if (isIdent("if")) return elabIf(b);
    return elabCmp(b, expected);
  }

  EV elabCmp(Blk& b, ValuePtr expected = nullptr) {
    EV l = elabAdd(b, expected);
    while (isSym("<") && cont()) {
      Span sp = eat().span();
      EV r = elabAdd(b);
      fillSlot(l.v, vBase(BaseKind::Float));
      fillSlot(r.v, vBase(BaseKind::Float));
      ValuePtr boolT = vEitherType(vBase(BaseKind::Unit), vBase(BaseKind::Unit));
      l = EV{emit(b, eBin(BinOp::Less, l.v, r.v, sp), boolT), boolT};
    }
    return l;
  }

  EV elabAdd(Blk& b, ValuePtr expected = nullptr) {
    EV l = elabMul(b, expected);
    while ((isSym("+") || isSym("-")) && cont()) {
      BinOp op = peek().text == "+" ? BinOp::Add : BinOp::Sub;
      Span sp = eat().span();
      EV r = elabMul(b);
      fillSlot(l.v, vBase(BaseKind::Float));
      fillSlot(r.v, vBase(BaseKind::Float));
      ValuePtr t = l.type ? l.type : r.type;
      l = EV{emit(b, eBin(op, l.v, r.v, sp), t), t};
    }
    return l;
  }

  EV elabMul(Blk& b, ValuePtr expected = nullptr) {
    EV l = elabApp(b, expected);
    while ((isSym("*") || isSym("/")) && cont()) {
      BinOp op = peek().text == "*" ? BinOp::Mul : BinOp::Div;
      Span sp = eat().span();
      EV r = elabApp(b);
      fillSlot(l.v, vBase(BaseKind::Float));
      fillSlot(r.v, vBase(BaseKind::Float));
      ValuePtr t = l.type ? l.type : r.type;
      l = EV{emit(b, eBin(op, l.v, r.v, sp), t), t};
    }
    return l;
  }

  bool atomStart() const {
    const Token& t = peek();
    switch (t.k) {
      case TK::IntLit:
      case TK::FloatLit:
      case TK::AtLit:
        return true;
      case TK::Ident:
        return kReserved.find(t.text) == kReserved.end();
      case TK::Sym:
        return t.text == "(" || t.text == "[";
      default:
        return false;
    }
  }

  EV apply(Blk& b, EV f, EV a, Span sp) {
    ValuePtr resT;
    if (const auto* arr = as<VArrow>(f.type)) {
      resT = substValue(arr->cod, arr->binder, a.v);
      fillSlot(a.v, arr->dom);
    }
    return EV{emit(b, eApp(f.v, a.v, sp), resT), resT};
  }

  EV indexInto(Blk& b, EV arr, EV idx, Span sp) {
    ValuePtr dom = arrayDom(arr.type);
    ValuePtr cod = arrayCod(arr.type);
    if (dom) fillSlot(idx.v, dom);
    return EV{emit(b, eIndex(arr.v, idx.v, sp), cod, "e"), cod};
  }

  EV sliceInto(Blk& b, EV ref, EV idx, Span sp) {
    EV out;
    ValuePtr resT;
    if (const auto* rt = as<VRefType>(ref.type)) {
      ValuePtr dom = arrayDom(rt->payload);
      ValuePtr cod = arrayCod(rt->payload);
      if (dom) fillSlot(idx.v, dom);
      if (cod) resT = vRef(rt->region, cod);
    } else if (ref.pendingRoot) {
      out.pendingRoot = ref.pendingRoot;
      out.sliceIdx = ref.sliceIdx;
      ValuePtr idxT = idx.type;
      if (const auto* iv = as<VVar>(idx.v); iv && !idxT) idxT = typeOf(iv->name);
      out.sliceIdx.push_back(idxT);
    }
    out.v = emit(b, eSlice(ref.v, idx.v, sp), resT, "r");
    out.type = resT;
    return out;
  }

  // Postfix `.idx` / `!idx` chains, tightest level.
  EV elabPostfix(Blk& b, ValuePtr expected = nullptr) {
    EV a = elabAtom(b, expected);
    while ((isSym(".") || isSym("!")) && cont()) {
      bool slice = peek().text == "!";
      Span sp = eat().span();
      ValuePtr dom;
      if (slice) {
        if (const auto* rt = as<VRefType>(a.type)) dom = arrayDom(rt->payload);
      } else {
        dom = arrayDom(a.type);
      }
      EV idx = elabIndexAtom(b, dom);
      a = slice ? sliceInto(b, a, idx, sp) : indexInto(b, a, idx, sp);
    }
    return a;
  }

  EV elabIndexAtom(Blk& b, ValuePtr expectedDom) {
    const Token& t = peek();
    if (t.k == TK::AtLit) {
      ++pos;
      const auto* fin = as<VFinType>(expectedDom);
      if (!fin) perr("'@' index literal needs a Fin-typed position", t);
      return EV{vFinLit(t.i, fin->size), expectedDom};
    }
    if (t.k == TK::IntLit) {
      perr("integer literals are not index values", t);
    }
    return elabAtom(b, expectedDom);
  }

  EV elabApp(Blk& b, ValuePtr expected = nullptr) {
    if (peek().k == TK::Ident) {
      EV kw;
      if (elabKeywordForm(b, kw)) return kw;
    }
    EV f = elabPostfix(b, expected);
    while (atomStart() && cont()) {
      Span sp = peek().span();
      EV a = elabPostfix(b, f.type ? arrowDomOf(f.type) : nullptr);
      f = apply(b, f, a, sp);
    }
    return f;
  }

  static ValuePtr arrowDomOf(const ValuePtr& t) {
    const auto* a = as<VArrow>(t);
    return a ? a->dom : nullptr;
  }

  // Keyword-led application forms; returns false when the head is an
  // ordinary identifier.
  bool elabKeywordForm(Blk& b, EV& out) {
    const Token& t = peek();
    const std::string& s = t.text;
    Span sp = t.span();
    auto unary = [&](auto make, const char* what) {
      ++pos;
      EV a = elabPostfix(b);
      (void)what;
      out = make(a, sp);
      return true;
    };
    if (s == "get") {
      return unary(
          [&](EV a, Span p) {
            ValuePtr resT;
            if (const auto* rt = as<VRefType>(a.type)) resT = rt->payload;
            return EV{emit(b, eGet(a.v, p), resT, "s"), resT};
          },
          "get");
    }
    if (s == "fst" || s == "snd") {
      bool first = s == "fst";
      ++pos;
      EV a = elabPostfix(b);
      ValuePtr resT;
      if (const auto* pt = as<VPairType>(a.type)) resT = first ? pt->l : pt->r;
      ExprPtr e = first ? eFst(a.v, sp) : eSnd(a.v, sp);
      out = EV{emit(b, std::move(e), resT), resT};
      return true;
    }
    if (s == "ord") {
      return unary(
          [&](EV a, Span p) {
            ValuePtr it = vBase(BaseKind::Int);
            return EV{emit(b, eUn(UnOp::Ordinal, a.v, p), it), it};
          },
          "ord");
    }
    if (s == "itof") {
      return unary(
          [&](EV a, Span p) {
            ValuePtr ft = vBase(BaseKind::Float);
            return EV{emit(b, eUn(UnOp::IntToFloat, a.v, p), ft), ft};
          },
          "itof");
    }
    if (s == "reverse") {
      return unary(
          [&](EV a, Span p) {
            return EV{emit(b, eUn(UnOp::ReverseIndex, a.v, p), a.type), a.type};
          },
          "reverse");
    }
    if (s == "sum") {
      ++pos;
      EV xs = elabPostfix(b);
      out = elabSum(b, xs, sp);
      return true;
    }
    if (s == "runState" || s == "yieldState") {
      bool yield = s == "yieldState";
      ++pos;
      EV init = elabPostfix(b);
      if (isSym("$")) ++pos;
      EV pair = elabRunState(b, init, sp);
      out = yield ? projectSnd(b, pair, sp) : pair;
      return true;
    }
    if (s == "runAccum" || s == "yieldAccum") {
      bool yield = s == "yieldAccum";
      ++pos;
      if (isSym("$")) ++pos;
      EV pair = elabRunAccum(b, sp);
      out = yield ? projectSnd(b, pair, sp) : pair;
      return true;
    }
    if (s == "linearize") {
      ++pos;
      EV f = elabPostfix(b);
      EV x = elabPostfix(b);
      ValuePtr resT = linResultType(f.type);
      out = EV{emit(b, eLinearize(f.v, x.v, sp), resT, "l"), resT};
      return true;
    }
    if (s == "transpose") {
      ++pos;
      EV f = elabPostfix(b);
      EV ct = elabPostfix(b);
      ValuePtr resT = arrowDomOf(f.type);
      out = EV{emit(b, eTranspose(f.v, ct.v, sp), resT, "ct"), resT};
      return true;
    }
    if (s == "grad") {
      ++pos;
      EV f = elabPostfix(b);
      EV x = elabPostfix(b);
      ValuePtr linT = linResultType(f.type);
      ValuePtr p = emit(b, eLinearize(f.v, x.v, sp), linT, "l");
      ValuePtr mapT = linT ? as<VPairType>(linT)->r : nullptr;
      ValuePtr m = emit(b, eSnd(p, sp), mapT, "lmap");
      ValuePtr resT = arrowDomOf(f.type);
      out = EV{emit(b, eTranspose(m, vFloat(1.0), sp), resT, "g"), resT};
      return true;
    }
    if (s == "Left" || s == "Right") {
      bool left = s == "Left";
      ++pos;
      ValuePtr other = parseTypeAtom();
      EV payload = elabPostfix(b);
      ValuePtr v = left ? vLeft(other, payload.v) : vRight(other, payload.v);
      ValuePtr ty = payload.type
                        ? (left ? vEitherType(payload.type, other)
                                : vEitherType(other, payload.type))
                        : nullptr;
      out = EV{v, ty};
      return true;
    }
    return false;
  }

  static ValuePtr linResultType(const ValuePtr& fnType) {
    const auto* a = as<VArrow>(fnType);
    if (!a) return nullptr;
    // Approximate the tangent map type by the primal arrow shape.
    return vPairType(a->cod, vArrow(NameSupply::fresh("_"), a->dom, {}, a->cod));
  }

  EV projectSnd(Blk& b, EV pair, Span sp) {
    ValuePtr resT;
    if (const auto* pt = as<VPairType>(pair.type)) resT = pt->r;
    return EV{emit(b, eSnd(pair.v, sp), resT), resT};
  }

  EV elabSum(Blk& b, EV xs, Span sp) {
    ValuePtr dom = arrayDom(xs.type);
    ValuePtr elemT = arrayCod(xs.type);
    if (!dom || !elemT) {
      perr("cannot infer the loop domain of 'sum'", peek(), ErrCode::UnannotatedBinder);
    }
    Name h = NameSupply::fresh("h");
    varTypes[h.uid] = vBase(BaseKind::Type);
    Name acc = NameSupply::fresh("acc");
    varTypes[acc.uid] = vRef(vVar(h), elemT);
    Name i = NameSupply::fresh("i");
    varTypes[i.uid] = dom;

    Blk fb;
    ValuePtr xi = emit(fb, eIndex(xs.v, vVar(i), sp), elemT, "x");
    emit(fb, eAccum(vVar(acc), xi, sp), vBase(BaseKind::Unit), "u");
    ExprPtr forBody = finish(fb, eRet(vUnit(), sp));

    Blk ab;
    emit(ab, eFor(i, dom, forBody, sp), vArray(dom, vBase(BaseKind::Unit)), "ls");
    ExprPtr actionBody = finish(ab, eRet(vUnit(), sp));

    Action act{h, acc, vRef(vVar(h), elemT), actionBody};
    ValuePtr pairT = vPairType(vBase(BaseKind::Unit), elemT);
    ValuePtr p = emit(b, eRunAccum(act, sp), pairT, "p");
    return projectSnd(b, EV{p, pairT}, sp);
  }

  // Parses the `\ref. body` handler after runState/runAccum. The state
  // type, when known, annotates the ref; accumulators use pending slots.
  struct Handler {
    Name region, ref;
    ExprPtr body;
    ValuePtr bodyType;
  };

  Handler parseHandler(const Name& region, ValuePtr refType, bool accum) {
    if (!isSym("\\")) perr("expected a handler lambda", peek());
    ++pos;
    const Token& bt = peek();
    if (bt.k != TK::Ident) perr("expected a handler binder", bt);
    ++pos;
    Name ref = NameSupply::fresh(bt.text);
    if (refType) varTypes[ref.uid] = refType;
    if (accum) pendingRegion[ref.uid] = region;
    expectSym(".");
    bindName(bt.text, ref);
    auto [body, bodyType] = bodyAfterDot();
    unbindName(bt.text);
    return Handler{region, ref, std::move(body), bodyType};
  }

  Name freshRegion() {
    Name region = NameSupply::fresh("h");
    varTypes[region.uid] = vBase(BaseKind::Type);
    return region;
  }

  EV elabRunState(Blk& b, EV init, Span sp) {
    Name region = freshRegion();
    ValuePtr refT = init.type ? vRef(vVar(region), init.type) : nullptr;
    Handler hd = parseHandler(region, refT, false);
    Action act{hd.region, hd.ref, refT, hd.body};
    ValuePtr pairT =
        hd.bodyType && init.type ? vPairType(hd.bodyType, init.type) : nullptr;
    return EV{emit(b, eRunState(init.v, act, sp), pairT, "p"), pairT};
  }

  EV elabRunAccum(Blk& b, Span sp) {
    Name region = freshRegion();
    Handler hd = parseHandler(region, nullptr, true);
    ValuePtr refT = typeOf(hd.ref);
    const auto* rt = as<VRefType>(refT);
    if (!rt) {
      perr("cannot infer the accumulator type; no '+=' fixed it",
           peek(), ErrCode::UnannotatedBinder);
    }
    Action act{hd.region, hd.ref, refT, hd.body};
    ValuePtr pairT = hd.bodyType ? vPairType(hd.bodyType, rt->payload) : nullptr;
    return EV{emit(b, eRunAccum(act, sp), pairT, "p"), pairT};
  }

  EV elabLam(Blk& b) {
    expectSym("\\");
    return elabBinders(b, 0);
  }

  // kind: 0 lambda, 1 for, 2 view.
  EV elabFor(Blk& b, bool view) {
    ++pos;  // for / view
    return elabBinders(b, view ? 2 : 1);
  }

  EV elabBinders(Blk& b, int kind) {
    const Token& bt = peek();
    std::string surf = "_";
    if (bt.k == TK::Ident) {
      surf = bt.text;
      ++pos;
    } else if (isSym("_")) {
      ++pos;
    } else {
      perr("expected a binder", bt);
    }
    ValuePtr annot;
    if (isSym(":")) {
      ++pos;
      annot = parseTypeAtom();
    }
    Name binder = NameSupply::fresh(surf);
    if (annot) varTypes[binder.uid] = annot;
    if (surf != "_") bindName(surf, binder);

    ExprPtr body;
    ValuePtr bodyType;
    if (isSym(".")) {
      ++pos;
      auto r = bodyAfterDot();
      body = r.first;
      bodyType = r.second;
    } else {
      // More binders before the dot: nest the same construct.
      Blk inner;
      EV nested = elabBinders(inner, kind);
      body = finish(inner, eRet(nested.v));
      bodyType = nested.type;
    }
    if (surf != "_") unbindName(surf);

    ValuePtr bAnnot = typeOf(binder);
    if (!bAnnot) {
      perr("cannot infer a type for binder '" + surf + "'; annotate it",
           bt, ErrCode::UnannotatedBinder);
    }
    if (kind == 0) {
      ValuePtr ty = bodyType ? vArrow(binder, bAnnot, {}, bodyType) : nullptr;
      return EV{vLam(binder, bAnnot, body), ty};
    }
    ValuePtr ty = bodyType ? vArray(bAnnot, bodyType) : nullptr;
    if (kind == 2) return EV{vView(binder, bAnnot, body), ty};
    return EV{emit(b, eFor(binder, bAnnot, body, bt.span()), ty, "a"), ty};
  }

  EV elabCase(Blk& b) {
    Span sp = eat().span();  // case
    EV scrut = elabCmp(b);
    expectIdent("of");
    const auto* et = as<VEitherType>(scrut.type);

    auto branch = [&](const char* ctor, ValuePtr payloadT) {
      int branchCol = peek().col;
      expectIdent(ctor);
      const Token& bt = peek();
      std::string surf = "_";
      if (bt.k == TK::Ident) {
        surf = bt.text;
        ++pos;
      } else if (isSym("_")) {
        ++pos;
      } else {
        perr("expected a pattern binder", bt);
      }
      Name binder = NameSupply::fresh(surf);
      if (payloadT) varTypes[binder.uid] = payloadT;
      expectSym("->");
      if (surf != "_") bindName(surf, binder);
      int sc = curStmtCol;
      curStmtCol = branchCol;
      auto r = rhsBlockOrInline();
      curStmtCol = sc;
      if (surf != "_") unbindName(surf);
      return std::tuple<Name, ExprPtr, ValuePtr>{binder, r.first, r.second};
    };

    auto [lb, lbody, ltype] = branch("Left", et ? et->l : nullptr);
    auto [rb, rbody, rtype] = branch("Right", et ? et->r : nullptr);
    ValuePtr resT = ltype ? ltype : rtype;
    return EV{emit(b, eCase(scrut.v, lb, lbody, rb, rbody, sp), resT, "c"), resT};
  }

  EV elabIf(Blk& b) {
    Span sp = eat().span();  // if
    EV cond = elabCmp(b);
    expectIdent("then");
    Blk tb;
    EV tv = elabExpr(tb);
    ExprPtr thenE = finish(tb, eRet(tv.v, sp));
    expectIdent("else");
    Blk eb;
    EV ev = elabLow(eb);
    ExprPtr elseE = finish(eb, eRet(ev.v, sp));
    Name lb = NameSupply::fresh("_f");
    Name rb = NameSupply::fresh("_t");
    varTypes[lb.uid] = vBase(BaseKind::Unit);
    varTypes[rb.uid] = vBase(BaseKind::Unit);
    ValuePtr resT = tv.type ? tv.type : ev.type;
    return EV{emit(b, eCase(cond.v, lb, elseE, rb, thenE, sp), resT, "c"), resT};
  }

  EV elabAtom(Blk& b, ValuePtr expected = nullptr) {
    const Token& t = peek();
    Span sp = t.span();
    switch (t.k) {
      case TK::FloatLit:
        ++pos;
        return EV{vFloat(t.f), vBase(BaseKind::Float)};
      case TK::IntLit:
        ++pos;
        if (isBase(expected, BaseKind::Float)) {
          return EV{vFloat(static_cast<double>(t.i)), vBase(BaseKind::Float)};
        }
        return EV{vInt(t.i), vBase(BaseKind::Int)};
      case TK::AtLit: {
        ++pos;
        const auto* fin = as<VFinType>(expected);
        if (!fin) perr("'@' index literal needs a Fin-typed context", t);
        return EV{vFinLit(t.i, fin->size), expected};
      }
      case TK::Ident: {
        if (t.text == "True" || t.text == "False") {
          ++pos;
          ValuePtr u = vBase(BaseKind::Unit);
          ValuePtr v = t.text == "True" ? vRight(u, vUnit()) : vLeft(u, vUnit());
          return EV{v, vEitherType(u, u)};
        }
        const Name* n = lookupName(t.text);
        if (!n) perr("unbound variable '" + t.text + "'", t, ErrCode::UnboundVariable);
        ++pos;
        EV out{vVar(*n, sp), typeOf(*n)};
        if (pendingRegion.count(n->uid) && !out.type) out.pendingRoot = n->uid;
        return out;
      }
      case TK::Sym:
        if (t.text == "(") {
          ++pos;
          if (isSym(")")) {
            ++pos;
            return EV{vUnit(), vBase(BaseKind::Unit)};
          }
          if (peek().k == TK::AtLit && pos + 1 < toks.size() &&
              toks[pos + 1].k == TK::Sym && toks[pos + 1].text == ":") {
            const Token& at = eat();
            ++pos;
            ValuePtr ty = parseType();
            expectSym(")");
            const auto* fin = as<VFinType>(ty);
            if (!fin) perr("'@' index literal needs a Fin type", at);
            return EV{vFinLit(at.i, fin->size), ty};
          }
          const auto* pt = as<VPairType>(expected);
          EV a = elabExpr(b, pt ? pt->l : nullptr);
          if (isSym(":")) {
            ++pos;
            ValuePtr ty = parseType();
            expectSym(")");
            a.type = ty;
            return a;
          }
          if (isSym(",")) {
            ++pos;
            EV c = elabExpr(b, pt ? pt->r : nullptr);
            expectSym(")");
            ValuePtr ty = a.type && c.type ? vPairType(a.type, c.type) : nullptr;
            return EV{vPair(a.v, c.v), ty};
          }
          expectSym(")");
          return a;
        }
        if (t.text == "[") {
          ++pos;
          ValuePtr elemExpected = arrayCod(expected);
          ValuePtr domExpected = arrayDom(expected);
          std::vector<ValuePtr> elems;
          ValuePtr elemT = elemExpected;
          while (!isSym("]")) {
            EV e = elabExpr(b, elemT);
            elems.push_back(e.v);
            if (!elemT) elemT = e.type;
            if (isSym(",")) ++pos;
          }
          ++pos;
          ValuePtr dom = domExpected ? domExpected
                                     : vFin(vInt(static_cast<long long>(elems.size())));
          ValuePtr ty = elemT ? vArray(dom, elemT) : nullptr;
          return EV{vTableLit(dom, std::move(elems)), ty};
        }
        break;
      default:
        break;
    }
    perr("expected an expression", t);
  }

  // ----- statements and blocks -------------------------------------------

  std::pair<ExprPtr, ValuePtr> rhsBlockOrInline(ValuePtr expected = nullptr) {
    const Token& t = peek();
    if (t.line == prevTok().line) {
      Blk b;
      EV r = elabExpr(b, expected);
      if (isSym(":=")) {
        Span sp = eat().span();
        EV rhs = elabExpr(b);
        emit(b, ePut(r.v, rhs.v, sp), vBase(BaseKind::Unit), "u");
        return {finish(b, eRet(vUnit(), sp)), vBase(BaseKind::Unit)};
      }
      if (isSym("+=")) {
        Span sp = eat().span();
        EV rhs = elabExpr(b);
        resolvePendingAccum(r, rhs);
        emit(b, eAccum(r.v, rhs.v, sp), vBase(BaseKind::Unit), "u");
        return {finish(b, eRet(vUnit(), sp)), vBase(BaseKind::Unit)};
      }
      return {finish(b, eRet(r.v, t.span())), expected ? expected : r.type};
    }
    if (t.col <= curStmtCol) perr("expected an indented block", t);
    return blockBody(t.col);
  }

  std::pair<ExprPtr, ValuePtr> bodyAfterDot() { return rhsBlockOrInline(); }

  struct Pattern {
    std::string name;  // empty for wildcard and pairs
    bool wild = false;
    std::unique_ptr<Pattern> l, r;
  };

  // Attempts to read a pattern followed by '='; restores position on failure.
  std::optional<Pattern> tryPattern() {
    size_t save = pos;
    auto parsePat = [&](auto&& self) -> std::optional<Pattern> {
      Pattern p;
      if (isSym("_")) {
        ++pos;
        p.wild = true;
        return p;
      }
      if (peek().k == TK::Ident && kReserved.find(peek().text) == kReserved.end()) {
        p.name = peek().text;
        ++pos;
        return p;
      }
      if (isSym("(")) {
        ++pos;
        auto a = self(self);
        if (!a || !isSym(",")) return std::nullopt;
        ++pos;
        auto c = self(self);
        if (!c || !isSym(")")) return std::nullopt;
        ++pos;
        p.l = std::make_unique<Pattern>(std::move(*a));
        p.r = std::make_unique<Pattern>(std::move(*c));
        return p;
      }
      return std::nullopt;
    };
    auto p = parsePat(parsePat);
    bool isPair = p && p->l != nullptr;
    // Plain `name =` bindings are handled by the caller; only claim the
    // statement when it is a pair pattern.
    if (p && isPair && isSym("=")) return p;
    pos = save;
    return std::nullopt;
  }

  void bindPattern(Blk& b, const Pattern& p, EV val,
                   std::vector<std::string>& bound) {
    if (p.wild) return;
    if (!p.name.empty()) {
      Name n = NameSupply::fresh(p.name);
      if (val.type) varTypes[n.uid] = val.type;
      b.lets.push_back(Binding{n, nullptr, eRet(val.v)});
      bindName(p.name, n);
      bound.push_back(p.name);
      return;
    }
    const auto* pt = as<VPairType>(val.type);
    ValuePtr lt = pt ? pt->l : nullptr;
    ValuePtr rt = pt ? pt->r : nullptr;
    ValuePtr lv = emit(b, eFst(val.v), lt);
    ValuePtr rv = emit(b, eSnd(val.v), rt);
    bindPattern(b, *p.l, EV{lv, lt}, bound);
    bindPattern(b, *p.r, EV{rv, rt}, bound);
  }

  std::pair<ExprPtr, ValuePtr> blockBody(int col) {
    Blk b;
    std::vector<std::string> bound;
    bool haveResult = false;
    EV result;
    while (peek().k != TK::Eof && peek().col == col) {
      if (peek().col != col) break;
      curStmtCol = col;
      haveResult = false;
      // Pair-pattern binding.
      if (auto pat = tryPattern()) {
        expectSym("=");
        int save = curStmtCol;
        auto rhs = rhsBlockOrInline();
        curStmtCol = save;
        ValuePtr tmp = emit(b, rhs.first, rhs.second);
        bindPattern(b, *pat, EV{tmp, rhs.second}, bound);
        continue;
      }
      // Plain binding: name = rhs, name : T = rhs.
      if (peek().k == TK::Ident && kReserved.find(peek().text) == kReserved.end() &&
          (isSym("=", 1) || isSym(":", 1))) {
        size_t save = pos;
        std::string nm = eat().text;
        ValuePtr annot;
        bool isBinding = true;
        if (isSym(":")) {
          ++pos;
          // Could be an annotated binding or not a binding at all; a type
          // must follow and then '='.
          try {
            annot = parseType();
          } catch (const DexError&) {
            isBinding = false;
          }
          if (isBinding && !isSym("=")) isBinding = false;
        }
        if (isBinding && isSym("=")) {
          ++pos;
          int sc = curStmtCol;
          auto rhs = rhsBlockOrInline(annot);
          curStmtCol = sc;
          Name n = NameSupply::fresh(nm);
          ValuePtr ty = annot ? annot : rhs.second;
          if (ty) varTypes[n.uid] = ty;
          b.lets.push_back(Binding{n, annot, rhs.first});
          bindName(nm, n);
          bound.push_back(nm);
          continue;
        }
        pos = save;
      }
      // Wildcard statement: _ = rhs.
      if (isSym("_") && isSym("=", 1)) {
        pos += 2;
        int sc = curStmtCol;
        auto rhs = rhsBlockOrInline();
        curStmtCol = sc;
        emit(b, rhs.first, rhs.second, "u");
        continue;
      }
      // Expression statement, possibly := / += .
      EV e = elabExpr(b);
      if (isSym(":=")) {
        Span sp = eat().span();
        EV rhs = elabExpr(b);
        emit(b, ePut(e.v, rhs.v, sp), vBase(BaseKind::Unit), "u");
        continue;
      }
      if (isSym("+=")) {
        Span sp = eat().span();
        EV rhs = elabExpr(b);
        resolvePendingAccum(e, rhs);
        emit(b, eAccum(e.v, rhs.v, sp), vBase(BaseKind::Unit), "u");
        continue;
      }
      result = e;
      haveResult = true;
    }
    for (auto it = bound.rbegin(); it != bound.rend(); ++it) unbindName(*it);
    if (!haveResult) {
      return {finish(b, eRet(vUnit())), vBase(BaseKind::Unit)};
    }
    return {finish(b, eRet(result.v)), result.type};
  }

  // Fills a pending accumulator binder's type from its first `+=`.
  void resolvePendingAccum(const EV& lhs, const EV& rhs) {
    std::uint64_t root = lhs.pendingRoot;
    if (!root) {
      if (const auto* v = as<VVar>(lhs.v);
          v && pendingRegion.count(v->name.uid) && !typeOf(v->name)) {
        root = v->name.uid;
      } else {
        return;
      }
    }
    if (!rhs.type) return;
    ValuePtr payload = rhs.type;
    const auto& idxs = lhs.sliceIdx;
    for (auto it = idxs.rbegin(); it != idxs.rend(); ++it) {
      if (!*it) return;
      payload = vArray(*it, payload);
    }
    Name region = pendingRegion[root];
    varTypes[root] = vRef(vVar(region), payload);
  }

  // ----- top level --------------------------------------------------------

  ElabProgram program() {
    ElabProgram prog;
    if (peek().k == TK::Eof) perr("empty program", peek());
    int col = peek().col;
    bool haveFinal = false;
    while (peek().k != TK::Eof) {
      const Token& t = peek();
      if (t.col != col) perr("unexpected indentation at top level", t);
      curStmtCol = col;
      if (isIdent("def")) {
        parseDef(prog, col);
        continue;
      }
      if (t.k == TK::Ident && kReserved.find(t.text) == kReserved.end() &&
          (isSym("=", 1) || isSym(":", 1))) {
        size_t save = pos;
        std::string nm = eat().text;
        ValuePtr annot;
        bool isBinding = true;
        if (isSym(":")) {
          ++pos;
          try {
            annot = parseType();
          } catch (const DexError&) {
            isBinding = false;
          }
          if (isBinding && !isSym("=")) isBinding = false;
        }
        if (isBinding && isSym("=")) {
          ++pos;
          auto rhs = rhsBlockOrInline(annot);
          curStmtCol = col;
          addDecl(prog, nm, annot, rhs, t.span());
          continue;
        }
        pos = save;
      }
      // Final bare expression.
      Blk b;
      EV e = elabExpr(b);
      prog.finalExpr = finish(b, eRet(e.v, t.span()));
      haveFinal = true;
      if (peek().k != TK::Eof) perr("unexpected trailing input", peek());
    }
    if (!haveFinal) {
      if (prog.decls.empty()) perr("empty program", peek());
      const ElabDecl& last = prog.decls.back();
      prog.finalExpr = eRet(vVar(last.binder));
    }
    return prog;
  }

  void addDecl(ElabProgram& prog, const std::string& nm, ValuePtr annot,
               std::pair<ExprPtr, ValuePtr>& rhs, Span sp) {
    Name n = NameSupply::fresh(nm);
    ValuePtr ty = annot ? annot : rhs.second;
    if (ty) varTypes[n.uid] = ty;
    bindName(nm, n);
    prog.decls.push_back(ElabDecl{nm, n, ty, rhs.first, sp});
  }

  // def f (x : T) (y : U) : R = body  desugars to nested lambdas.
  void parseDef(ElabProgram& prog, int col) {
    Span sp = eat().span();  // def
    if (peek().k != TK::Ident) perr("expected a function name", peek());
    std::string nm = eat().text;
    struct Param {
      std::string name;
      ValuePtr type;
    };
    std::vector<Param> params;
    while (isSym("(")) {
      ++pos;
      if (peek().k != TK::Ident) perr("expected a parameter name", peek());
      std::string pn = eat().text;
      expectSym(":");
      ValuePtr pt = parseType();
      expectSym(")");
      params.push_back({pn, pt});
    }
    if (params.empty()) perr("'def' needs at least one parameter", peek());
    if (isSym(":")) {
      ++pos;
      parseType();  // declared result type; checked by the typechecker pass
    }
    expectSym("=");
    std::vector<Name> binders;
    for (const auto& p : params) {
      Name n = NameSupply::fresh(p.name);
      varTypes[n.uid] = p.type;
      bindName(p.name, n);
      binders.push_back(n);
    }
    auto body = rhsBlockOrInline();
    curStmtCol = col;
    for (const auto& p : params) unbindName(p.name);

    ExprPtr cur = body.first;
    ValuePtr ty = body.second;
    for (size_t k = params.size(); k-- > 0;) {
      ValuePtr lam = vLam(binders[k], params[k].type, cur);
      ty = ty ? vArrow(binders[k], params[k].type, {}, ty) : nullptr;
      cur = eRet(lam, sp);
    }
    std::pair<ExprPtr, ValuePtr> rhs{cur, ty};
    addDecl(prog, nm, nullptr, rhs, sp);
  }

  // ----- core-mode parsing (canonical printer round trip) -----------------

  Name coreName() {
    const Token& t = peek();
    if (t.k != TK::VarUid) perr("expected a core binder (name.uid)", t);
    ++pos;
    return Name{t.text, t.uid};
  }

  ExprPtr coreBlock(int col) {
    std::vector<Binding> lets;
    while (isIdent("let") && peek().col == col) {
      ++pos;
      Name binder = coreName();
      ValuePtr annot;
      if (isSym(":")) {
        ++pos;
        annot = coreValue();
      }
      expectSym("=");
      ExprPtr bound;
      if (peek().line == prevTok().line) {
        bound = coreStatement();
      } else {
        if (peek().col <= col) perr("expected an indented block", peek());
        bound = coreBlock(peek().col);
      }
      lets.push_back(Binding{binder, annot, std::move(bound)});
    }
    ExprPtr result = coreStatement();
    for (auto it = lets.rbegin(); it != lets.rend(); ++it) {
      result = eLet(it->binder, it->annot, it->bound, std::move(result));
    }
    return result;
  }

  ExprPtr coreBinderBody() {
    if (peek().line == prevTok().line) return coreStatement();
    return coreBlock(peek().col);
  }

  Action coreAction() {
    expectSym("\\");
    Name region = coreName();
    Name ref = coreName();
    expectSym(":");
    ValuePtr annot = coreAtom();
    expectSym(".");
    ExprPtr body = coreBinderBody();
    return Action{region, ref, annot, std::move(body)};
  }

  ExprPtr coreStatement() {

    Span sp = peek().span();
    if (isIdent("for")) {
      ++pos;
      Name binder = coreName();
      expectSym(":");
      ValuePtr annot = coreAtom();
      expectSym(".");
      return eFor(binder, annot, coreBinderBody(), sp);
    }
    if (isIdent("case")) {
      ++pos;
      ValuePtr scrut = coreAtom();
      expectIdent("Left");
      Name lb = coreName();
      expectSym("->");
      ExprPtr lbody = coreBlock(peek().col);
      expectIdent("Right");
      Name rb = coreName();
      expectSym("->");
      ExprPtr rbody = coreBlock(peek().col);
      return eCase(scrut, lb, lbody, rb, rbody, sp);
    }
    if (isIdent("runState")) {
      ++pos;
      ValuePtr init = coreAtom();
      return eRunState(init, coreAction(), sp);
    }
    if (isIdent("runAccum")) {
      ++pos;
      return eRunAccum(coreAction(), sp);
    }
    if (isIdent("get")) { ++pos; return eGet(coreAtom(), sp); }
    if (isIdent("fst")) { ++pos; return eFst(coreAtom(), sp); }
    if (isIdent("snd")) { ++pos; return eSnd(coreAtom(), sp); }
    if (isIdent("ord")) { ++pos; return eUn(UnOp::Ordinal, coreAtom(), sp); }
    if (isIdent("itof")) { ++pos; return eUn(UnOp::IntToFloat, coreAtom(), sp); }
    if (isIdent("reverse")) { ++pos; return eUn(UnOp::ReverseIndex, coreAtom(), sp); }
    if (isIdent("linearize")) {
      ++pos;
      ValuePtr f = coreAtom();
      return eLinearize(f, coreAtom(), sp);
    }
    if (isIdent("transpose")) {
      ++pos;
      ValuePtr f = coreAtom();
      return eTranspose(f, coreAtom(), sp);
    }
    if (coreValueHead()) return eRet(coreValue(), sp);

    ValuePtr a = coreAtom();
    if (isSym(".")) {
      ++pos;
      return eIndex(a, coreAtom(), sp);
    }
    if (isSym("!")) {
      ++pos;
      return eSlice(a, coreAtom(), sp);
    }
    if (isSym(":=")) {
      ++pos;
      return ePut(a, coreValue(), sp);
    }
    if (isSym("+=")) {
      ++pos;
      return eAccum(a, coreValue(), sp);
    }
    if (isSym("+")) { ++pos; return eBin(BinOp::Add, a, coreAtom(), sp); }
    if (isSym("-")) { ++pos; return eBin(BinOp::Sub, a, coreAtom(), sp); }
    if (isSym("*")) { ++pos; return eBin(BinOp::Mul, a, coreAtom(), sp); }
    if (isSym("/")) { ++pos; return eBin(BinOp::Div, a, coreAtom(), sp); }
    if (isSym("<")) { ++pos; return eBin(BinOp::Less, a, coreAtom(), sp); }
    if (isSym("=>")) {
      ++pos;
      return eRet(vArray(a, coreValue()), sp);
    }
    if (coreAtomStart() && peek().line == prevTok().line) {
      return eApp(a, coreAtom(), sp);
    }
    return eRet(a, sp);
  }

  bool coreValueHead() const {
    return isSym("\\") || isIdent("view") || isIdent("Left") || isIdent("Right") ||
           isIdent("vcase") || isIdent("table") || isIdent("Fin") ||
           isIdent("Either") || isIdent("Ref");
  }

  bool coreAtomStart() const {
    const Token& t = peek();
    if (t.k == TK::VarUid || t.k == TK::IntLit || t.k == TK::FloatLit) return true;
    if (t.k == TK::Ident) {
      return t.text == "Type" || t.text == "Unit" || t.text == "Int" ||
             t.text == "Float";
    }
    return t.k == TK::Sym && t.text == "(";
  }

  ValuePtr coreValue() {
    Span sp = peek().span();
    if (isSym("\\")) {
      ++pos;
      Name binder = coreName();
      expectSym(":");
      ValuePtr annot = coreAtom();
      expectSym(".");
      return mkValue(VLam{binder, annot, coreBinderBody()}, sp);
    }
    if (isIdent("view")) {
      ++pos;
      Name binder = coreName();
      expectSym(":");
      ValuePtr annot = coreAtom();
      expectSym(".");
      return mkValue(VView{binder, annot, coreBinderBody()}, sp);
    }
    if (isIdent("Left")) {
      ++pos;
      ValuePtr other = coreAtom();
      return vLeft(other, coreAtom());
    }
    if (isIdent("Right")) {
      ++pos;
      ValuePtr other = coreAtom();
      return vRight(other, coreAtom());
    }
    if (isIdent("vcase")) {
      ++pos;
      ValuePtr s = coreAtom();
      ValuePtr l = coreAtom();
      return vValueCase(s, l, coreAtom());
    }
    if (isIdent("table")) {
      ++pos;
      ValuePtr dom = coreAtom();
      expectSym("[");
      std::vector<ValuePtr> elems;
      while (!isSym("]")) {
        elems.push_back(coreValue());
        if (isSym(",")) ++pos;
      }
      ++pos;
      return vTableLit(dom, std::move(elems));
    }
    if (isIdent("Fin")) {
      ++pos;
      return vFin(coreAtom());
    }
    if (isIdent("Either")) {
      ++pos;
      ValuePtr l = coreAtom();
      return vEitherType(l, coreAtom());
    }
    if (isIdent("Ref")) {
      ++pos;
      ValuePtr region = coreAtom();
      return vRef(region, coreAtom());
    }
    ValuePtr a = coreAtom();
    if (isSym("=>")) {
      ++pos;
      return vArray(a, coreValue());
    }
    return a;
  }

  ValuePtr coreAtom() {
    const Token& t = peek();
    Span sp = t.span();
    if (t.k == TK::VarUid) {
      ++pos;
      return vVar(Name{t.text, t.uid}, sp);
    }
    if (t.k == TK::IntLit) { ++pos; return vInt(t.i); }
    if (t.k == TK::FloatLit) { ++pos; return vFloat(t.f); }
    if (t.k == TK::Ident) {
      if (t.text == "Type") { ++pos; return vBase(BaseKind::Type); }
      if (t.text == "Unit") { ++pos; return vBase(BaseKind::Unit); }
      if (t.text == "Int") { ++pos; return vBase(BaseKind::Int); }
      if (t.text == "Float") { ++pos; return vBase(BaseKind::Float); }
    }
    if (isSym("(")) {
      ++pos;
      if (isSym(")")) {
        ++pos;
        return mkValue(VLitUnit{}, sp);
      }
      if (peek().k == TK::AtLit) {
        long long ord = eat().i;
        expectSym(":");
        expectIdent("Fin");
        ValuePtr size = coreAtom();
        expectSym(")");
        return vFinLit(ord, size);
      }
      ValuePtr a = coreValue();
      if (isSym(",")) {
        ++pos;
        ValuePtr c = coreValue();
        expectSym(")");
        return vPair(a, c);
      }
      if (isSym("&")) {
        ++pos;
        ValuePtr c = coreValue();
        expectSym(")");
        return vPairType(a, c);
      }
      if (isSym(":")) {
        ++pos;
        const auto* v = as<VVar>(a);
        if (!v) perr("expected an arrow binder", peek());
        ValuePtr dom = coreValue();
        expectSym(")");
        expectSym("->");
        EffectRow row;
        if (isSym("{")) row = coreRow();
        ValuePtr cod = coreAtom();
        return vArrow(v->name, dom, row, cod);
      }
      expectSym(")");
      return a;
    }
    perr("expected a value", t);
  }

  EffectRow coreRow() {
    expectSym("{");
    EffectRow row;
    while (!isSym("}")) {
      EffectKind kind;
      if (isIdent("State")) {
        kind = EffectKind::State;
      } else if (isIdent("Accum")) {
        kind = EffectKind::Accum;
      } else {
        perr("expected State or Accum", peek());
      }
      ++pos;
      row.entries.push_back({kind, coreAtom()});
      if (isSym(",")) ++pos;
    }
    ++pos;
    return row;
  }
};

// ---------------------------------------------------------------------------
// Literal point parser for lin/grad command arguments.

ValuePtr parseLit(Parser& p, const ValuePtr& expected) {
  const Token& t = p.peek();
  if (t.k == TK::FloatLit) {
    ++p.pos;
    return vFloat(t.f);
  }
  if (t.k == TK::IntLit) {
    ++p.pos;
    if (isBase(expected, BaseKind::Float)) return vFloat(static_cast<double>(t.i));
    return vInt(t.i);
  }
  if (t.k == TK::AtLit) {
    ++p.pos;
    const auto* fin = as<VFinType>(expected);
    if (!fin) p.perr("'@' literal needs a Fin-typed position", t);
    return vFinLit(t.i, fin->size);
  }
  if (p.isSym("(")) {
    ++p.pos;
    if (p.isSym(")")) {
      ++p.pos;
      return vUnit();
    }
    const auto* pt = as<VPairType>(expected);
    ValuePtr a = parseLit(p, pt ? pt->l : nullptr);
    p.expectSym(",");
    ValuePtr b = parseLit(p, pt ? pt->r : nullptr);
    p.expectSym(")");
    return vPair(a, b);
  }
  if (p.isSym("[")) {
    ++p.pos;
    ValuePtr elemT = Parser::arrayCod(expected);
    std::vector<ValuePtr> elems;
    while (!p.isSym("]")) {
      elems.push_back(parseLit(p, elemT));
      if (p.isSym(",")) ++p.pos;
    }
    ++p.pos;
    ValuePtr dom = Parser::arrayDom(expected);
    if (!dom) dom = vFin(vInt(static_cast<long long>(elems.size())));
    return vTableLit(dom, std::move(elems));
  }
  p.perr("expected a literal value", t);
}

}  // namespace

ElabProgram parseProgram(const std::string& source, const std::string& file) {
  Parser p;
  p.toks = lex(source, false);
  p.file = file;
  return p.program();
}

ExprPtr parseCore(const std::string& source) {
  Parser p;
  p.toks = lex(source, true);
  ExprPtr e = p.coreBlock(p.peek().col);
  if (p.peek().k != TK::Eof) p.perr("unexpected trailing input", p.peek());
  return e;
}

ValuePtr parseValueLiteral(const std::string& text, const ValuePtr& expectedType) {
  Parser p;
  p.toks = lex(text, false);
  ValuePtr v = parseLit(p, expectedType);
  if (p.peek().k != TK::Eof) p.perr("unexpected trailing input", p.peek());
  return v;
}

}  // namespace dexlet
