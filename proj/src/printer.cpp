#include "dexlet/printer.hpp"

#include <charconv>
#include <cmath>

namespace dexlet {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool inlineableV(const ValuePtr& v);

bool inlineableE(const ExprPtr& e) {
  if (!e) return true;
  return std::visit(
      overloaded{
          [](const ERet& r) { return inlineableV(r.value); },
          [](const ELet&) { return false; },
          [](const EApp& a) { return inlineableV(a.fn) && inlineableV(a.arg); },
          [](const EIndex& i) { return inlineableV(i.arr) && inlineableV(i.idx); },
          [](const EFor& f) { return inlineableV(f.annot) && inlineableE(f.body); },
          [](const EFst& f) { return inlineableV(f.v); },
          [](const ESnd& f) { return inlineableV(f.v); },
          [](const ECase&) { return false; },
          [](const ESlice& s) { return inlineableV(s.ref) && inlineableV(s.idx); },
          [](const ERunState& r) {
            return inlineableV(r.init) && inlineableV(r.action.refAnnot) &&
                   inlineableE(r.action.body);
          },
          [](const EGet& g) { return inlineableV(g.ref); },
          [](const EPut& p) { return inlineableV(p.ref) && inlineableV(p.value); },
          [](const ERunAccum& r) {
            return inlineableV(r.action.refAnnot) && inlineableE(r.action.body);
          },
          [](const EAccum& a) { return inlineableV(a.ref) && inlineableV(a.value); },
          [](const EBinOp& b) { return inlineableV(b.l) && inlineableV(b.r); },
          [](const EUnOp& u) { return inlineableV(u.v); },
          [](const ELinearize& l) { return inlineableV(l.fn) && inlineableV(l.point); },
          [](const ETranspose& t) { return inlineableV(t.fn) && inlineableV(t.cotangent); },
      },
      e->node);
}

bool inlineableV(const ValuePtr& v) {
  if (!v) return true;
  return std::visit(
      overloaded{
          [](const VVar&) { return true; },
          [](const VLitFloat&) { return true; },
          [](const VLitInt&) { return true; },
          [](const VLitUnit&) { return true; },
          [](const VBase&) { return true; },
          [](const VFinType& f) { return inlineableV(f.size); },
          [](const VArrow& a) { return inlineableV(a.dom) && inlineableV(a.cod); },
          [](const VArrayType& a) { return inlineableV(a.dom) && inlineableV(a.cod); },
          [](const VPairType& p) { return inlineableV(p.l) && inlineableV(p.r); },
          [](const VEitherType& p) { return inlineableV(p.l) && inlineableV(p.r); },
          [](const VRefType& r) { return inlineableV(r.region) && inlineableV(r.payload); },
          [](const VLam& l) { return inlineableV(l.annot) && inlineableE(l.body); },
          [](const VView& l) { return inlineableV(l.annot) && inlineableE(l.body); },
          [](const VPair& p) { return inlineableV(p.l) && inlineableV(p.r); },
          [](const VInjLeft& i) {
            return inlineableV(i.otherType) && inlineableV(i.payload);
          },
          [](const VInjRight& i) {
            return inlineableV(i.otherType) && inlineableV(i.payload);
          },
          [](const VValueCase& c) {
            return inlineableV(c.scrutinee) && inlineableV(c.leftFn) &&
                   inlineableV(c.rightFn);
          },
          [](const VFinLit& f) { return inlineableV(f.size); },
          [](const VTableLit& t) {
            if (!inlineableV(t.dom)) return false;
            for (const auto& e : t.elems)
              if (!inlineableV(e)) return false;
            return true;
          },
      },
      v->node);
}

struct Printer {
  std::string out;

  void indent(int n) { out.append(static_cast<size_t>(n), ' '); }

  void row(const EffectRow& r, int ind) {
    out += "{";
    for (size_t i = 0; i < r.entries.size(); ++i) {
      if (i) out += ", ";
      out += r.entries[i].kind == EffectKind::State ? "State " : "Accum ";
      value(r.entries[i].region, true, ind);
    }
    out += "}";
  }

  // atom: wrap non-atomic forms in parentheses. ind: indentation for
  // continuation lines of nested blocks.
  void value(const ValuePtr& v, bool atom, int ind) {
    std::visit(
        overloaded{
            [&](const VVar& n) { out += printName(n.name); },
            [&](const VLitFloat& f) {
              std::string s = printFloat(f.v);
              if (atom && !s.empty() && s[0] == '-') {
                out += "(" + s + ")";
              } else {
                out += s;
              }
            },
            [&](const VLitInt& i) {
              std::string s = std::to_string(i.v);
              if (atom && i.v < 0) {
                out += "(" + s + ")";
              } else {
                out += s;
              }
            },
            [&](const VLitUnit&) { out += "()"; },
            [&](const VBase& b) {
              switch (b.kind) {
                case BaseKind::Type: out += "Type"; break;
                case BaseKind::Unit: out += "Unit"; break;
                case BaseKind::Int: out += "Int"; break;
                case BaseKind::Float: out += "Float"; break;
              }
            },
            [&](const VFinType& f) {
              if (atom) out += "(";
              out += "Fin ";
              value(f.size, true, ind);
              if (atom) out += ")";
            },
            [&](const VArrow& a) {
              if (atom) out += "(";
              out += "(" + printName(a.binder) + " : ";
              value(a.dom, false, ind);
              out += ") -> ";
              if (!a.effects.pure()) {
                row(a.effects, ind);
                out += " ";
              }
              value(a.cod, true, ind);
              if (atom) out += ")";
            },
            [&](const VArrayType& a) {
              if (atom) out += "(";
              value(a.dom, true, ind);
              out += " => ";
              value(a.cod, true, ind);
              if (atom) out += ")";
            },
            [&](const VPairType& p) {
              out += "(";
              value(p.l, true, ind);
              out += " & ";
              value(p.r, true, ind);
              out += ")";
            },
            [&](const VEitherType& p) {
              if (atom) out += "(";
              out += "Either ";
              value(p.l, true, ind);
              out += " ";
              value(p.r, true, ind);
              if (atom) out += ")";
            },
            [&](const VRefType& r) {
              if (atom) out += "(";
              out += "Ref ";
              value(r.region, true, ind);
              out += " ";
              value(r.payload, true, ind);
              if (atom) out += ")";
            },
            [&](const VLam& l) {
              if (atom) out += "(";
              out += "\\" + printName(l.binder) + " : ";
              value(l.annot, true, ind);
              out += ".";
              binderBody(l.body, ind);
              if (atom) out += ")";
            },
            [&](const VView& l) {
              if (atom) out += "(";
              out += "view " + printName(l.binder) + " : ";
              value(l.annot, true, ind);
              out += ".";
              binderBody(l.body, ind);
              if (atom) out += ")";
            },
            [&](const VPair& p) {
              out += "(";
              value(p.l, false, ind);
              out += ", ";
              value(p.r, false, ind);
              out += ")";
            },
            [&](const VInjLeft& i) {
              if (atom) out += "(";
              out += "Left ";
              value(i.otherType, true, ind);
              out += " ";
              value(i.payload, true, ind);
              if (atom) out += ")";
            },
            [&](const VInjRight& i) {
              if (atom) out += "(";
              out += "Right ";
              value(i.otherType, true, ind);
              out += " ";
              value(i.payload, true, ind);
              if (atom) out += ")";
            },
            [&](const VValueCase& c) {
              if (atom) out += "(";
              out += "vcase ";
              value(c.scrutinee, true, ind);
              out += " ";
              value(c.leftFn, true, ind);
              out += " ";
              value(c.rightFn, true, ind);
              if (atom) out += ")";
            },
            [&](const VFinLit& f) {
              out += "(@" + std::to_string(f.ordinal) + " : Fin ";
              value(f.size, true, ind);
              out += ")";
            },
            [&](const VTableLit& t) {
              if (atom) out += "(";
              out += "table ";
              value(t.dom, true, ind);
              out += " [";
              for (size_t i = 0; i < t.elems.size(); ++i) {
                if (i) out += ", ";
                value(t.elems[i], false, ind);
              }
              out += "]";
              if (atom) out += ")";
            },
        },
        v->node);
  }

  // The body after a binder dot: inline on the same line when it fits the
  // single-line grammar, otherwise an indented block on the next lines.
  void binderBody(const ExprPtr& body, int ind) {
    if (inlineableE(body)) {
      out += " ";
      statement(body, ind);
    } else {
      out += "\n";
      block(body, ind + 2);
    }
  }

  void action(const Action& a, int ind) {
    out += "\\" + printName(a.region) + " " + printName(a.ref) + " : ";
    value(a.refAnnot, true, ind);
    out += ".";
    binderBody(a.body, ind);
  }

  // One non-let expression, starting at the current position; caller has
  // already emitted this line's indentation.
  void statement(const ExprPtr& e, int ind) {
    std::visit(
        overloaded{
            [&](const ERet& r) { value(r.value, false, ind); },
            [&](const ELet&) { out += "<let>"; },
            [&](const EApp& a) {
              value(a.fn, true, ind);
              out += " ";
              value(a.arg, true, ind);
            },
            [&](const EIndex& i) {
              value(i.arr, true, ind);
              out += ".";
              value(i.idx, true, ind);
            },
            [&](const EFor& f) {
              out += "for " + printName(f.binder) + " : ";
              value(f.annot, true, ind);
              out += ".";
              binderBody(f.body, ind);
            },
            [&](const EFst& f) {
              out += "fst ";
              value(f.v, true, ind);
            },
            [&](const ESnd& f) {
              out += "snd ";
              value(f.v, true, ind);
            },
            [&](const ECase& c) {
              out += "case ";
              value(c.scrutinee, true, ind);
              out += "\n";
              indent(ind + 2);
              out += "Left " + printName(c.leftBinder) + " ->\n";
              block(c.leftBody, ind + 4);
              out += "\n";
              indent(ind + 2);
              out += "Right " + printName(c.rightBinder) + " ->\n";
              block(c.rightBody, ind + 4);
            },
            [&](const ESlice& s) {
              value(s.ref, true, ind);
              out += "!";
              value(s.idx, true, ind);
            },
            [&](const ERunState& r) {
              out += "runState ";
              value(r.init, true, ind);
              out += " ";
              action(r.action, ind);
            },
            [&](const EGet& g) {
              out += "get ";
              value(g.ref, true, ind);
            },
            [&](const EPut& p) {
              value(p.ref, true, ind);
              out += " := ";
              value(p.value, false, ind);
            },
            [&](const ERunAccum& r) {
              out += "runAccum ";
              action(r.action, ind);
            },
            [&](const EAccum& a) {
              value(a.ref, true, ind);
              out += " += ";
              value(a.value, false, ind);
            },
            [&](const EBinOp& b) {
              value(b.l, true, ind);
              switch (b.op) {
                case BinOp::Add: out += " + "; break;
                case BinOp::Mul: out += " * "; break;
                case BinOp::Sub: out += " - "; break;
                case BinOp::Div: out += " / "; break;
                case BinOp::Less: out += " < "; break;
              }
              value(b.r, true, ind);
            },
            [&](const EUnOp& u) {
              switch (u.op) {
                case UnOp::Ordinal: out += "ord "; break;
                case UnOp::IntToFloat: out += "itof "; break;
                case UnOp::ReverseIndex: out += "reverse "; break;
              }
              value(u.v, true, ind);
            },
            [&](const ELinearize& l) {
              out += "linearize ";
              value(l.fn, true, ind);
              out += " ";
              value(l.point, true, ind);
            },
            [&](const ETranspose& t) {
              out += "transpose ";
              value(t.fn, true, ind);
              out += " ";
              value(t.cotangent, true, ind);
            },
        },
        e->node);
  }

  // A let chain plus final statement, each line at the given indentation.
  void block(const ExprPtr& e, int ind) {
    ExprPtr cur = e;
    while (const auto* l = as<ELet>(cur)) {
      indent(ind);
      out += "let " + printName(l->binder);
      if (l->annot) {
        out += " : ";
        value(l->annot, false, ind);
      }
      out += " =";
      if (inlineableE(l->bound)) {
        out += " ";
        statement(l->bound, ind);
      } else {
        out += "\n";
        block(l->bound, ind + 2);
      }
      out += "\n";
      cur = l->body;
    }
    indent(ind);
    statement(cur, ind);
  }
};

}  // namespace
}  // namespace dexlet

namespace dexlet {

std::string printName(const Name& n) {
  return n.text + "." + std::to_string(n.uid);
}

std::string printFloat(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), d);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".einf") == std::string::npos) s += ".0";
  return s;
}

std::string printValue(const ValuePtr& v) {
  Printer p;
  p.value(v, false, 0);
  return std::move(p.out);
}

std::string printExpr(const ExprPtr& e) {
  Printer p;
  p.block(e, 0);
  return std::move(p.out);
}

}  // namespace dexlet
