#include "dexlet/typecheck.hpp"

#include <string>

#include "dexlet/errors.hpp"
#include "dexlet/index_set.hpp"
#include "dexlet/printer.hpp"

namespace dexlet {

namespace {

ValuePtr tUnit() { return vBase(BaseKind::Unit); }
ValuePtr tInt() { return vBase(BaseKind::Int); }
ValuePtr tFloat() { return vBase(BaseKind::Float); }
ValuePtr tType() { return vBase(BaseKind::Type); }
ValuePtr tBool() { return vEitherType(tUnit(), tUnit()); }

const char* constraintName(Constraint k) {
  switch (k) {
    case Constraint::IdxSet: return "an index set";
    case Constraint::Data: return "a data type";
    case Constraint::VSpace: return "a vector space";
  }
  return "";
}

struct Checker {
  TypeEnv& env;

  ValuePtr lookup(const Name& n, Span sp) {
    ValuePtr t = env.lookup(n);
    if (!t) fail(ErrCode::UnboundVariable, "unbound variable '" + printName(n) + "'", sp);
    return t;
  }

  void expectType(const ValuePtr& got, const ValuePtr& want, Span sp,
                  const std::string& what) {
    if (!alphaEq(got, want)) {
      fail(ErrCode::Type, what + ": expected " + printValue(want) + ", got " +
                              printValue(got),
           sp);
    }
  }

  void expectIsType(const ValuePtr& annot) {
    ValuePtr k = value(annot);
    if (!isBase(k, BaseKind::Type)) {
      fail(ErrCode::Type,
           "annotation " + printValue(annot) + " is not a type, it has type " +
               printValue(k),
           annot->span);
    }
  }

  void addUsed(EffectRow& used, const Effect& e) {
    for (const auto& u : used.entries) {
      if (u.kind == e.kind && alphaEq(u.region, e.region)) return;
    }
    used.entries.push_back(e);
  }

  void requireEffect(const Capability& cap, EffectRow& used, EffectKind kind,
                     const ValuePtr& region, Span sp) {
    Effect e{kind, region};
    if (!cap.any) {
      bool found = false;
      for (const auto& c : cap.row.entries) {
        if (c.kind == kind && alphaEq(c.region, region)) { found = true; break; }
      }
      if (!found) {
        fail(ErrCode::Effect,
             std::string(kind == EffectKind::State ? "State " : "Accum ") +
                 printValue(region) + " is not available here",
             sp);
      }
    }
    addUsed(used, e);
  }

  // ------------------------------------------------------------------
  // Values.

  ValuePtr value(const ValuePtr& v) {
    Span sp = v->span;
    return std::visit(
        [&](const auto& node) -> ValuePtr { return valueNode(node, sp); }, v->node);
  }

  ValuePtr valueNode(const VVar& n, Span sp) { return lookup(n.name, sp); }
  ValuePtr valueNode(const VLitFloat&, Span) { return tFloat(); }
  ValuePtr valueNode(const VLitInt&, Span) { return tInt(); }
  ValuePtr valueNode(const VLitUnit&, Span) { return tUnit(); }
  ValuePtr valueNode(const VBase&, Span) { return tType(); }

  ValuePtr valueNode(const VFinType& n, Span sp) {
    expectType(value(n.size), tInt(), sp, "Fin size");
    return tType();
  }

  ValuePtr valueNode(const VArrow& n, Span sp) {
    expectType(value(n.dom), tType(), sp, "arrow domain");
    env.bind(n.binder, n.dom);
    for (const auto& e : n.effects.entries) {
      expectType(value(e.region), tType(), sp, "effect region");
    }
    expectType(value(n.cod), tType(), sp, "arrow codomain");
    env.pop();
    return tType();
  }

  ValuePtr valueNode(const VArrayType& n, Span sp) {
    expectType(value(n.dom), tType(), sp, "array domain");
    requireConstraint(Constraint::IdxSet, n.dom, sp);
    expectType(value(n.cod), tType(), sp, "array codomain");
    return tType();
  }

  ValuePtr valueNode(const VPairType& n, Span sp) {
    expectType(value(n.l), tType(), sp, "pair component");
    expectType(value(n.r), tType(), sp, "pair component");
    return tType();
  }

  ValuePtr valueNode(const VEitherType& n, Span sp) {
    expectType(value(n.l), tType(), sp, "Either component");
    expectType(value(n.r), tType(), sp, "Either component");
    return tType();
  }

  ValuePtr valueNode(const VRefType& n, Span sp) {
    expectType(value(n.region), tType(), sp, "reference region");
    expectType(value(n.payload), tType(), sp, "reference payload");
    return tType();
  }

  ValuePtr valueNode(const VLam& n, Span) {
    expectIsType(n.annot);
    env.bind(n.binder, n.annot);
    EffectRow used;
    ValuePtr bodyT = expr(Capability::collect(), n.body, used);
    env.pop();
    return vArrow(n.binder, n.annot, used, bodyT);
  }

  ValuePtr valueNode(const VView& n, Span sp) {
    expectIsType(n.annot);
    requireConstraint(Constraint::IdxSet, n.annot, sp);
    env.bind(n.binder, n.annot);
    EffectRow used;
    ValuePtr bodyT = expr(Capability::pure(), n.body, used);
    env.pop();
    if (freeVars(bodyT).count(n.binder)) {
      fail(ErrCode::Type,
           "view element type " + printValue(bodyT) + " depends on the index binder",
           sp);
    }
    return vArray(n.annot, bodyT);
  }

  ValuePtr valueNode(const VPair& n, Span) {
    return vPairType(value(n.l), value(n.r));
  }

  ValuePtr valueNode(const VInjLeft& n, Span sp) {
    expectType(value(n.otherType), tType(), sp, "Left type argument");
    return vEitherType(value(n.payload), n.otherType);
  }

  ValuePtr valueNode(const VInjRight& n, Span sp) {
    expectType(value(n.otherType), tType(), sp, "Right type argument");
    return vEitherType(n.otherType, value(n.payload));
  }

  ValuePtr valueNode(const VValueCase& n, Span sp) {
    ValuePtr st = value(n.scrutinee);
    const auto* either = as<VEitherType>(st);
    if (!either) {
      fail(ErrCode::Type, "vcase scrutinee has type " + printValue(st) +
                              ", expected an Either type",
           sp);
    }
    ValuePtr lt = branchResult(n.leftFn, either->l, sp);
    ValuePtr rt = branchResult(n.rightFn, either->r, sp);
    expectType(rt, lt, sp, "vcase branch result");
    return lt;
  }

  ValuePtr branchResult(const ValuePtr& fn, const ValuePtr& dom, Span sp) {
    ValuePtr ft = value(fn);
    const auto* arrow = as<VArrow>(ft);
    if (!arrow) {
      fail(ErrCode::Type,
           "vcase branch has type " + printValue(ft) + ", expected a function", sp);
    }
    expectType(arrow->dom, dom, sp, "vcase branch domain");
    if (!arrow->effects.pure()) {
      fail(ErrCode::Effect, "vcase branches must be pure", sp);
    }
    if (freeVars(arrow->cod).count(arrow->binder)) {
      fail(ErrCode::Type, "vcase branch result depends on the scrutinee payload", sp);
    }
    return arrow->cod;
  }

  ValuePtr valueNode(const VFinLit& n, Span sp) {
    expectType(value(n.size), tInt(), sp, "index literal size");
    if (const auto* lit = as<VLitInt>(n.size)) {
      if (n.ordinal < 0 || n.ordinal >= lit->v) {
        fail(ErrCode::OutOfBounds,
             "index literal @" + std::to_string(n.ordinal) +
                 " is outside Fin " + std::to_string(lit->v),
             sp);
      }
    }
    return vFin(n.size);
  }

  ValuePtr valueNode(const VTableLit& n, Span sp) {
    expectType(value(n.dom), tType(), sp, "table domain");
    requireConstraint(Constraint::IdxSet, n.dom, sp);
    if (n.elems.empty()) {
      fail(ErrCode::Type, "table literal has no elements", sp);
    }
    ValuePtr elemT = value(n.elems[0]);
    for (size_t i = 1; i < n.elems.size(); ++i) {
      expectType(value(n.elems[i]), elemT, sp, "table element");
    }
    try {
      DescPtr d = descFromType(n.dom);
      if (size(d) != static_cast<long long>(n.elems.size())) {
        fail(ErrCode::Type,
             "table literal has " + std::to_string(n.elems.size()) +
                 " elements but its domain " + printValue(n.dom) + " has " +
                 std::to_string(size(d)),
             sp);
      }
    } catch (const DexError& e) {
      if (e.code() != ErrCode::UnresolvedSize) throw;
    }
    return vArray(n.dom, elemT);
  }

  // ------------------------------------------------------------------
  // Expressions.

  ValuePtr expr(const Capability& cap, const ExprPtr& e, EffectRow& used) {
    Span sp = e->span;
    return std::visit(
        [&](const auto& node) -> ValuePtr { return exprNode(cap, node, used, sp); },
        e->node);
  }

  ValuePtr exprNode(const Capability&, const ERet& n, EffectRow&, Span) {
    return value(n.value);
  }

  ValuePtr exprNode(const Capability& cap, const ELet& n, EffectRow& used, Span sp) {
    ValuePtr boundT = expr(cap, n.bound, used);
    if (n.annot) {
      expectIsType(n.annot);
      expectType(boundT, n.annot, sp, "let binding '" + printName(n.binder) + "'");
    }
    env.bind(n.binder, boundT);
    ValuePtr bodyT = expr(cap, n.body, used);
    env.pop();
    if (freeVars(bodyT).count(n.binder)) {
      fail(ErrCode::Type,
           "result type " + printValue(bodyT) + " depends on local binding '" +
               printName(n.binder) + "'",
           sp);
    }
    return bodyT;
  }

  ValuePtr exprNode(const Capability& cap, const EApp& n, EffectRow& used, Span sp) {
    ValuePtr ft = value(n.fn);
    const auto* arrow = as<VArrow>(ft);
    if (!arrow) {
      fail(ErrCode::Type,
           "application head has type " + printValue(ft) + ", expected a function",
           sp);
    }
    expectType(value(n.arg), arrow->dom, sp, "function argument");
    for (const auto& e : arrow->effects.entries) {
      ValuePtr region = substValue(e.region, arrow->binder, n.arg);
      requireEffect(cap, used, e.kind, region, sp);
    }
    return substValue(arrow->cod, arrow->binder, n.arg);
  }

  ValuePtr exprNode(const Capability&, const EIndex& n, EffectRow&, Span sp) {
    ValuePtr at = value(n.arr);
    const auto* arr = as<VArrayType>(at);
    if (!arr) {
      fail(ErrCode::Type,
           "indexing target has type " + printValue(at) + ", expected an array", sp);
    }
    expectType(value(n.idx), arr->dom, sp, "array index");
    return arr->cod;
  }

  ValuePtr exprNode(const Capability& cap, const EFor& n, EffectRow& used, Span sp) {
    expectIsType(n.annot);
    requireConstraint(Constraint::IdxSet, n.annot, sp);
    env.bind(n.binder, n.annot);
    ValuePtr bodyT = expr(cap, n.body, used);
    env.pop();
    if (freeVars(bodyT).count(n.binder)) {
      fail(ErrCode::Type,
           "loop element type " + printValue(bodyT) + " depends on the index binder",
           sp);
    }
    return vArray(n.annot, bodyT);
  }

  ValuePtr exprNode(const Capability&, const EFst& n, EffectRow&, Span sp) {
    return pairComponent(n.v, sp, true);
  }
  ValuePtr exprNode(const Capability&, const ESnd& n, EffectRow&, Span sp) {
    return pairComponent(n.v, sp, false);
  }

  ValuePtr pairComponent(const ValuePtr& v, Span sp, bool first) {
    ValuePtr t = value(v);
    const auto* p = as<VPairType>(t);
    if (!p) {
      fail(ErrCode::Type,
           "projection target has type " + printValue(t) + ", expected a pair", sp);
    }
    return first ? p->l : p->r;
  }

  ValuePtr exprNode(const Capability& cap, const ECase& n, EffectRow& used, Span sp) {
    ValuePtr st = value(n.scrutinee);
    const auto* either = as<VEitherType>(st);
    if (!either) {
      fail(ErrCode::Type, "case scrutinee has type " + printValue(st) +
                              ", expected an Either type",
           sp);
    }
    env.bind(n.leftBinder, either->l);
    ValuePtr lt = expr(cap, n.leftBody, used);
    env.pop();
    env.bind(n.rightBinder, either->r);
    ValuePtr rt = expr(cap, n.rightBody, used);
    env.pop();
    if (freeVars(lt).count(n.leftBinder) || freeVars(rt).count(n.rightBinder)) {
      fail(ErrCode::Type, "case branch result depends on the payload binder", sp);
    }
    expectType(rt, lt, sp, "case branch result");
    return lt;
  }

  ValuePtr exprNode(const Capability&, const ESlice& n, EffectRow&, Span sp) {
    ValuePtr rt = value(n.ref);
    const auto* ref = as<VRefType>(rt);
    if (!ref) {
      fail(ErrCode::Type,
           "slicing target has type " + printValue(rt) + ", expected a reference",
           sp);
    }
    const auto* arr = as<VArrayType>(ref->payload);
    if (!arr) {
      fail(ErrCode::Type, "sliced reference holds " + printValue(ref->payload) +
                              ", expected an array",
           sp);
    }
    expectType(value(n.idx), arr->dom, sp, "slice index");
    return vRef(ref->region, arr->cod);
  }

  ValuePtr exprNode(const Capability& cap, const ERunState& n, EffectRow& used,
                    Span sp) {
    ValuePtr initT = value(n.init);
    requireConstraint(Constraint::Data, initT, sp);
    return handler(cap, n.action, EffectKind::State, initT, initT, used, sp);
  }

  ValuePtr exprNode(const Capability& cap, const ERunAccum& n, EffectRow& used,
                    Span sp) {
    const auto* annot = as<VRefType>(n.action.refAnnot);
    if (!annot) {
      fail(ErrCode::Type, "runAccum needs an annotated accumulator reference", sp);
    }
    requireConstraint(Constraint::VSpace, annot->payload, sp);
    return handler(cap, n.action, EffectKind::Accum, annot->payload, annot->payload,
                   used, sp);
  }

  ValuePtr handler(const Capability& cap, const Action& a, EffectKind kind,
                   const ValuePtr& cellT, const ValuePtr& outT, EffectRow& used,
                   Span sp) {
    env.bind(a.region, tType());
    ValuePtr refT = vRef(vVar(a.region), cellT);
    if (a.refAnnot && !alphaEq(a.refAnnot, refT)) {
      fail(ErrCode::Type,
           "handler reference annotation " + printValue(a.refAnnot) +
               " does not match " + printValue(refT),
           sp);
    }
    env.bind(a.ref, refT);
    Capability inner = cap;
    inner.row.entries.push_back(Effect{kind, vVar(a.region)});
    EffectRow innerUsed;
    ValuePtr bodyT = expr(inner, a.body, innerUsed);
    env.pop();
    env.pop();
    for (const auto& e : innerUsed.entries) {
      if (alphaEq(e.region, vVar(a.region))) {
        if (e.kind != kind) {
          fail(ErrCode::Effect, "handler region used with the wrong capability", sp);
        }
        continue;
      }
      requireEffect(cap, used, e.kind, e.region, sp);
    }
    if (freeVars(bodyT).count(a.region)) {
      fail(ErrCode::EscapedRef,
           "handler result type " + printValue(bodyT) + " leaks its region", sp);
    }
    return vPairType(bodyT, outT);
  }

  ValuePtr exprNode(const Capability& cap, const EGet& n, EffectRow& used, Span sp) {
    const auto* ref = refType(n.ref, sp);
    requireEffect(cap, used, EffectKind::State, ref->region, sp);
    return ref->payload;
  }

  ValuePtr exprNode(const Capability& cap, const EPut& n, EffectRow& used, Span sp) {
    const auto* ref = refType(n.ref, sp);
    requireEffect(cap, used, EffectKind::State, ref->region, sp);
    expectType(value(n.value), ref->payload, sp, "stored value");
    return tUnit();
  }

  ValuePtr exprNode(const Capability& cap, const EAccum& n, EffectRow& used, Span sp) {
    const auto* ref = refType(n.ref, sp);
    requireEffect(cap, used, EffectKind::Accum, ref->region, sp);
    requireConstraint(Constraint::VSpace, ref->payload, sp);
    expectType(value(n.value), ref->payload, sp, "accumulated value");
    return tUnit();
  }

  const VRefType* refType(const ValuePtr& v, Span sp) {
    ValuePtr t = value(v);
    const auto* ref = as<VRefType>(t);
    if (!ref) {
      fail(ErrCode::Type,
           "expected a reference, got a value of type " + printValue(t), sp);
    }
    // The returned pointer aliases t, so t must outlive the caller.
    kept_.push_back(t);
    return ref;
  }

  ValuePtr exprNode(const Capability&, const EBinOp& n, EffectRow&, Span sp) {
    expectType(value(n.l), tFloat(), sp, "left operand");
    expectType(value(n.r), tFloat(), sp, "right operand");
    return n.op == BinOp::Less ? tBool() : tFloat();
  }

  ValuePtr exprNode(const Capability&, const EUnOp& n, EffectRow&, Span sp) {
    ValuePtr t = value(n.v);
    switch (n.op) {
      case UnOp::Ordinal:
        requireConstraint(Constraint::IdxSet, t, sp);
        return tInt();
      case UnOp::IntToFloat:
        expectType(t, tInt(), sp, "itof operand");
        return tFloat();
      case UnOp::ReverseIndex:
        requireConstraint(Constraint::IdxSet, t, sp);
        return t;
    }
    fail(ErrCode::Internal, "unknown unary operator", sp);
  }

  ValuePtr exprNode(const Capability&, const ELinearize& n, EffectRow&, Span sp) {
    const VArrow* arrow = pureVSpaceArrow(n.fn, "linearize", sp);
    expectType(value(n.point), arrow->dom, sp, "linearization point");
    Name t = NameSupply::fresh("t");
    return vPairType(arrow->cod, vArrow(t, arrow->dom, {}, arrow->cod));
  }

  ValuePtr exprNode(const Capability&, const ETranspose& n, EffectRow&, Span sp) {
    const VArrow* arrow = pureVSpaceArrow(n.fn, "transpose", sp);
    expectType(value(n.cotangent), arrow->cod, sp, "cotangent");
    return arrow->dom;
  }

  const VArrow* pureVSpaceArrow(const ValuePtr& fn, const char* what, Span sp) {
    ValuePtr ft = value(fn);
    const auto* arrow = as<VArrow>(ft);
    if (!arrow) {
      fail(ErrCode::Type, std::string(what) + " target has type " + printValue(ft) +
                              ", expected a function",
           sp);
    }
    if (!arrow->effects.pure()) {
      fail(ErrCode::Effect, std::string(what) + " target must be a pure function",
           sp);
    }
    if (freeVars(arrow->cod).count(arrow->binder)) {
      fail(ErrCode::Type,
           std::string(what) + " target has a dependent result type", sp);
    }
    requireConstraint(Constraint::VSpace, arrow->dom, sp);
    requireConstraint(Constraint::VSpace, arrow->cod, sp);
    kept_.push_back(ft);
    return arrow;
  }

  std::vector<ValuePtr> kept_;
};

}  // namespace

bool checkConstraint(Constraint kind, const ValuePtr& type) {
  switch (kind) {
    case Constraint::IdxSet: {
      if (isBase(type, BaseKind::Unit)) return true;
      if (as<VFinType>(type)) return true;
      if (const auto* p = as<VPairType>(type)) {
        return checkConstraint(kind, p->l) && checkConstraint(kind, p->r);
      }
      if (const auto* e = as<VEitherType>(type)) {
        return checkConstraint(kind, e->l) && checkConstraint(kind, e->r);
      }
      return false;
    }
    case Constraint::Data: {
      if (isBase(type, BaseKind::Unit) || isBase(type, BaseKind::Int) ||
          isBase(type, BaseKind::Float)) {
        return true;
      }
      if (as<VFinType>(type)) return true;
      if (const auto* p = as<VPairType>(type)) {
        return checkConstraint(kind, p->l) && checkConstraint(kind, p->r);
      }
      if (const auto* e = as<VEitherType>(type)) {
        return checkConstraint(kind, e->l) && checkConstraint(kind, e->r);
      }
      if (const auto* a = as<VArrayType>(type)) {
        return checkConstraint(Constraint::IdxSet, a->dom) &&
               checkConstraint(kind, a->cod);
      }
      return false;
    }
    case Constraint::VSpace: {
      if (isBase(type, BaseKind::Float)) return true;
      if (const auto* p = as<VPairType>(type)) {
        return checkConstraint(kind, p->l) && checkConstraint(kind, p->r);
      }
      if (const auto* a = as<VArrayType>(type)) {
        return checkConstraint(Constraint::IdxSet, a->dom) &&
               checkConstraint(kind, a->cod);
      }
      return false;
    }
  }
  return false;
}

void requireConstraint(Constraint kind, const ValuePtr& type, Span span) {
  if (!checkConstraint(kind, type)) {
    fail(ErrCode::Constraint,
         printValue(type) + " is not " + constraintName(kind), span);
  }
}

ValuePtr checkValue(TypeEnv& env, const ValuePtr& v) {
  Checker c{env};
  return c.value(v);
}

ValuePtr checkExpr(const Capability& cap, TypeEnv& env, const ExprPtr& e,
                   EffectRow* usedOut) {
  Checker c{env};
  EffectRow used;
  ValuePtr t = c.expr(cap, e, used);
  if (usedOut) *usedOut = used;
  return t;
}

}  // namespace dexlet
