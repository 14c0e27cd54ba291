#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dexlet/name.hpp"

namespace dexlet {

struct Value;
struct Expr;
using ValuePtr = std::shared_ptr<const Value>;
using ExprPtr = std::shared_ptr<const Expr>;

struct Span {
  int line = 0;
  int col = 0;
  bool known() const { return line > 0; }
};

enum class BaseKind { Type, Unit, Int, Float };

enum class EffectKind { State, Accum };

struct Effect {
  EffectKind kind;
  ValuePtr region;  // typically a Var of type Type
};

// Multiset of State/Accum capabilities; empty row means Pure.
struct EffectRow {
  std::vector<Effect> entries;
  bool pure() const { return entries.empty(); }
};

// ---------------------------------------------------------------------------
// Values (types are values of type Type).

struct VVar { Name name; };
struct VLitFloat { double v; };
struct VLitInt { long long v; };
struct VLitUnit {};
struct VBase { BaseKind kind; };
struct VFinType { ValuePtr size; };
struct VArrow {
  Name binder;
  ValuePtr dom;
  EffectRow effects;
  ValuePtr cod;  // may mention binder (value dependency)
};
struct VArrayType { ValuePtr dom; ValuePtr cod; };
struct VPairType { ValuePtr l; ValuePtr r; };
struct VEitherType { ValuePtr l; ValuePtr r; };
struct VRefType { ValuePtr region; ValuePtr payload; };
struct VLam { Name binder; ValuePtr annot; ExprPtr body; };
struct VView { Name binder; ValuePtr annot; ExprPtr body; };
struct VPair { ValuePtr l; ValuePtr r; };
struct VInjLeft { ValuePtr otherType; ValuePtr payload; };
struct VInjRight { ValuePtr otherType; ValuePtr payload; };
// Lazy case over function-typed branches; produced by simplification only.
struct VValueCase { ValuePtr scrutinee; ValuePtr leftFn; ValuePtr rightFn; };
// Runtime representative of a Fin member; constructed by iteration or
// fromOrdinal, bounds-checked at construction.
struct VFinLit { long long ordinal; ValuePtr size; };
// Literal table over an index-set domain (artifact plumbing for surface
// bracket literals and CLI point arguments).
struct VTableLit { ValuePtr dom; std::vector<ValuePtr> elems; };

using ValueNode =
    std::variant<VVar, VLitFloat, VLitInt, VLitUnit, VBase, VFinType, VArrow,
                 VArrayType, VPairType, VEitherType, VRefType, VLam, VView,
                 VPair, VInjLeft, VInjRight, VValueCase, VFinLit, VTableLit>;

struct Value {
  ValueNode node;
  Span span;
};

// ---------------------------------------------------------------------------
// Expressions (A-normal: compound subterms are Values; sequencing via Let).

// The handler action Λh. λx:Ref h τ. body of runState / runAccum.
struct Action {
  Name region;
  Name ref;
  ValuePtr refAnnot;
  ExprPtr body;
};

struct ERet { ValuePtr value; };
struct ELet {
  Name binder;
  ValuePtr annot;  // nullable: derived by the checker when absent
  ExprPtr bound;
  ExprPtr body;
};
struct EApp { ValuePtr fn; ValuePtr arg; };
struct EIndex { ValuePtr arr; ValuePtr idx; };
struct EFor { Name binder; ValuePtr annot; ExprPtr body; };
struct EFst { ValuePtr v; };
struct ESnd { ValuePtr v; };
struct ECase {
  ValuePtr scrutinee;
  Name leftBinder;
  ExprPtr leftBody;
  Name rightBinder;
  ExprPtr rightBody;
};
struct ESlice { ValuePtr ref; ValuePtr idx; };
struct ERunState { ValuePtr init; Action action; };
struct EGet { ValuePtr ref; };
struct EPut { ValuePtr ref; ValuePtr value; };
struct ERunAccum { Action action; };
struct EAccum { ValuePtr ref; ValuePtr value; };

enum class BinOp { Add, Mul, Sub, Div, Less };
struct EBinOp { BinOp op; ValuePtr l; ValuePtr r; };

enum class UnOp { Ordinal, IntToFloat, ReverseIndex };
struct EUnOp { UnOp op; ValuePtr v; };

struct ELinearize { ValuePtr fn; ValuePtr point; };
struct ETranspose { ValuePtr fn; ValuePtr cotangent; };

using ExprNode =
    std::variant<ERet, ELet, EApp, EIndex, EFor, EFst, ESnd, ECase, ESlice,
                 ERunState, EGet, EPut, ERunAccum, EAccum, EBinOp, EUnOp,
                 ELinearize, ETranspose>;

struct Expr {
  ExprNode node;
  Span span;
};

// ---------------------------------------------------------------------------
// Simplification context: a chain of first-order let bindings with a hole.

struct Binding {
  Name binder;
  ValuePtr annot;
  ExprPtr bound;
};

struct SimplContext {
  std::vector<Binding> bindings;
  bool empty() const { return bindings.empty(); }
};

// ---------------------------------------------------------------------------
// Constructors.

inline ValuePtr mkValue(ValueNode n, Span s = {}) {
  return std::make_shared<Value>(Value{std::move(n), s});
}
inline ExprPtr mkExpr(ExprNode n, Span s = {}) {
  return std::make_shared<Expr>(Expr{std::move(n), s});
}

inline ValuePtr vVar(Name n, Span s = {}) { return mkValue(VVar{std::move(n)}, s); }
inline ValuePtr vFloat(double d) { return mkValue(VLitFloat{d}); }
inline ValuePtr vInt(long long i) { return mkValue(VLitInt{i}); }
inline ValuePtr vUnit() { return mkValue(VLitUnit{}); }
inline ValuePtr vBase(BaseKind k) { return mkValue(VBase{k}); }
inline ValuePtr vFin(ValuePtr size) { return mkValue(VFinType{std::move(size)}); }
inline ValuePtr vArrow(Name b, ValuePtr dom, EffectRow eff, ValuePtr cod) {
  return mkValue(VArrow{std::move(b), std::move(dom), std::move(eff), std::move(cod)});
}
inline ValuePtr vArray(ValuePtr dom, ValuePtr cod) {
  return mkValue(VArrayType{std::move(dom), std::move(cod)});
}
inline ValuePtr vPairType(ValuePtr l, ValuePtr r) {
  return mkValue(VPairType{std::move(l), std::move(r)});
}
inline ValuePtr vEitherType(ValuePtr l, ValuePtr r) {
  return mkValue(VEitherType{std::move(l), std::move(r)});
}
inline ValuePtr vRef(ValuePtr region, ValuePtr payload) {
  return mkValue(VRefType{std::move(region), std::move(payload)});
}
inline ValuePtr vLam(Name b, ValuePtr annot, ExprPtr body) {
  return mkValue(VLam{std::move(b), std::move(annot), std::move(body)});
}
inline ValuePtr vView(Name b, ValuePtr annot, ExprPtr body) {
  return mkValue(VView{std::move(b), std::move(annot), std::move(body)});
}
inline ValuePtr vPair(ValuePtr l, ValuePtr r) {
  return mkValue(VPair{std::move(l), std::move(r)});
}
inline ValuePtr vLeft(ValuePtr otherType, ValuePtr payload) {
  return mkValue(VInjLeft{std::move(otherType), std::move(payload)});
}
inline ValuePtr vRight(ValuePtr otherType, ValuePtr payload) {
  return mkValue(VInjRight{std::move(otherType), std::move(payload)});
}
inline ValuePtr vValueCase(ValuePtr s, ValuePtr l, ValuePtr r) {
  return mkValue(VValueCase{std::move(s), std::move(l), std::move(r)});
}
inline ValuePtr vFinLit(long long ord, ValuePtr size) {
  return mkValue(VFinLit{ord, std::move(size)});
}
inline ValuePtr vTableLit(ValuePtr dom, std::vector<ValuePtr> elems) {
  return mkValue(VTableLit{std::move(dom), std::move(elems)});
}

inline ExprPtr eRet(ValuePtr v, Span s = {}) { return mkExpr(ERet{std::move(v)}, s); }
inline ExprPtr eLet(Name b, ValuePtr annot, ExprPtr bound, ExprPtr body, Span s = {}) {
  return mkExpr(ELet{std::move(b), std::move(annot), std::move(bound), std::move(body)}, s);
}
inline ExprPtr eApp(ValuePtr f, ValuePtr a, Span s = {}) {
  return mkExpr(EApp{std::move(f), std::move(a)}, s);
}
inline ExprPtr eIndex(ValuePtr arr, ValuePtr idx, Span s = {}) {
  return mkExpr(EIndex{std::move(arr), std::move(idx)}, s);
}
inline ExprPtr eFor(Name b, ValuePtr annot, ExprPtr body, Span s = {}) {
  return mkExpr(EFor{std::move(b), std::move(annot), std::move(body)}, s);
}
inline ExprPtr eFst(ValuePtr v, Span s = {}) { return mkExpr(EFst{std::move(v)}, s); }
inline ExprPtr eSnd(ValuePtr v, Span s = {}) { return mkExpr(ESnd{std::move(v)}, s); }
inline ExprPtr eCase(ValuePtr scrut, Name lb, ExprPtr lbody, Name rb, ExprPtr rbody,
                     Span s = {}) {
  return mkExpr(ECase{std::move(scrut), std::move(lb), std::move(lbody), std::move(rb),
                      std::move(rbody)},
                s);
}
inline ExprPtr eSlice(ValuePtr ref, ValuePtr idx, Span s = {}) {
  return mkExpr(ESlice{std::move(ref), std::move(idx)}, s);
}
inline ExprPtr eRunState(ValuePtr init, Action a, Span s = {}) {
  return mkExpr(ERunState{std::move(init), std::move(a)}, s);
}
inline ExprPtr eGet(ValuePtr ref, Span s = {}) { return mkExpr(EGet{std::move(ref)}, s); }
inline ExprPtr ePut(ValuePtr ref, ValuePtr v, Span s = {}) {
  return mkExpr(EPut{std::move(ref), std::move(v)}, s);
}
inline ExprPtr eRunAccum(Action a, Span s = {}) { return mkExpr(ERunAccum{std::move(a)}, s); }
inline ExprPtr eAccum(ValuePtr ref, ValuePtr v, Span s = {}) {
  return mkExpr(EAccum{std::move(ref), std::move(v)}, s);
}
inline ExprPtr eBin(BinOp op, ValuePtr l, ValuePtr r, Span s = {}) {
  return mkExpr(EBinOp{op, std::move(l), std::move(r)}, s);
}
inline ExprPtr eUn(UnOp op, ValuePtr v, Span s = {}) {
  return mkExpr(EUnOp{op, std::move(v)}, s);
}
inline ExprPtr eLinearize(ValuePtr fn, ValuePtr point, Span s = {}) {
  return mkExpr(ELinearize{std::move(fn), std::move(point)}, s);
}
inline ExprPtr eTranspose(ValuePtr fn, ValuePtr ct, Span s = {}) {
  return mkExpr(ETranspose{std::move(fn), std::move(ct)}, s);
}

// Convenience accessors.
template <class T>
const T* as(const ValuePtr& v) {
  return v ? std::get_if<T>(&v->node) : nullptr;
}
template <class T>
const T* as(const ExprPtr& e) {
  return e ? std::get_if<T>(&e->node) : nullptr;
}

inline bool isBase(const ValuePtr& v, BaseKind k) {
  const auto* b = as<VBase>(v);
  return b && b->kind == k;
}

using NameSet = std::set<Name>;

// ---------------------------------------------------------------------------
// Structural operations (ir_ops.cpp).

ValuePtr substValue(const ValuePtr& target, const Name& binder, const ValuePtr& repl);
ExprPtr substExpr(const ExprPtr& target, const Name& binder, const ValuePtr& repl);

NameSet freeVars(const ValuePtr& v);
NameSet freeVars(const ExprPtr& e);
NameSet freeVars(const EffectRow& row);

bool alphaEq(const ValuePtr& a, const ValuePtr& b);
bool alphaEq(const ExprPtr& a, const ExprPtr& b);
bool effectRowEq(const EffectRow& a, const EffectRow& b);
// Multiset inclusion up to alpha-equality of region values.
bool effectRowSubset(const EffectRow& sub, const EffectRow& super);

ExprPtr contextFill(const SimplContext& ctx, ExprPtr result);
SimplContext contextCompose(SimplContext a, const SimplContext& b);

// Rebuilds a value/expr with every binder given a fresh uid (used when a
// transform duplicates a binder-carrying term).
ValuePtr refreshBinders(const ValuePtr& v);
ExprPtr refreshBinders(const ExprPtr& e);

}  // namespace dexlet
