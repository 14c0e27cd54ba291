#include <algorithm>
#include <map>

#include "dexlet/ir.hpp"

namespace dexlet {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// ---------------------------------------------------------------------------
// Substitution. Binder uids are globally fresh, so capture cannot occur; a
// binder equal to the substituted name shadows and stops the walk.

struct Subst {
  const Name& name;
  const ValuePtr& repl;

  EffectRow row(const EffectRow& r) const {
    EffectRow out;
    out.entries.reserve(r.entries.size());
    for (const auto& e : r.entries) out.entries.push_back({e.kind, value(e.region)});
    return out;
  }

  ValuePtr value(const ValuePtr& v) const {
    if (!v) return v;
    return std::visit(
        overloaded{
            [&](const VVar& n) -> ValuePtr {
              return n.name == name ? repl : v;
            },
            [&](const VLitFloat&) { return v; },
            [&](const VLitInt&) { return v; },
            [&](const VLitUnit&) { return v; },
            [&](const VBase&) { return v; },
            [&](const VFinType& f) -> ValuePtr {
              return mkValue(VFinType{value(f.size)}, v->span);
            },
            [&](const VArrow& a) -> ValuePtr {
              ValuePtr dom = value(a.dom);
              if (a.binder == name)
                return mkValue(VArrow{a.binder, dom, a.effects, a.cod}, v->span);
              return mkValue(VArrow{a.binder, dom, row(a.effects), value(a.cod)}, v->span);
            },
            [&](const VArrayType& a) -> ValuePtr {
              return mkValue(VArrayType{value(a.dom), value(a.cod)}, v->span);
            },
            [&](const VPairType& p) -> ValuePtr {
              return mkValue(VPairType{value(p.l), value(p.r)}, v->span);
            },
            [&](const VEitherType& p) -> ValuePtr {
              return mkValue(VEitherType{value(p.l), value(p.r)}, v->span);
            },
            [&](const VRefType& r) -> ValuePtr {
              return mkValue(VRefType{value(r.region), value(r.payload)}, v->span);
            },
            [&](const VLam& l) -> ValuePtr {
              ValuePtr annot = value(l.annot);
              if (l.binder == name) return mkValue(VLam{l.binder, annot, l.body}, v->span);
              return mkValue(VLam{l.binder, annot, expr(l.body)}, v->span);
            },
            [&](const VView& l) -> ValuePtr {
              ValuePtr annot = value(l.annot);
              if (l.binder == name) return mkValue(VView{l.binder, annot, l.body}, v->span);
              return mkValue(VView{l.binder, annot, expr(l.body)}, v->span);
            },
            [&](const VPair& p) -> ValuePtr {
              return mkValue(VPair{value(p.l), value(p.r)}, v->span);
            },
            [&](const VInjLeft& i) -> ValuePtr {
              return mkValue(VInjLeft{value(i.otherType), value(i.payload)}, v->span);
            },
            [&](const VInjRight& i) -> ValuePtr {
              return mkValue(VInjRight{value(i.otherType), value(i.payload)}, v->span);
            },
            [&](const VValueCase& c) -> ValuePtr {
              return mkValue(
                  VValueCase{value(c.scrutinee), value(c.leftFn), value(c.rightFn)},
                  v->span);
            },
            [&](const VFinLit& f) -> ValuePtr {
              return mkValue(VFinLit{f.ordinal, value(f.size)}, v->span);
            },
            [&](const VTableLit& t) -> ValuePtr {
              std::vector<ValuePtr> elems;
              elems.reserve(t.elems.size());
              for (const auto& e : t.elems) elems.push_back(value(e));
              return mkValue(VTableLit{value(t.dom), std::move(elems)}, v->span);
            },
        },
        v->node);
  }

  Action action(const Action& a) const {
    ValuePtr annot = value(a.refAnnot);
    if (a.region == name || a.ref == name) return Action{a.region, a.ref, annot, a.body};
    return Action{a.region, a.ref, annot, expr(a.body)};
  }

  ExprPtr expr(const ExprPtr& e) const {
    if (!e) return e;
    return std::visit(
        overloaded{
            [&](const ERet& r) { return mkExpr(ERet{value(r.value)}, e->span); },
            [&](const ELet& l) {
              ExprPtr bound = expr(l.bound);
              ValuePtr annot = value(l.annot);
              if (l.binder == name)
                return mkExpr(ELet{l.binder, annot, bound, l.body}, e->span);
              return mkExpr(ELet{l.binder, annot, bound, expr(l.body)}, e->span);
            },
            [&](const EApp& a) { return mkExpr(EApp{value(a.fn), value(a.arg)}, e->span); },
            [&](const EIndex& i) {
              return mkExpr(EIndex{value(i.arr), value(i.idx)}, e->span);
            },
            [&](const EFor& f) {
              ValuePtr annot = value(f.annot);
              if (f.binder == name)
                return mkExpr(EFor{f.binder, annot, f.body}, e->span);
              return mkExpr(EFor{f.binder, annot, expr(f.body)}, e->span);
            },
            [&](const EFst& f) { return mkExpr(EFst{value(f.v)}, e->span); },
            [&](const ESnd& f) { return mkExpr(ESnd{value(f.v)}, e->span); },
            [&](const ECase& c) {
              ExprPtr lb = c.leftBinder == name ? c.leftBody : expr(c.leftBody);
              ExprPtr rb = c.rightBinder == name ? c.rightBody : expr(c.rightBody);
              return mkExpr(ECase{value(c.scrutinee), c.leftBinder, lb, c.rightBinder, rb},
                            e->span);
            },
            [&](const ESlice& s) {
              return mkExpr(ESlice{value(s.ref), value(s.idx)}, e->span);
            },
            [&](const ERunState& r) {
              return mkExpr(ERunState{value(r.init), action(r.action)}, e->span);
            },
            [&](const EGet& g) { return mkExpr(EGet{value(g.ref)}, e->span); },
            [&](const EPut& p) {
              return mkExpr(EPut{value(p.ref), value(p.value)}, e->span);
            },
            [&](const ERunAccum& r) {
              return mkExpr(ERunAccum{action(r.action)}, e->span);
            },
            [&](const EAccum& a) {
              return mkExpr(EAccum{value(a.ref), value(a.value)}, e->span);
            },
            [&](const EBinOp& b) {
              return mkExpr(EBinOp{b.op, value(b.l), value(b.r)}, e->span);
            },
            [&](const EUnOp& u) { return mkExpr(EUnOp{u.op, value(u.v)}, e->span); },
            [&](const ELinearize& l) {
              return mkExpr(ELinearize{value(l.fn), value(l.point)}, e->span);
            },
            [&](const ETranspose& t) {
              return mkExpr(ETranspose{value(t.fn), value(t.cotangent)}, e->span);
            },
        },
        e->node);
  }
};

// ---------------------------------------------------------------------------
// Free variables.

struct FV {
  NameSet out;

  void bindAndWalk(const Name& b, auto&& walk) {
    NameSet inner;
    std::swap(out, inner);
    walk();
    out.erase(b);
    NameSet body;
    std::swap(out, body);
    out = std::move(inner);
    for (const auto& n : body) out.insert(n);
  }

  void row(const EffectRow& r) {
    for (const auto& e : r.entries) value(e.region);
  }

  void value(const ValuePtr& v) {
    if (!v) return;
    std::visit(
        overloaded{
            [&](const VVar& n) { out.insert(n.name); },
            [&](const VLitFloat&) {}, [&](const VLitInt&) {}, [&](const VLitUnit&) {},
            [&](const VBase&) {},
            [&](const VFinType& f) { value(f.size); },
            [&](const VArrow& a) {
              value(a.dom);
              bindAndWalk(a.binder, [&] {
                row(a.effects);
                value(a.cod);
              });
            },
            [&](const VArrayType& a) { value(a.dom); value(a.cod); },
            [&](const VPairType& p) { value(p.l); value(p.r); },
            [&](const VEitherType& p) { value(p.l); value(p.r); },
            [&](const VRefType& r) { value(r.region); value(r.payload); },
            [&](const VLam& l) {
              value(l.annot);
              bindAndWalk(l.binder, [&] { expr(l.body); });
            },
            [&](const VView& l) {
              value(l.annot);
              bindAndWalk(l.binder, [&] { expr(l.body); });
            },
            [&](const VPair& p) { value(p.l); value(p.r); },
            [&](const VInjLeft& i) { value(i.otherType); value(i.payload); },
            [&](const VInjRight& i) { value(i.otherType); value(i.payload); },
            [&](const VValueCase& c) {
              value(c.scrutinee);
              value(c.leftFn);
              value(c.rightFn);
            },
            [&](const VFinLit& f) { value(f.size); },
            [&](const VTableLit& t) {
              value(t.dom);
              for (const auto& e : t.elems) value(e);
            },
        },
        v->node);
  }

  void action(const Action& a) {
    value(a.refAnnot);
    bindAndWalk(a.region, [&] { bindAndWalk(a.ref, [&] { expr(a.body); }); });
  }

  void expr(const ExprPtr& e) {
    if (!e) return;
    std::visit(
        overloaded{
            [&](const ERet& r) { value(r.value); },
            [&](const ELet& l) {
              value(l.annot);
              expr(l.bound);
              bindAndWalk(l.binder, [&] { expr(l.body); });
            },
            [&](const EApp& a) { value(a.fn); value(a.arg); },
            [&](const EIndex& i) { value(i.arr); value(i.idx); },
            [&](const EFor& f) {
              value(f.annot);
              bindAndWalk(f.binder, [&] { expr(f.body); });
            },
            [&](const EFst& f) { value(f.v); },
            [&](const ESnd& f) { value(f.v); },
            [&](const ECase& c) {
              value(c.scrutinee);
              bindAndWalk(c.leftBinder, [&] { expr(c.leftBody); });
              bindAndWalk(c.rightBinder, [&] { expr(c.rightBody); });
            },
            [&](const ESlice& s) { value(s.ref); value(s.idx); },
            [&](const ERunState& r) { value(r.init); action(r.action); },
            [&](const EGet& g) { value(g.ref); },
            [&](const EPut& p) { value(p.ref); value(p.value); },
            [&](const ERunAccum& r) { action(r.action); },
            [&](const EAccum& a) { value(a.ref); value(a.value); },
            [&](const EBinOp& b) { value(b.l); value(b.r); },
            [&](const EUnOp& u) { value(u.v); },
            [&](const ELinearize& l) { value(l.fn); value(l.point); },
            [&](const ETranspose& t) { value(t.fn); value(t.cotangent); },
        },
        e->node);
  }
};

// ---------------------------------------------------------------------------
// Alpha equality.

struct AEq {
  // a-binder uid -> b-binder uid, innermost last.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> env;

  bool varEq(const Name& a, const Name& b) const {
    for (auto it = env.rbegin(); it != env.rend(); ++it) {
      if (it->first == a.uid || it->second == b.uid) {
        return it->first == a.uid && it->second == b.uid;
      }
    }
    return a.uid == b.uid;
  }

  bool binders(const Name& a, const Name& b, auto&& k) {
    env.emplace_back(a.uid, b.uid);
    bool ok = k();
    env.pop_back();
    return ok;
  }

  bool row(const EffectRow& a, const EffectRow& b) {
    if (a.entries.size() != b.entries.size()) return false;
    std::vector<bool> used(b.entries.size(), false);
    for (const auto& ea : a.entries) {
      bool matched = false;
      for (size_t j = 0; j < b.entries.size(); ++j) {
        if (used[j] || b.entries[j].kind != ea.kind) continue;
        if (value(ea.region, b.entries[j].region)) {
          used[j] = true;
          matched = true;
          break;
        }
      }
      if (!matched) return false;
    }
    return true;
  }

  bool value(const ValuePtr& a, const ValuePtr& b) {
    if (!a || !b) return !a && !b;
    if (a->node.index() != b->node.index()) return false;
    return std::visit(
        overloaded{
            [&](const VVar& x) { return varEq(x.name, as<VVar>(b)->name); },
            [&](const VLitFloat& x) { return x.v == as<VLitFloat>(b)->v; },
            [&](const VLitInt& x) { return x.v == as<VLitInt>(b)->v; },
            [&](const VLitUnit&) { return true; },
            [&](const VBase& x) { return x.kind == as<VBase>(b)->kind; },
            [&](const VFinType& x) { return value(x.size, as<VFinType>(b)->size); },
            [&](const VArrow& x) {
              const auto& y = *as<VArrow>(b);
              if (!value(x.dom, y.dom)) return false;
              return binders(x.binder, y.binder, [&] {
                return row(x.effects, y.effects) && value(x.cod, y.cod);
              });
            },
            [&](const VArrayType& x) {
              const auto& y = *as<VArrayType>(b);
              return value(x.dom, y.dom) && value(x.cod, y.cod);
            },
            [&](const VPairType& x) {
              const auto& y = *as<VPairType>(b);
              return value(x.l, y.l) && value(x.r, y.r);
            },
            [&](const VEitherType& x) {
              const auto& y = *as<VEitherType>(b);
              return value(x.l, y.l) && value(x.r, y.r);
            },
            [&](const VRefType& x) {
              const auto& y = *as<VRefType>(b);
              return value(x.region, y.region) && value(x.payload, y.payload);
            },
            [&](const VLam& x) {
              const auto& y = *as<VLam>(b);
              if (!value(x.annot, y.annot)) return false;
              return binders(x.binder, y.binder, [&] { return expr(x.body, y.body); });
            },
            [&](const VView& x) {
              const auto& y = *as<VView>(b);
              if (!value(x.annot, y.annot)) return false;
              return binders(x.binder, y.binder, [&] { return expr(x.body, y.body); });
            },
            [&](const VPair& x) {
              const auto& y = *as<VPair>(b);
              return value(x.l, y.l) && value(x.r, y.r);
            },
            [&](const VInjLeft& x) {
              const auto& y = *as<VInjLeft>(b);
              return value(x.otherType, y.otherType) && value(x.payload, y.payload);
            },
            [&](const VInjRight& x) {
              const auto& y = *as<VInjRight>(b);
              return value(x.otherType, y.otherType) && value(x.payload, y.payload);
            },
            [&](const VValueCase& x) {
              const auto& y = *as<VValueCase>(b);
              return value(x.scrutinee, y.scrutinee) && value(x.leftFn, y.leftFn) &&
                     value(x.rightFn, y.rightFn);
            },
            [&](const VFinLit& x) {
              const auto& y = *as<VFinLit>(b);
              return x.ordinal == y.ordinal && value(x.size, y.size);
            },
            [&](const VTableLit& x) {
              const auto& y = *as<VTableLit>(b);
              if (!value(x.dom, y.dom) || x.elems.size() != y.elems.size()) return false;
              for (size_t i = 0; i < x.elems.size(); ++i)
                if (!value(x.elems[i], y.elems[i])) return false;
              return true;
            },
        },
        a->node);
  }

  bool action(const Action& x, const Action& y) {
    if (!value(x.refAnnot, y.refAnnot)) return false;
    return binders(x.region, y.region, [&] {
      return binders(x.ref, y.ref, [&] { return expr(x.body, y.body); });
    });
  }

  bool expr(const ExprPtr& a, const ExprPtr& b) {
    if (!a || !b) return !a && !b;
    if (a->node.index() != b->node.index()) return false;
    return std::visit(
        overloaded{
            [&](const ERet& x) { return value(x.value, as<ERet>(b)->value); },
            [&](const ELet& x) {
              const auto& y = *as<ELet>(b);
              if (!value(x.annot, y.annot) || !expr(x.bound, y.bound)) return false;
              return binders(x.binder, y.binder, [&] { return expr(x.body, y.body); });
            },
            [&](const EApp& x) {
              const auto& y = *as<EApp>(b);
              return value(x.fn, y.fn) && value(x.arg, y.arg);
            },
            [&](const EIndex& x) {
              const auto& y = *as<EIndex>(b);
              return value(x.arr, y.arr) && value(x.idx, y.idx);
            },
            [&](const EFor& x) {
              const auto& y = *as<EFor>(b);
              if (!value(x.annot, y.annot)) return false;
              return binders(x.binder, y.binder, [&] { return expr(x.body, y.body); });
            },
            [&](const EFst& x) { return value(x.v, as<EFst>(b)->v); },
            [&](const ESnd& x) { return value(x.v, as<ESnd>(b)->v); },
            [&](const ECase& x) {
              const auto& y = *as<ECase>(b);
              if (!value(x.scrutinee, y.scrutinee)) return false;
              return binders(x.leftBinder, y.leftBinder,
                             [&] { return expr(x.leftBody, y.leftBody); }) &&
                     binders(x.rightBinder, y.rightBinder,
                             [&] { return expr(x.rightBody, y.rightBody); });
            },
            [&](const ESlice& x) {
              const auto& y = *as<ESlice>(b);
              return value(x.ref, y.ref) && value(x.idx, y.idx);
            },
            [&](const ERunState& x) {
              const auto& y = *as<ERunState>(b);
              return value(x.init, y.init) && action(x.action, y.action);
            },
            [&](const EGet& x) { return value(x.ref, as<EGet>(b)->ref); },
            [&](const EPut& x) {
              const auto& y = *as<EPut>(b);
              return value(x.ref, y.ref) && value(x.value, y.value);
            },
            [&](const ERunAccum& x) { return action(x.action, as<ERunAccum>(b)->action); },
            [&](const EAccum& x) {
              const auto& y = *as<EAccum>(b);
              return value(x.ref, y.ref) && value(x.value, y.value);
            },
            [&](const EBinOp& x) {
              const auto& y = *as<EBinOp>(b);
              return x.op == y.op && value(x.l, y.l) && value(x.r, y.r);
            },
            [&](const EUnOp& x) {
              const auto& y = *as<EUnOp>(b);
              return x.op == y.op && value(x.v, y.v);
            },
            [&](const ELinearize& x) {
              const auto& y = *as<ELinearize>(b);
              return value(x.fn, y.fn) && value(x.point, y.point);
            },
            [&](const ETranspose& x) {
              const auto& y = *as<ETranspose>(b);
              return value(x.fn, y.fn) && value(x.cotangent, y.cotangent);
            },
        },
        a->node);
  }
};

// ---------------------------------------------------------------------------
// Binder refreshing.

struct Refresh {
  std::map<std::uint64_t, Name> renames;

  Name bind(const Name& n) {
    Name f = NameSupply::fresh(n.text);
    renames[n.uid] = f;
    return f;
  }

  Name use(const Name& n) const {
    auto it = renames.find(n.uid);
    return it == renames.end() ? n : it->second;
  }

  EffectRow row(const EffectRow& r) {
    EffectRow out;
    for (const auto& e : r.entries) out.entries.push_back({e.kind, value(e.region)});
    return out;
  }

  ValuePtr value(const ValuePtr& v) {
    if (!v) return v;
    return std::visit(
        overloaded{
            [&](const VVar& n) -> ValuePtr { return vVar(use(n.name), v->span); },
            [&](const VLitFloat&) { return v; },
            [&](const VLitInt&) { return v; },
            [&](const VLitUnit&) { return v; },
            [&](const VBase&) { return v; },
            [&](const VFinType& f) -> ValuePtr { return vFin(value(f.size)); },
            [&](const VArrow& a) -> ValuePtr {
              ValuePtr dom = value(a.dom);
              Name b = bind(a.binder);
              return vArrow(b, dom, row(a.effects), value(a.cod));
            },
            [&](const VArrayType& a) -> ValuePtr {
              return vArray(value(a.dom), value(a.cod));
            },
            [&](const VPairType& p) -> ValuePtr { return vPairType(value(p.l), value(p.r)); },
            [&](const VEitherType& p) -> ValuePtr {
              return vEitherType(value(p.l), value(p.r));
            },
            [&](const VRefType& r) -> ValuePtr {
              return vRef(value(r.region), value(r.payload));
            },
            [&](const VLam& l) -> ValuePtr {
              ValuePtr annot = value(l.annot);
              Name b = bind(l.binder);
              return vLam(b, annot, expr(l.body));
            },
            [&](const VView& l) -> ValuePtr {
              ValuePtr annot = value(l.annot);
              Name b = bind(l.binder);
              return vView(b, annot, expr(l.body));
            },
            [&](const VPair& p) -> ValuePtr { return vPair(value(p.l), value(p.r)); },
            [&](const VInjLeft& i) -> ValuePtr {
              return vLeft(value(i.otherType), value(i.payload));
            },
            [&](const VInjRight& i) -> ValuePtr {
              return vRight(value(i.otherType), value(i.payload));
            },
            [&](const VValueCase& c) -> ValuePtr {
              return vValueCase(value(c.scrutinee), value(c.leftFn), value(c.rightFn));
            },
            [&](const VFinLit& f) -> ValuePtr { return vFinLit(f.ordinal, value(f.size)); },
            [&](const VTableLit& t) -> ValuePtr {
              std::vector<ValuePtr> elems;
              for (const auto& e : t.elems) elems.push_back(value(e));
              return vTableLit(value(t.dom), std::move(elems));
            },
        },
        v->node);
  }

  Action action(const Action& a) {
    Name region = bind(a.region);
    // refAnnot mentions the region binder, so rename it after binding.
    ValuePtr annot = value(a.refAnnot);
    Name ref = bind(a.ref);
    return Action{region, ref, annot, expr(a.body)};
  }

  ExprPtr expr(const ExprPtr& e) {
    if (!e) return e;
    return std::visit(
        overloaded{
            [&](const ERet& r) { return eRet(value(r.value), e->span); },
            [&](const ELet& l) {
              ExprPtr bound = expr(l.bound);
              ValuePtr annot = value(l.annot);
              Name b = bind(l.binder);
              return eLet(b, annot, bound, expr(l.body), e->span);
            },
            [&](const EApp& a) { return eApp(value(a.fn), value(a.arg), e->span); },
            [&](const EIndex& i) { return eIndex(value(i.arr), value(i.idx), e->span); },
            [&](const EFor& f) {
              ValuePtr annot = value(f.annot);
              Name b = bind(f.binder);
              return eFor(b, annot, expr(f.body), e->span);
            },
            [&](const EFst& f) { return eFst(value(f.v), e->span); },
            [&](const ESnd& f) { return eSnd(value(f.v), e->span); },
            [&](const ECase& c) {
              ValuePtr scrut = value(c.scrutinee);
              Name lb = bind(c.leftBinder);
              ExprPtr lbody = expr(c.leftBody);
              Name rb = bind(c.rightBinder);
              ExprPtr rbody = expr(c.rightBody);
              return eCase(scrut, lb, lbody, rb, rbody, e->span);
            },
            [&](const ESlice& s) { return eSlice(value(s.ref), value(s.idx), e->span); },
            [&](const ERunState& r) {
              ValuePtr init = value(r.init);
              return eRunState(init, action(r.action), e->span);
            },
            [&](const EGet& g) { return eGet(value(g.ref), e->span); },
            [&](const EPut& p) { return ePut(value(p.ref), value(p.value), e->span); },
            [&](const ERunAccum& r) { return eRunAccum(action(r.action), e->span); },
            [&](const EAccum& a) { return eAccum(value(a.ref), value(a.value), e->span); },
            [&](const EBinOp& b) { return eBin(b.op, value(b.l), value(b.r), e->span); },
            [&](const EUnOp& u) { return eUn(u.op, value(u.v), e->span); },
            [&](const ELinearize& l) {
              return eLinearize(value(l.fn), value(l.point), e->span);
            },
            [&](const ETranspose& t) {
              return eTranspose(value(t.fn), value(t.cotangent), e->span);
            },
        },
        e->node);
  }
};

}  // namespace

ValuePtr substValue(const ValuePtr& target, const Name& binder, const ValuePtr& repl) {
  return Subst{binder, repl}.value(target);
}

ExprPtr substExpr(const ExprPtr& target, const Name& binder, const ValuePtr& repl) {
  return Subst{binder, repl}.expr(target);
}

NameSet freeVars(const ValuePtr& v) {
  FV fv;
  fv.value(v);
  return std::move(fv.out);
}

NameSet freeVars(const ExprPtr& e) {
  FV fv;
  fv.expr(e);
  return std::move(fv.out);
}

NameSet freeVars(const EffectRow& row) {
  FV fv;
  fv.row(row);
  return std::move(fv.out);
}

bool alphaEq(const ValuePtr& a, const ValuePtr& b) { return AEq{}.value(a, b); }
bool alphaEq(const ExprPtr& a, const ExprPtr& b) { return AEq{}.expr(a, b); }

bool effectRowEq(const EffectRow& a, const EffectRow& b) { return AEq{}.row(a, b); }

bool effectRowSubset(const EffectRow& sub, const EffectRow& super) {
  std::vector<bool> used(super.entries.size(), false);
  for (const auto& e : sub.entries) {
    bool matched = false;
    for (size_t j = 0; j < super.entries.size(); ++j) {
      if (used[j] || super.entries[j].kind != e.kind) continue;
      if (alphaEq(e.region, super.entries[j].region)) {
        used[j] = true;
        matched = true;
        break;
      }
    }
    if (!matched) return false;
  }
  return true;
}

ExprPtr contextFill(const SimplContext& ctx, ExprPtr result) {
  for (auto it = ctx.bindings.rbegin(); it != ctx.bindings.rend(); ++it) {
    result = eLet(it->binder, it->annot, it->bound, std::move(result));
  }
  return result;
}

SimplContext contextCompose(SimplContext a, const SimplContext& b) {
  a.bindings.insert(a.bindings.end(), b.bindings.begin(), b.bindings.end());
  return a;
}

ValuePtr refreshBinders(const ValuePtr& v) { return Refresh{}.value(v); }
ExprPtr refreshBinders(const ExprPtr& e) { return Refresh{}.expr(e); }

}  // namespace dexlet
