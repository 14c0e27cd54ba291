#include "dexlet/simplify.hpp"

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dexlet/autodiff.hpp"
#include "dexlet/errors.hpp"
#include "dexlet/printer.hpp"

namespace dexlet {

namespace {

using Binders = std::vector<std::pair<Name, ValuePtr>>;

void appendCtx(SimplContext& dst, SimplContext&& src) {
  for (auto& b : src.bindings) dst.bindings.push_back(std::move(b));
}

ValuePtr tupleOf(const Binders& kept) {
  if (kept.empty()) return vUnit();
  ValuePtr t = vVar(kept.back().first);
  for (size_t i = kept.size() - 1; i-- > 0;) t = vPair(vVar(kept[i].first), t);
  return t;
}

ValuePtr tupleTyOf(const Binders& kept) {
  if (kept.empty()) return vBase(BaseKind::Unit);
  ValuePtr t = kept.back().second;
  for (size_t i = kept.size() - 1; i-- > 0;) t = vPairType(kept[i].second, t);
  return t;
}

// Rebinds the kept names by taking the right-nested tuple in src apart,
// then continues with inner.
ExprPtr destructure(const ValuePtr& src, const Binders& kept, ExprPtr inner) {
  if (kept.empty()) return inner;
  std::function<ExprPtr(const ValuePtr&, size_t)> rec =
      [&](const ValuePtr& cur, size_t i) -> ExprPtr {
    if (i == kept.size() - 1) {
      return eLet(kept[i].first, kept[i].second, eRet(cur), inner);
    }
    Name p = NameSupply::fresh("p");
    return eLet(kept[i].first, kept[i].second, eFst(cur),
                eLet(p, nullptr, eSnd(cur), rec(vVar(p), i + 1)));
  };
  return rec(src, 0);
}

// Keeps the binders the residual mentions, in scope order. A kept binder
// whose type mentions any binder of the block (or a forbidden name such as
// the loop index) cannot be tupled without dependent pairs.
Binders collectBinders(const Binders& binders, const ValuePtr& residual,
                       const NameSet& forbidden, Span sp) {
  NameSet fv = freeVars(residual);
  NameSet scopeNames = forbidden;
  for (const auto& b : binders) scopeNames.insert(b.first);
  Binders kept;
  for (const auto& b : binders) {
    if (!fv.count(b.first)) continue;
    for (const Name& n : freeVars(b.second)) {
      if (scopeNames.count(n)) {
        fail(ErrCode::Telescope,
             "captured binding '" + printName(b.first) +
                 "' has a type that mentions the local binder '" + printName(n) +
                 "'",
             sp);
      }
    }
    kept.push_back(b);
  }
  return kept;
}

struct Simplifier {
  TypeEnv& env;

  ValuePtr emit(SimplContext& ctx, ExprPtr e, const char* hint) {
    ValuePtr t = checkExpr(Capability::collect(), env, e);
    Name x = NameSupply::fresh(hint);
    ctx.bindings.push_back(Binding{x, t, std::move(e)});
    env.bind(x, t);
    return vVar(x);
  }

  Binders ctxBinders(const SimplContext& ctx) const {
    Binders out;
    for (const auto& b : ctx.bindings) out.emplace_back(b.binder, b.annot);
    return out;
  }

  // ------------------------------------------------------------------
  // Values.

  ValuePtr simpValue(SimplContext& ctx, const ValuePtr& v) {
    if (as<VView>(v)) {
      ValuePtr viewRf = refreshBinders(v);
      const auto* view = as<VView>(viewRf);
      env.bind(view->binder, view->annot);
      SimplResult r = simp(view->body);
      return vView(view->binder, view->annot,
                   contextFill(r.ctx, eRet(r.residual)));
    }
    if (const auto* p = as<VPair>(v)) {
      ValuePtr l = simpValue(ctx, p->l);
      return vPair(std::move(l), simpValue(ctx, p->r));
    }
    if (const auto* inl = as<VInjLeft>(v)) {
      return vLeft(inl->otherType, simpValue(ctx, inl->payload));
    }
    if (const auto* inr = as<VInjRight>(v)) {
      return vRight(inr->otherType, simpValue(ctx, inr->payload));
    }
    if (const auto* tl = as<VTableLit>(v)) {
      std::vector<ValuePtr> elems;
      elems.reserve(tl->elems.size());
      for (const auto& e : tl->elems) elems.push_back(simpValue(ctx, e));
      return vTableLit(tl->dom, std::move(elems));
    }
    if (const auto* vc = as<VValueCase>(v)) {
      ValuePtr s = simpValue(ctx, vc->scrutinee);
      if (const auto* inl = as<VInjLeft>(s)) {
        return betaBranch(ctx, vc->leftFn, inl->payload);
      }
      if (const auto* inr = as<VInjRight>(s)) {
        return betaBranch(ctx, vc->rightFn, inr->payload);
      }
      return vValueCase(s, simpBranch(vc->leftFn), simpBranch(vc->rightFn));
    }
    return v;
  }

  ValuePtr betaBranch(SimplContext& ctx, const ValuePtr& fn, const ValuePtr& arg) {
    ValuePtr lamRf = refreshBinders(fn);
    const auto* lam = as<VLam>(lamRf);
    if (!lam) fail(ErrCode::Internal, "vcase branch is not a lambda", fn->span);
    SimplResult r = simp(substExpr(lam->body, lam->binder, arg));
    appendCtx(ctx, std::move(r.ctx));
    return r.residual;
  }

  ValuePtr simpBranch(const ValuePtr& fn) {
    ValuePtr lamRf = refreshBinders(fn);
    const auto* lam = as<VLam>(lamRf);
    if (!lam) fail(ErrCode::Internal, "vcase branch is not a lambda", fn->span);
    env.bind(lam->binder, lam->annot);
    SimplResult r = simp(lam->body);
    return vLam(lam->binder, lam->annot, contextFill(r.ctx, eRet(r.residual)));
  }

  // ------------------------------------------------------------------
  // Expressions.

  SimplResult simp(const ExprPtr& e) {
    Span sp = e->span;
    return std::visit([&](const auto& n) { return simpNode(n, sp); }, e->node);
  }

  SimplResult simpNode(const ERet& n, Span) {
    SimplContext ctx;
    ValuePtr v = simpValue(ctx, n.value);
    return {std::move(ctx), std::move(v)};
  }

  SimplResult simpNode(const ELet& n, Span) {
    SimplResult bound = simp(n.bound);
    SimplResult body = simp(substExpr(n.body, n.binder, bound.residual));
    return {contextCompose(std::move(bound.ctx), body.ctx), body.residual};
  }

  SimplResult simpNode(const EApp& n, Span sp) {
    SimplContext ctx;
    ValuePtr fn = simpValue(ctx, n.fn);
    ValuePtr arg = simpValue(ctx, n.arg);
    ValuePtr lamRf = refreshBinders(fn);
    const auto* lam = as<VLam>(lamRf);
    if (!lam) fail(ErrCode::Internal, "application head is not a lambda", sp);
    SimplResult r = simp(substExpr(lam->body, lam->binder, arg));
    appendCtx(ctx, std::move(r.ctx));
    return {std::move(ctx), r.residual};
  }

  SimplResult simpNode(const EIndex& n, Span sp) {
    SimplContext ctx;
    ValuePtr arr = simpValue(ctx, n.arr);
    ValuePtr idx = simpValue(ctx, n.idx);
    if (as<VView>(arr)) {
      ValuePtr viewRf = refreshBinders(arr);
      const auto* view = as<VView>(viewRf);
      SimplResult r = simp(substExpr(view->body, view->binder, idx));
      appendCtx(ctx, std::move(r.ctx));
      return {std::move(ctx), r.residual};
    }
    if (const auto* tl = as<VTableLit>(arr)) {
      if (const auto* fin = as<VFinLit>(idx)) {
        if (fin->ordinal >= 0 &&
            fin->ordinal < static_cast<long long>(tl->elems.size())) {
          return {std::move(ctx), tl->elems[static_cast<size_t>(fin->ordinal)]};
        }
      }
    }
    ValuePtr out = emit(ctx, eIndex(arr, idx, sp), "elt");
    return {std::move(ctx), std::move(out)};
  }

  SimplResult simpNode(const EFor& n, Span sp) {
    env.bind(n.binder, n.annot);
    SimplResult r = simp(n.body);
    if (r.ctx.empty()) {
      // Pure element computation: keep it as a lazy view.
      return {SimplContext{}, vView(n.binder, n.annot, eRet(r.residual))};
    }
    Binders kept =
        collectBinders(ctxBinders(r.ctx), r.residual, {n.binder}, sp);

    SimplContext out;
    if (kept.size() == 1) {
      const auto* var = as<VVar>(r.residual);
      if (var && var->name == kept[0].first) {
        ExprPtr inner = contextFill(r.ctx, eRet(r.residual));
        ValuePtr y = emit(out, eFor(n.binder, n.annot, inner, sp), "tab");
        return {std::move(out), std::move(y)};
      }
    }
    ExprPtr inner = contextFill(r.ctx, eRet(tupleOf(kept)));
    ValuePtr y = emit(out, eFor(n.binder, n.annot, inner, sp), "tab");
    ExprPtr viewBody;
    if (kept.empty()) {
      viewBody = eRet(r.residual);
    } else if (kept.size() == 1) {
      viewBody = eLet(kept[0].first, kept[0].second, eIndex(y, vVar(n.binder)),
                      eRet(r.residual));
    } else {
      Name elem = NameSupply::fresh("e");
      viewBody = eLet(elem, tupleTyOf(kept), eIndex(y, vVar(n.binder)),
                      destructure(vVar(elem), kept, eRet(r.residual)));
    }
    ValuePtr res = refreshBinders(vView(n.binder, n.annot, viewBody));
    return {std::move(out), std::move(res)};
  }

  SimplResult simpNode(const EFst& n, Span sp) {
    SimplContext ctx;
    ValuePtr v = simpValue(ctx, n.v);
    if (const auto* p = as<VPair>(v)) return {std::move(ctx), p->l};
    ValuePtr out = emit(ctx, eFst(v, sp), "fst");
    return {std::move(ctx), std::move(out)};
  }

  SimplResult simpNode(const ESnd& n, Span sp) {
    SimplContext ctx;
    ValuePtr v = simpValue(ctx, n.v);
    if (const auto* p = as<VPair>(v)) return {std::move(ctx), p->r};
    ValuePtr out = emit(ctx, eSnd(v, sp), "snd");
    return {std::move(ctx), std::move(out)};
  }

  SimplResult simpNode(const ECase& n, Span sp) {
    SimplContext ctx;
    ValuePtr s = simpValue(ctx, n.scrutinee);
    if (const auto* inl = as<VInjLeft>(s)) {
      SimplResult r = simp(substExpr(n.leftBody, n.leftBinder, inl->payload));
      appendCtx(ctx, std::move(r.ctx));
      return {std::move(ctx), r.residual};
    }
    if (const auto* inr = as<VInjRight>(s)) {
      SimplResult r = simp(substExpr(n.rightBody, n.rightBinder, inr->payload));
      appendCtx(ctx, std::move(r.ctx));
      return {std::move(ctx), r.residual};
    }
    ValuePtr sTy = checkValue(env, s);
    const auto* et = as<VEitherType>(sTy);
    if (!et) fail(ErrCode::Internal, "case scrutinee is not a sum", sp);

    env.bind(n.leftBinder, et->l);
    SimplResult rl = simp(n.leftBody);
    Binders bl;
    bl.emplace_back(n.leftBinder, et->l);
    for (auto& b : ctxBinders(rl.ctx)) bl.push_back(b);
    Binders keptL = collectBinders(bl, rl.residual, {}, sp);
    ValuePtr sigmaL = tupleTyOf(keptL);

    env.bind(n.rightBinder, et->r);
    SimplResult rr = simp(n.rightBody);
    Binders br;
    br.emplace_back(n.rightBinder, et->r);
    for (auto& b : ctxBinders(rr.ctx)) br.push_back(b);
    Binders keptR = collectBinders(br, rr.residual, {}, sp);
    ValuePtr sigmaR = tupleTyOf(keptR);

    ExprPtr caseE =
        eCase(s, n.leftBinder, contextFill(rl.ctx, eRet(vLeft(sigmaR, tupleOf(keptL)))),
              n.rightBinder, contextFill(rr.ctx, eRet(vRight(sigmaL, tupleOf(keptR)))),
              sp);
    ValuePtr z = emit(ctx, std::move(caseE), "sum");

    Name lt = NameSupply::fresh("lt");
    ValuePtr leftFn =
        vLam(lt, sigmaL, destructure(vVar(lt), keptL, eRet(rl.residual)));
    Name rt = NameSupply::fresh("rt");
    ValuePtr rightFn =
        vLam(rt, sigmaR, destructure(vVar(rt), keptR, eRet(rr.residual)));
    ValuePtr res = refreshBinders(vValueCase(z, leftFn, rightFn));
    return {std::move(ctx), std::move(res)};
  }

  SimplResult simpNode(const ESlice& n, Span sp) {
    SimplContext ctx;
    ValuePtr ref = simpValue(ctx, n.ref);
    ValuePtr idx = simpValue(ctx, n.idx);
    ValuePtr out = emit(ctx, eSlice(ref, idx, sp), "sl");
    return {std::move(ctx), std::move(out)};
  }

  SimplResult handler(const ValuePtr& init, const Action& act, Span sp) {
    SimplContext ctx;
    ValuePtr initS = init ? simpValue(ctx, init) : nullptr;
    const auto* refT = as<VRefType>(act.refAnnot);
    if (!refT) fail(ErrCode::Internal, "handler lacks a Ref annotation", sp);
    env.bind(act.region, vBase(BaseKind::Type));
    env.bind(act.ref, act.refAnnot);
    SimplResult r = simp(act.body);

    Binders bs;
    bs.emplace_back(act.ref, act.refAnnot);
    for (auto& b : ctxBinders(r.ctx)) bs.push_back(b);
    Binders kept = collectBinders(bs, r.residual, {act.region}, sp);
    if (freeVars(r.residual).count(act.region)) {
      fail(ErrCode::EscapedRef, "handler region escapes in its result", sp);
    }

    ExprPtr inner = contextFill(r.ctx, eRet(tupleOf(kept)));
    Action outAct{act.region, act.ref, act.refAnnot, std::move(inner)};
    ExprPtr handlerE = init ? eRunState(initS, std::move(outAct), sp)
                            : eRunAccum(std::move(outAct), sp);
    ValuePtr z = emit(ctx, std::move(handlerE), "hd");
    ValuePtr finalSt = emit(ctx, eSnd(z, sp), "st");

    ValuePtr res = r.residual;
    if (!kept.empty()) {
      ValuePtr cur = emit(ctx, eFst(z, sp), "cap");
      for (size_t i = 0; i + 1 < kept.size(); ++i) {
        ValuePtr comp = emit(ctx, eFst(cur, sp), "c");
        res = substValue(res, kept[i].first, comp);
        cur = emit(ctx, eSnd(cur, sp), "r");
      }
      res = substValue(res, kept.back().first, cur);
    }
    return {std::move(ctx), vPair(std::move(res), std::move(finalSt))};
  }

  SimplResult simpNode(const ERunState& n, Span sp) {
    return handler(n.init, n.action, sp);
  }
  SimplResult simpNode(const ERunAccum& n, Span sp) {
    return handler(nullptr, n.action, sp);
  }

  SimplResult simpNode(const EGet& n, Span sp) {
    SimplContext ctx;
    ValuePtr ref = simpValue(ctx, n.ref);
    ValuePtr out = emit(ctx, eGet(ref, sp), "g");
    return {std::move(ctx), std::move(out)};
  }
  SimplResult simpNode(const EPut& n, Span sp) {
    SimplContext ctx;
    ValuePtr ref = simpValue(ctx, n.ref);
    ValuePtr v = simpValue(ctx, n.value);
    ValuePtr out = emit(ctx, ePut(ref, v, sp), "u");
    return {std::move(ctx), std::move(out)};
  }
  SimplResult simpNode(const EAccum& n, Span sp) {
    SimplContext ctx;
    ValuePtr ref = simpValue(ctx, n.ref);
    ValuePtr v = simpValue(ctx, n.value);
    ValuePtr out = emit(ctx, eAccum(ref, v, sp), "u");
    return {std::move(ctx), std::move(out)};
  }

  SimplResult simpNode(const EBinOp& n, Span sp) {
    SimplContext ctx;
    ValuePtr l = simpValue(ctx, n.l);
    ValuePtr r = simpValue(ctx, n.r);
    ValuePtr out = emit(ctx, eBin(n.op, l, r, sp), "b");
    return {std::move(ctx), std::move(out)};
  }
  SimplResult simpNode(const EUnOp& n, Span sp) {
    SimplContext ctx;
    ValuePtr v = simpValue(ctx, n.v);
    ValuePtr out = emit(ctx, eUn(n.op, v, sp), "b");
    return {std::move(ctx), std::move(out)};
  }

  SimplResult simpNode(const ELinearize& n, Span sp) {
    SimplContext ctx;
    ValuePtr fn = simpValue(ctx, n.fn);
    ValuePtr pt = simpValue(ctx, n.point);
    ValuePtr lamRf = refreshBinders(fn);
    const auto* lam = as<VLam>(lamRf);
    if (!lam) fail(ErrCode::Type, "linearize target is not a function literal", sp);
    env.bind(lam->binder, lam->annot);
    SimplResult rb = simp(lam->body);
    ExprPtr simplBody = contextFill(rb.ctx, eRet(rb.residual));
    ExprPtr linCore = linearizeReify(env, lam->binder, lam->annot, simplBody);
    SimplResult r = simp(linCore);
    for (auto& b : r.ctx.bindings) {
      SimplContext tmp;
      tmp.bindings.push_back(
          Binding{b.binder, b.annot ? substValue(b.annot, lam->binder, pt) : nullptr,
                  substExpr(b.bound, lam->binder, pt)});
      appendCtx(ctx, std::move(tmp));
    }
    return {std::move(ctx), substValue(r.residual, lam->binder, pt)};
  }

  SimplResult simpNode(const ETranspose& n, Span sp) {
    SimplContext ctx;
    ValuePtr fn = simpValue(ctx, n.fn);
    ValuePtr ct = simpValue(ctx, n.cotangent);
    ValuePtr lamRf = refreshBinders(fn);
    const auto* lam = as<VLam>(lamRf);
    if (!lam) fail(ErrCode::Type, "transpose target is not a function literal", sp);
    env.bind(lam->binder, lam->annot);
    SimplResult rb = simp(lam->body);
    ExprPtr simplBody = contextFill(rb.ctx, eRet(rb.residual));
    ExprPtr core = transposeTop(env, lam->binder, lam->annot, simplBody, ct);
    SimplResult r = simp(core);
    appendCtx(ctx, std::move(r.ctx));
    return {std::move(ctx), r.residual};
  }

  // ------------------------------------------------------------------
  // Materialization of top-level views.

  static bool typeNeedsReify(const ValuePtr& t) {
    if (as<VArrayType>(t)) return true;
    if (const auto* p = as<VPairType>(t)) {
      return typeNeedsReify(p->l) || typeNeedsReify(p->r);
    }
    if (const auto* e = as<VEitherType>(t)) {
      return typeNeedsReify(e->l) || typeNeedsReify(e->r);
    }
    return false;
  }

  ValuePtr reify(SimplContext& ctx, const ValuePtr& v, const ValuePtr& ty) {
    if (!typeNeedsReify(ty)) return v;
    if (as<VVar>(v)) return v;
    if (const auto* at = as<VArrayType>(ty)) {
      if (const auto* tl = as<VTableLit>(v)) {
        std::vector<ValuePtr> elems;
        elems.reserve(tl->elems.size());
        for (const auto& e : tl->elems) elems.push_back(reify(ctx, e, at->cod));
        return vTableLit(tl->dom, std::move(elems));
      }
      Name x = NameSupply::fresh("ix");
      env.bind(x, at->dom);
      SimplResult r = simp(eIndex(v, vVar(x)));
      ValuePtr elem = reify(r.ctx, r.residual, at->cod);
      ExprPtr body = contextFill(r.ctx, eRet(elem));
      return emit(ctx, eFor(x, at->dom, std::move(body)), "mat");
    }
    if (const auto* pt = as<VPairType>(ty)) {
      if (const auto* p = as<VPair>(v)) {
        ValuePtr l = reify(ctx, p->l, pt->l);
        return vPair(std::move(l), reify(ctx, p->r, pt->r));
      }
      ValuePtr l = emit(ctx, eFst(v), "fst");
      ValuePtr r = emit(ctx, eSnd(v), "snd");
      return vPair(reify(ctx, l, pt->l), reify(ctx, r, pt->r));
    }
    if (const auto* et = as<VEitherType>(ty)) {
      if (const auto* inl = as<VInjLeft>(v)) {
        return vLeft(inl->otherType, reify(ctx, inl->payload, et->l));
      }
      if (const auto* inr = as<VInjRight>(v)) {
        return vRight(inr->otherType, reify(ctx, inr->payload, et->r));
      }
    }
    return v;
  }
};

// ---------------------------------------------------------------------------
// Purity scan for the cleanup passes.

bool valueIsTame(const ValuePtr& v);

bool pureGo(const ExprPtr& e, NameSet& local) {
  return std::visit(
      [&](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ERet>) {
          return valueIsTame(n.value);
        } else if constexpr (std::is_same_v<T, ELet>) {
          bool boundOk = pureGo(n.bound, local);
          bool propagate = false;
          if (const auto* sl = as<ESlice>(n.bound)) {
            const auto* root = as<VVar>(sl->ref);
            propagate = root && local.count(root->name);
          }
          if (propagate) local.insert(n.binder);
          bool bodyOk = pureGo(n.body, local);
          if (propagate) local.erase(n.binder);
          return boundOk && bodyOk;
        } else if constexpr (std::is_same_v<T, EApp> ||
                             std::is_same_v<T, ELinearize> ||
                             std::is_same_v<T, ETranspose>) {
          return false;
        } else if constexpr (std::is_same_v<T, EFor>) {
          return pureGo(n.body, local);
        } else if constexpr (std::is_same_v<T, ECase>) {
          return pureGo(n.leftBody, local) && pureGo(n.rightBody, local);
        } else if constexpr (std::is_same_v<T, ERunState> ||
                             std::is_same_v<T, ERunAccum>) {
          local.insert(n.action.ref);
          bool ok = pureGo(n.action.body, local);
          local.erase(n.action.ref);
          return ok;
        } else if constexpr (std::is_same_v<T, EGet>) {
          const auto* root = as<VVar>(n.ref);
          return root && local.count(root->name);
        } else if constexpr (std::is_same_v<T, EPut> ||
                             std::is_same_v<T, EAccum>) {
          const auto* root = as<VVar>(n.ref);
          return root && local.count(root->name);
        } else {
          return true;
        }
      },
      e->node);
}

// Views and vcase branches carry pure blocks; anything else is inert.
bool valueIsTame(const ValuePtr& v) {
  if (const auto* view = as<VView>(v)) {
    NameSet local;
    return pureGo(view->body, local);
  }
  if (const auto* lam = as<VLam>(v)) {
    NameSet local;
    return pureGo(lam->body, local);
  }
  if (const auto* p = as<VPair>(v)) return valueIsTame(p->l) && valueIsTame(p->r);
  if (const auto* l = as<VInjLeft>(v)) return valueIsTame(l->payload);
  if (const auto* r = as<VInjRight>(v)) return valueIsTame(r->payload);
  if (const auto* vc = as<VValueCase>(v)) {
    return valueIsTame(vc->scrutinee) && valueIsTame(vc->leftFn) &&
           valueIsTame(vc->rightFn);
  }
  if (const auto* tl = as<VTableLit>(v)) {
    for (const auto& e : tl->elems) {
      if (!valueIsTame(e)) return false;
    }
    return true;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Dead code elimination.

ExprPtr dceExpr(const ExprPtr& e);

ValuePtr dceValue(const ValuePtr& v) {
  if (const auto* view = as<VView>(v)) {
    return vView(view->binder, view->annot, dceExpr(view->body));
  }
  if (const auto* lam = as<VLam>(v)) {
    return vLam(lam->binder, lam->annot, dceExpr(lam->body));
  }
  if (const auto* p = as<VPair>(v)) return vPair(dceValue(p->l), dceValue(p->r));
  if (const auto* l = as<VInjLeft>(v)) return vLeft(l->otherType, dceValue(l->payload));
  if (const auto* r = as<VInjRight>(v)) return vRight(r->otherType, dceValue(r->payload));
  if (const auto* vc = as<VValueCase>(v)) {
    return vValueCase(dceValue(vc->scrutinee), dceValue(vc->leftFn),
                      dceValue(vc->rightFn));
  }
  if (const auto* tl = as<VTableLit>(v)) {
    std::vector<ValuePtr> elems;
    for (const auto& el : tl->elems) elems.push_back(dceValue(el));
    return vTableLit(tl->dom, std::move(elems));
  }
  return v;
}

ExprPtr dceExpr(const ExprPtr& e) {
  Span sp = e->span;
  return std::visit(
      [&](const auto& n) -> ExprPtr {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ERet>) {
          return eRet(dceValue(n.value), sp);
        } else if constexpr (std::is_same_v<T, ELet>) {
          ExprPtr body = dceExpr(n.body);
          NameSet local;
          if (!freeVars(body).count(n.binder) && pureGo(n.bound, local)) {
            return body;
          }
          return eLet(n.binder, n.annot, dceExpr(n.bound), body, sp);
        } else if constexpr (std::is_same_v<T, EFor>) {
          return eFor(n.binder, n.annot, dceExpr(n.body), sp);
        } else if constexpr (std::is_same_v<T, ECase>) {
          return eCase(dceValue(n.scrutinee), n.leftBinder, dceExpr(n.leftBody),
                       n.rightBinder, dceExpr(n.rightBody), sp);
        } else if constexpr (std::is_same_v<T, ERunState>) {
          return eRunState(dceValue(n.init),
                           Action{n.action.region, n.action.ref, n.action.refAnnot,
                                  dceExpr(n.action.body)},
                           sp);
        } else if constexpr (std::is_same_v<T, ERunAccum>) {
          return eRunAccum(Action{n.action.region, n.action.ref, n.action.refAnnot,
                                  dceExpr(n.action.body)},
                           sp);
        } else {
          return e;
        }
      },
      e->node);
}

// ---------------------------------------------------------------------------
// Common subexpression elimination. Keys are the canonical printed text of a
// pure binding; unique uids make the text a sound identity within scope, and
// entries are dropped when their binder leaves scope.

using CseMap = std::map<std::string, Name>;

ExprPtr cseGo(const ExprPtr& e, CseMap& m);

ValuePtr cseValue(const ValuePtr& v, CseMap& m) {
  if (const auto* view = as<VView>(v)) {
    return vView(view->binder, view->annot, cseGo(view->body, m));
  }
  if (const auto* lam = as<VLam>(v)) {
    return vLam(lam->binder, lam->annot, cseGo(lam->body, m));
  }
  if (const auto* p = as<VPair>(v)) return vPair(cseValue(p->l, m), cseValue(p->r, m));
  if (const auto* l = as<VInjLeft>(v)) return vLeft(l->otherType, cseValue(l->payload, m));
  if (const auto* r = as<VInjRight>(v)) {
    return vRight(r->otherType, cseValue(r->payload, m));
  }
  if (const auto* vc = as<VValueCase>(v)) {
    return vValueCase(cseValue(vc->scrutinee, m), cseValue(vc->leftFn, m),
                      cseValue(vc->rightFn, m));
  }
  return v;
}

ExprPtr cseInner(const ExprPtr& e, CseMap& m) {
  Span sp = e->span;
  return std::visit(
      [&](const auto& n) -> ExprPtr {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ERet>) {
          return eRet(cseValue(n.value, m), sp);
        } else if constexpr (std::is_same_v<T, EFor>) {
          return eFor(n.binder, n.annot, cseGo(n.body, m), sp);
        } else if constexpr (std::is_same_v<T, ECase>) {
          return eCase(cseValue(n.scrutinee, m), n.leftBinder,
                       cseGo(n.leftBody, m), n.rightBinder,
                       cseGo(n.rightBody, m), sp);
        } else if constexpr (std::is_same_v<T, ERunState>) {
          return eRunState(cseValue(n.init, m),
                           Action{n.action.region, n.action.ref, n.action.refAnnot,
                                  cseGo(n.action.body, m)},
                           sp);
        } else if constexpr (std::is_same_v<T, ERunAccum>) {
          return eRunAccum(Action{n.action.region, n.action.ref, n.action.refAnnot,
                                  cseGo(n.action.body, m)},
                           sp);
        } else {
          return e;
        }
      },
      e->node);
}

ExprPtr cseGo(const ExprPtr& e, CseMap& m) {
  const auto* l = as<ELet>(e);
  if (!l) return cseInner(e, m);
  ExprPtr bound = cseInner(l->bound, m);
  NameSet local;
  if (pureGo(bound, local)) {
    std::string key = printExpr(bound);
    auto it = m.find(key);
    if (it != m.end()) {
      return cseGo(substExpr(l->body, l->binder, vVar(it->second)), m);
    }
    m.emplace(key, l->binder);
    ExprPtr body = cseGo(l->body, m);
    m.erase(key);
    return eLet(l->binder, l->annot, bound, body, e->span);
  }
  return eLet(l->binder, l->annot, bound, cseGo(l->body, m), e->span);
}

// ---------------------------------------------------------------------------
// Loop fusion: inline a for-bound array consumed exactly once at an index
// position, so the producer's per-element work (including accumulation)
// happens at the consumption site instead of through an intermediate table.

long long countOccV(const ValuePtr& v, const Name& x);

long long countOccE(const ExprPtr& e, const Name& x) {
  return std::visit(
      [&](const auto& n) -> long long {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ERet>) {
          return countOccV(n.value, x);
        } else if constexpr (std::is_same_v<T, ELet>) {
          return countOccE(n.bound, x) + countOccE(n.body, x);
        } else if constexpr (std::is_same_v<T, EApp>) {
          return countOccV(n.fn, x) + countOccV(n.arg, x);
        } else if constexpr (std::is_same_v<T, EIndex>) {
          return countOccV(n.arr, x) + countOccV(n.idx, x);
        } else if constexpr (std::is_same_v<T, EFor>) {
          return countOccE(n.body, x);
        } else if constexpr (std::is_same_v<T, EFst>) {
          return countOccV(n.v, x);
        } else if constexpr (std::is_same_v<T, ESnd>) {
          return countOccV(n.v, x);
        } else if constexpr (std::is_same_v<T, ECase>) {
          return countOccV(n.scrutinee, x) + countOccE(n.leftBody, x) +
                 countOccE(n.rightBody, x);
        } else if constexpr (std::is_same_v<T, ESlice>) {
          return countOccV(n.ref, x) + countOccV(n.idx, x);
        } else if constexpr (std::is_same_v<T, ERunState>) {
          return countOccV(n.init, x) + countOccE(n.action.body, x);
        } else if constexpr (std::is_same_v<T, ERunAccum>) {
          return countOccE(n.action.body, x);
        } else if constexpr (std::is_same_v<T, EGet>) {
          return countOccV(n.ref, x);
        } else if constexpr (std::is_same_v<T, EPut>) {
          return countOccV(n.ref, x) + countOccV(n.value, x);
        } else if constexpr (std::is_same_v<T, EAccum>) {
          return countOccV(n.ref, x) + countOccV(n.value, x);
        } else if constexpr (std::is_same_v<T, EBinOp>) {
          return countOccV(n.l, x) + countOccV(n.r, x);
        } else if constexpr (std::is_same_v<T, EUnOp>) {
          return countOccV(n.v, x);
        } else if constexpr (std::is_same_v<T, ELinearize>) {
          return countOccV(n.fn, x) + countOccV(n.point, x);
        } else {
          const auto& t = static_cast<const ETranspose&>(n);
          return countOccV(t.fn, x) + countOccV(t.cotangent, x);
        }
      },
      e->node);
}

long long countOccV(const ValuePtr& v, const Name& x) {
  if (!v) return 0;
  if (const auto* var = as<VVar>(v)) return var->name == x ? 1 : 0;
  if (const auto* a = as<VArrow>(v)) return countOccV(a->dom, x) + countOccV(a->cod, x);
  if (const auto* a = as<VArrayType>(v)) return countOccV(a->dom, x) + countOccV(a->cod, x);
  if (const auto* p = as<VPairType>(v)) return countOccV(p->l, x) + countOccV(p->r, x);
  if (const auto* p = as<VEitherType>(v)) return countOccV(p->l, x) + countOccV(p->r, x);
  if (const auto* r = as<VRefType>(v)) {
    return countOccV(r->region, x) + countOccV(r->payload, x);
  }
  if (const auto* f = as<VFinType>(v)) return countOccV(f->size, x);
  if (const auto* l = as<VLam>(v)) return countOccV(l->annot, x) + countOccE(l->body, x);
  if (const auto* w = as<VView>(v)) return countOccV(w->annot, x) + countOccE(w->body, x);
  if (const auto* p = as<VPair>(v)) return countOccV(p->l, x) + countOccV(p->r, x);
  if (const auto* i = as<VInjLeft>(v)) {
    return countOccV(i->otherType, x) + countOccV(i->payload, x);
  }
  if (const auto* i = as<VInjRight>(v)) {
    return countOccV(i->otherType, x) + countOccV(i->payload, x);
  }
  if (const auto* c = as<VValueCase>(v)) {
    return countOccV(c->scrutinee, x) + countOccV(c->leftFn, x) +
           countOccV(c->rightFn, x);
  }
  if (const auto* f = as<VFinLit>(v)) return countOccV(f->size, x);
  if (const auto* t = as<VTableLit>(v)) {
    long long c = countOccV(t->dom, x);
    for (const auto& el : t->elems) c += countOccV(el, x);
    return c;
  }
  return 0;
}

// No state on outer refs, no calls; accumulation is fine because it targets
// cells handled outside both the producer and the consumer, and accumulated
// contributions combine in any order.
bool stateFreeGo(const ExprPtr& e, NameSet& local) {
  return std::visit(
      [&](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ERet> || std::is_same_v<T, EAccum>) {
          return true;
        } else if constexpr (std::is_same_v<T, ELet>) {
          bool boundOk = stateFreeGo(n.bound, local);
          bool propagate = false;
          if (const auto* sl = as<ESlice>(n.bound)) {
            const auto* root = as<VVar>(sl->ref);
            propagate = root && local.count(root->name);
          }
          if (propagate) local.insert(n.binder);
          bool bodyOk = stateFreeGo(n.body, local);
          if (propagate) local.erase(n.binder);
          return boundOk && bodyOk;
        } else if constexpr (std::is_same_v<T, EApp> ||
                             std::is_same_v<T, ELinearize> ||
                             std::is_same_v<T, ETranspose>) {
          return false;
        } else if constexpr (std::is_same_v<T, EFor>) {
          return stateFreeGo(n.body, local);
        } else if constexpr (std::is_same_v<T, ECase>) {
          return stateFreeGo(n.leftBody, local) &&
                 stateFreeGo(n.rightBody, local);
        } else if constexpr (std::is_same_v<T, ERunState> ||
                             std::is_same_v<T, ERunAccum>) {
          local.insert(n.action.ref);
          bool ok = stateFreeGo(n.action.body, local);
          local.erase(n.action.ref);
          return ok;
        } else if constexpr (std::is_same_v<T, EGet> ||
                             std::is_same_v<T, EPut>) {
          const auto* root = as<VVar>(n.ref);
          return root && local.count(root->name);
        } else {
          return true;
        }
      },
      e->node);
}

bool stateFreeBody(const ExprPtr& e) {
  NameSet local;
  return stateFreeGo(e, local);
}

// Turns the producer block (with the loop index already substituted) into a
// prefix whose final statement is bound to z, followed by rest.
ExprPtr spliceTail(const ExprPtr& block, const Name& z, const ValuePtr& zAnnot,
                   const ExprPtr& rest) {
  if (const auto* l = as<ELet>(block)) {
    return eLet(l->binder, l->annot, l->bound,
                spliceTail(l->body, z, zAnnot, rest), block->span);
  }
  return eLet(z, zAnnot, block, rest, block->span);
}

struct InlineSearch {
  Name y;
  const EFor* loop = nullptr;

  ExprPtr go(const ExprPtr& e, bool crossed, const Name* crossBinder,
             const ValuePtr& crossDom) {
    Span sp = e->span;
    if (const auto* l = as<ELet>(e)) {
      if (const auto* ix = as<EIndex>(l->bound)) {
        const auto* root = as<VVar>(ix->arr);
        if (root && root->name == y) {
          bool ok;
          if (!crossed) {
            ok = true;
          } else {
            const auto* iv = as<VVar>(ix->idx);
            ok = iv && crossBinder && iv->name == *crossBinder &&
                 alphaEq(crossDom, loop->annot);
          }
          if (!ok) return nullptr;
          ExprPtr body = refreshBinders(
              substExpr(loop->body, loop->binder, ix->idx));
          return spliceTail(body, l->binder, l->annot, l->body);
        }
      }
      if (ExprPtr sub = goBound(l->bound, crossed, crossBinder, crossDom)) {
        return eLet(l->binder, l->annot, sub, l->body, sp);
      }
      if (ExprPtr sub = go(l->body, crossed, crossBinder, crossDom)) {
        return eLet(l->binder, l->annot, l->bound, sub, sp);
      }
      return nullptr;
    }
    if (const auto* ix = as<EIndex>(e)) {
      const auto* root = as<VVar>(ix->arr);
      if (root && root->name == y) {
        bool ok;
        if (!crossed) {
          ok = true;
        } else {
          const auto* iv = as<VVar>(ix->idx);
          ok = iv && crossBinder && iv->name == *crossBinder &&
               alphaEq(crossDom, loop->annot);
        }
        if (!ok) return nullptr;
        return refreshBinders(substExpr(loop->body, loop->binder, ix->idx));
      }
      return nullptr;
    }
    return goBound(e, crossed, crossBinder, crossDom);
  }

  ExprPtr goBound(const ExprPtr& e, bool crossed, const Name* crossBinder,
                  const ValuePtr& crossDom) {
    Span sp = e->span;
    if (const auto* f = as<EFor>(e)) {
      if (crossed) return nullptr;
      if (ExprPtr sub = go(f->body, true, &f->binder, f->annot)) {
        return eFor(f->binder, f->annot, sub, sp);
      }
      return nullptr;
    }
    if (const auto* rs = as<ERunState>(e)) {
      if (ExprPtr sub = go(rs->action.body, crossed, crossBinder, crossDom)) {
        return eRunState(rs->init,
                         Action{rs->action.region, rs->action.ref,
                                rs->action.refAnnot, sub},
                         sp);
      }
      return nullptr;
    }
    if (const auto* ra = as<ERunAccum>(e)) {
      if (ExprPtr sub = go(ra->action.body, crossed, crossBinder, crossDom)) {
        return eRunAccum(Action{ra->action.region, ra->action.ref,
                                ra->action.refAnnot, sub},
                         sp);
      }
      return nullptr;
    }
    return nullptr;
  }
};

ExprPtr fuseGo(const ExprPtr& e);

ExprPtr fuseInner(const ExprPtr& e) {
  Span sp = e->span;
  return std::visit(
      [&](const auto& n) -> ExprPtr {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, EFor>) {
          return eFor(n.binder, n.annot, fuseGo(n.body), sp);
        } else if constexpr (std::is_same_v<T, ECase>) {
          return eCase(n.scrutinee, n.leftBinder, fuseGo(n.leftBody),
                       n.rightBinder, fuseGo(n.rightBody), sp);
        } else if constexpr (std::is_same_v<T, ERunState>) {
          return eRunState(n.init,
                           Action{n.action.region, n.action.ref, n.action.refAnnot,
                                  fuseGo(n.action.body)},
                           sp);
        } else if constexpr (std::is_same_v<T, ERunAccum>) {
          return eRunAccum(Action{n.action.region, n.action.ref, n.action.refAnnot,
                                  fuseGo(n.action.body)},
                           sp);
        } else {
          return e;
        }
      },
      e->node);
}

ExprPtr fuseGo(const ExprPtr& e) {
  const auto* l = as<ELet>(e);
  if (!l) return fuseInner(e);
  ExprPtr bound = fuseInner(l->bound);
  ExprPtr body = fuseGo(l->body);
  if (const auto* loop = as<EFor>(bound)) {
    if (countOccE(body, l->binder) == 1 && stateFreeBody(loop->body)) {
      InlineSearch search{l->binder, loop};
      if (ExprPtr fused = search.go(body, false, nullptr, nullptr)) {
        return fused;
      }
    }
  }
  return eLet(l->binder, l->annot, bound, body, e->span);
}

// ---------------------------------------------------------------------------
// First-order grammar check.

bool foValue(const ValuePtr& v, bool lamAllowed);

bool foExpr(const ExprPtr& e) {
  return std::visit(
      [&](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ERet>) {
          return foValue(n.value, false);
        } else if constexpr (std::is_same_v<T, ELet>) {
          return (!n.annot || foValue(n.annot, false)) && foExpr(n.bound) &&
                 foExpr(n.body);
        } else if constexpr (std::is_same_v<T, EApp> ||
                             std::is_same_v<T, ELinearize> ||
                             std::is_same_v<T, ETranspose>) {
          return false;
        } else if constexpr (std::is_same_v<T, EIndex>) {
          return foValue(n.arr, false) && foValue(n.idx, false);
        } else if constexpr (std::is_same_v<T, EFor>) {
          return foValue(n.annot, false) && foExpr(n.body);
        } else if constexpr (std::is_same_v<T, EFst>) {
          return foValue(n.v, false);
        } else if constexpr (std::is_same_v<T, ESnd>) {
          return foValue(n.v, false);
        } else if constexpr (std::is_same_v<T, ECase>) {
          return foValue(n.scrutinee, false) && foExpr(n.leftBody) &&
                 foExpr(n.rightBody);
        } else if constexpr (std::is_same_v<T, ESlice>) {
          return foValue(n.ref, false) && foValue(n.idx, false);
        } else if constexpr (std::is_same_v<T, ERunState>) {
          return foValue(n.init, false) && foValue(n.action.refAnnot, false) &&
                 foExpr(n.action.body);
        } else if constexpr (std::is_same_v<T, ERunAccum>) {
          return foValue(n.action.refAnnot, false) && foExpr(n.action.body);
        } else if constexpr (std::is_same_v<T, EGet>) {
          return foValue(n.ref, false);
        } else if constexpr (std::is_same_v<T, EPut>) {
          return foValue(n.ref, false) && foValue(n.value, false);
        } else if constexpr (std::is_same_v<T, EAccum>) {
          return foValue(n.ref, false) && foValue(n.value, false);
        } else if constexpr (std::is_same_v<T, EBinOp>) {
          return foValue(n.l, false) && foValue(n.r, false);
        } else {
          const auto& u = static_cast<const EUnOp&>(n);
          return foValue(u.v, false);
        }
      },
      e->node);
}

bool foValue(const ValuePtr& v, bool lamAllowed) {
  if (!v) return true;
  if (as<VArrow>(v)) return false;
  if (const auto* lam = as<VLam>(v)) {
    if (!lamAllowed) return false;
    return foValue(lam->annot, false) && foExpr(lam->body);
  }
  if (const auto* view = as<VView>(v)) {
    return foValue(view->annot, false) && foExpr(view->body);
  }
  if (const auto* p = as<VPair>(v)) return foValue(p->l, false) && foValue(p->r, false);
  if (const auto* p = as<VPairType>(v)) {
    return foValue(p->l, false) && foValue(p->r, false);
  }
  if (const auto* p = as<VEitherType>(v)) {
    return foValue(p->l, false) && foValue(p->r, false);
  }
  if (const auto* a = as<VArrayType>(v)) {
    return foValue(a->dom, false) && foValue(a->cod, false);
  }
  if (const auto* r = as<VRefType>(v)) {
    return foValue(r->region, false) && foValue(r->payload, false);
  }
  if (const auto* f = as<VFinType>(v)) return foValue(f->size, false);
  if (const auto* i = as<VInjLeft>(v)) {
    return foValue(i->otherType, false) && foValue(i->payload, false);
  }
  if (const auto* i = as<VInjRight>(v)) {
    return foValue(i->otherType, false) && foValue(i->payload, false);
  }
  if (const auto* c = as<VValueCase>(v)) {
    return foValue(c->scrutinee, false) && foValue(c->leftFn, true) &&
           foValue(c->rightFn, true);
  }
  if (const auto* f = as<VFinLit>(v)) return foValue(f->size, false);
  if (const auto* t = as<VTableLit>(v)) {
    if (!foValue(t->dom, false)) return false;
    for (const auto& el : t->elems) {
      if (!foValue(el, false)) return false;
    }
    return true;
  }
  return true;
}

}  // namespace

SimplResult simplify(TypeEnv& env, const ExprPtr& e) {
  Simplifier s{env};
  return s.simp(e);
}

ExprPtr simplifyExpr(const ExprPtr& e) {
  TypeEnv env;
  Simplifier s{env};
  SimplResult r = s.simp(e);
  ValuePtr ty = checkValue(env, r.residual);
  ValuePtr out = s.reify(r.ctx, r.residual, ty);
  return contextFill(r.ctx, eRet(out));
}

ExprPtr dce(const ExprPtr& e) { return dceExpr(e); }

ExprPtr cse(const ExprPtr& e) {
  CseMap m;
  return cseGo(e, m);
}

ExprPtr inlineForFusion(const ExprPtr& e) {
  ExprPtr cur = e;
  for (int i = 0; i < 10; ++i) {
    ExprPtr next = fuseGo(cur);
    if (printExpr(next) == printExpr(cur)) break;
    cur = next;
  }
  return cur;
}

ExprPtr optimize(const ExprPtr& e) {
  ExprPtr cur = dce(cse(dce(e)));
  cur = inlineForFusion(cur);
  return dce(cse(cur));
}

bool isFirstOrder(const ExprPtr& e) { return foExpr(e); }

bool exprIsPure(const ExprPtr& e) {
  NameSet local;
  return pureGo(e, local);
}

}  // namespace dexlet
