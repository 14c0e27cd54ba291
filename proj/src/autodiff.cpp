#include "dexlet/autodiff.hpp"

#include <functional>
#include <utility>
#include <vector>

#include "dexlet/errors.hpp"
#include "dexlet/printer.hpp"

namespace dexlet {

namespace {

ValuePtr floatT() { return vBase(BaseKind::Float); }

// ---------------------------------------------------------------------------
// Linearization.

// Delta maps primal variables to tangent values, in scope order; variables
// not listed get a zero tangent manufactured from their primal type.
using Delta = std::vector<std::pair<Name, ValuePtr>>;

struct Linearizer {
  TypeEnv& env;

  struct Res {
    SimplContext ctx;
    ExprPtr primal;
    ExprPtr tangent;
  };

  ValuePtr emit(SimplContext& ctx, ExprPtr e, const char* hint) {
    ValuePtr t = checkExpr(Capability::collect(), env, e);
    Name x = NameSupply::fresh(hint);
    ctx.bindings.push_back(Binding{x, t, std::move(e)});
    env.bind(x, t);
    return vVar(x);
  }

  ValuePtr deltaOf(const Delta& d, const ValuePtr& v) {
    Span sp = v->span;
    if (const auto* var = as<VVar>(v)) {
      for (auto it = d.rbegin(); it != d.rend(); ++it) {
        if (it->first == var->name) return it->second;
      }
      ValuePtr t = env.lookup(var->name);
      if (!t) {
        fail(ErrCode::Internal,
             "no type for '" + printName(var->name) + "' during linearization",
             sp);
      }
      return zeroValue(tangentType(t));
    }
    if (as<VLitFloat>(v)) return vFloat(0.0);
    if (as<VLitInt>(v) || as<VLitUnit>(v) || as<VFinLit>(v)) return vUnit();
    if (const auto* p = as<VPair>(v)) {
      return vPair(deltaOf(d, p->l), deltaOf(d, p->r));
    }
    if (const auto* tl = as<VTableLit>(v)) {
      std::vector<ValuePtr> elems;
      elems.reserve(tl->elems.size());
      for (const auto& e : tl->elems) elems.push_back(deltaOf(d, e));
      return vTableLit(tl->dom, std::move(elems));
    }
    if (as<VView>(v)) {
      ValuePtr viewRf = refreshBinders(v);
      const auto* view = as<VView>(viewRf);
      env.bind(view->binder, view->annot);
      Delta d2 = d;
      Res r = lin(d2, view->body);
      return vView(view->binder, view->annot,
                   contextFill(r.ctx, r.tangent));
    }
    fail(ErrCode::UnsupportedTangent,
         "value has no tangent: " + printValue(v), sp);
  }

  // Wraps the linearized body as E[(primal, \t1. ... \tn. tangent)].
  ExprPtr reifyCore(const std::vector<std::pair<Name, ValuePtr>>& lamBinders,
                    Delta dInner, const ExprPtr& body) {
    for (const auto& b : lamBinders) env.bind(b.first, b.second);
    Res r = lin(dInner, body);
    SimplContext ctx = std::move(r.ctx);
    Name p = NameSupply::fresh("pr");
    ctx.bindings.push_back(Binding{p, nullptr, r.primal});
    ValuePtr lam =
        vLam(lamBinders.back().first, lamBinders.back().second, r.tangent);
    for (size_t i = lamBinders.size() - 1; i-- > 0;) {
      lam = vLam(lamBinders[i].first, lamBinders[i].second, eRet(lam));
    }
    return contextFill(ctx, eRet(vPair(vVar(p), lam)));
  }

  // Tangent binders and application arguments for the Delta variables that
  // occur free in a subterm.
  void pickCaptured(const Delta& d, const ExprPtr& body, std::vector<Name>& xs,
                    std::vector<ValuePtr>& ts) {
    NameSet fv = freeVars(body);
    for (const auto& [nm, tv] : d) {
      if (fv.count(nm)) {
        xs.push_back(nm);
        ts.push_back(tv);
      }
    }
  }

  std::vector<std::pair<Name, ValuePtr>> tangentBinders(
      const std::vector<Name>& xs, const std::vector<ValuePtr>& ts,
      Delta& dInner) {
    std::vector<std::pair<Name, ValuePtr>> binders;
    for (size_t i = 0; i < xs.size(); ++i) {
      Name tb = NameSupply::fresh("d" + xs[i].text);
      binders.emplace_back(tb, checkValue(env, ts[i]));
      dInner.emplace_back(xs[i], vVar(tb));
    }
    if (binders.empty()) {
      binders.emplace_back(NameSupply::fresh("du"), vBase(BaseKind::Unit));
    }
    return binders;
  }

  // f t1 ... tn as a block; a unit argument stands in when nothing was
  // captured so the reified pair always holds a function.
  ExprPtr applyChain(const ValuePtr& f, const std::vector<ValuePtr>& args) {
    std::vector<ValuePtr> as = args;
    if (as.empty()) as.push_back(vUnit());
    std::function<ExprPtr(const ValuePtr&, size_t)> rec =
        [&](const ValuePtr& fn, size_t i) -> ExprPtr {
      if (i + 1 == as.size()) return eApp(fn, as[i]);
      Name r = NameSupply::fresh("ap");
      return eLet(r, nullptr, eApp(fn, as[i]), rec(vVar(r), i + 1));
    };
    return rec(f, 0);
  }

  Res lin(Delta& d, const ExprPtr& e) {
    Span sp = e->span;
    return std::visit([&](const auto& n) { return linNode(d, n, sp); },
                      e->node);
  }

  Res linNode(Delta& d, const ERet& n, Span) {
    return {{}, eRet(n.value), eRet(deltaOf(d, n.value))};
  }

  Res linNode(Delta& d, const ELet& n, Span sp) {
    ValuePtr tau =
        n.annot ? n.annot : checkExpr(Capability::collect(), env, n.bound);
    Res r1 = lin(d, n.bound);
    env.bind(n.binder, tau);
    Name t = NameSupply::fresh("d" + n.binder.text);
    // The tangent of a Ref lives in the tangent handler's region, so the
    // binding type must come from the tangent expression itself.
    ValuePtr tanT = checkExpr(Capability::collect(), env, r1.tangent);
    env.bind(t, tanT);
    d.emplace_back(n.binder, vVar(t));
    Res r2 = lin(d, n.body);
    d.pop_back();
    SimplContext ctx = std::move(r1.ctx);
    ctx.bindings.push_back(Binding{n.binder, tau, r1.primal});
    for (auto& b : r2.ctx.bindings) ctx.bindings.push_back(std::move(b));
    ExprPtr tangent = eLet(t, tanT, r1.tangent, r2.tangent, sp);
    return {std::move(ctx), r2.primal, std::move(tangent)};
  }

  Res linNode(Delta& d, const EBinOp& n, Span sp) {
    ExprPtr primal = eBin(n.op, n.l, n.r, sp);
    switch (n.op) {
      case BinOp::Add:
      case BinOp::Sub:
        return {{}, primal, eBin(n.op, deltaOf(d, n.l), deltaOf(d, n.r), sp)};
      case BinOp::Mul: {
        Name a = NameSupply::fresh("m");
        Name b = NameSupply::fresh("m");
        ExprPtr tangent =
            eLet(a, floatT(), eBin(BinOp::Mul, n.l, deltaOf(d, n.r), sp),
                 eLet(b, floatT(), eBin(BinOp::Mul, deltaOf(d, n.l), n.r, sp),
                      eBin(BinOp::Add, vVar(a), vVar(b), sp)));
        return {{}, primal, std::move(tangent)};
      }
      case BinOp::Div: {
        Name a = NameSupply::fresh("q");
        Name b = NameSupply::fresh("q");
        Name c = NameSupply::fresh("q");
        Name q = NameSupply::fresh("q");
        ExprPtr tangent = eLet(
            a, floatT(), eBin(BinOp::Div, deltaOf(d, n.l), n.r, sp),
            eLet(b, floatT(), eBin(BinOp::Mul, n.l, deltaOf(d, n.r), sp),
                 eLet(c, floatT(), eBin(BinOp::Mul, n.r, n.r, sp),
                      eLet(q, floatT(), eBin(BinOp::Div, vVar(b), vVar(c), sp),
                           eBin(BinOp::Sub, vVar(a), vVar(q), sp)))));
        return {{}, primal, std::move(tangent)};
      }
      case BinOp::Less:
        fail(ErrCode::UnsupportedTangent, "comparison has no tangent", sp);
    }
    fail(ErrCode::Internal, "unknown binary operator", sp);
  }

  Res linNode(Delta&, const EUnOp& n, Span sp) {
    ExprPtr primal = eUn(n.op, n.v, sp);
    if (n.op == UnOp::IntToFloat) return {{}, primal, eRet(vFloat(0.0))};
    return {{}, primal, eRet(vUnit())};
  }

  Res linNode(Delta& d, const EIndex& n, Span sp) {
    return {{}, eIndex(n.arr, n.idx, sp), eIndex(deltaOf(d, n.arr), n.idx, sp)};
  }
  Res linNode(Delta& d, const EFst& n, Span sp) {
    return {{}, eFst(n.v, sp), eFst(deltaOf(d, n.v), sp)};
  }
  Res linNode(Delta& d, const ESnd& n, Span sp) {
    return {{}, eSnd(n.v, sp), eSnd(deltaOf(d, n.v), sp)};
  }
  Res linNode(Delta& d, const ESlice& n, Span sp) {
    return {{}, eSlice(n.ref, n.idx, sp), eSlice(deltaOf(d, n.ref), n.idx, sp)};
  }
  Res linNode(Delta& d, const EGet& n, Span sp) {
    return {{}, eGet(n.ref, sp), eGet(deltaOf(d, n.ref), sp)};
  }
  Res linNode(Delta& d, const EPut& n, Span sp) {
    return {{}, ePut(n.ref, n.value, sp),
            ePut(deltaOf(d, n.ref), deltaOf(d, n.value), sp)};
  }
  Res linNode(Delta& d, const EAccum& n, Span sp) {
    return {{}, eAccum(n.ref, n.value, sp),
            eAccum(deltaOf(d, n.ref), deltaOf(d, n.value), sp)};
  }

  Res linNode(Delta& d, const EFor& n, Span sp) {
    std::vector<Name> xs;
    std::vector<ValuePtr> ts;
    pickCaptured(d, n.body, xs, ts);
    Delta dInner;
    auto binders = tangentBinders(xs, ts, dInner);
    env.bind(n.binder, n.annot);
    ExprPtr reified = reifyCore(binders, std::move(dInner), n.body);
    SimplContext ctx;
    ValuePtr tab = emit(ctx, eFor(n.binder, n.annot, reified, sp), "lx");

    Name j = NameSupply::fresh("j");
    Name c = NameSupply::fresh("c");
    ExprPtr primal = eRet(vView(
        j, n.annot, eLet(c, nullptr, eIndex(tab, vVar(j)), eFst(vVar(c)))));

    Name j2 = NameSupply::fresh("j");
    Name s = NameSupply::fresh("s");
    Name f = NameSupply::fresh("f");
    env.bind(j2, n.annot);
    ExprPtr tbody =
        eLet(s, nullptr, eIndex(tab, vVar(j2)),
             eLet(f, nullptr, eSnd(vVar(s)), applyChain(vVar(f), ts)));
    ExprPtr tangent = eFor(j2, n.annot, std::move(tbody), sp);
    return {std::move(ctx), std::move(primal), std::move(tangent)};
  }

  static bool tangentIsTrivial(const ValuePtr& t) {
    if (isBase(t, BaseKind::Unit)) return true;
    if (const auto* p = as<VPairType>(t)) {
      return tangentIsTrivial(p->l) && tangentIsTrivial(p->r);
    }
    if (const auto* a = as<VArrayType>(t)) return tangentIsTrivial(a->cod);
    return false;
  }

  Res linNode(Delta& d, const ECase& n, Span sp) {
    ValuePtr sTy = checkValue(env, n.scrutinee);
    const auto* et = as<VEitherType>(sTy);
    if (!et) fail(ErrCode::Internal, "case scrutinee is not a sum", sp);
    if (!tangentIsTrivial(tangentType(et->l)) ||
        !tangentIsTrivial(tangentType(et->r))) {
      fail(ErrCode::UnsupportedTangent,
           "case analysis on a value with a nontrivial tangent", sp);
    }
    std::vector<Name> xsL, xsR;
    std::vector<ValuePtr> tsL, tsR;
    pickCaptured(d, n.leftBody, xsL, tsL);
    pickCaptured(d, n.rightBody, xsR, tsR);
    // The two branch closures must agree in type, so reify both over the
    // union of captured variables.
    std::vector<Name> xs = xsL;
    std::vector<ValuePtr> ts = tsL;
    for (size_t i = 0; i < xsR.size(); ++i) {
      bool seen = false;
      for (const Name& x : xs) seen = seen || x == xsR[i];
      if (!seen) {
        xs.push_back(xsR[i]);
        ts.push_back(tsR[i]);
      }
    }
    env.bind(n.leftBinder, et->l);
    Delta dl;
    auto bindersL = tangentBinders(xs, ts, dl);
    ExprPtr lE = reifyCore(bindersL, std::move(dl), n.leftBody);
    env.bind(n.rightBinder, et->r);
    Delta dr;
    auto bindersR = tangentBinders(xs, ts, dr);
    ExprPtr rE = reifyCore(bindersR, std::move(dr), n.rightBody);

    SimplContext ctx;
    ValuePtr z = emit(
        ctx, eCase(n.scrutinee, n.leftBinder, lE, n.rightBinder, rE, sp), "lc");
    ExprPtr primal = eFst(z, sp);
    Name f = NameSupply::fresh("f");
    ExprPtr tangent = eLet(f, nullptr, eSnd(z), applyChain(vVar(f), ts));
    return {std::move(ctx), std::move(primal), std::move(tangent)};
  }

  Res linHandler(Delta& d, const ValuePtr& init, const Action& act, Span sp) {
    const auto* refT = as<VRefType>(act.refAnnot);
    if (!refT) fail(ErrCode::Internal, "handler lacks a Ref annotation", sp);
    ValuePtr tau = refT->payload;
    ValuePtr tanTau = tangentType(tau);

    std::vector<Name> xs;
    std::vector<ValuePtr> ts;
    pickCaptured(d, act.body, xs, ts);

    env.bind(act.region, vBase(BaseKind::Type));
    env.bind(act.ref, act.refAnnot);
    Name h2 = NameSupply::fresh("h");
    Name x2 = NameSupply::fresh("dr");
    std::vector<std::pair<Name, ValuePtr>> binders;
    binders.emplace_back(h2, vBase(BaseKind::Type));
    binders.emplace_back(x2, vRef(vVar(h2), tanTau));
    Delta dInner;
    dInner.emplace_back(act.ref, vVar(x2));
    for (size_t i = 0; i < xs.size(); ++i) {
      Name tb = NameSupply::fresh("d" + xs[i].text);
      binders.emplace_back(tb, checkValue(env, ts[i]));
      dInner.emplace_back(xs[i], vVar(tb));
    }
    ExprPtr inner = reifyCore(binders, std::move(dInner), act.body);

    SimplContext ctx;
    Action primalAct{act.region, act.ref, act.refAnnot, std::move(inner)};
    ExprPtr handlerE = init ? eRunState(init, std::move(primalAct), sp)
                            : eRunAccum(std::move(primalAct), sp);
    ValuePtr z = emit(ctx, std::move(handlerE), "lz");
    ValuePtr pairv = emit(ctx, eFst(z, sp), "lp");
    ValuePtr ans = emit(ctx, eFst(pairv, sp), "la");
    ValuePtr flin = emit(ctx, eSnd(pairv, sp), "lf");
    ValuePtr second = emit(ctx, eSnd(z, sp), "ls");
    ExprPtr primal = eRet(vPair(ans, second));

    Name h3 = NameSupply::fresh("h");
    Name x3 = NameSupply::fresh("dr");
    std::vector<ValuePtr> args;
    args.push_back(vVar(h3));
    args.push_back(vVar(x3));
    for (const auto& t : ts) args.push_back(t);
    ExprPtr tbody = applyChain(flin, args);
    Action tanAct{h3, x3, vRef(vVar(h3), tanTau), std::move(tbody)};
    ExprPtr tangent = init ? eRunState(deltaOf(d, init), std::move(tanAct), sp)
                           : eRunAccum(std::move(tanAct), sp);
    return {std::move(ctx), std::move(primal), std::move(tangent)};
  }

  Res linNode(Delta& d, const ERunState& n, Span sp) {
    return linHandler(d, n.init, n.action, sp);
  }
  Res linNode(Delta& d, const ERunAccum& n, Span sp) {
    return linHandler(d, nullptr, n.action, sp);
  }

  Res linNode(Delta&, const EApp&, Span sp) {
    fail(ErrCode::Internal, "application survived simplification", sp);
  }
  Res linNode(Delta&, const ELinearize&, Span sp) {
    fail(ErrCode::Internal, "nested linearize must be simplified first", sp);
  }
  Res linNode(Delta&, const ETranspose&, Span sp) {
    fail(ErrCode::Internal, "nested transpose must be simplified first", sp);
  }
};

// ---------------------------------------------------------------------------
// Transposition.

struct Entry {
  enum Kind { AccumRef, StateRef, ReadValue } kind;
  ValuePtr v;          // reference value or read-only cotangent value
  ValuePtr payloadTy;  // for references
};

struct Transposer {
  TypeEnv& env;
  std::vector<std::pair<Name, Entry>> om;

  const Entry* find(const Name& n) const {
    for (auto it = om.rbegin(); it != om.rend(); ++it) {
      if (it->first == n) return &it->second;
    }
    return nullptr;
  }

  bool linNames(const NameSet& fv) const {
    for (const auto& [n, e] : om) {
      (void)e;
      if (fv.count(n)) return true;
    }
    return false;
  }
  bool isLin(const ValuePtr& v) const { return linNames(freeVars(v)); }
  bool isLinE(const ExprPtr& e) const { return linNames(freeVars(e)); }

  static ExprPtr unitRet() { return eRet(vUnit()); }

  static ExprPtr seq(const ExprPtr& a, const ExprPtr& b) {
    if (as<ERet>(a)) return b;
    if (const auto* l = as<ELet>(a)) {
      return eLet(l->binder, l->annot, l->bound, seq(l->body, b), a->span);
    }
    return eLet(NameSupply::fresh("z"), nullptr, a, b);
  }

  ValuePtr typeOf(const ExprPtr& e) {
    return checkExpr(Capability::collect(), env, e);
  }

  // The accumulable fragment of a cotangent type: Unit components are
  // dropped, pairs keep whichever sides still hold Float content. Returns
  // null when nothing remains.
  ValuePtr vsPart(const ValuePtr& tau) {
    if (isBase(tau, BaseKind::Float)) return tau;
    if (const auto* p = as<VPairType>(tau)) {
      ValuePtr l = vsPart(p->l);
      ValuePtr r = vsPart(p->r);
      if (l && r) return alphaEq(l, p->l) && alphaEq(r, p->r)
                             ? tau
                             : vPairType(l, r);
      if (l) return l;
      return r;
    }
    if (const auto* a = as<VArrayType>(tau)) {
      ValuePtr c = vsPart(a->cod);
      if (!c) return nullptr;
      if (!alphaEq(c, a->cod)) {
        fail(ErrCode::NotLinear,
             "array cotangent mixes Float and Unit components: " +
                 printValue(tau),
             tau->span);
      }
      return tau;
    }
    return nullptr;
  }

  // Projects the vector-space part out of a full cotangent value, binding
  // intermediates as needed, then continues with the stripped value.
  ExprPtr withStripped(const ValuePtr& tau, const ValuePtr& full,
                       const std::function<ExprPtr(const ValuePtr&)>& k) {
    ValuePtr vs = vsPart(tau);
    if (!vs) return k(nullptr);
    if (alphaEq(vs, tau)) return k(full);
    const auto* p = as<VPairType>(tau);
    ValuePtr ls = vsPart(p->l);
    ValuePtr rs = vsPart(p->r);
    Span sp = full->span;
    if (ls && rs) {
      Name a = NameSupply::fresh("tc");
      Name b = NameSupply::fresh("tc");
      env.bind(a, p->l);
      env.bind(b, p->r);
      return eLet(
          a, p->l, eFst(full, sp),
          eLet(b, p->r, eSnd(full, sp),
               withStripped(p->l, vVar(a),
                            [&](const ValuePtr& sl) {
                              return withStripped(
                                  p->r, vVar(b), [&](const ValuePtr& sr) {
                                    return k(vPair(sl, sr));
                                  });
                            }),
               sp),
          sp);
    }
    if (ls) {
      Name a = NameSupply::fresh("tc");
      env.bind(a, p->l);
      return eLet(a, p->l, eFst(full, sp), withStripped(p->l, vVar(a), k), sp);
    }
    Name b = NameSupply::fresh("tc");
    env.bind(b, p->r);
    return eLet(b, p->r, eSnd(full, sp), withStripped(p->r, vVar(b), k), sp);
  }

  // Rebuilds a full cotangent value from its stripped vector-space part,
  // padding dropped components with zeros, then continues with it.
  ExprPtr withRebuilt(const ValuePtr& tau, const ValuePtr& stripped,
                      const std::function<ExprPtr(const ValuePtr&)>& k) {
    ValuePtr vs = vsPart(tau);
    if (!vs) return k(zeroValue(tau));
    if (alphaEq(vs, tau)) return k(stripped);
    const auto* p = as<VPairType>(tau);
    ValuePtr ls = vsPart(p->l);
    ValuePtr rs = vsPart(p->r);
    Span sp = stripped->span;
    if (ls && rs) {
      Name a = NameSupply::fresh("tr");
      Name b = NameSupply::fresh("tr");
      env.bind(a, ls);
      env.bind(b, rs);
      return eLet(
          a, ls, eFst(stripped, sp),
          eLet(b, rs, eSnd(stripped, sp),
               withRebuilt(p->l, vVar(a),
                           [&](const ValuePtr& fl) {
                             return withRebuilt(
                                 p->r, vVar(b), [&](const ValuePtr& fr) {
                                   return k(vPair(fl, fr));
                                 });
                           }),
               sp),
          sp);
    }
    if (ls) {
      return withRebuilt(p->l, stripped, [&](const ValuePtr& fl) {
        return k(vPair(fl, zeroValue(p->r)));
      });
    }
    return withRebuilt(p->r, stripped, [&](const ValuePtr& fr) {
      return k(vPair(zeroValue(p->l), fr));
    });
  }

  ExprPtr transBlock(const ExprPtr& b, const ValuePtr& ct) {
    const auto* n = as<ELet>(b);
    if (!n) {
      if (const auto* r = as<ERet>(b)) return transValue(r->value, ct);
      return transExpr(b, ct);
    }
    Span sp = b->span;
    ValuePtr tau = n->annot ? n->annot : typeOf(n->bound);
    if (!isLinE(n->bound)) {
      env.bind(n->binder, tau);
      return eLet(n->binder, n->annot, n->bound, transBlock(n->body, ct), sp);
    }
    // Indexing and slicing thread the cotangent structurally instead of
    // materializing an intermediate.
    if (const auto* ix = as<EIndex>(n->bound)) {
      const auto* root = as<VVar>(ix->arr);
      const Entry* e = root ? find(root->name) : nullptr;
      if (e && e->kind == Entry::AccumRef) {
        ValuePtr src = e->v;
        Name rp = NameSupply::fresh("rs");
        env.bind(n->binder, tau);
        om.emplace_back(n->binder, Entry{Entry::AccumRef, vVar(rp), tau});
        ExprPtr inner = transBlock(n->body, ct);
        om.pop_back();
        return eLet(rp, nullptr, eSlice(src, ix->idx, sp), inner, sp);
      }
    }
    if (const auto* sl = as<ESlice>(n->bound)) {
      const auto* root = as<VVar>(sl->ref);
      const Entry* e = root ? find(root->name) : nullptr;
      if (e && e->kind == Entry::AccumRef) {
        ValuePtr src = e->v;
        Name rp = NameSupply::fresh("rs");
        env.bind(n->binder, tau);
        om.emplace_back(n->binder, Entry{Entry::AccumRef, vVar(rp), nullptr});
        ExprPtr inner = transBlock(n->body, ct);
        om.pop_back();
        return eLet(rp, nullptr, eSlice(src, sl->idx, sp), inner, sp);
      }
      if (e && e->kind == Entry::ReadValue) {
        ValuePtr src = e->v;
        Name sv = NameSupply::fresh("rv");
        env.bind(n->binder, tau);
        om.emplace_back(n->binder, Entry{Entry::ReadValue, vVar(sv), nullptr});
        ExprPtr inner = transBlock(n->body, ct);
        om.pop_back();
        return eLet(sv, nullptr, eIndex(src, sl->idx, sp), inner, sp);
      }
    }
    // A binding whose cotangent type has no Float content carries no
    // information; transpose the rest first, then the effect itself.
    if (!vsPart(tau)) {
      env.bind(n->binder, tau);
      ExprPtr rest = transBlock(n->body, ct);
      return seq(rest, transExpr(n->bound, zeroValue(tau)));
    }
    // General reversal: gather the binder's cotangent from the transposed
    // body under a local accumulator, then push it through the binding.
    // Unit components cannot live in the accumulated cell, so only the
    // vector-space part is gathered and the full shape is rebuilt after.
    ValuePtr vsTau = vsPart(tau);
    Name h = NameSupply::fresh("h");
    Name r = NameSupply::fresh("r");
    Name w = NameSupply::fresh("w");
    Name tp = NameSupply::fresh("tb");
    env.bind(n->binder, tau);
    om.emplace_back(n->binder, Entry{Entry::AccumRef, vVar(r), tau});
    ExprPtr inner = transBlock(n->body, ct);
    om.pop_back();
    ExprPtr gather = eRunAccum(Action{h, r, vRef(vVar(h), vsTau), inner}, sp);
    env.bind(tp, vsTau);
    ExprPtr push = withRebuilt(
        tau, vVar(tp), [&](const ValuePtr& full) {
          return transExpr(n->bound, full);
        });
    return eLet(w, nullptr, std::move(gather),
                eLet(tp, vsTau, eSnd(vVar(w)), std::move(push), sp), sp);
  }

  ExprPtr transExpr(const ExprPtr& e, const ValuePtr& ct) {
    Span sp = e->span;
    if (const auto* n = as<EBinOp>(e)) {
      switch (n->op) {
        case BinOp::Add:
          return seq(transValue(n->l, ct), transValue(n->r, ct));
        case BinOp::Sub: {
          Name m = NameSupply::fresh("ng");
          return seq(transValue(n->l, ct),
                     eLet(m, floatT(), eBin(BinOp::Sub, vFloat(0.0), ct, sp),
                          transValue(n->r, vVar(m)), sp));
        }
        case BinOp::Mul: {
          bool ll = isLin(n->l), lr = isLin(n->r);
          if (ll && lr) {
            fail(ErrCode::NotLinear,
                 "both factors of a product are linear", sp);
          }
          Name t2 = NameSupply::fresh("tm");
          if (ll) {
            return eLet(t2, floatT(), eBin(BinOp::Mul, ct, n->r, sp),
                        transValue(n->l, vVar(t2)), sp);
          }
          if (lr) {
            return eLet(t2, floatT(), eBin(BinOp::Mul, n->l, ct, sp),
                        transValue(n->r, vVar(t2)), sp);
          }
          return unitRet();
        }
        case BinOp::Div: {
          if (isLin(n->r)) {
            fail(ErrCode::NotLinear, "division by a linear value", sp);
          }
          Name t2 = NameSupply::fresh("tm");
          return eLet(t2, floatT(), eBin(BinOp::Div, ct, n->r, sp),
                      transValue(n->l, vVar(t2)), sp);
        }
        case BinOp::Less:
          fail(ErrCode::NotLinear, "comparison in linear position", sp);
      }
    }
    if (as<EUnOp>(e)) return unitRet();
    if (const auto* n = as<EIndex>(e)) {
      const auto* root = as<VVar>(n->arr);
      const Entry* en = root ? find(root->name) : nullptr;
      if (en && en->kind == Entry::AccumRef) {
        Name rp = NameSupply::fresh("rs");
        return eLet(rp, nullptr, eSlice(en->v, n->idx, sp),
                    eAccum(vVar(rp), ct, sp), sp);
      }
      return unitRet();
    }
    if (const auto* n = as<EFst>(e)) {
      ValuePtr pt = checkValue(env, n->v);
      const auto* pty = as<VPairType>(pt);
      if (!pty) fail(ErrCode::Internal, "fst of a non-pair", sp);
      return transValue(n->v, vPair(ct, zeroValue(pty->r)));
    }
    if (const auto* n = as<ESnd>(e)) {
      ValuePtr pt = checkValue(env, n->v);
      const auto* pty = as<VPairType>(pt);
      if (!pty) fail(ErrCode::Internal, "snd of a non-pair", sp);
      return transValue(n->v, vPair(zeroValue(pty->l), ct));
    }
    if (const auto* n = as<EGet>(e)) {
      const auto* root = as<VVar>(n->ref);
      const Entry* en = root ? find(root->name) : nullptr;
      if (!en || en->kind != Entry::StateRef) {
        fail(ErrCode::NotLinear, "get outside a transposed state handler", sp);
      }
      Name t0 = NameSupply::fresh("tg");
      Name s = NameSupply::fresh("tg");
      return eLet(t0, nullptr, eGet(en->v, sp),
                  eLet(s, nullptr, eBin(BinOp::Add, vVar(t0), ct, sp),
                       ePut(en->v, vVar(s), sp), sp),
                  sp);
    }
    if (const auto* n = as<EPut>(e)) {
      const auto* root = as<VVar>(n->ref);
      const Entry* en = root ? find(root->name) : nullptr;
      if (!en || en->kind != Entry::StateRef) {
        fail(ErrCode::NotLinear, "put outside a transposed state handler", sp);
      }
      Name tp = NameSupply::fresh("tp");
      Name u = NameSupply::fresh("z");
      return eLet(tp, en->payloadTy, eGet(en->v, sp),
                  eLet(u, nullptr, ePut(en->v, zeroValue(en->payloadTy), sp),
                       transValue(n->value, vVar(tp)), sp),
                  sp);
    }
    if (const auto* n = as<EAccum>(e)) {
      const auto* root = as<VVar>(n->ref);
      const Entry* en = root ? find(root->name) : nullptr;
      if (!en || en->kind != Entry::ReadValue) {
        fail(ErrCode::NotLinear,
             "accumulation outside a transposed accum handler", sp);
      }
      return transValue(n->value, en->v);
    }
    if (const auto* n = as<EFor>(e)) {
      Name ri = NameSupply::fresh("rv");
      Name te = NameSupply::fresh("te");
      env.bind(n->binder, n->annot);
      env.bind(ri, n->annot);
      ExprPtr body = refreshBinders(substExpr(n->body, n->binder, vVar(ri)));
      ExprPtr inner =
          eLet(ri, n->annot, eUn(UnOp::ReverseIndex, vVar(n->binder), sp),
               eLet(te, nullptr, eIndex(ct, vVar(ri), sp),
                    transBlock(body, vVar(te)), sp),
               sp);
      return eFor(n->binder, n->annot, std::move(inner), sp);
    }
    if (const auto* n = as<ECase>(e)) {
      if (isLin(n->scrutinee)) {
        fail(ErrCode::NotLinear, "case scrutinee is linear", sp);
      }
      ValuePtr sTy = checkValue(env, n->scrutinee);
      const auto* et = as<VEitherType>(sTy);
      if (!et) fail(ErrCode::Internal, "case scrutinee is not a sum", sp);
      env.bind(n->leftBinder, et->l);
      ExprPtr l = transBlock(n->leftBody, ct);
      env.bind(n->rightBinder, et->r);
      ExprPtr r = transBlock(n->rightBody, ct);
      return eCase(n->scrutinee, n->leftBinder, std::move(l), n->rightBinder,
                   std::move(r), sp);
    }
    if (const auto* n = as<ERunState>(e)) {
      const auto* refT = as<VRefType>(n->action.refAnnot);
      if (!refT) fail(ErrCode::Internal, "handler lacks a Ref annotation", sp);
      ValuePtr tau = refT->payload;
      Name tans = NameSupply::fresh("ta");
      Name ts = NameSupply::fresh("ts");
      Name h2 = NameSupply::fresh("h");
      Name x2 = NameSupply::fresh("tr");
      Name w = NameSupply::fresh("w");
      Name ts2 = NameSupply::fresh("ts");
      env.bind(h2, vBase(BaseKind::Type));
      env.bind(x2, vRef(vVar(h2), tau));
      om.emplace_back(n->action.ref, Entry{Entry::StateRef, vVar(x2), tau});
      ExprPtr inner = transBlock(n->action.body, vVar(tans));
      om.pop_back();
      env.bind(ts2, tau);
      return eLet(
          tans, nullptr, eFst(ct, sp),
          eLet(ts, tau, eSnd(ct, sp),
               eLet(w, nullptr,
                    eRunState(vVar(ts),
                              Action{h2, x2, vRef(vVar(h2), tau), inner}, sp),
                    eLet(ts2, tau, eSnd(vVar(w), sp),
                         transValue(n->init, vVar(ts2)), sp),
                    sp),
               sp),
          sp);
    }
    if (const auto* n = as<ERunAccum>(e)) {
      const auto* refT = as<VRefType>(n->action.refAnnot);
      if (!refT) fail(ErrCode::Internal, "handler lacks a Ref annotation", sp);
      ValuePtr tau = refT->payload;
      Name tans = NameSupply::fresh("ta");
      Name ttot = NameSupply::fresh("tt");
      env.bind(ttot, tau);
      om.emplace_back(n->action.ref, Entry{Entry::ReadValue, vVar(ttot), tau});
      ExprPtr inner = transBlock(n->action.body, vVar(tans));
      om.pop_back();
      return eLet(tans, nullptr, eFst(ct, sp),
                  eLet(ttot, tau, eSnd(ct, sp), inner, sp), sp);
    }
    fail(ErrCode::Internal,
         "expression cannot be transposed: " + printExpr(e), sp);
  }

  ExprPtr transValue(const ValuePtr& v, const ValuePtr& ct) {
    Span sp = v->span;
    if (const auto* var = as<VVar>(v)) {
      const Entry* e = find(var->name);
      if (!e) return unitRet();
      if (e->kind == Entry::AccumRef) {
        ValuePtr vs = e->payloadTy ? vsPart(e->payloadTy) : nullptr;
        if (e->payloadTy && (!vs || !alphaEq(vs, e->payloadTy))) {
          return withStripped(e->payloadTy, ct, [&](const ValuePtr& s) {
            if (!s) return unitRet();
            return eAccum(e->v, s, sp);
          });
        }
        return eAccum(e->v, ct, sp);
      }
      fail(ErrCode::NotLinear, "reference escapes into a value position", sp);
    }
    if (!isLin(v)) return unitRet();
    if (const auto* p = as<VPair>(v)) {
      Name t1 = NameSupply::fresh("tc");
      Name t2 = NameSupply::fresh("tc");
      return eLet(t1, nullptr, eFst(ct, sp),
                  eLet(t2, nullptr, eSnd(ct, sp),
                       seq(transValue(p->l, vVar(t1)),
                           transValue(p->r, vVar(t2))),
                       sp),
                  sp);
    }
    if (as<VView>(v)) {
      ValuePtr viewRf = refreshBinders(v);
      const auto* view = as<VView>(viewRf);
      Name te = NameSupply::fresh("te");
      env.bind(view->binder, view->annot);
      ExprPtr inner = eLet(te, nullptr, eIndex(ct, vVar(view->binder), sp),
                           transBlock(view->body, vVar(te)), sp);
      return eFor(view->binder, view->annot, std::move(inner), sp);
    }
    if (const auto* tl = as<VTableLit>(v)) {
      const auto* fin = as<VFinType>(tl->dom);
      if (!fin) fail(ErrCode::NotLinear, "linear table literal", sp);
      ExprPtr out = unitRet();
      for (size_t k = tl->elems.size(); k-- > 0;) {
        Name tk = NameSupply::fresh("tc");
        out = eLet(tk, nullptr,
                   eIndex(ct, vFinLit(static_cast<long long>(k), fin->size), sp),
                   seq(transValue(tl->elems[k], vVar(tk)), out), sp);
      }
      return out;
    }
    fail(ErrCode::NotLinear,
         "value is not structurally linear: " + printValue(v), sp);
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// Public entry points.

ValuePtr tangentType(const ValuePtr& t) {
  Span sp = t ? t->span : Span{};
  if (const auto* b = as<VBase>(t)) {
    switch (b->kind) {
      case BaseKind::Float: return t;
      case BaseKind::Int:
      case BaseKind::Unit: return vBase(BaseKind::Unit);
      case BaseKind::Type: break;
    }
    fail(ErrCode::UnsupportedTangent, "Type has no tangent", sp);
  }
  if (as<VFinType>(t)) return vBase(BaseKind::Unit);
  if (const auto* a = as<VArrayType>(t)) {
    return vArray(a->dom, tangentType(a->cod));
  }
  if (const auto* p = as<VPairType>(t)) {
    return vPairType(tangentType(p->l), tangentType(p->r));
  }
  if (as<VEitherType>(t)) {
    fail(ErrCode::UnsupportedTangent, "sum types have no tangent", sp);
  }
  if (const auto* r = as<VRefType>(t)) {
    return vRef(r->region, tangentType(r->payload));
  }
  fail(ErrCode::UnsupportedTangent,
       "type has no tangent: " + printValue(t), sp);
}

ValuePtr zeroValue(const ValuePtr& t) {
  Span sp = t ? t->span : Span{};
  if (isBase(t, BaseKind::Float)) return vFloat(0.0);
  if (isBase(t, BaseKind::Unit)) return vUnit();
  if (const auto* p = as<VPairType>(t)) {
    return vPair(zeroValue(p->l), zeroValue(p->r));
  }
  if (const auto* a = as<VArrayType>(t)) {
    Name i = NameSupply::fresh("zi");
    return vView(i, a->dom, eRet(zeroValue(a->cod)));
  }
  fail(ErrCode::Internal,
       "no zero for a type outside the vector-space fragment: " +
           printValue(t),
       sp);
}

ExprPtr linearizeReify(TypeEnv& env, const Name& x, const ValuePtr& xType,
                       const ExprPtr& body) {
  Linearizer L{env};
  Name t = NameSupply::fresh("dx");
  std::vector<std::pair<Name, ValuePtr>> binders;
  binders.emplace_back(t, tangentType(xType));
  Delta d;
  d.emplace_back(x, vVar(t));
  return L.reifyCore(binders, std::move(d), body);
}

ExprPtr transposeTop(TypeEnv& env, const Name& x, const ValuePtr& xType,
                     const ExprPtr& linBody, const ValuePtr& cotangent) {
  Transposer T{env};
  Name h = NameSupply::fresh("h");
  Name r = NameSupply::fresh("r");
  Name w = NameSupply::fresh("w");
  env.bind(h, vBase(BaseKind::Type));
  env.bind(r, vRef(vVar(h), xType));
  T.om.emplace_back(x, Entry{Entry::AccumRef, vVar(r), xType});
  ExprPtr body = T.transBlock(linBody, cotangent);
  ExprPtr run = eRunAccum(Action{h, r, vRef(vVar(h), xType), std::move(body)});
  return eLet(w, nullptr, std::move(run), eSnd(vVar(w)));
}

}  // namespace dexlet
