#include "dexlet/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <thread>

#include "dexlet/errors.hpp"
#include "dexlet/printer.hpp"

namespace dexlet {

namespace {

std::atomic<long long> g_cellId{1};

long long nextCellId() { return g_cellId.fetch_add(1); }

// ---------------------------------------------------------------------------
// Shape helpers.

RtPtr rtScalar(double v) { return mkRt(RScalar{v}); }
RtPtr rtInt(long long v) { return mkRt(RIntVal{v}); }
RtPtr rtUnit() { return mkRt(RUnitVal{}); }

RtPtr addRt(const RtPtr& a, const RtPtr& b, long long& scalarAdds) {
  if (const auto* sa = asRt<RScalar>(a)) {
    const auto* sb = asRt<RScalar>(b);
    if (!sb) fail(ErrCode::Internal, "accumulation shape mismatch");
    ++scalarAdds;
    return rtScalar(sa->v + sb->v);
  }
  if (const auto* pa = asRt<RPairVal>(a)) {
    const auto* pb = asRt<RPairVal>(b);
    if (!pb) fail(ErrCode::Internal, "accumulation shape mismatch");
    return mkRt(RPairVal{addRt(pa->l, pb->l, scalarAdds),
                         addRt(pa->r, pb->r, scalarAdds)});
  }
  if (const auto* ta = asRt<RTable>(a)) {
    const auto* tb = asRt<RTable>(b);
    if (!tb || ta->elems.size() != tb->elems.size()) {
      fail(ErrCode::Internal, "accumulation shape mismatch");
    }
    std::vector<RtPtr> elems;
    elems.reserve(ta->elems.size());
    for (size_t i = 0; i < ta->elems.size(); ++i) {
      elems.push_back(addRt(ta->elems[i], tb->elems[i], scalarAdds));
    }
    return mkRt(RTable{ta->dom, std::move(elems)});
  }
  fail(ErrCode::Internal, "accumulated value is not in a vector space");
}

RtPtr getAtPath(const RtPtr& tree, const std::vector<long long>& path, size_t i) {
  if (i == path.size()) return tree;
  const auto* t = asRt<RTable>(tree);
  if (!t) fail(ErrCode::Internal, "reference path leads into a non-table");
  return getAtPath(t->elems[static_cast<size_t>(path[i])], path, i + 1);
}

RtPtr setAtPath(const RtPtr& tree, const std::vector<long long>& path, size_t i,
                const RtPtr& v) {
  if (i == path.size()) return v;
  const auto* t = asRt<RTable>(tree);
  if (!t) fail(ErrCode::Internal, "reference path leads into a non-table");
  std::vector<RtPtr> elems = t->elems;
  auto k = static_cast<size_t>(path[i]);
  elems[k] = setAtPath(elems[k], path, i + 1, v);
  return mkRt(RTable{t->dom, std::move(elems)});
}

RtPtr addAtPath(const RtPtr& tree, const std::vector<long long>& path, size_t i,
                const RtPtr& contrib, long long& scalarAdds) {
  if (i == path.size()) return addRt(tree, contrib, scalarAdds);
  const auto* t = asRt<RTable>(tree);
  if (!t) fail(ErrCode::Internal, "reference path leads into a non-table");
  std::vector<RtPtr> elems = t->elems;
  auto k = static_cast<size_t>(path[i]);
  elems[k] = addAtPath(elems[k], path, i + 1, contrib, scalarAdds);
  return mkRt(RTable{t->dom, std::move(elems)});
}

// Per-chunk private accumulator cells, in discovery order so combination
// stays deterministic.
struct Overlay {
  std::vector<std::pair<Cell*, CellPtr>> order;
  std::map<const Cell*, CellPtr> byCell;
};

struct Interp {
  EvalOptions opts;
  EvalCounters counters;
  bool inParallel = false;
  Overlay* overlay = nullptr;
  long long epoch = 0;  // cells with id < epoch are shared with other chunks

  // ------------------------------------------------------------------
  // Index-set descriptors with runtime sizes resolved.

  long long sizeValue(const EnvPtr& env, const ValuePtr& v) {
    if (const auto* i = as<VLitInt>(v)) return i->v;
    if (const auto* var = as<VVar>(v)) {
      RtPtr r = envLookup(env, var->name);
      if (const auto* i = asRt<RIntVal>(r)) return i->v;
    }
    fail(ErrCode::UnresolvedSize, "Fin size did not resolve to an integer",
         v ? v->span : Span{});
  }

  DescPtr resolveDesc(const EnvPtr& env, const ValuePtr& type) {
    if (isBase(type, BaseKind::Unit)) return descUnit();
    if (const auto* f = as<VFinType>(type)) {
      long long n = sizeValue(env, f->size);
      if (n < 0) fail(ErrCode::UnresolvedSize, "negative Fin size", type->span);
      return descFin(n);
    }
    if (const auto* p = as<VPairType>(type)) {
      return descPair(resolveDesc(env, p->l), resolveDesc(env, p->r));
    }
    if (const auto* e = as<VEitherType>(type)) {
      return descEither(resolveDesc(env, e->l), resolveDesc(env, e->r));
    }
    fail(ErrCode::UnresolvedSize,
         "type " + printValue(type) + " is not a resolvable index set",
         type ? type->span : Span{});
  }

  DescPtr tryResolveDesc(const EnvPtr& env, const ValuePtr& type) {
    try {
      return resolveDesc(env, type);
    } catch (const DexError&) {
      return nullptr;
    }
  }

  // ------------------------------------------------------------------
  // Values.

  RtPtr value(const EnvPtr& env, const ValuePtr& v) {
    Span sp = v->span;
    return std::visit(
        [&](const auto& node) -> RtPtr { return valueNode(env, node, sp); },
        v->node);
  }

  RtPtr valueNode(const EnvPtr& env, const VVar& n, Span sp) {
    RtPtr r = envLookup(env, n.name);
    if (!r) {
      fail(ErrCode::Internal, "variable '" + printName(n.name) +
                                  "' has no runtime binding",
           sp);
    }
    return r;
  }
  RtPtr valueNode(const EnvPtr&, const VLitFloat& n, Span) { return rtScalar(n.v); }
  RtPtr valueNode(const EnvPtr&, const VLitInt& n, Span) { return rtInt(n.v); }
  RtPtr valueNode(const EnvPtr&, const VLitUnit&, Span) { return rtUnit(); }

  RtPtr valueNode(const EnvPtr& env, const VLam& n, Span sp) {
    return mkRt(RClosure{env, mkValue(n, sp)});
  }
  RtPtr valueNode(const EnvPtr& env, const VView& n, Span sp) {
    return mkRt(RClosure{env, mkValue(n, sp)});
  }

  RtPtr valueNode(const EnvPtr& env, const VPair& n, Span) {
    return mkRt(RPairVal{value(env, n.l), value(env, n.r)});
  }

  RtPtr valueNode(const EnvPtr& env, const VInjLeft& n, Span) {
    RtPtr payload = value(env, n.payload);
    DescPtr mine = descOfRt(payload);
    DescPtr other = tryResolveDesc(env, n.otherType);
    DescPtr d = (mine && other) ? descEither(mine, other) : nullptr;
    return mkRt(RSumVal{true, payload, d});
  }
  RtPtr valueNode(const EnvPtr& env, const VInjRight& n, Span) {
    RtPtr payload = value(env, n.payload);
    DescPtr mine = descOfRt(payload);
    DescPtr other = tryResolveDesc(env, n.otherType);
    DescPtr d = (mine && other) ? descEither(other, mine) : nullptr;
    return mkRt(RSumVal{false, payload, d});
  }

  RtPtr valueNode(const EnvPtr& env, const VValueCase& n, Span sp) {
    RtPtr s = value(env, n.scrutinee);
    const auto* sum = asRt<RSumVal>(s);
    if (!sum) fail(ErrCode::Internal, "vcase scrutinee is not a sum", sp);
    return apply(value(env, sum->isLeft ? n.leftFn : n.rightFn), sum->payload, sp);
  }

  RtPtr valueNode(const EnvPtr& env, const VFinLit& n, Span sp) {
    long long size = sizeValue(env, n.size);
    if (n.ordinal < 0 || n.ordinal >= size) {
      fail(ErrCode::OutOfBounds,
           "index literal @" + std::to_string(n.ordinal) + " is outside Fin " +
               std::to_string(size),
           sp);
    }
    return mkRt(RIndexVal{n.ordinal, descFin(size)});
  }

  RtPtr valueNode(const EnvPtr& env, const VTableLit& n, Span) {
    DescPtr d = resolveDesc(env, n.dom);
    std::vector<RtPtr> elems;
    elems.reserve(n.elems.size());
    for (const auto& e : n.elems) elems.push_back(value(env, e));
    return mkRt(RTable{d, std::move(elems)});
  }

  template <class T>
  RtPtr valueNode(const EnvPtr&, const T&, Span sp) {
    fail(ErrCode::Internal, "type-level value reached the evaluator", sp);
  }

  RtPtr apply(const RtPtr& fn, const RtPtr& arg, Span sp) {
    const auto* c = asRt<RClosure>(fn);
    if (!c) fail(ErrCode::Internal, "application head is not a closure", sp);
    if (const auto* lam = as<VLam>(c->fn)) {
      return expr(envBind(c->env, lam->binder, arg), lam->body);
    }
    const auto* view = as<VView>(c->fn);
    if (!view) fail(ErrCode::Internal, "closure holds neither lam nor view", sp);
    return expr(envBind(c->env, view->binder, arg), view->body);
  }

  // ------------------------------------------------------------------
  // Cells.

  Cell* targetCell(const RRefVal& ref, Span sp, bool forAccum) {
    Cell* cell = ref.cell.get();
    if (!cell->open) {
      fail(ErrCode::EscapedRef, "reference used after its handler returned", sp);
    }
    if (inParallel && cell->id < epoch) {
      if (!forAccum) {
        fail(ErrCode::Internal,
             "state cell touched inside a parallel region despite the static "
             "check",
             sp);
      }
      auto it = overlay->byCell.find(cell);
      if (it == overlay->byCell.end()) {
        auto priv = std::make_shared<Cell>();
        priv->value = zeroLike(cell->value);
        priv->id = nextCellId();
        overlay->order.emplace_back(cell, priv);
        it = overlay->byCell.emplace(cell, priv).first;
      }
      return it->second.get();
    }
    return cell;
  }

  const RRefVal& refOf(const EnvPtr& env, const ValuePtr& v, RtPtr& keep, Span sp) {
    keep = value(env, v);
    const auto* r = asRt<RRefVal>(keep);
    if (!r) fail(ErrCode::Internal, "expected a reference value", sp);
    return *r;
  }

  // ------------------------------------------------------------------
  // Expressions.

  RtPtr expr(const EnvPtr& env, const ExprPtr& e) {
    Span sp = e->span;
    ++counters.nodesEvaluated;
    return std::visit(
        [&](const auto& node) -> RtPtr { return exprNode(env, node, sp); },
        e->node);
  }

  RtPtr exprNode(const EnvPtr& env, const ERet& n, Span) { return value(env, n.value); }

  RtPtr exprNode(const EnvPtr& env, const ELet& n, Span) {
    return expr(envBind(env, n.binder, expr(env, n.bound)), n.body);
  }

  RtPtr exprNode(const EnvPtr& env, const EApp& n, Span sp) {
    return apply(value(env, n.fn), value(env, n.arg), sp);
  }

  RtPtr exprNode(const EnvPtr& env, const EIndex& n, Span sp) {
    RtPtr arr = value(env, n.arr);
    RtPtr idx = value(env, n.idx);
    if (const auto* t = asRt<RTable>(arr)) {
      return t->elems[static_cast<size_t>(ordinalOfRt(idx))];
    }
    return apply(arr, idx, sp);
  }

  RtPtr exprNode(const EnvPtr& env, const EFor& n, Span sp) {
    DescPtr d = resolveDesc(env, n.annot);
    long long total = size(d);
    if (opts.chunks > 1 && !inParallel && total > 1 &&
        !forBodyBlocksParallel(n.body)) {
      return parallelFor(env, n, d, opts.chunks, sp);
    }
    std::vector<RtPtr> elems;
    elems.reserve(static_cast<size_t>(total));
    for (long long i = 0; i < total; ++i) {
      elems.push_back(expr(envBind(env, n.binder, fromOrdinalRt(i, d)), n.body));
    }
    return mkRt(RTable{d, std::move(elems)});
  }

  RtPtr parallelFor(const EnvPtr& env, const EFor& loop, const DescPtr& d,
                    int chunks, Span sp) {
    long long total = size(d);
    if (chunks > total) chunks = static_cast<int>(total);
    long long snapshot = g_cellId.load();

    std::vector<RtPtr> elems(static_cast<size_t>(total));
    std::vector<Interp> workers(static_cast<size_t>(chunks));
    std::vector<Overlay> overlays(static_cast<size_t>(chunks));
    std::vector<std::exception_ptr> errors(static_cast<size_t>(chunks));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(chunks));

    long long base = total / chunks;
    long long rem = total % chunks;
    long long start = 0;
    for (int c = 0; c < chunks; ++c) {
      long long len = base + (c < rem ? 1 : 0);
      long long begin = start;
      long long end = start + len;
      start = end;
      Interp& w = workers[static_cast<size_t>(c)];
      w.opts = opts;
      w.inParallel = true;
      w.overlay = &overlays[static_cast<size_t>(c)];
      w.epoch = snapshot;
      threads.emplace_back([&, c, begin, end] {
        try {
          Interp& me = workers[static_cast<size_t>(c)];
          for (long long i = begin; i < end; ++i) {
            elems[static_cast<size_t>(i)] =
                me.expr(envBind(env, loop.binder, fromOrdinalRt(i, d)), loop.body);
          }
        } catch (...) {
          errors[static_cast<size_t>(c)] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (int c = 0; c < chunks; ++c) {
      if (errors[static_cast<size_t>(c)]) {
        std::rethrow_exception(errors[static_cast<size_t>(c)]);
      }
    }
    // Combine private accumulators left to right in chunk order; the merge
    // additions are bookkeeping, not counted work.
    long long mergeAdds = 0;
    for (int c = 0; c < chunks; ++c) {
      Interp& w = workers[static_cast<size_t>(c)];
      counters.arithmeticOps += w.counters.arithmeticOps;
      counters.accumUpdates += w.counters.accumUpdates;
      counters.cellsAllocated += w.counters.cellsAllocated;
      counters.nodesEvaluated += w.counters.nodesEvaluated;
      for (auto& [cell, priv] : overlays[static_cast<size_t>(c)].order) {
        cell->value = addRt(cell->value, priv->value, mergeAdds);
      }
    }
    (void)sp;
    return mkRt(RTable{d, std::move(elems)});
  }

  RtPtr exprNode(const EnvPtr& env, const EFst& n, Span sp) {
    const auto* p = asRt<RPairVal>(value(env, n.v));
    if (!p) fail(ErrCode::Internal, "projection target is not a pair", sp);
    return p->l;
  }
  RtPtr exprNode(const EnvPtr& env, const ESnd& n, Span sp) {
    const auto* p = asRt<RPairVal>(value(env, n.v));
    if (!p) fail(ErrCode::Internal, "projection target is not a pair", sp);
    return p->r;
  }

  RtPtr exprNode(const EnvPtr& env, const ECase& n, Span sp) {
    RtPtr s = value(env, n.scrutinee);
    const auto* sum = asRt<RSumVal>(s);
    if (!sum) fail(ErrCode::Internal, "case scrutinee is not a sum", sp);
    if (sum->isLeft) return expr(envBind(env, n.leftBinder, sum->payload), n.leftBody);
    return expr(envBind(env, n.rightBinder, sum->payload), n.rightBody);
  }

  RtPtr exprNode(const EnvPtr& env, const ESlice& n, Span sp) {
    RtPtr keep;
    const RRefVal& r = refOf(env, n.ref, keep, sp);
    RRefVal out = r;
    out.path.push_back(ordinalOfRt(value(env, n.idx)));
    return mkRt(std::move(out));
  }

  // Cells hold materialized data; lazy views flowing into a handler or a
  // write are forced into tables first.
  RtPtr forceValue(const RtPtr& v, Span sp) {
    if (const auto* c = asRt<RClosure>(v)) {
      const auto* view = as<VView>(c->fn);
      if (!view) return v;
      DescPtr d = resolveDesc(c->env, view->annot);
      long long total = size(d);
      std::vector<RtPtr> elems;
      elems.reserve(static_cast<size_t>(total));
      for (long long i = 0; i < total; ++i) {
        elems.push_back(forceValue(apply(v, fromOrdinalRt(i, d), sp), sp));
      }
      return mkRt(RTable{d, std::move(elems)});
    }
    if (const auto* p = asRt<RPairVal>(v)) {
      return mkRt(RPairVal{forceValue(p->l, sp), forceValue(p->r, sp)});
    }
    if (const auto* t = asRt<RTable>(v)) {
      std::vector<RtPtr> elems;
      elems.reserve(t->elems.size());
      for (const auto& e : t->elems) elems.push_back(forceValue(e, sp));
      return mkRt(RTable{t->dom, std::move(elems)});
    }
    return v;
  }

  RtPtr exprNode(const EnvPtr& env, const ERunState& n, Span sp) {
    auto cell = std::make_shared<Cell>();
    cell->value = forceValue(value(env, n.init), sp);
    cell->id = nextCellId();
    ++counters.cellsAllocated;
    RtPtr res = expr(envBind(env, n.action.ref, mkRt(RRefVal{cell, {}})),
                     n.action.body);
    cell->open = false;
    (void)sp;
    return mkRt(RPairVal{res, cell->value});
  }

  RtPtr exprNode(const EnvPtr& env, const ERunAccum& n, Span sp) {
    const auto* annot = as<VRefType>(n.action.refAnnot);
    if (!annot) {
      fail(ErrCode::Internal, "runAccum reached the evaluator unannotated", sp);
    }
    auto cell = std::make_shared<Cell>();
    cell->value = zeroOfType(env, annot->payload, sp);
    cell->id = nextCellId();
    ++counters.cellsAllocated;
    RtPtr res = expr(envBind(env, n.action.ref, mkRt(RRefVal{cell, {}})),
                     n.action.body);
    cell->open = false;
    return mkRt(RPairVal{res, cell->value});
  }

  RtPtr zeroOfType(const EnvPtr& env, const ValuePtr& t, Span sp) {
    if (isBase(t, BaseKind::Float)) return rtScalar(0.0);
    if (const auto* p = as<VPairType>(t)) {
      return mkRt(RPairVal{zeroOfType(env, p->l, sp), zeroOfType(env, p->r, sp)});
    }
    if (const auto* a = as<VArrayType>(t)) {
      DescPtr d = resolveDesc(env, a->dom);
      RtPtr z = zeroOfType(env, a->cod, sp);
      return mkRt(RTable{d, std::vector<RtPtr>(static_cast<size_t>(size(d)), z)});
    }
    fail(ErrCode::Internal,
         "accumulator type " + printValue(t) + " is not a vector space", sp);
  }

  RtPtr exprNode(const EnvPtr& env, const EGet& n, Span sp) {
    RtPtr keep;
    const RRefVal& r = refOf(env, n.ref, keep, sp);
    Cell* cell = targetCell(r, sp, false);
    return getAtPath(cell->value, r.path, 0);
  }

  RtPtr exprNode(const EnvPtr& env, const EPut& n, Span sp) {
    RtPtr keep;
    const RRefVal& r = refOf(env, n.ref, keep, sp);
    RtPtr v = forceValue(value(env, n.value), sp);
    Cell* cell = targetCell(r, sp, false);
    cell->value = setAtPath(cell->value, r.path, 0, v);
    return rtUnit();
  }

  RtPtr exprNode(const EnvPtr& env, const EAccum& n, Span sp) {
    RtPtr keep;
    const RRefVal& r = refOf(env, n.ref, keep, sp);
    RtPtr v = forceValue(value(env, n.value), sp);
    Cell* cell = targetCell(r, sp, true);
    long long adds = 0;
    cell->value = addAtPath(cell->value, r.path, 0, v, adds);
    counters.arithmeticOps += adds;
    ++counters.accumUpdates;
    return rtUnit();
  }

  double floatOperand(const EnvPtr& env, const ValuePtr& v, Span sp) {
    const auto* s = asRt<RScalar>(value(env, v));
    if (!s) fail(ErrCode::Internal, "arithmetic operand is not a float", sp);
    return s->v;
  }

  RtPtr exprNode(const EnvPtr& env, const EBinOp& n, Span sp) {
    double l = floatOperand(env, n.l, sp);
    double r = floatOperand(env, n.r, sp);
    switch (n.op) {
      case BinOp::Add: ++counters.arithmeticOps; return rtScalar(l + r);
      case BinOp::Sub: ++counters.arithmeticOps; return rtScalar(l - r);
      case BinOp::Mul: ++counters.arithmeticOps; return rtScalar(l * r);
      case BinOp::Div: ++counters.arithmeticOps; return rtScalar(l / r);
      case BinOp::Less: {
        DescPtr d = descEither(descUnit(), descUnit());
        return mkRt(RSumVal{!(l < r), rtUnit(), d});
      }
    }
    fail(ErrCode::Internal, "unknown binary operator", sp);
  }

  RtPtr exprNode(const EnvPtr& env, const EUnOp& n, Span sp) {
    RtPtr v = value(env, n.v);
    switch (n.op) {
      case UnOp::Ordinal:
        return rtInt(ordinalOfRt(v));
      case UnOp::IntToFloat: {
        const auto* i = asRt<RIntVal>(v);
        if (!i) fail(ErrCode::Internal, "itof operand is not an integer", sp);
        return rtScalar(static_cast<double>(i->v));
      }
      case UnOp::ReverseIndex: {
        DescPtr d = descOfRt(v);
        if (!d) fail(ErrCode::Internal, "reverse operand is not an index", sp);
        return fromOrdinalRt(size(d) - 1 - ordinalOfRt(v), d);
      }
    }
    fail(ErrCode::Internal, "unknown unary operator", sp);
  }

  RtPtr exprNode(const EnvPtr&, const ELinearize&, Span sp) {
    fail(ErrCode::Internal,
         "linearize must be eliminated by simplification before evaluation", sp);
  }
  RtPtr exprNode(const EnvPtr&, const ETranspose&, Span sp) {
    fail(ErrCode::Internal,
         "transpose must be eliminated by simplification before evaluation", sp);
  }
};

// ---------------------------------------------------------------------------
// Static parallel-safety scan.

struct ParScan {
  NameSet localRefs;
  bool blocked = false;

  void scan(const ExprPtr& e) {
    if (blocked) return;
    std::visit([&](const auto& node) { scanNode(node); }, e->node);
  }

  bool rootIsLocal(const ValuePtr& ref) {
    const auto* var = as<VVar>(ref);
    return var && localRefs.count(var->name) > 0;
  }

  void scanNode(const ERet&) {}
  void scanNode(const ELet& n) {
    scan(n.bound);
    if (const auto* s = as<ESlice>(n.bound)) {
      if (rootIsLocal(s->ref)) localRefs.insert(n.binder);
    }
    scan(n.body);
  }
  // A call's effects are not visible syntactically here, so calls block.
  void scanNode(const EApp&) { blocked = true; }
  void scanNode(const EIndex&) {}
  void scanNode(const EFor& n) { scan(n.body); }
  void scanNode(const EFst&) {}
  void scanNode(const ESnd&) {}
  void scanNode(const ECase& n) {
    scan(n.leftBody);
    scan(n.rightBody);
  }
  void scanNode(const ESlice&) {}
  void scanNode(const ERunState& n) {
    localRefs.insert(n.action.ref);
    scan(n.action.body);
  }
  void scanNode(const ERunAccum& n) {
    localRefs.insert(n.action.ref);
    scan(n.action.body);
  }
  void scanNode(const EGet& n) {
    if (!rootIsLocal(n.ref)) blocked = true;
  }
  void scanNode(const EPut& n) {
    if (!rootIsLocal(n.ref)) blocked = true;
  }
  void scanNode(const EAccum&) {}
  void scanNode(const EBinOp&) {}
  void scanNode(const EUnOp&) {}
  void scanNode(const ELinearize&) { blocked = true; }
  void scanNode(const ETranspose&) { blocked = true; }
};

}  // namespace

EnvPtr envBind(EnvPtr env, const Name& n, RtPtr v) {
  return std::make_shared<EnvNode>(EnvNode{n, std::move(v), std::move(env)});
}

RtPtr envLookup(const EnvPtr& env, const Name& n) {
  for (const EnvNode* p = env.get(); p; p = p->next.get()) {
    if (p->name == n) return p->v;
  }
  return nullptr;
}

bool forBodyBlocksParallel(const ExprPtr& body) {
  ParScan s;
  s.scan(body);
  return s.blocked;
}

RtPtr evalExpr(const EnvPtr& env, const ExprPtr& e, const EvalOptions& opts,
               EvalCounters* counters) {
  Interp i;
  i.opts = opts;
  RtPtr r = i.expr(env, e);
  if (counters) {
    counters->arithmeticOps += i.counters.arithmeticOps;
    counters->accumUpdates += i.counters.accumUpdates;
    counters->cellsAllocated += i.counters.cellsAllocated;
    counters->nodesEvaluated += i.counters.nodesEvaluated;
  }
  return r;
}

RtPtr evalValue(const EnvPtr& env, const ValuePtr& v, const EvalOptions& opts,
                EvalCounters* counters) {
  Interp i;
  i.opts = opts;
  RtPtr r = i.value(env, v);
  if (counters) {
    counters->arithmeticOps += i.counters.arithmeticOps;
    counters->accumUpdates += i.counters.accumUpdates;
    counters->cellsAllocated += i.counters.cellsAllocated;
    counters->nodesEvaluated += i.counters.nodesEvaluated;
  }
  return r;
}

RtPtr evalParallelFor(const EnvPtr& env, const ExprPtr& forLoop, int chunks,
                      EvalCounters* counters) {
  const auto* loop = as<EFor>(forLoop);
  if (!loop) fail(ErrCode::Internal, "evalParallelFor needs a for loop");
  if (forBodyBlocksParallel(loop->body)) {
    fail(ErrCode::StateInParallel,
         "loop body uses State and cannot run in parallel", forLoop->span);
  }
  Interp i;
  i.opts.chunks = chunks < 1 ? 1 : chunks;
  DescPtr d = i.resolveDesc(env, loop->annot);
  RtPtr r = i.parallelFor(env, *loop, d, i.opts.chunks < 1 ? 1 : i.opts.chunks,
                          forLoop->span);
  if (counters) {
    counters->arithmeticOps += i.counters.arithmeticOps;
    counters->accumUpdates += i.counters.accumUpdates;
    counters->cellsAllocated += i.counters.cellsAllocated;
    counters->nodesEvaluated += i.counters.nodesEvaluated;
  }
  return r;
}

DescPtr descOfRt(const RtPtr& v) {
  if (asRt<RUnitVal>(v)) return descUnit();
  if (const auto* i = asRt<RIndexVal>(v)) return i->desc;
  if (const auto* p = asRt<RPairVal>(v)) {
    DescPtr l = descOfRt(p->l);
    DescPtr r = descOfRt(p->r);
    return (l && r) ? descPair(l, r) : nullptr;
  }
  if (const auto* s = asRt<RSumVal>(v)) return s->eitherDesc;
  return nullptr;
}

long long ordinalOfRt(const RtPtr& v) {
  if (asRt<RUnitVal>(v)) return 0;
  if (const auto* i = asRt<RIndexVal>(v)) return i->ord;
  if (const auto* p = asRt<RPairVal>(v)) {
    DescPtr rd = descOfRt(p->r);
    if (!rd) fail(ErrCode::Internal, "pair member is not an index");
    return ordinalOfRt(p->l) * size(rd) + ordinalOfRt(p->r);
  }
  if (const auto* s = asRt<RSumVal>(v)) {
    if (!s->eitherDesc) fail(ErrCode::Internal, "sum member has no index shape");
    if (s->isLeft) return ordinalOfRt(s->payload);
    return size(s->eitherDesc->left) + ordinalOfRt(s->payload);
  }
  fail(ErrCode::Internal, "value is not an index-set member");
}

RtPtr fromOrdinalRt(long long ord, const DescPtr& d) {
  long long total = size(d);
  if (ord < 0 || ord >= total) {
    fail(ErrCode::OutOfBounds, "ordinal " + std::to_string(ord) +
                                   " is outside an index set of size " +
                                   std::to_string(total));
  }
  switch (d->kind) {
    case IndexSetDesc::Kind::Unit:
      return rtUnit();
    case IndexSetDesc::Kind::Fin:
      return mkRt(RIndexVal{ord, d});
    case IndexSetDesc::Kind::Pair: {
      long long rs = size(d->right);
      return mkRt(RPairVal{fromOrdinalRt(ord / rs, d->left),
                           fromOrdinalRt(ord % rs, d->right)});
    }
    case IndexSetDesc::Kind::Either: {
      long long ls = size(d->left);
      if (ord < ls) return mkRt(RSumVal{true, fromOrdinalRt(ord, d->left), d});
      return mkRt(RSumVal{false, fromOrdinalRt(ord - ls, d->right), d});
    }
  }
  fail(ErrCode::Internal, "corrupt index-set descriptor");
}

bool rtEq(const RtPtr& a, const RtPtr& b) {
  if (const auto* x = asRt<RScalar>(a)) {
    const auto* y = asRt<RScalar>(b);
    return y && x->v == y->v;
  }
  if (const auto* x = asRt<RIntVal>(a)) {
    const auto* y = asRt<RIntVal>(b);
    return y && x->v == y->v;
  }
  if (asRt<RUnitVal>(a)) return asRt<RUnitVal>(b) != nullptr;
  if (const auto* x = asRt<RIndexVal>(a)) {
    const auto* y = asRt<RIndexVal>(b);
    return y && x->ord == y->ord && descEq(x->desc, y->desc);
  }
  if (const auto* x = asRt<RTable>(a)) {
    const auto* y = asRt<RTable>(b);
    if (!y || x->elems.size() != y->elems.size()) return false;
    for (size_t i = 0; i < x->elems.size(); ++i) {
      if (!rtEq(x->elems[i], y->elems[i])) return false;
    }
    return true;
  }
  if (const auto* x = asRt<RPairVal>(a)) {
    const auto* y = asRt<RPairVal>(b);
    return y && rtEq(x->l, y->l) && rtEq(x->r, y->r);
  }
  if (const auto* x = asRt<RSumVal>(a)) {
    const auto* y = asRt<RSumVal>(b);
    return y && x->isLeft == y->isLeft && rtEq(x->payload, y->payload);
  }
  return false;
}

double rtMaxRelDiff(const RtPtr& a, const RtPtr& b) {
  if (const auto* x = asRt<RScalar>(a)) {
    const auto* y = asRt<RScalar>(b);
    if (!y) return HUGE_VAL;
    double diff = std::fabs(x->v - y->v);
    return diff / (1.0 + std::max(std::fabs(x->v), std::fabs(y->v)));
  }
  if (const auto* x = asRt<RTable>(a)) {
    const auto* y = asRt<RTable>(b);
    if (!y || x->elems.size() != y->elems.size()) return HUGE_VAL;
    double worst = 0.0;
    for (size_t i = 0; i < x->elems.size(); ++i) {
      worst = std::max(worst, rtMaxRelDiff(x->elems[i], y->elems[i]));
    }
    return worst;
  }
  if (const auto* x = asRt<RPairVal>(a)) {
    const auto* y = asRt<RPairVal>(b);
    if (!y) return HUGE_VAL;
    return std::max(rtMaxRelDiff(x->l, y->l), rtMaxRelDiff(x->r, y->r));
  }
  if (const auto* x = asRt<RSumVal>(a)) {
    const auto* y = asRt<RSumVal>(b);
    if (!y || x->isLeft != y->isLeft) return HUGE_VAL;
    return rtMaxRelDiff(x->payload, y->payload);
  }
  return rtEq(a, b) ? 0.0 : HUGE_VAL;
}

RtPtr zeroLike(const RtPtr& v) {
  if (asRt<RScalar>(v)) return rtScalar(0.0);
  if (const auto* p = asRt<RPairVal>(v)) {
    return mkRt(RPairVal{zeroLike(p->l), zeroLike(p->r)});
  }
  if (const auto* t = asRt<RTable>(v)) {
    std::vector<RtPtr> elems;
    elems.reserve(t->elems.size());
    for (const auto& e : t->elems) elems.push_back(zeroLike(e));
    return mkRt(RTable{t->dom, std::move(elems)});
  }
  fail(ErrCode::Internal, "value is not in a vector space");
}

std::string printResult(const RtPtr& v) {
  if (const auto* s = asRt<RScalar>(v)) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", s->v);
    return buf;
  }
  if (const auto* i = asRt<RIntVal>(v)) return std::to_string(i->v);
  if (asRt<RUnitVal>(v)) return "()";
  if (const auto* i = asRt<RIndexVal>(v)) return "@" + std::to_string(i->ord);
  if (const auto* t = asRt<RTable>(v)) {
    std::string out = "[";
    for (size_t i = 0; i < t->elems.size(); ++i) {
      if (i) out += ", ";
      out += printResult(t->elems[i]);
    }
    return out + "]";
  }
  if (const auto* p = asRt<RPairVal>(v)) {
    return "(" + printResult(p->l) + ", " + printResult(p->r) + ")";
  }
  if (const auto* s = asRt<RSumVal>(v)) {
    return std::string(s->isLeft ? "Left " : "Right ") + printResult(s->payload);
  }
  if (asRt<RClosure>(v)) return "<function>";
  if (asRt<RRefVal>(v)) return "<ref>";
  return "<unknown>";
}

}  // namespace dexlet
