#include "dexlet/index_set.hpp"

#include <string>

#include "dexlet/errors.hpp"

namespace dexlet {

using Kind = IndexSetDesc::Kind;

DescPtr descUnit() {
  static DescPtr u = std::make_shared<IndexSetDesc>(IndexSetDesc{Kind::Unit, 0, {}, {}, 1});
  return u;
}

DescPtr descFin(long long n) {
  return std::make_shared<IndexSetDesc>(IndexSetDesc{Kind::Fin, n, {}, {}, n});
}

DescPtr descPair(DescPtr l, DescPtr r) {
  long long total = l->totalSize * r->totalSize;
  return std::make_shared<IndexSetDesc>(
      IndexSetDesc{Kind::Pair, 0, std::move(l), std::move(r), total});
}

DescPtr descEither(DescPtr l, DescPtr r) {
  long long total = l->totalSize + r->totalSize;
  return std::make_shared<IndexSetDesc>(
      IndexSetDesc{Kind::Either, 0, std::move(l), std::move(r), total});
}

bool descEq(const DescPtr& a, const DescPtr& b) {
  if (a == b) return true;
  if (!a || !b || a->kind != b->kind) return false;
  switch (a->kind) {
    case Kind::Unit: return true;
    case Kind::Fin: return a->finSize == b->finSize;
    case Kind::Pair:
    case Kind::Either:
      return descEq(a->left, b->left) && descEq(a->right, b->right);
  }
  return false;
}

ValuePtr descType(const DescPtr& d) {
  switch (d->kind) {
    case Kind::Unit: return vBase(BaseKind::Unit);
    case Kind::Fin: return vFin(vInt(d->finSize));
    case Kind::Pair: return vPairType(descType(d->left), descType(d->right));
    case Kind::Either: return vEitherType(descType(d->left), descType(d->right));
  }
  fail(ErrCode::Internal, "corrupt index-set descriptor");
}

DescPtr descFromType(const ValuePtr& type) {
  if (isBase(type, BaseKind::Unit)) return descUnit();
  if (const auto* f = as<VFinType>(type)) {
    const auto* n = as<VLitInt>(f->size);
    if (!n) fail(ErrCode::UnresolvedSize, "Fin size is not an integer literal", type->span);
    if (n->v < 0) fail(ErrCode::Internal, "negative Fin size", type->span);
    return descFin(n->v);
  }
  if (const auto* p = as<VPairType>(type)) {
    return descPair(descFromType(p->l), descFromType(p->r));
  }
  if (const auto* e = as<VEitherType>(type)) {
    return descEither(descFromType(e->l), descFromType(e->r));
  }
  fail(ErrCode::Internal, "type is not an index set", type ? type->span : Span{});
}

long long size(const DescPtr& d) { return d->totalSize; }

long long ordinal(const ValuePtr& member, const DescPtr& d) {
  switch (d->kind) {
    case Kind::Unit:
      return 0;
    case Kind::Fin: {
      const auto* f = as<VFinLit>(member);
      if (!f) fail(ErrCode::Internal, "Fin member is not a Fin literal");
      return f->ordinal;
    }
    case Kind::Pair: {
      const auto* p = as<VPair>(member);
      if (!p) fail(ErrCode::Internal, "pair-set member is not a pair");
      // Left component is the major axis.
      return ordinal(p->l, d->left) * d->right->totalSize + ordinal(p->r, d->right);
    }
    case Kind::Either: {
      if (const auto* l = as<VInjLeft>(member)) return ordinal(l->payload, d->left);
      if (const auto* r = as<VInjRight>(member))
        return d->left->totalSize + ordinal(r->payload, d->right);
      fail(ErrCode::Internal, "sum-set member is not an injection");
    }
  }
  fail(ErrCode::Internal, "corrupt index-set descriptor");
}

ValuePtr fromOrdinal(long long i, const DescPtr& d) {
  if (i < 0 || i >= d->totalSize) {
    fail(ErrCode::OutOfBounds, "ordinal " + std::to_string(i) +
                                   " out of bounds for index set of size " +
                                   std::to_string(d->totalSize));
  }
  switch (d->kind) {
    case Kind::Unit:
      return vUnit();
    case Kind::Fin:
      return vFinLit(i, vInt(d->finSize));
    case Kind::Pair: {
      long long minor = d->right->totalSize;
      return vPair(fromOrdinal(i / minor, d->left), fromOrdinal(i % minor, d->right));
    }
    case Kind::Either: {
      if (i < d->left->totalSize)
        return vLeft(descType(d->right), fromOrdinal(i, d->left));
      return vRight(descType(d->left), fromOrdinal(i - d->left->totalSize, d->right));
    }
  }
  fail(ErrCode::Internal, "corrupt index-set descriptor");
}

ValuePtr reverseIndex(const ValuePtr& member, const DescPtr& d) {
  return fromOrdinal(d->totalSize - 1 - ordinal(member, d), d);
}

std::vector<ValuePtr> enumerate(const DescPtr& d) {
  std::vector<ValuePtr> out;
  out.reserve(static_cast<size_t>(d->totalSize));
  for (long long i = 0; i < d->totalSize; ++i) out.push_back(fromOrdinal(i, d));
  return out;
}

}  // namespace dexlet
