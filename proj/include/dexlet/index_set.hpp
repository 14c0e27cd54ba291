#pragma once

#include <memory>
#include <vector>

#include "dexlet/ir.hpp"

namespace dexlet {

struct IndexSetDesc;
using DescPtr = std::shared_ptr<const IndexSetDesc>;

// A fully resolved index-set shape: every Fin size is a concrete integer.
struct IndexSetDesc {
  enum class Kind { Unit, Fin, Pair, Either };
  Kind kind = Kind::Unit;
  long long finSize = 0;  // Fin only
  DescPtr left, right;    // Pair / Either only
  long long totalSize = 1;
};

DescPtr descUnit();
DescPtr descFin(long long n);
DescPtr descPair(DescPtr l, DescPtr r);
DescPtr descEither(DescPtr l, DescPtr r);

bool descEq(const DescPtr& a, const DescPtr& b);

// The core type this descriptor denotes (Fin sizes as integer literals).
ValuePtr descType(const DescPtr& d);

// Reads a descriptor off an index-set type. Fin sizes must already be
// integer literals; anything else raises UnresolvedSize. Non-index-set
// types raise Internal (callers check the IdxSet constraint first).
DescPtr descFromType(const ValuePtr& type);

long long size(const DescPtr& d);

// Position of a member value in the fixed enumeration order. The member is
// well-typed by construction, so no bounds check happens here.
long long ordinal(const ValuePtr& member, const DescPtr& d);

// Inverse of ordinal; the single place a runtime bounds check exists.
ValuePtr fromOrdinal(long long i, const DescPtr& d);

ValuePtr reverseIndex(const ValuePtr& member, const DescPtr& d);

std::vector<ValuePtr> enumerate(const DescPtr& d);

}  // namespace dexlet
