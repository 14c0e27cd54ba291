#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "dexlet/index_set.hpp"
#include "dexlet/ir.hpp"

namespace dexlet {

struct RtVal;
using RtPtr = std::shared_ptr<const RtVal>;

// Persistent environment; closures hold a snapshot by keeping the list node.
struct EnvNode {
  Name name;
  RtPtr v;
  std::shared_ptr<const EnvNode> next;
};
using EnvPtr = std::shared_ptr<const EnvNode>;

EnvPtr envBind(EnvPtr env, const Name& n, RtPtr v);
RtPtr envLookup(const EnvPtr& env, const Name& n);  // null when absent

// A mutable handler cell. The id orders cell creation; a parallel region
// treats cells created before it started as shared.
struct Cell {
  RtPtr value;
  bool open = true;
  long long id = 0;
};
using CellPtr = std::shared_ptr<Cell>;

struct RScalar { double v; };
struct RIntVal { long long v; };
struct RUnitVal {};
struct RIndexVal { long long ord; DescPtr desc; };
struct RTable { DescPtr dom; std::vector<RtPtr> elems; };
struct RPairVal { RtPtr l; RtPtr r; };
// eitherDesc is the member's Either index-set shape when resolvable, null
// for plain data sums; ordinal/reverse need it, case branching does not.
struct RSumVal { bool isLeft; RtPtr payload; DescPtr eitherDesc; };
struct RClosure { EnvPtr env; ValuePtr fn; };  // fn is a Lam or View value
struct RRefVal { CellPtr cell; std::vector<long long> path; };

using RtNode = std::variant<RScalar, RIntVal, RUnitVal, RIndexVal, RTable,
                            RPairVal, RSumVal, RClosure, RRefVal>;

struct RtVal { RtNode node; };

inline RtPtr mkRt(RtNode n) { return std::make_shared<RtVal>(RtVal{std::move(n)}); }

template <class T>
const T* asRt(const RtPtr& v) {
  return v ? std::get_if<T>(&v->node) : nullptr;
}

struct EvalCounters {
  long long arithmeticOps = 0;
  long long accumUpdates = 0;
  long long cellsAllocated = 0;
  long long nodesEvaluated = 0;
};

struct EvalOptions {
  int chunks = 1;
};

// Evaluates a typechecked expression. With chunks > 1, for loops whose
// bodies touch no outer State cells run chunked on worker threads with
// private accumulators combined in chunk order.
RtPtr evalExpr(const EnvPtr& env, const ExprPtr& e, const EvalOptions& opts = {},
               EvalCounters* counters = nullptr);
RtPtr evalValue(const EnvPtr& env, const ValuePtr& v, const EvalOptions& opts = {},
                EvalCounters* counters = nullptr);

// Forces chunked execution of one for loop; raises StateInParallel before
// running anything if the body uses State cells handled outside it.
RtPtr evalParallelFor(const EnvPtr& env, const ExprPtr& forLoop, int chunks,
                      EvalCounters* counters = nullptr);

// Static test used both by evalParallelFor and by the automatic chooser:
// true when the body performs Get/Put on a cell handled outside the body,
// or contains a call whose effects cannot be seen syntactically.
bool forBodyBlocksParallel(const ExprPtr& body);

// Index-set views of runtime members.
DescPtr descOfRt(const RtPtr& v);  // null when the value is not an index member
long long ordinalOfRt(const RtPtr& v);
RtPtr fromOrdinalRt(long long ord, const DescPtr& d);

// Structural equality; exact on every leaf.
bool rtEq(const RtPtr& a, const RtPtr& b);
// Largest |a-b| / (1 + max(|a|,|b|)) over float leaves; infinity on any
// shape mismatch or non-float leaf mismatch.
double rtMaxRelDiff(const RtPtr& a, const RtPtr& b);

// Zero of a vector-space runtime value, with the same shape.
RtPtr zeroLike(const RtPtr& v);

// Text rendering: floats with six significant digits, tables as bracketed
// lists, pairs parenthesized, index members as @k.
std::string printResult(const RtPtr& v);

}  // namespace dexlet
