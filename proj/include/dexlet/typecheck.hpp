#pragma once

#include <vector>

#include "dexlet/ir.hpp"

namespace dexlet {

// Scope-ordered typing environment; later bindings may mention earlier names
// in their types.
struct TypeEnv {
  std::vector<std::pair<Name, ValuePtr>> bindings;

  ValuePtr lookup(const Name& n) const {
    for (auto it = bindings.rbegin(); it != bindings.rend(); ++it) {
      if (it->first == n) return it->second;
    }
    return nullptr;
  }
  void bind(const Name& n, ValuePtr t) { bindings.emplace_back(n, std::move(t)); }
  void pop() { bindings.pop_back(); }
};

// The effects an expression may use. Lambda bodies are checked in collecting
// mode (any = true) and the inferred row lands on the arrow type.
struct Capability {
  bool any = false;
  EffectRow row;

  static Capability pure() { return {}; }
  static Capability collect() { return {true, {}}; }
};

enum class Constraint { IdxSet, Data, VSpace };

// Value typing judgement; returns the type (a Value of type Type).
ValuePtr checkValue(TypeEnv& env, const ValuePtr& v);

// Effect-indexed expression judgement; usedOut, when non-null, receives the
// effects the expression actually used.
ValuePtr checkExpr(const Capability& cap, TypeEnv& env, const ExprPtr& e,
                   EffectRow* usedOut = nullptr);

bool checkConstraint(Constraint kind, const ValuePtr& type);

// Raises ConstraintError unless checkConstraint holds.
void requireConstraint(Constraint kind, const ValuePtr& type, Span span);

}  // namespace dexlet
