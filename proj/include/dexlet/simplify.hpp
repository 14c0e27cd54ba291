#pragma once

#include "dexlet/ir.hpp"
#include "dexlet/typecheck.hpp"

namespace dexlet {

// Result of simplifying one expression: a chain of first-order bindings and
// a residual value that may mention them. contextFill(ctx, eRet(residual))
// rebuilds a standalone expression.
struct SimplResult {
  SimplContext ctx;
  ValuePtr residual;
};

// Simplifies under an environment holding the types of free variables. Beta
// reduces every application, materializes loop-carried data, and expands
// linearize/transpose into first-order code.
SimplResult simplify(TypeEnv& env, const ExprPtr& e);

// Whole-program entry point: simplify under an empty environment and refill.
ExprPtr simplifyExpr(const ExprPtr& e);

// Cleanup passes over simplified code.
ExprPtr dce(const ExprPtr& e);
ExprPtr cse(const ExprPtr& e);
ExprPtr inlineForFusion(const ExprPtr& e);
ExprPtr optimize(const ExprPtr& e);

// True when the tree contains no applications, no lambdas outside vcase
// branch positions, and no arrow types.
bool isFirstOrder(const ExprPtr& e);

// True when the expression performs no Get/Put/Accum on references it does
// not itself handle and contains no applications.
bool exprIsPure(const ExprPtr& e);

}  // namespace dexlet
