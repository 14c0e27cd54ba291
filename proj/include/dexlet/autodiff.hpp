#pragma once

#include "dexlet/ir.hpp"
#include "dexlet/typecheck.hpp"

namespace dexlet {

// Tangent space of a data type: Float stays Float, Int and Unit and index
// sets collapse to Unit, pairs and arrays go componentwise.
ValuePtr tangentType(const ValuePtr& primalType);

// A literal zero of the given tangent type (views for array zeros).
ValuePtr zeroValue(const ValuePtr& tanType);

// Forward-mode pass over an already-simplified body with one free variable
// x : xType. Returns first-order-except-one-lambda code of type
// (result, tangentOf xType -> tangentOf resultType) with x still free.
ExprPtr linearizeReify(TypeEnv& env, const Name& x, const ValuePtr& xType,
                       const ExprPtr& body);

// Transposition of an already-simplified *linear* body with one free linear
// variable x : xType. Returns code of the type of x computing the pullback
// of the given cotangent; x does not occur in the result.
ExprPtr transposeTop(TypeEnv& env, const Name& x, const ValuePtr& xType,
                     const ExprPtr& linBody, const ValuePtr& cotangent);

}  // namespace dexlet
