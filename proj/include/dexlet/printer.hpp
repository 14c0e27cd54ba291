#pragma once

#include <string>

#include "dexlet/ir.hpp"

namespace dexlet {

// Canonical printer. Output is stable across runs, used both for golden IR
// dumps and as a structural key by common-subexpression elimination, and it
// re-parses under the core-mode parser.
//
// Layout: expressions print as blocks, one let binding per line, two-space
// indent for nested bodies; binders print as name.uid.

std::string printName(const Name& n);
std::string printFloat(double d);

std::string printValue(const ValuePtr& v);
std::string printExpr(const ExprPtr& e);

}  // namespace dexlet
