#pragma once

#include <map>
#include <string>
#include <vector>

#include "dexlet/ir.hpp"

namespace dexlet {

// One elaborated top-level declaration. Types recorded here are the
// elaborator's structural approximation (effect rows left empty); the
// typechecker recomputes authoritative types.
struct ElabDecl {
  std::string surfaceName;
  Name binder;
  ValuePtr type;
  ExprPtr bound;
  Span span;
};

struct ElabProgram {
  std::vector<ElabDecl> decls;
  ExprPtr finalExpr;  // A-normal block; Ret of the last declaration if the
                      // file ends without a bare expression.

  // Declarations nested as lets around the final expression.
  ExprPtr whole() const;
  const ElabDecl* find(const std::string& name) const;
};

// Parses and desugars a surface program into core IR in A-normal form.
ElabProgram parseProgram(const std::string& source, const std::string& file);

// Parses canonical printer output back into core IR (uids read literally).
ExprPtr parseCore(const std::string& source);

// Parses a literal point argument (floats, pairs, bracket tables) against an
// expected type; used by the lin/grad commands.
ValuePtr parseValueLiteral(const std::string& text, const ValuePtr& expectedType);

}  // namespace dexlet
