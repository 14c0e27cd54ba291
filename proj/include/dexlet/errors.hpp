#pragma once

#include <stdexcept>
#include <string>

#include "dexlet/ir.hpp"

namespace dexlet {

enum class ErrCode {
  Parse,
  UnannotatedBinder,
  UnboundVariable,
  Type,
  Effect,
  Constraint,
  Telescope,
  UnsupportedTangent,
  NonVSpaceResult,
  NotLinear,
  UnresolvedSize,
  OutOfBounds,
  EscapedRef,
  StateInParallel,
  Internal,
};

inline const char* errCodeName(ErrCode c) {
  switch (c) {
    case ErrCode::Parse: return "E-parse";
    case ErrCode::UnannotatedBinder: return "E-annot";
    case ErrCode::UnboundVariable: return "E-unbound";
    case ErrCode::Type: return "E-type";
    case ErrCode::Effect: return "E-effect";
    case ErrCode::Constraint: return "E-constraint";
    case ErrCode::Telescope: return "E-telescope";
    case ErrCode::UnsupportedTangent: return "E-tangent";
    case ErrCode::NonVSpaceResult: return "E-vspace";
    case ErrCode::NotLinear: return "E-linear";
    case ErrCode::UnresolvedSize: return "E-size";
    case ErrCode::OutOfBounds: return "E-bounds";
    case ErrCode::EscapedRef: return "E-ref";
    case ErrCode::StateInParallel: return "E-parallel";
    case ErrCode::Internal: return "E-internal";
  }
  return "E-internal";
}

// Whether the code reports a mistake in the user's program (CLI exit 1)
// rather than a broken compiler invariant (exit 2).
inline bool isUserError(ErrCode c) {
  switch (c) {
    case ErrCode::UnresolvedSize:
    case ErrCode::EscapedRef:
    case ErrCode::Internal:
      return false;
    default:
      return true;
  }
}

class DexError : public std::runtime_error {
 public:
  DexError(ErrCode code, std::string message, Span span = {})
      : std::runtime_error(message), code_(code), message_(std::move(message)),
        span_(span) {}

  ErrCode code() const { return code_; }
  const std::string& message() const { return message_; }
  Span span() const { return span_; }

  // file:line:col: error[E-code]: message, plus a quote of the offending
  // source line when the span and source text are available.
  std::string render(const std::string& file, const std::string& source) const {
    std::string out = file;
    if (span_.known()) {
      out += ":" + std::to_string(span_.line) + ":" + std::to_string(span_.col);
    }
    out += ": error[";
    out += errCodeName(code_);
    out += "]: " + message_;
    if (span_.known() && !source.empty()) {
      int line = 1;
      size_t start = 0;
      while (line < span_.line) {
        size_t nl = source.find('\n', start);
        if (nl == std::string::npos) { start = source.size(); break; }
        start = nl + 1;
        ++line;
      }
      if (start < source.size()) {
        size_t end = source.find('\n', start);
        if (end == std::string::npos) end = source.size();
        out += "\n  | " + source.substr(start, end - start);
      }
    }
    return out;
  }

 private:
  ErrCode code_;
  std::string message_;
  Span span_;
};

[[noreturn]] inline void fail(ErrCode code, std::string message, Span span = {}) {
  throw DexError(code, std::move(message), span);
}

}  // namespace dexlet
