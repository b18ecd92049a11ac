#pragma once

#include <stdexcept>
#include <string>

namespace flowreg {

enum class ErrorCode {
  EmptyGeometry,
  DegenerateExtent,
  InvalidArgument,
  InsufficientPoints,
  NonFiniteInput,
  DivergedFlow,
  DegenerateGuidance,
  UnreachableLandmark,
  ParseError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyGeometry: return "EmptyGeometry";
    case ErrorCode::DegenerateExtent: return "DegenerateExtent";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::DivergedFlow: return "DivergedFlow";
    case ErrorCode::DegenerateGuidance: return "DegenerateGuidance";
    case ErrorCode::UnreachableLandmark: return "UnreachableLandmark";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace flowreg
