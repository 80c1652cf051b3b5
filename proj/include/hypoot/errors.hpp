#pragma once

#include <stdexcept>
#include <string>

namespace hypoot {

enum class ErrorKind {
  not_spd,
  invalid_parameter,
  no_convergence,
  domain_error,
  domain_too_small,
  hypothesis_violated,
  not_found,
  cfl_violation,
  support_mismatch,
  size_exceeded,
  field_mismatch,
  degenerate_input,
  parse_error,
  io_error,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` lets callers (the CLI in
/// particular) map failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_spd: return "NotSPD";
    case ErrorKind::invalid_parameter: return "InvalidParameter";
    case ErrorKind::no_convergence: return "NoConvergence";
    case ErrorKind::domain_error: return "DomainError";
    case ErrorKind::domain_too_small: return "DomainTooSmall";
    case ErrorKind::hypothesis_violated: return "HypothesisViolated";
    case ErrorKind::not_found: return "NotFound";
    case ErrorKind::cfl_violation: return "CFLViolation";
    case ErrorKind::support_mismatch: return "SupportMismatch";
    case ErrorKind::size_exceeded: return "SizeExceeded";
    case ErrorKind::field_mismatch: return "FieldMismatch";
    case ErrorKind::degenerate_input: return "DegenerateInput";
    case ErrorKind::parse_error: return "ParseError";
    case ErrorKind::io_error: return "IOError";
  }
  return "Unknown";
}

}  // namespace hypoot
