#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eitlens {

/// Machine-readable failure classes. The CLI maps each one to an exit status.
enum class ErrorCategory {
  invalid_argument,
  degenerate_denominator,
  non_unique_steady_state,
  response_out_of_range,
  nonfinite_field,
  quadrature_nonconvergence,
  unknown_preset,
  parse_error,
  validation_error,
  io_error,
};

constexpr std::string_view to_string(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::invalid_argument: return "invalid-argument";
    case ErrorCategory::degenerate_denominator: return "degenerate-denominator";
    case ErrorCategory::non_unique_steady_state: return "non-unique-steady-state";
    case ErrorCategory::response_out_of_range: return "response-out-of-range";
    case ErrorCategory::nonfinite_field: return "nonfinite-field";
    case ErrorCategory::quadrature_nonconvergence: return "quadrature-nonconvergence";
    case ErrorCategory::unknown_preset: return "unknown-preset";
    case ErrorCategory::parse_error: return "parse-error";
    case ErrorCategory::validation_error: return "validation-error";
    case ErrorCategory::io_error: return "io-error";
  }
  return "unknown";
}

constexpr int exit_code(ErrorCategory c) noexcept {
  return 10 + static_cast<int>(c);
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(std::string(to_string(category)) + ": " + what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

}  // namespace eitlens
