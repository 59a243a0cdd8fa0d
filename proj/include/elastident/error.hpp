#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace elastident {

/// Failure categories. Each maps to one CLI exit code and one stable tag.
enum class ErrorCategory {
  usage = 2,
  io,
  parse,
  validation,
  domain,
  degenerate_deformation,
  out_of_domain,
  instability,
  correspondence,
  dimension_mismatch,
  malformed_header,
  truncated_payload,
  missing_material,
  transport,
  schema_violation,
  no_fallback,
  gradient_unavailable,
  no_unfrozen_objects,
};

constexpr std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::io: return "io";
    case ErrorCategory::parse: return "parse";
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::domain: return "domain";
    case ErrorCategory::degenerate_deformation: return "degenerate-deformation";
    case ErrorCategory::out_of_domain: return "out-of-domain";
    case ErrorCategory::instability: return "instability";
    case ErrorCategory::correspondence: return "correspondence";
    case ErrorCategory::dimension_mismatch: return "dimension-mismatch";
    case ErrorCategory::malformed_header: return "malformed-header";
    case ErrorCategory::truncated_payload: return "truncated-payload";
    case ErrorCategory::missing_material: return "missing-material";
    case ErrorCategory::transport: return "transport";
    case ErrorCategory::schema_violation: return "schema-violation";
    case ErrorCategory::no_fallback: return "no-fallback";
    case ErrorCategory::gradient_unavailable: return "gradient-unavailable";
    case ErrorCategory::no_unfrozen_objects: return "no-unfrozen-objects";
  }
  return "unknown";
}

constexpr int exit_code(ErrorCategory c) { return static_cast<int>(c); }

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

}  // namespace elastident
