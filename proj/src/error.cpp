#include "cpomdp/error.hpp"

namespace cpomdp {

const char* category_name(ErrorCategory category) noexcept {
    switch (category) {
        case ErrorCategory::Specification: return "specification";
        case ErrorCategory::Usage: return "usage";
        case ErrorCategory::ZeroProbabilityEvidence: return "zero-probability-evidence";
        case ErrorCategory::Capacity: return "capacity";
        case ErrorCategory::DegenerateEvidence: return "degenerate-evidence";
        case ErrorCategory::InconsistentObservation: return "inconsistent-observation";
        case ErrorCategory::Parse: return "parse";
        case ErrorCategory::Io: return "io";
    }
    return "unknown";
}

int exit_code(ErrorCategory category) noexcept {
    switch (category) {
        case ErrorCategory::Usage: return 2;
        case ErrorCategory::Specification: return 3;
        case ErrorCategory::Parse: return 4;
        case ErrorCategory::Io: return 5;
        case ErrorCategory::Capacity: return 6;
        case ErrorCategory::ZeroProbabilityEvidence:
        case ErrorCategory::DegenerateEvidence:
        case ErrorCategory::InconsistentObservation: return 7;
    }
    return 1;
}

Error::Error(ErrorCategory category, const std::string& message)
    : std::runtime_error(message), category_(category) {}

ParseError::ParseError(int line, int column, const std::string& message)
    : Error(ErrorCategory::Parse,
            "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
      line_(line),
      column_(column),
      detail_(message) {}

}  // namespace cpomdp
