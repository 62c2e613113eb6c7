#pragma once

#include <stdexcept>
#include <string>

namespace cpomdp {

enum class ErrorCategory {
    Specification,
    Usage,
    ZeroProbabilityEvidence,
    Capacity,
    DegenerateEvidence,
    InconsistentObservation,
    Parse,
    Io,
};

/// Short lowercase tag used in CLI messages, e.g. "usage".
const char* category_name(ErrorCategory category) noexcept;

/// Process exit code for an error category. Never 0.
int exit_code(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message);

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

/// Malformed model: cycle, unnormalized row, bad arity, dangling reference.
class SpecificationError : public Error {
public:
    explicit SpecificationError(const std::string& message)
        : Error(ErrorCategory::Specification, message) {}
};

/// Caller violated an operation precondition.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& message)
        : Error(ErrorCategory::Usage, message) {}
};

class ZeroProbabilityEvidenceError : public Error {
public:
    explicit ZeroProbabilityEvidenceError(const std::string& message)
        : Error(ErrorCategory::ZeroProbabilityEvidence, message) {}
};

class CapacityError : public Error {
public:
    explicit CapacityError(const std::string& message)
        : Error(ErrorCategory::Capacity, message) {}
};

/// Every importance-sampling particle received zero weight.
class DegenerateEvidenceError : public Error {
public:
    explicit DegenerateEvidenceError(const std::string& message)
        : Error(ErrorCategory::DegenerateEvidence, message) {}
};

class InconsistentObservationError : public Error {
public:
    explicit InconsistentObservationError(const std::string& message)
        : Error(ErrorCategory::InconsistentObservation, message) {}
};

class ParseError : public Error {
public:
    ParseError(int line, int column, const std::string& message);

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }
    /// Message without the position prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    int line_;
    int column_;
    std::string detail_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error(ErrorCategory::Io, message) {}
};

}  // namespace cpomdp
