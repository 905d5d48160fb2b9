#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace thermosmolu {

/// Failure categories raised by the library. The CLI maps these onto exit codes.
enum class ErrorKind {
    SchemaError,
    ConsistencyError,
    GridMismatch,
    DimensionMismatch,
    NonPositiveDelta,
    NonPositiveStep,
    LinearSolveFailure,
    BlowUp,
    PicardDivergence,
    InvariantViolation,
    EnvelopeHorizonExceeded,
    IoError,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::ConsistencyError: return "ConsistencyError";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonPositiveDelta: return "NonPositiveDelta";
    case ErrorKind::NonPositiveStep: return "NonPositiveStep";
    case ErrorKind::LinearSolveFailure: return "LinearSolveFailure";
    case ErrorKind::BlowUp: return "BlowUp";
    case ErrorKind::PicardDivergence: return "PicardDivergence";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    case ErrorKind::EnvelopeHorizonExceeded: return "EnvelopeHorizonExceeded";
    case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

/// Process exit code for an error: 2 schema, 3 invariant violation, 4 numerical failure, 1 otherwise.
inline int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::SchemaError:
    case ErrorKind::ConsistencyError:
        return 2;
    case ErrorKind::InvariantViolation:
        return 3;
    case ErrorKind::LinearSolveFailure:
    case ErrorKind::BlowUp:
    case ErrorKind::PicardDivergence:
        return 4;
    default:
        return 1;
    }
}

} // namespace thermosmolu
