#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace capfirm {

enum class ErrorCode {
    NonPositivePeriod,
    PeriodNotDividingDay,
    NegativeParameter,
    InvalidParameter,
    LengthMismatch,
    EmptyScenarioSet,
    UnknownVariable,
    DuplicateVariable,
    DuplicateConstraintName,
    DimensionMismatch,
    NotOptimal,
    RampViolation,
    CapViolation,
    Infeasible,
    DayMismatch,
    MissingBaseline,
    DegenerateFit,
    InsufficientPoints,
    NonUniformTimestep,
    NegativePower,
    PowerAboveCapacity,
    PartialDay,
    ParseError,
    IoError,
    UsageError,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::NonPositivePeriod: return "NonPositivePeriod";
    case ErrorCode::PeriodNotDividingDay: return "PeriodNotDividingDay";
    case ErrorCode::NegativeParameter: return "NegativeParameter";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyScenarioSet: return "EmptyScenarioSet";
    case ErrorCode::UnknownVariable: return "UnknownVariable";
    case ErrorCode::DuplicateVariable: return "DuplicateVariable";
    case ErrorCode::DuplicateConstraintName: return "DuplicateConstraintName";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotOptimal: return "NotOptimal";
    case ErrorCode::RampViolation: return "RampViolation";
    case ErrorCode::CapViolation: return "CapViolation";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::DayMismatch: return "DayMismatch";
    case ErrorCode::MissingBaseline: return "MissingBaseline";
    case ErrorCode::DegenerateFit: return "DegenerateFit";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::NonUniformTimestep: return "NonUniformTimestep";
    case ErrorCode::NegativePower: return "NegativePower";
    case ErrorCode::PowerAboveCapacity: return "PowerAboveCapacity";
    case ErrorCode::PartialDay: return "PartialDay";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UsageError: return "UsageError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace capfirm
