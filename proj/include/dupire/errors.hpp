#pragma once

#include <stdexcept>
#include <string>

namespace dupire {

enum class ErrorCode {
    NonMonotonicAxis,
    NegativeVol,
    DimensionMismatch,
    TooFewNodes,
    NonFiniteQuery,
    TapeMismatch,
    DomainError,
};

const char* to_string(ErrorCode code) noexcept;

// Library-wide exception; carries a machine-checkable code so callers
// (and the CLI exit-code mapping) do not have to parse messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::NonMonotonicAxis: return "NonMonotonicAxis";
        case ErrorCode::NegativeVol: return "NegativeVol";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::TooFewNodes: return "TooFewNodes";
        case ErrorCode::NonFiniteQuery: return "NonFiniteQuery";
        case ErrorCode::TapeMismatch: return "TapeMismatch";
        case ErrorCode::DomainError: return "DomainError";
    }
    return "UnknownError";
}

} // namespace dupire
