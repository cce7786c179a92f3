#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sinkprop {

enum class ErrorCode {
    ZeroRowSum,
    ZeroColSum,
    NonFinite,
    TapeMismatch,
    DimensionMismatch,
    NonBinaryRelevance,
    DomainError,
    NonPositiveSigma,
    StaleClosure,
    ParseError,
    EmptyInput,
    TooLarge,
    Divergence,
    InvalidArgument,
    Io,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::ZeroRowSum: return "ZeroRowSum";
    case ErrorCode::ZeroColSum: return "ZeroColSum";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::TapeMismatch: return "TapeMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonBinaryRelevance: return "NonBinaryRelevance";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorCode::StaleClosure: return "StaleClosure";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

/// All library failures are reported as `sinkprop::Error`; inspect `code()`
/// to tell them apart.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Parse failures carry the 1-based line number of the offending input line.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace sinkprop
