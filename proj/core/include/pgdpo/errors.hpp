#pragma once

#include <stdexcept>
#include <string>

namespace pgdpo {

enum class ErrorCode {
    NotPositiveDefinite,
    DegenerateMarket,
    HorizonExhausted,
    OracleDiverged,
    DomainError,
    SingularJacobian,
    NoFeasibleCertificate,
    NonFiniteObjective,
    UtilityOverflow,
    ShapeMismatch,
    InvalidArgument,
    IoError,
    CheckpointMismatch,
};

const char* to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-readable code; thrown by every module of the library.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace pgdpo
