#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace mixgen {

enum class ErrorKind {
    UnknownSymbol,
    ArityMismatch,
    GrammarViolation,
    Truncated,
    ShapeMismatch,
    NotScalar,
    DetachedGraph,
    IdOutOfRange,
    LengthOverflow,
    GatingDisabled,
    BadRange,
    TOutOfRange,
    SingularConversion,
    UntrainedHead,
    NaNLoss,
    SingularLattice,
    VersionMismatch,
    CorruptFile,
    ScheduleMismatch,
    SizeMismatch,
    EmptySet,
    CompositionMismatch,
    BadSpec,
    InvalidConfig,
    Io,
};

const char* to_string(ErrorKind kind);

// All library failures are reported through this type. `position` is set for
// errors that point into a token stream.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::optional<std::size_t> position = std::nullopt);

    ErrorKind kind() const noexcept { return kind_; }
    std::optional<std::size_t> position() const noexcept { return position_; }
    // The message without the kind and position decoration of what().
    const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::string message_;
    std::optional<std::size_t> position_;
};

}  // namespace mixgen
