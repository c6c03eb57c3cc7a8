#include "mixgen/error.hpp"

namespace mixgen {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::UnknownSymbol: return "UnknownSymbol";
        case ErrorKind::ArityMismatch: return "ArityMismatch";
        case ErrorKind::GrammarViolation: return "GrammarViolation";
        case ErrorKind::Truncated: return "Truncated";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::NotScalar: return "NotScalar";
        case ErrorKind::DetachedGraph: return "DetachedGraph";
        case ErrorKind::IdOutOfRange: return "IdOutOfRange";
        case ErrorKind::LengthOverflow: return "LengthOverflow";
        case ErrorKind::GatingDisabled: return "GatingDisabled";
        case ErrorKind::BadRange: return "BadRange";
        case ErrorKind::TOutOfRange: return "TOutOfRange";
        case ErrorKind::SingularConversion: return "SingularConversion";
        case ErrorKind::UntrainedHead: return "UntrainedHead";
        case ErrorKind::NaNLoss: return "NaNLoss";
        case ErrorKind::SingularLattice: return "SingularLattice";
        case ErrorKind::VersionMismatch: return "VersionMismatch";
        case ErrorKind::CorruptFile: return "CorruptFile";
        case ErrorKind::ScheduleMismatch: return "ScheduleMismatch";
        case ErrorKind::SizeMismatch: return "SizeMismatch";
        case ErrorKind::EmptySet: return "EmptySet";
        case ErrorKind::CompositionMismatch: return "CompositionMismatch";
        case ErrorKind::BadSpec: return "BadSpec";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

namespace {

std::string decorate(ErrorKind kind, const std::string& message, std::optional<std::size_t> position) {
    std::string out = std::string(to_string(kind)) + ": " + message;
    if (position) {
        out += " (at position " + std::to_string(*position) + ")";
    }
    return out;
}

}  // namespace

Error::Error(ErrorKind kind, const std::string& message, std::optional<std::size_t> position)
    : std::runtime_error(decorate(kind, message, position)), kind_(kind), message_(message), position_(position) {}

}  // namespace mixgen
