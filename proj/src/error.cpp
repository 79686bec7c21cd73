#include "hepar/error.hpp"

namespace hepar {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Format: return "format";
        case ErrorKind::Unsupported: return "unsupported";
        case ErrorKind::Corruption: return "corruption";
        case ErrorKind::Io: return "io";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Degenerate: return "degenerate";
        case ErrorKind::Contract: return "contract";
        case ErrorKind::InsufficientOverlap: return "insufficient_overlap";
        case ErrorKind::UndefinedMetric: return "undefined_metric";
        case ErrorKind::Configuration: return "configuration";
        case ErrorKind::Training: return "training";
        case ErrorKind::Optimizer: return "optimizer";
        case ErrorKind::InvalidTransform: return "invalid_transform";
    }
    return "unknown";
}

}  // namespace hepar
