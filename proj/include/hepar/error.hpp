#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hepar {

enum class ErrorKind {
    Format,             // malformed or unsupported container variant
    Unsupported,        // valid container, feature not implemented
    Corruption,         // truncated or inconsistent payload
    Io,
    Validation,         // user input (manifest, config, CSV, model) rejected
    Degenerate,         // input makes the quantity undefined (empty mask, ...)
    Contract,           // caller broke a precondition
    InsufficientOverlap,
    UndefinedMetric,
    Configuration,
    Training,
    Optimizer,
    InvalidTransform,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

}  // namespace hepar
