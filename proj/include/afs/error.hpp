#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace afs {

// Base for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / dimension mismatch.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration value (fractions, kernel sizes, learning rates, ...).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Non-finite values or numeric breakdown at a known location.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// File / stream parsing failure; offset is the byte position of the problem.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
    IoError(const std::string& msg, std::size_t at)
        : Error(msg + " (at byte offset " + std::to_string(at) + ")"), offset(at) {}
    std::size_t offset = 0;
};

// Misuse of an API contract (e.g. backward on a non-scalar).
struct UsageError : Error {
    explicit UsageError(const std::string& msg) : Error(msg) {}
};

}  // namespace afs
