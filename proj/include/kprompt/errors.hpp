#pragma once

#include <stdexcept>
#include <string>

namespace kprompt {

// Bad input files, malformed records, unknown entities.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration or invalid call arguments.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/inf in computation, diverging loss, failed numeric checks.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace kprompt
