#pragma once

#include <stdexcept>
#include <string>

namespace pmx {

/// Configuration problems (bad keys, malformed values, inconsistent setup).
/// Mapped to process exit code 2 by the CLI.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failures (NaN fields, diverged solves, broken invariants).
/// Mapped to process exit code 3 by the CLI.
struct NumericsError : std::runtime_error {
    explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem and format failures.  Mapped to process exit code 4 by the CLI.
struct IOError : std::runtime_error {
    explicit IOError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pmx
