#pragma once

#include <stdexcept>
#include <string>

namespace quanta {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid arguments, out-of-range parameters, malformed configuration.
/// CLI exit code 2.
class InputDomainError : public Error {
public:
    explicit InputDomainError(const std::string& msg) : Error(msg) {}
};

/// Filesystem and file-format failures. CLI exit code 3.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

/// Non-finite intermediates and other numerical breakdowns. CLI exit code 4.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int unexpected = 1;
inline constexpr int config = 2;
inline constexpr int io = 3;
inline constexpr int numerical = 4;
} // namespace exit_code

} // namespace quanta
