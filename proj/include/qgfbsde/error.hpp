#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qgfbsde {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed expression source. `offset()` is a byte offset into the input.
class ParseError : public Error {
public:
    ParseError(std::size_t offset, const std::string& message)
        : Error("syntax error at offset " + std::to_string(offset) + ": " + message),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Domain error during evaluation (log/sqrt/division/power out of domain, unbound variable).
class EvalError : public Error {
public:
    using Error::Error;
};

/// Invalid model, config file, command line or violated precondition.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Blow-up, non-convergence or other numerical failure of a solver.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace qgfbsde
