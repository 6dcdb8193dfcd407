#pragma once

#include <stdexcept>
#include <string>

namespace qrbsde {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user input: unknown preset, bad override, violated precondition.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: non-finite state, Picard non-convergence, rank deficiency.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace qrbsde
