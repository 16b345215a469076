#pragma once

#include <stdexcept>
#include <string>

namespace utopia {

// Error taxonomy matching the CLI exit-code contract:
//   config/validation -> 2, numeric failure -> 3, I/O failure -> 4.

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed file content (bad token, bad number, missing column, ...).
class ParseError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Non-finite losses, non-convergence, domain errors of numerical routines.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace utopia
