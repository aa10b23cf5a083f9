#pragma once

#include <stdexcept>
#include <string>

namespace primes {

/// Base for every error raised by the toolkit. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad configuration, unknown rule fields, illegal parameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input data violates a domain invariant (unknown category, empty fields, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace primes
