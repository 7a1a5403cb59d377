#pragma once

#include <stdexcept>
#include <string>

namespace flowtrace {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: dimension mismatches, broken invariants, out-of-range values.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed model document; message carries the offending field path.
class ParseError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Solver failure: non-convergence, loss of positive definiteness, instability.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Command-line misuse: unknown flags, missing files.
class UsageError : public Error {
public:
    using Error::Error;
};

} // namespace flowtrace
