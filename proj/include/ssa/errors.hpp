#pragma once

#include <stdexcept>
#include <string>

namespace ssa {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit an operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Hyperparameters that violate a structural constraint (divisibility, ranges).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// API misuse, e.g. a backward call without a matching forward context.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated files.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A well-formed file whose header disagrees with its contents.
class IntegrityError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Data content problems (empty datasets, undefined normalization).
class DataError : public Error {
public:
    using Error::Error;
};

/// Non-finite values during training.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace ssa
