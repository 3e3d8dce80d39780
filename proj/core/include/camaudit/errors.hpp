#pragma once

#include <stdexcept>
#include <string>

namespace camaudit {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes that do not chain.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid architecture, option or argument combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

class MagicMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncationError : public FormatError {
 public:
  using FormatError::FormatError;
};

class DimensionOverflowError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Non-finite values, zero divisors and diverging optimisation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace camaudit
