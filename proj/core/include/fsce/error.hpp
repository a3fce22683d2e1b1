#pragma once

#include <stdexcept>
#include <string>

namespace fsce {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (bad group counts, negative rates, unknown keys).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes that do not fit an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Caller broke an API precondition (non-scalar backward, empty metrics input).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Dataset contents that fail validation (label out of range).
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed file header or payload.
class FormatError : public Error {
 public:
  using Error::Error;
};

// File ended before the payload it announced.
class LengthError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Failure during a run that is not a validation problem (NaN loss, I/O).
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

// True for errors the CLI reports with exit code 1.
inline bool is_validation_error(const std::exception& e) {
  return dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
         dynamic_cast<const ContractError*>(&e) || dynamic_cast<const DataError*>(&e) ||
         dynamic_cast<const FormatError*>(&e);
}

}  // namespace fsce
