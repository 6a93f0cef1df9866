// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace seqcoder {

/// Base class for every error raised by the library. The CLI maps the
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An integer index (token id, label id) is out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input data is malformed or inconsistent.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared in values or gradients.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A checkpoint or tokenizer file failed validation.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// A checkpoint was produced with a different tokenizer.
class CompatibilityError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace seqcoder
