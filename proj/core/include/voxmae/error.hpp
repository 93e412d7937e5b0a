#pragma once

#include <stdexcept>
#include <string>

namespace voxmae {

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (extents, dims, heads, window sizes, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Out-of-range scalar parameter (eps, mask ratio, threshold, ...).
class ParameterError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// A caller broke an API precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Bad input data (labels out of range, unlabeled item in a supervised split, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Parse failure in one of the on-disk formats.
class FormatError : public DataError {
 public:
  enum class Kind { MalformedHeader, LengthMismatch, UnknownVersion, ShapeMismatch };

  FormatError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// A forward op produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Pretrained weights cannot be transferred into the target model.
class TransferError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure; the message always carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

const char* to_string(FormatError::Kind kind);

}  // namespace voxmae
