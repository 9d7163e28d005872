#pragma once

#include <stdexcept>
#include <string>

namespace partmatch {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not line up for an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, zero norms and similar arithmetic failures.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values or combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed match labels.
class LabelError : public Error {
 public:
  using Error::Error;
};

/// Token id outside the embedding table.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// File system or serialization failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace partmatch
