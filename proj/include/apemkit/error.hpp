#pragma once

#include <stdexcept>
#include <string>

namespace apemkit {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or image shape does not match what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value that must be finite became NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad argument outside of shapes (class index out of range, n == 0, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed model / map / dataset file, or an unknown layer kind.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// An explanation method cannot be applied to this architecture
/// (e.g. Grad-CAM on a network without convolutions).
class MethodInapplicable : public Error {
 public:
  using Error::Error;
};

/// A relevance map whose l1 norm is zero cannot be normalized.
class ZeroMapError : public Error {
 public:
  using Error::Error;
};

/// Filtering requires a defined gap on the input map.
class FilterInapplicable : public Error {
 public:
  using Error::Error;
};

}  // namespace apemkit
