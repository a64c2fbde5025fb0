#pragma once

#include <stdexcept>
#include <string>

namespace mvpose {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree (joint counts, list lengths, feature sizes).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration, malformed file or violated precondition on inputs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A numerical quantity is degenerate: zero-norm pose, collinear torso,
/// zero-length bone, non-finite values.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvpose
