#pragma once

#include <stdexcept>
#include <string>

namespace gaitlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, insufficient or inconsistent input data (CLI exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A physics integration produced non-finite coordinates.
class DivergedStateError : public Error {
 public:
  using Error::Error;
};

/// An iterative solve failed to converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace gaitlab
