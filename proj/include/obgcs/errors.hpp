#pragma once

#include <stdexcept>
#include <string>

namespace obgcs {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// File container errors. Each failure mode gets its own type so callers can
// tell a truncated file from a file whose declared dimensions lie.
class MalformedFileError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Numerical failures: non-SPD covariance, diverging iterations, 0/0.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class FactorizationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(int restart, int step, const std::string& what)
      : NumericalError(what), restart_(restart), step_(step) {}
  int restart() const noexcept { return restart_; }
  int step() const noexcept { return step_; }

 private:
  int restart_;
  int step_;
};

class DegenerateError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

}  // namespace obgcs
