#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cbfpds {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Thrown when a matrix that must be symmetric positive definite is not.
class NotSpdError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t position)
      : Error(message + " (at column " + std::to_string(position + 1) + ")"), position_(position) {}

  /// Zero-based character offset of the offending token.
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Unbound parameter, domain error or non-finite value during evaluation.
class EvalError : public Error {
 public:
  using Error::Error;
};

/// The differentiator met a non-smooth primitive (min, max, abs).
class DifferentiationError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver (root finder, Newton) did not reach its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// A point violates the precondition of a geometric query.
class DomainError : public Error {
 public:
  using Error::Error;
};

class OutsideSafeSetError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// The filter is active but the barrier gradient is (numerically) zero.
class GradientVanishesError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Scenario or parameter validation failure.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Integrator could not keep the state inside the safe set.
class IntegrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace cbfpds
