#pragma once

#include <stdexcept>
#include <string>

namespace goodhart {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed arguments outside an operation's domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A reward whose return is constant over the occupancy polytope, or whose
/// projection onto span(Omega) vanishes.
class DegenerateRewardError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver hit its iteration cap.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A numerical routine failed in a way that valid inputs should not produce.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// No reward in the angle cone decreases along the step.
class NoWitnessError : public Error {
 public:
  using Error::Error;
};

}  // namespace goodhart
