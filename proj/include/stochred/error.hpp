#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stochred {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidDimension : public Error {
 public:
  using Error::Error;
};

/// A trajectory produced a non-finite value. Carries the step index and
/// model time at which it was detected.
class NumericalBlowup : public Error {
 public:
  NumericalBlowup(std::size_t step, double time, const std::string& what)
      : Error(what), step_(step), time_(time) {}

  std::size_t step() const noexcept { return step_; }
  double time() const noexcept { return time_; }

 private:
  std::size_t step_;
  double time_;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class DegenerateData : public Error {
 public:
  using Error::Error;
};

class DegenerateClimatology : public Error {
 public:
  using Error::Error;
};

class SingularCovariance : public Error {
 public:
  SingularCovariance(double condition, const std::string& what)
      : Error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

class NotPositiveSemidefinite : public Error {
 public:
  NotPositiveSemidefinite(double min_eigenvalue, const std::string& what)
      : Error(what), min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace stochred
