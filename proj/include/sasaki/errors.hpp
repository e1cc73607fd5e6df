#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sasaki {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument: index out of range, shape mismatch, invalid parameter.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A matrix field lost positive definiteness.
class PositivityError : public Error {
 public:
  PositivityError(const std::string& what, std::size_t point, double min_eigenvalue)
      : Error(what + " (point " + std::to_string(point) + ", min eigenvalue " +
              std::to_string(min_eigenvalue) + ")"),
        point_(point),
        min_eigenvalue_(min_eigenvalue) {}

  std::size_t point() const { return point_; }
  double min_eigenvalue() const { return min_eigenvalue_; }

 private:
  std::size_t point_;
  double min_eigenvalue_;
};

class SingularMetricError : public PositivityError {
 public:
  using PositivityError::PositivityError;
};

class ConeExitError : public PositivityError {
 public:
  using PositivityError::PositivityError;
};

class NonconvergenceError : public Error {
 public:
  NonconvergenceError(const std::string& what, std::vector<double> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<double>& residual_history() const { return history_; }

 private:
  std::vector<double> history_;
};

class NotCohomologousError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sasaki
