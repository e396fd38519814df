#pragma once

#include <stdexcept>
#include <string>

namespace bmdrom {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Parameter outside the grid; no extrapolation is attempted.
class RangeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class RankError : public NumericalError {
 public:
  RankError(const std::string& what, int index)
      : NumericalError(what + " (index " + std::to_string(index) + ")"),
        index_(index) {}
  int index() const { return index_; }

 private:
  int index_;
};

class GramianError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ProjectionError : public NumericalError {
 public:
  ProjectionError(const std::string& what, int grid_index)
      : NumericalError(what + " (grid point " + std::to_string(grid_index) +
                       ")"),
        grid_index_(grid_index) {}
  int grid_index() const { return grid_index_; }

 private:
  int grid_index_;
};

class NotSettledError : public NumericalError {
 public:
  NotSettledError(const std::string& what, double residual)
      : NumericalError(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double kkt_residual)
      : NumericalError(what + " (KKT residual " +
                       std::to_string(kkt_residual) + ")"),
        kkt_residual_(kkt_residual) {}
  double kkt_residual() const { return kkt_residual_; }

 private:
  double kkt_residual_;
};

// A pipeline stage was invoked before the one producing its inputs.
class MissingPrerequisite : public Error {
 public:
  using Error::Error;
};

}  // namespace bmdrom
