#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hcns {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grids or component counts disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise invalid field data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or parameter set.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A probe ball or cylinder contains no cells or leaves the domain.
class DegenerateProbeError : public Error {
 public:
  using Error::Error;
};

/// Too few snapshots inside a cylinder window.
class InsufficientResolutionError : public Error {
 public:
  InsufficientResolutionError(const std::string& what, double required_cadence)
      : Error(what), required_cadence_(required_cadence) {}
  double required_cadence() const noexcept { return required_cadence_; }

 private:
  double required_cadence_;
};

/// Numerical failure during a computation (as opposed to bad input).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An iterative solve hit its iteration cap.
class NonConvergenceError : public NumericalError {
 public:
  NonConvergenceError(const std::string& what, std::vector<double> history)
      : NumericalError(what), history_(std::move(history)) {}
  const std::vector<double>& residual_history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

/// A time loop aborted; carries the failing step and the last snapshot written.
class SimulationError : public NumericalError {
 public:
  SimulationError(const std::string& what, std::size_t step, std::string last_snapshot)
      : NumericalError(what), step_(step), last_snapshot_(std::move(last_snapshot)) {}
  std::size_t step() const noexcept { return step_; }
  const std::string& last_snapshot() const noexcept { return last_snapshot_; }

 private:
  std::size_t step_;
  std::string last_snapshot_;
};

}  // namespace hcns
