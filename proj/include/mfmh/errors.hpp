#pragma once

#include <stdexcept>
#include <string>

namespace mfmh {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  /// Short machine-readable tag, used by the CLI error files.
  virtual const char* kind() const noexcept { return "error"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension"; }
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "non-finite"; }
};

class NoRootError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "no-root"; }
};

class DegenerateMapError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "degenerate-map"; }
};

class InfeasibleStartError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "infeasible-start"; }
};

class DegenerateSeriesError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "degenerate-series"; }
};

class SamplerError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "sampler"; }
};

/// A forward model could not produce an output for the requested parameter.
class ModelEvaluationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "model-evaluation"; }
};

/// Nonlinear or linear solve inside a forward model failed.
class SolverError : public ModelEvaluationError {
 public:
  SolverError(const std::string& what, double last_residual);
  double last_residual() const noexcept { return last_residual_; }
  const char* kind() const noexcept override { return "solver"; }

 private:
  double last_residual_;
};

/// Query outside the tabulated domain of an interpolating surrogate.
class ExtrapolationError : public ModelEvaluationError {
 public:
  using ModelEvaluationError::ModelEvaluationError;
  const char* kind() const noexcept override { return "extrapolation"; }
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what);
  const std::string& field() const noexcept { return field_; }
  const char* kind() const noexcept override { return "config"; }

 private:
  std::string field_;
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

}  // namespace mfmh
