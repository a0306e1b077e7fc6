#pragma once

#include "mfmh/core.hpp"
#include "mfmh/transport.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace mfmh {

/// Diagonal Gaussian reference density.
class ReferenceDensity {
 public:
  ReferenceDensity(Vector mean, Vector stddev);
  static ReferenceDensity standard(int dim);

  int dim() const noexcept { return static_cast<int>(mean_.size()); }
  const Vector& mean() const noexcept { return mean_; }
  const Vector& stddev() const noexcept { return stddev_; }

  double log_density(const Vector& x) const;
  Vector sample(Random& rng) const;
  /// n draws stored as the columns of a dim x n matrix.
  Matrix sample(Random& rng, Eigen::Index n) const;

 private:
  Vector mean_;
  Vector stddev_;
  double log_norm_;
};

struct StageDegrees {
  int degree_L = 1;
  int degree_R = 1;
};

struct BuildConfig {
  int n_samples = 250;
  std::vector<StageDegrees> stages{StageDegrees{}};
  double tolerance = 1e-3;
  int max_iterations = 200;
  std::uint64_t seed = 0;
  double fd_step = 1e-6;
  int quadrature_order = kDefaultQuadratureOrder;

  void validate() const;
};

/// Sample-average KL objective (up to the map-independent reference entropy):
/// mean over samples of -log_target(T(r)) - log det grad T(r). Returns +inf
/// when any term is not finite.
double kl_objective(const TriangularMapd& map, const LogDensity& log_target, const Matrix& samples);
double kl_objective(const DeepMapd& map, const LogDensity& log_target, const Matrix& samples);

/// Central finite-difference gradient of kl_objective with respect to the
/// coefficients of `map` (for a deep map: its last stage), with per-coefficient
/// step fd_step * (1 + |beta|). Entries where both sides are +inf are NaN.
Vector objective_gradient(const TriangularMapd& map, const LogDensity& log_target,
                          const Matrix& samples, double fd_step);
Vector objective_gradient(const DeepMapd& map, const LogDensity& log_target, const Matrix& samples,
                          double fd_step);

struct StageReport {
  int stage = 0;
  StageDegrees degrees;
  int num_coefficients = 0;
  int iterations = 0;
  std::uint64_t objective_evaluations = 0;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double initial_gradient_norm = 0.0;
  double final_gradient_norm = 0.0;
  bool converged = false;
  std::string stop_reason;
  /// Objective after each accepted iterate, starting with the identity value.
  std::vector<double> objective_history;
};

struct BuildReport {
  std::vector<StageReport> stages;
  std::uint64_t target_evaluations = 0;
  int n_samples = 0;

  nlohmann::json to_json() const;
};

struct BuildResult {
  DeepMapd map;
  BuildReport report;
};

/// Trains one stage per entry of config.stages, each starting from the
/// identity and composed onto the already-trained stages (which stay frozen).
/// Throws InfeasibleStartError when the identity objective is not finite.
BuildResult build_map(const LogDensity& log_target, const ReferenceDensity& reference,
                      const BuildConfig& config);

/// n reference draws pushed through `map`, as columns of a dim x n matrix.
Matrix pushforward_samples(const DeepMapd& map, const ReferenceDensity& reference, Eigen::Index n,
                           std::uint64_t seed);

}  // namespace mfmh
