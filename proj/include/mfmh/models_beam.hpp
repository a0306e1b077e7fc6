#pragma once

#include "mfmh/core.hpp"
#include "mfmh/problems.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <filesystem>
#include <memory>
#include <vector>

namespace mfmh {

/// N equidistant nodes on [0, L] and the load sampled at them.
struct BeamGrid {
  int points = 601;
  double length = 1.0;
  /// Load at the nodes; empty means the uniform load f = 1.
  Vector load;

  double spacing() const { return length / (points - 1); }
  Vector load_values() const;
  void validate() const;
};

/// Smoothed piecewise-constant stiffness with k = theta.size() segments:
/// E_1 = theta_1, E_i = (1 - I(x, a_i)) E_{i-1} + I(x, a_i) theta_i, with the
/// sigmoid I(x, a) = 1 / (1 + exp(-(x - a) / 0.005)) and a_1..a_{k+1}
/// equidistant on [0, L].
double stiffness_field(const Vector& theta, double x, double length = 1.0);

/// Cantilever deflection for (E u'')'' = f with u(0) = u'(0) = 0 and
/// u''(L) = u'''(L) = 0. The bending moment w = E u'' solves w'' = f with
/// w(L) = w'(L) = 0; then u'' = w / E with the clamped conditions at x = 0.
/// One-sided second-order differences close both systems.
class BeamSolver {
 public:
  explicit BeamSolver(BeamGrid grid = {});
  Vector solve(const Vector& theta) const;
  /// Deflection for a given nodal stiffness.
  Vector solve_with_stiffness(const Vector& stiffness) const;
  const BeamGrid& grid() const { return grid_; }
  const Vector& moment() const { return moment_; }

 private:
  BeamGrid grid_;
  Vector moment_;
  std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> curvature_solver_;
};

Vector beam_solve(const Vector& theta, const BeamGrid& grid = {});

/// u at the 41 equidistant nodes 0, s, 2s, ..., N-1 with s = (N-1)/40.
Vector beam_observe(const Vector& u);

class BeamModel final : public ForwardModel {
 public:
  explicit BeamModel(BeamGrid grid = {}, int parameters = 3);
  Vector eval(const Vector& theta) const override;
  int input_dim() const override { return parameters_; }
  int output_dim() const override { return 41; }
  const BeamSolver& solver() const { return solver_; }

 private:
  BeamSolver solver_;
  int parameters_;
};

enum class DomainPolicy { Reject, Clamp };
enum class InterpolationKind { CatmullRom, Linear };

/// Tensor-product interpolant of a model on log-spaced nodes over [lo, hi]^d.
/// Per axis, interpolation runs in log(theta), where the nodes are uniform:
/// Catmull-Rom cubic on interior cells and linear on the two edge cells.
class BeamSurrogate final : public ForwardModel {
 public:
  static BeamSurrogate build(const ForwardModel& model, int nodes_per_axis, double lo = 0.5,
                             double hi = 4.0, InterpolationKind kind = InterpolationKind::CatmullRom);
  BeamSurrogate(std::vector<double> nodes, int input_dim, Matrix table, InterpolationKind kind);

  Vector eval(const Vector& theta) const override;
  int input_dim() const override { return dim_; }
  int output_dim() const override { return static_cast<int>(table_.cols()); }
  CostTag cost_tag() const override { return CostTag::LoFi; }

  /// Reject (default) raises ExtrapolationError outside the box; Clamp
  /// projects the query onto the box first.
  void set_domain_policy(DomainPolicy p) { policy_ = p; }
  DomainPolicy domain_policy() const { return policy_; }
  bool in_box(const Vector& theta) const;

  const std::vector<double>& nodes() const { return nodes_; }
  const Matrix& table() const { return table_; }
  InterpolationKind kind() const { return kind_; }

  /// surrogate.json (metadata) and surrogate_table.csv inside `dir`.
  void save(const std::filesystem::path& dir) const;
  static BeamSurrogate load(const std::filesystem::path& dir);

 private:
  std::vector<double> nodes_;
  std::vector<double> log_nodes_;
  int dim_;
  Matrix table_;  // rows: node tuples with the first coordinate slowest
  InterpolationKind kind_;
  DomainPolicy policy_ = DomainPolicy::Reject;
};

/// Log-spaced nodes with the endpoints set exactly.
std::vector<double> log_spaced_nodes(double lo, double hi, int n);

}  // namespace mfmh
