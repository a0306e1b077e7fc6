#pragma once

#include "mfmh/core.hpp"
#include "mfmh/problems.hpp"

#include <Eigen/SparseCore>

#include <filesystem>
#include <json.hpp>
#include <vector>

namespace mfmh {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Interior nodes of a uniform grid on the unit square with h = 1/n. Unknown
/// (i, j), 1 <= i, j <= m = n - 1, sits at (i h, j h) and is stored at
/// (j-1) m + (i-1), so x1 runs fastest.
struct DrGrid {
  int n = 32;

  static DrGrid with_inverse_width(int n);
  double h() const { return 1.0 / n; }
  int m() const { return n - 1; }
  int unknowns() const { return m() * m(); }
  Eigen::Index index(int i, int j) const { return static_cast<Eigen::Index>(j - 1) * m() + (i - 1); }
};

/// (0.1 sin t1 + 2) exp(-2.7 t1^2) (exp(1.8 t2 u) - 1). Throws
/// ModelEvaluationError when the exponent exceeds 700.
double dr_reaction(double u, const Vector& theta);
double dr_reaction_du(double u, const Vector& theta);

/// 5-point discretization of -Laplacian with zero Dirichlet data.
SparseMatrix dr_laplacian(const DrGrid& grid);
/// 100 sin(2 pi x1) sin(2 pi x2) at the interior nodes.
Vector dr_forcing(const DrGrid& grid);

struct NewtonStats {
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;  // infinity norms, starting at the initial guess
};

struct NewtonOptions {
  double tolerance = 1e-10;
  int max_iterations = 50;
  double armijo = 1e-4;
  int max_halvings = 40;
};

/// Solves -lap_h u + g(u, theta) = scale * f by damped Newton from u = 0.
/// Throws SolverError carrying the last residual norm on failure.
Vector dr_solve(const Vector& theta, const DrGrid& grid, NewtonStats* stats = nullptr,
                const NewtonOptions& options = {}, double forcing_scale = 1.0);

/// 12 x unknowns bilinear interpolation operator for the points
/// (0.25 i, 0.2 j), i = 1..3, j = 1..4, i-major.
SparseMatrix dr_observation_operator(const DrGrid& grid);
Vector dr_observe(const Vector& u, const DrGrid& grid);

class DrModel final : public ForwardModel {
 public:
  explicit DrModel(DrGrid grid, NewtonOptions options = {});
  Vector eval(const Vector& theta) const override;
  int input_dim() const override { return 2; }
  int output_dim() const override { return 12; }
  const DrGrid& grid() const { return grid_; }

 private:
  DrGrid grid_;
  NewtonOptions options_;
  SparseMatrix obs_;
};

struct SnapshotBox {
  double lo1 = -1.5707963267948966;
  double hi1 = 1.5707963267948966;
  double lo2 = 1.0;
  double hi2 = 5.0;
  int n1 = 20;
  int n2 = 20;

  /// Equidistant parameter grid including the box corners, theta1 slowest.
  std::vector<Vector> points() const;
  bool contains(const Vector& theta) const;
};

/// POD-Galerkin reduced model: u ~ V c with V the leading left singular vectors
/// of a snapshot matrix and the Galerkin system V^T(-lap V c + g(V c) - f) = 0
/// solved by Newton. The nonlinear term is evaluated through the full grid.
class DrRom final : public ForwardModel {
 public:
  static DrRom build(const DrGrid& grid, const SnapshotBox& box, int basis_size,
                     const NewtonOptions& options = {});
  /// Basis given directly (columns orthonormal).
  DrRom(const DrGrid& grid, Matrix basis, SnapshotBox box, Vector singular_values,
        NewtonOptions options = {});

  Vector eval(const Vector& theta) const override;
  int input_dim() const override { return 2; }
  int output_dim() const override { return 12; }
  CostTag cost_tag() const override { return CostTag::LoFi; }

  /// Reduced coordinates of the Galerkin solution.
  Vector solve_reduced(const Vector& theta, NewtonStats* stats = nullptr) const;
  Vector reconstruct(const Vector& theta) const { return basis_ * solve_reduced(theta); }

  const Matrix& basis() const { return basis_; }
  const Vector& singular_values() const { return singular_values_; }
  const SnapshotBox& box() const { return box_; }
  const DrGrid& grid() const { return grid_; }
  /// Parameters outside the snapshot box still evaluate; callers may flag them.
  bool in_box(const Vector& theta) const { return box_.contains(theta); }

  /// rom.json (metadata) and rom_basis.csv inside `dir`.
  void save(const std::filesystem::path& dir) const;
  static DrRom load(const std::filesystem::path& dir);

 private:
  DrGrid grid_;
  Matrix basis_;
  SnapshotBox box_;
  Vector singular_values_;
  NewtonOptions options_;
  Matrix reduced_laplacian_;
  Vector reduced_forcing_;
  Matrix reduced_observation_;
};

}  // namespace mfmh
