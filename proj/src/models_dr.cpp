#include "mfmh/models_dr.hpp"

#include "mfmh/errors.hpp"
#include "mfmh/map_io.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace mfmh {

namespace {

constexpr double kMaxExponent = 700.0;

double reaction_prefactor(const Vector& theta) {
  return (0.1 * std::sin(theta[0]) + 2.0) * std::exp(-2.7 * theta[0] * theta[0]);
}

double checked_exponent(double u, double t2) {
  const double a = 1.8 * t2 * u;
  if (!(a <= kMaxExponent)) throw ModelEvaluationError("reaction term overflow");
  return a;
}

/// Damped Newton on F(x) = 0 with Armijo backtracking on 0.5 |F|^2. `solve`
/// returns the Newton direction for the residual at x.
template <class Residual, class Solve>
Vector damped_newton(Vector x, const Residual& residual, const Solve& solve,
                     const NewtonOptions& opt, NewtonStats* stats) {
  NewtonStats local;
  NewtonStats& st = stats ? *stats : local;
  st = NewtonStats{};
  Vector r = residual(x);
  double phi = 0.5 * r.squaredNorm();
  for (int it = 0;; ++it) {
    const double rnorm = r.lpNorm<Eigen::Infinity>();
    st.residual_history.push_back(rnorm);
    if (rnorm < opt.tolerance) {
      st.iterations = it;
      st.converged = true;
      return x;
    }
    if (it == opt.max_iterations) {
      st.iterations = it;
      throw SolverError("Newton did not converge within " + std::to_string(opt.max_iterations) +
                            " iterations",
                        rnorm);
    }
    const Vector dx = solve(x, r);
    if (!dx.allFinite()) throw SolverError("Newton direction is not finite", rnorm);
    double alpha = 1.0;
    bool accepted = false;
    for (int k = 0; k <= opt.max_halvings; ++k, alpha *= 0.5) {
      Vector trial = x + alpha * dx;
      Vector r_trial;
      try {
        r_trial = residual(trial);
      } catch (const ModelEvaluationError&) {
        continue;
      }
      const double phi_trial = 0.5 * r_trial.squaredNorm();
      if (std::isfinite(phi_trial) && phi_trial <= (1.0 - 2.0 * opt.armijo * alpha) * phi) {
        x = std::move(trial);
        r = std::move(r_trial);
        phi = phi_trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      st.iterations = it;
      throw SolverError("line search failed", rnorm);
    }
  }
}

}  // namespace

DrGrid DrGrid::with_inverse_width(int n) {
  if (n < 2) throw DimensionError("grid needs at least one interior node (n >= 2)");
  return DrGrid{n};
}

double dr_reaction(double u, const Vector& theta) {
  if (theta.size() != 2) throw DimensionError("reaction parameter must have length 2");
  return reaction_prefactor(theta) * std::expm1(checked_exponent(u, theta[1]));
}

double dr_reaction_du(double u, const Vector& theta) {
  if (theta.size() != 2) throw DimensionError("reaction parameter must have length 2");
  return reaction_prefactor(theta) * 1.8 * theta[1] * std::exp(checked_exponent(u, theta[1]));
}

SparseMatrix dr_laplacian(const DrGrid& grid) {
  const int m = grid.m();
  const double inv_h2 = static_cast<double>(grid.n) * grid.n;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(5 * grid.unknowns()));
  for (int j = 1; j <= m; ++j)
    for (int i = 1; i <= m; ++i) {
      const auto k = grid.index(i, j);
      t.emplace_back(k, k, 4.0 * inv_h2);
      if (i > 1) t.emplace_back(k, grid.index(i - 1, j), -inv_h2);
      if (i < m) t.emplace_back(k, grid.index(i + 1, j), -inv_h2);
      if (j > 1) t.emplace_back(k, grid.index(i, j - 1), -inv_h2);
      if (j < m) t.emplace_back(k, grid.index(i, j + 1), -inv_h2);
    }
  SparseMatrix A(grid.unknowns(), grid.unknowns());
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

Vector dr_forcing(const DrGrid& grid) {
  Vector f(grid.unknowns());
  const double h = grid.h();
  for (int j = 1; j <= grid.m(); ++j)
    for (int i = 1; i <= grid.m(); ++i)
      f[grid.index(i, j)] =
          100.0 * std::sin(2.0 * std::numbers::pi * i * h) * std::sin(2.0 * std::numbers::pi * j * h);
  return f;
}

Vector dr_solve(const Vector& theta, const DrGrid& grid, NewtonStats* stats,
                const NewtonOptions& options, double forcing_scale) {
  if (theta.size() != 2) throw DimensionError("diffusion-reaction parameter must have length 2");
  if (!theta.allFinite()) throw NonFiniteError("diffusion-reaction parameter is not finite");
  const SparseMatrix A = dr_laplacian(grid);
  const Vector f = forcing_scale * dr_forcing(grid);
  const Eigen::Index n = A.rows();

  auto residual = [&](const Vector& u) {
    Vector r = A * u - f;
    for (Eigen::Index k = 0; k < n; ++k) r[k] += dr_reaction(u[k], theta);
    return r;
  };
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  ldlt.analyzePattern(A);
  auto solve = [&](const Vector& u, const Vector& r) -> Vector {
    SparseMatrix J = A;
    for (Eigen::Index k = 0; k < n; ++k) J.coeffRef(k, k) += dr_reaction_du(u[k], theta);
    ldlt.factorize(J);
    if (ldlt.info() == Eigen::Success) {
      Vector dx = ldlt.solve(-r);
      if (dx.allFinite()) return dx;
    }
    Eigen::SparseLU<SparseMatrix> lu;
    lu.compute(J);
    if (lu.info() != Eigen::Success)
      throw SolverError("singular Newton Jacobian", r.lpNorm<Eigen::Infinity>());
    return lu.solve(-r);
  };
  return damped_newton(Vector::Zero(n), residual, solve, options, stats);
}

SparseMatrix dr_observation_operator(const DrGrid& grid) {
  std::vector<Eigen::Triplet<double>> t;
  const double n = grid.n;
  auto split = [n](double x, int& cell, double& frac) {
    double p = x * n;
    const double r = std::round(p);
    if (std::abs(p - r) < 1e-9) p = r;
    cell = static_cast<int>(std::floor(p));
    frac = p - cell;
  };
  int row = 0;
  for (int i = 1; i <= 3; ++i)
    for (int j = 1; j <= 4; ++j, ++row) {
      int a, b;
      double fa, fb;
      split(0.25 * i, a, fa);
      split(0.2 * j, b, fb);
      const double w[4] = {(1 - fa) * (1 - fb), fa * (1 - fb), (1 - fa) * fb, fa * fb};
      const int na[4] = {a, a + 1, a, a + 1};
      const int nb[4] = {b, b, b + 1, b + 1};
      for (int c = 0; c < 4; ++c) {
        if (w[c] == 0.0) continue;
        if (na[c] < 1 || na[c] > grid.m() || nb[c] < 1 || nb[c] > grid.m()) continue;
        t.emplace_back(row, grid.index(na[c], nb[c]), w[c]);
      }
    }
  SparseMatrix O(12, grid.unknowns());
  O.setFromTriplets(t.begin(), t.end());
  return O;
}

Vector dr_observe(const Vector& u, const DrGrid& grid) {
  if (u.size() != grid.unknowns()) throw DimensionError("field does not match the grid");
  return dr_observation_operator(grid) * u;
}

DrModel::DrModel(DrGrid grid, NewtonOptions options)
    : grid_(grid), options_(options), obs_(dr_observation_operator(grid)) {}

Vector DrModel::eval(const Vector& theta) const {
  return obs_ * dr_solve(theta, grid_, nullptr, options_);
}

std::vector<Vector> SnapshotBox::points() const {
  if (n1 < 1 || n2 < 1) throw ConfigError("snapshot_grid", "needs at least one point per axis");
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n1 * n2));
  auto at = [](double lo, double hi, int n, int k) {
    return n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * k / (n - 1);
  };
  for (int a = 0; a < n1; ++a)
    for (int b = 0; b < n2; ++b) out.push_back(Vector{{at(lo1, hi1, n1, a), at(lo2, hi2, n2, b)}});
  return out;
}

bool SnapshotBox::contains(const Vector& theta) const {
  return theta.size() == 2 && theta[0] >= lo1 && theta[0] <= hi1 && theta[1] >= lo2 &&
         theta[1] <= hi2;
}

DrRom DrRom::build(const DrGrid& grid, const SnapshotBox& box, int basis_size,
                   const NewtonOptions& options) {
  const auto params = box.points();
  if (basis_size < 1 || basis_size > static_cast<int>(params.size()) ||
      basis_size > grid.unknowns())
    throw ConfigError("basis_size", "must be between 1 and the number of snapshots");
  Matrix snapshots(grid.unknowns(), static_cast<Eigen::Index>(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    try {
      snapshots.col(static_cast<Eigen::Index>(k)) = dr_solve(params[k], grid, nullptr, options);
    } catch (const SolverError& e) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "snapshot solve failed at theta = (" << params[k][0] << ", " << params[k][1]
          << "): " << e.what();
      throw SolverError(msg.str(), e.last_residual());
    }
  }
  Eigen::BDCSVD<Matrix> svd(snapshots, Eigen::ComputeThinU);
  Matrix basis = svd.matrixU().leftCols(basis_size);
  // Fix the sign of each mode for reproducible files.
  for (Eigen::Index c = 0; c < basis.cols(); ++c) {
    Eigen::Index arg;
    basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, c) < 0) basis.col(c) *= -1.0;
  }
  return DrRom(grid, std::move(basis), box, svd.singularValues(), options);
}

DrRom::DrRom(const DrGrid& grid, Matrix basis, SnapshotBox box, Vector singular_values,
             NewtonOptions options)
    : grid_(grid), basis_(std::move(basis)), box_(box),
      singular_values_(std::move(singular_values)), options_(options) {
  if (basis_.rows() != grid_.unknowns() || basis_.cols() < 1)
    throw DimensionError("ROM basis does not match the grid");
  const SparseMatrix A = dr_laplacian(grid_);
  reduced_laplacian_ = basis_.transpose() * (A * basis_);
  reduced_forcing_ = basis_.transpose() * dr_forcing(grid_);
  reduced_observation_ = dr_observation_operator(grid_) * basis_;
}

Vector DrRom::solve_reduced(const Vector& theta, NewtonStats* stats) const {
  if (theta.size() != 2) throw DimensionError("diffusion-reaction parameter must have length 2");
  if (!theta.allFinite()) throw NonFiniteError("diffusion-reaction parameter is not finite");
  const Eigen::Index n = basis_.rows();
  auto residual = [&](const Vector& c) {
    const Vector u = basis_ * c;
    Vector g(n);
    for (Eigen::Index k = 0; k < n; ++k) g[k] = dr_reaction(u[k], theta);
    return Vector(reduced_laplacian_ * c + basis_.transpose() * g - reduced_forcing_);
  };
  auto solve = [&](const Vector& c, const Vector& r) -> Vector {
    const Vector u = basis_ * c;
    Vector dg(n);
    for (Eigen::Index k = 0; k < n; ++k) dg[k] = dr_reaction_du(u[k], theta);
    const Matrix J = reduced_laplacian_ + basis_.transpose() * dg.asDiagonal() * basis_;
    return J.partialPivLu().solve(-r);
  };
  return damped_newton(Vector::Zero(basis_.cols()), residual, solve, options_, stats);
}

Vector DrRom::eval(const Vector& theta) const { return reduced_observation_ * solve_reduced(theta); }

void DrRom::save(const std::filesystem::path& dir) const {
  nlohmann::json meta{{"kind", "dr_pod_rom"},
                      {"grid_n", grid_.n},
                      {"basis_size", basis_.cols()},
                      {"unknowns", basis_.rows()},
                      {"basis_file", "rom_basis.csv"},
                      {"snapshot_box",
                       {{"theta1", {box_.lo1, box_.hi1}},
                        {"theta2", {box_.lo2, box_.hi2}},
                        {"n1", box_.n1},
                        {"n2", box_.n2}}},
                      {"newton", {{"tolerance", options_.tolerance}, {"max_iterations", options_.max_iterations}}},
                      {"singular_values", std::vector<double>(singular_values_.data(),
                                                              singular_values_.data() +
                                                                  singular_values_.size())}};
  write_text_file(dir / "rom.json", meta.dump(2) + "\n");
  std::string csv;
  for (Eigen::Index r = 0; r < basis_.rows(); ++r) {
    for (Eigen::Index c = 0; c < basis_.cols(); ++c) {
      if (c) csv += ',';
      csv += format_real(basis_(r, c));
    }
    csv += '\n';
  }
  write_text_file(dir / "rom_basis.csv", csv);
}

DrRom DrRom::load(const std::filesystem::path& dir) {
  const auto meta = read_json_file(dir / "rom.json");
  try {
    const int n = meta.at("grid_n").get<int>();
    const auto rows = meta.at("unknowns").get<Eigen::Index>();
    const auto cols = meta.at("basis_size").get<Eigen::Index>();
    SnapshotBox box;
    const auto& b = meta.at("snapshot_box");
    box.lo1 = b.at("theta1").at(0).get<double>();
    box.hi1 = b.at("theta1").at(1).get<double>();
    box.lo2 = b.at("theta2").at(0).get<double>();
    box.hi2 = b.at("theta2").at(1).get<double>();
    box.n1 = b.at("n1").get<int>();
    box.n2 = b.at("n2").get<int>();
    NewtonOptions opt;
    if (meta.contains("newton")) {
      opt.tolerance = meta["newton"].value("tolerance", opt.tolerance);
      opt.max_iterations = meta["newton"].value("max_iterations", opt.max_iterations);
    }
    const auto sv = meta.at("singular_values").get<std::vector<double>>();
    std::ifstream in(dir / meta.value("basis_file", std::string("rom_basis.csv")));
    if (!in) throw IoError("cannot open ROM basis in " + dir.string());
    Matrix basis(rows, cols);
    std::string line;
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) throw IoError("ROM basis file is truncated");
      std::stringstream ss(line);
      std::string cell;
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (!std::getline(ss, cell, ',')) throw IoError("ROM basis row is too short");
        basis(r, c) = std::stod(cell);
      }
    }
    return DrRom(DrGrid::with_inverse_width(n), std::move(basis), box,
                 Eigen::Map<const Vector>(sv.data(), static_cast<Eigen::Index>(sv.size())), opt);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed ROM metadata: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw IoError("malformed number in ROM basis");
  }
}

}  // namespace mfmh
