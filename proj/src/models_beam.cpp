#include "mfmh/models_beam.hpp"

#include "mfmh/errors.hpp"
#include "mfmh/map_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mfmh {

namespace {

using Sparse = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr double kSigmoidWidth = 0.005;

double sigmoid(double x, double a) { return 1.0 / (1.0 + std::exp(-(x - a) / kSigmoidWidth)); }

/// Rows 1..N-2: second difference; rows 0 and N-1 are boundary rows set by the caller.
std::vector<Triplet> second_difference(int n, double inv_d2) {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(3 * n + 6));
  for (int k = 1; k < n - 1; ++k) {
    t.emplace_back(k, k - 1, inv_d2);
    t.emplace_back(k, k, -2.0 * inv_d2);
    t.emplace_back(k, k + 1, inv_d2);
  }
  return t;
}

Sparse assemble(int n, std::vector<Triplet>& t) {
  Sparse A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

}  // namespace

Vector BeamGrid::load_values() const {
  if (load.size() == 0) return Vector::Ones(points);
  return load;
}

void BeamGrid::validate() const {
  if (points < 7) throw DimensionError("beam grid needs at least 7 points");
  if (!(length > 0.0)) throw DimensionError("beam length must be positive");
  if (load.size() != 0 && load.size() != points)
    throw DimensionError("beam load must have one value per grid point");
}

double stiffness_field(const Vector& theta, double x, double length) {
  const Eigen::Index k = theta.size();
  if (k < 1) throw DimensionError("stiffness needs at least one parameter");
  double e = theta[0];
  for (Eigen::Index i = 1; i < k; ++i) {
    const double a = length * static_cast<double>(i) / static_cast<double>(k);
    const double s = sigmoid(x, a);
    e = (1.0 - s) * e + s * theta[i];
  }
  return e;
}

BeamSolver::BeamSolver(BeamGrid grid) : grid_(std::move(grid)) {
  grid_.validate();
  const int n = grid_.points;
  const double d = grid_.spacing();
  const double inv_d2 = 1.0 / (d * d);
  const double inv_2d = 1.0 / (2.0 * d);

  // Moment: w'' = f, w(L) = 0, w'(L) = 0 (one-sided).
  auto tm = second_difference(n, inv_d2);
  tm.emplace_back(0, n - 1, 1.0);
  tm.emplace_back(n - 1, n - 1, 3.0 * inv_2d);
  tm.emplace_back(n - 1, n - 2, -4.0 * inv_2d);
  tm.emplace_back(n - 1, n - 3, inv_2d);
  const Sparse M = assemble(n, tm);
  Vector rhs = grid_.load_values();
  rhs[0] = 0.0;
  rhs[n - 1] = 0.0;
  Eigen::SparseLU<Sparse> lu_m;
  lu_m.compute(M);
  if (lu_m.info() != Eigen::Success) throw SolverError("moment system is singular", 0.0);
  moment_ = lu_m.solve(rhs);

  // Curvature: u'' = w / E, u(0) = 0, u'(0) = 0 (one-sided).
  auto tc = second_difference(n, inv_d2);
  tc.emplace_back(0, 0, 1.0);
  tc.emplace_back(n - 1, 0, -3.0 * inv_2d);
  tc.emplace_back(n - 1, 1, 4.0 * inv_2d);
  tc.emplace_back(n - 1, 2, -inv_2d);
  const Sparse C = assemble(n, tc);
  curvature_solver_ = std::make_shared<Eigen::SparseLU<Sparse>>();
  curvature_solver_->compute(C);
  if (curvature_solver_->info() != Eigen::Success)
    throw SolverError("curvature system is singular", 0.0);
}

Vector BeamSolver::solve_with_stiffness(const Vector& stiffness) const {
  const int n = grid_.points;
  if (stiffness.size() != n) throw DimensionError("stiffness must have one value per grid point");
  if (!stiffness.allFinite() || !(stiffness.array() > 0.0).all())
    throw ModelEvaluationError("beam stiffness must be positive: the system is singular");
  Vector rhs = moment_.array() / stiffness.array();
  rhs[0] = 0.0;
  rhs[n - 1] = 0.0;
  return curvature_solver_->solve(rhs);
}

Vector BeamSolver::solve(const Vector& theta) const {
  if (!theta.allFinite()) throw NonFiniteError("beam parameter is not finite");
  Vector e(grid_.points);
  const double d = grid_.spacing();
  for (int k = 0; k < grid_.points; ++k) e[k] = stiffness_field(theta, k * d, grid_.length);
  return solve_with_stiffness(e);
}

Vector beam_solve(const Vector& theta, const BeamGrid& grid) { return BeamSolver(grid).solve(theta); }

Vector beam_observe(const Vector& u) {
  const Eigen::Index n = u.size();
  if (n < 41 || (n - 1) % 40 != 0)
    throw DimensionError("beam observation needs N = 40 s + 1 grid points (for example 601)");
  const Eigen::Index stride = (n - 1) / 40;
  Vector y(41);
  for (Eigen::Index k = 0; k <= 40; ++k) y[k] = u[k * stride];
  return y;
}

BeamModel::BeamModel(BeamGrid grid, int parameters)
    : solver_(std::move(grid)), parameters_(parameters) {
  if ((solver_.grid().points - 1) % 40 != 0)
    throw DimensionError("beam observation needs N = 40 s + 1 grid points (for example 601)");
  if (parameters < 1) throw DimensionError("beam model needs at least one parameter");
}

Vector BeamModel::eval(const Vector& theta) const {
  if (theta.size() != parameters_) throw DimensionError("beam parameter has the wrong length");
  return beam_observe(solver_.solve(theta));
}

std::vector<double> log_spaced_nodes(double lo, double hi, int n) {
  if (n < 2 || !(lo > 0.0) || !(hi > lo)) throw ConfigError("nodes", "need n >= 2 and 0 < lo < hi");
  std::vector<double> nodes(static_cast<std::size_t>(n));
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (int k = 0; k < n; ++k) nodes[static_cast<std::size_t>(k)] = std::exp(a + (b - a) * k / (n - 1));
  nodes.front() = lo;
  nodes.back() = hi;
  return nodes;
}

BeamSurrogate BeamSurrogate::build(const ForwardModel& model, int nodes_per_axis, double lo,
                                   double hi, InterpolationKind kind) {
  if (nodes_per_axis < 4) throw ConfigError("nodes_per_axis", "must be at least 4");
  auto nodes = log_spaced_nodes(lo, hi, nodes_per_axis);
  const int d = model.input_dim();
  Eigen::Index total = 1;
  for (int i = 0; i < d; ++i) total *= nodes_per_axis;
  Matrix table(total, model.output_dim());
  Vector theta(d);
  for (Eigen::Index row = 0; row < total; ++row) {
    Eigen::Index rem = row;
    for (int i = d - 1; i >= 0; --i) {
      theta[i] = nodes[static_cast<std::size_t>(rem % nodes_per_axis)];
      rem /= nodes_per_axis;
    }
    table.row(row) = model.eval(theta).transpose();
  }
  return BeamSurrogate(std::move(nodes), d, std::move(table), kind);
}

BeamSurrogate::BeamSurrogate(std::vector<double> nodes, int input_dim, Matrix table,
                             InterpolationKind kind)
    : nodes_(std::move(nodes)), dim_(input_dim), table_(std::move(table)), kind_(kind) {
  if (nodes_.size() < 4) throw DimensionError("surrogate needs at least 4 nodes per axis");
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    if (!(nodes_[k] > 0.0) || (k > 0 && !(nodes_[k] > nodes_[k - 1])))
      throw DimensionError("surrogate nodes must be positive and strictly increasing");
    log_nodes_.push_back(std::log(nodes_[k]));
  }
  Eigen::Index total = 1;
  for (int i = 0; i < dim_; ++i) total *= static_cast<Eigen::Index>(nodes_.size());
  if (table_.rows() != total || table_.cols() < 1)
    throw DimensionError("surrogate table does not match the node grid");
  if (!table_.allFinite()) throw DimensionError("surrogate table has holes");
}

bool BeamSurrogate::in_box(const Vector& theta) const {
  if (theta.size() != dim_) return false;
  return (theta.array() >= nodes_.front()).all() && (theta.array() <= nodes_.back()).all();
}

Vector BeamSurrogate::eval(const Vector& theta) const {
  if (theta.size() != dim_) throw DimensionError("surrogate parameter has the wrong length");
  if (!theta.allFinite()) throw NonFiniteError("surrogate parameter is not finite");
  Vector q = theta;
  if (!in_box(q)) {
    if (policy_ == DomainPolicy::Reject) throw ExtrapolationError("surrogate query outside the tabulated box");
    q = q.cwiseMax(nodes_.front()).cwiseMin(nodes_.back());
  }
  const int n = static_cast<int>(nodes_.size());
  // Per axis: up to 4 (index, weight) pairs.
  std::vector<std::array<int, 4>> idx(static_cast<std::size_t>(dim_));
  std::vector<std::array<double, 4>> w(static_cast<std::size_t>(dim_));
  std::vector<int> count(static_cast<std::size_t>(dim_));
  for (int a = 0; a < dim_; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    int c = static_cast<int>(std::upper_bound(nodes_.begin(), nodes_.end(), q[a]) - nodes_.begin()) - 1;
    c = std::clamp(c, 0, n - 2);
    const double s = (std::log(q[a]) - log_nodes_[static_cast<std::size_t>(c)]) /
                     (log_nodes_[static_cast<std::size_t>(c + 1)] - log_nodes_[static_cast<std::size_t>(c)]);
    const double s_eff = q[a] == nodes_[static_cast<std::size_t>(c)] ? 0.0 : s;
    if (kind_ == InterpolationKind::Linear || c == 0 || c == n - 2) {
      idx[ua] = {c, c + 1, 0, 0};
      w[ua] = {1.0 - s_eff, s_eff, 0.0, 0.0};
      count[ua] = 2;
    } else {
      const double s2 = s_eff * s_eff;
      const double s3 = s2 * s_eff;
      idx[ua] = {c - 1, c, c + 1, c + 2};
      w[ua] = {0.5 * (-s3 + 2.0 * s2 - s_eff), 0.5 * (3.0 * s3 - 5.0 * s2 + 2.0),
               0.5 * (-3.0 * s3 + 4.0 * s2 + s_eff), 0.5 * (s3 - s2)};
      count[ua] = 4;
    }
  }
  Vector out = Vector::Zero(table_.cols());
  std::vector<int> pos(static_cast<std::size_t>(dim_), 0);
  while (true) {
    double weight = 1.0;
    Eigen::Index row = 0;
    for (int a = 0; a < dim_; ++a) {
      const auto ua = static_cast<std::size_t>(a);
      weight *= w[ua][static_cast<std::size_t>(pos[ua])];
      row = row * n + idx[ua][static_cast<std::size_t>(pos[ua])];
    }
    if (weight != 0.0) out += weight * table_.row(row).transpose();
    int a = dim_ - 1;
    while (a >= 0 && ++pos[static_cast<std::size_t>(a)] == count[static_cast<std::size_t>(a)]) {
      pos[static_cast<std::size_t>(a)] = 0;
      --a;
    }
    if (a < 0) break;
  }
  return out;
}

void BeamSurrogate::save(const std::filesystem::path& dir) const {
  nlohmann::json meta{{"kind", "beam_surrogate"},
                      {"input_dim", dim_},
                      {"output_dim", table_.cols()},
                      {"nodes", nodes_},
                      {"interpolation", kind_ == InterpolationKind::Linear ? "linear" : "catmull_rom"},
                      {"table_file", "surrogate_table.csv"}};
  std::string meta_text = meta.dump(2);
  write_text_file(dir / "surrogate.json", meta_text + "\n");
  std::string csv;
  for (Eigen::Index r = 0; r < table_.rows(); ++r) {
    for (Eigen::Index c = 0; c < table_.cols(); ++c) {
      if (c) csv += ',';
      csv += format_real(table_(r, c));
    }
    csv += '\n';
  }
  write_text_file(dir / "surrogate_table.csv", csv);
}

BeamSurrogate BeamSurrogate::load(const std::filesystem::path& dir) {
  const auto meta = read_json_file(dir / "surrogate.json");
  try {
    const int d = meta.at("input_dim").get<int>();
    const auto cols = meta.at("output_dim").get<Eigen::Index>();
    auto nodes = meta.at("nodes").get<std::vector<double>>();
    const auto kind = meta.value("interpolation", std::string("catmull_rom")) == "linear"
                          ? InterpolationKind::Linear
                          : InterpolationKind::CatmullRom;
    Eigen::Index rows = 1;
    for (int i = 0; i < d; ++i) rows *= static_cast<Eigen::Index>(nodes.size());
    std::ifstream in(dir / meta.value("table_file", std::string("surrogate_table.csv")));
    if (!in) throw IoError("cannot open surrogate table in " + dir.string());
    Matrix table(rows, cols);
    std::string line;
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) throw IoError("surrogate table is truncated");
      std::stringstream ss(line);
      std::string cell;
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (!std::getline(ss, cell, ',')) throw IoError("surrogate table row is too short");
        table(r, c) = std::stod(cell);
      }
    }
    return BeamSurrogate(std::move(nodes), d, std::move(table), kind);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed surrogate metadata: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw IoError("malformed number in surrogate table");
  }
}

}  // namespace mfmh
