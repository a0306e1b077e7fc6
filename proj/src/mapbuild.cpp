#include "mfmh/mapbuild.hpp"

#include "mfmh/errors.hpp"

#include <atomic>
#include <cmath>
#include <numbers>

namespace mfmh {

ReferenceDensity::ReferenceDensity(Vector mean, Vector stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
  if (mean_.size() == 0 || mean_.size() != stddev_.size())
    throw DimensionError("reference mean and stddev must be non-empty and of equal length");
  if (!(stddev_.array() > 0.0).all() || !stddev_.allFinite() || !mean_.allFinite())
    throw DimensionError("reference stddev entries must be positive and finite");
  log_norm_ = -stddev_.array().log().sum() -
              0.5 * static_cast<double>(mean_.size()) * std::log(2.0 * std::numbers::pi);
}

ReferenceDensity ReferenceDensity::standard(int dim) {
  return ReferenceDensity(Vector::Zero(dim), Vector::Ones(dim));
}

double ReferenceDensity::log_density(const Vector& x) const {
  if (x.size() != mean_.size()) throw DimensionError("reference: dimension mismatch");
  return -0.5 * ((x - mean_).array() / stddev_.array()).square().sum() + log_norm_;
}

Vector ReferenceDensity::sample(Random& rng) const {
  Vector z = rng.gaussian_vector(mean_.size());
  return mean_ + stddev_.cwiseProduct(z);
}

Matrix ReferenceDensity::sample(Random& rng, Eigen::Index n) const {
  Matrix out(mean_.size(), n);
  for (Eigen::Index k = 0; k < n; ++k) out.col(k) = sample(rng);
  return out;
}

void BuildConfig::validate() const {
  if (n_samples <= 0) throw ConfigError("n_samples", "must be positive");
  if (stages.empty()) throw ConfigError("stages", "at least one stage is required");
  for (const auto& s : stages)
    if (s.degree_L < 0 || s.degree_R < 0) throw ConfigError("stages", "degrees must be >= 0");
  if (!(tolerance > 0)) throw ConfigError("tolerance", "must be positive");
  if (max_iterations <= 0) throw ConfigError("max_iterations", "must be positive");
  if (!(fd_step > 0)) throw ConfigError("fd_step", "must be positive");
  if (quadrature_order <= 0) throw ConfigError("quadrature_order", "must be positive");
}

namespace {

/// Objective of one trainable stage applied after frozen earlier stages:
/// inputs are the frozen pushforward of the reference samples and
/// base_log_det their accumulated log-determinants.
class StageObjective {
 public:
  StageObjective(TriangularMapd structure, const LogDensity& log_target, Matrix inputs,
                 Vector base_log_det)
      : structure_(std::move(structure)),
        log_target_(log_target),
        inputs_(std::move(inputs)),
        base_log_det_(std::move(base_log_det)),
        terms_(static_cast<std::size_t>(inputs_.cols())) {}

  double operator()(const Vector& coeffs) const { return evaluate(structure_.with_coefficients(coeffs)); }

  double evaluate(const TriangularMapd& map) const {
    ++evaluations_;
    for (Eigen::Index k = 0; k < inputs_.cols(); ++k) {
      auto [y, ld] = map.eval_with_log_det(inputs_.col(k));
      double term = kPosInf;
      if (std::isfinite(ld) && y.allFinite()) {
        const double lt = log_target_(y);
        term = -lt - ld - base_log_det_[k];
      }
      if (!std::isfinite(term)) return kPosInf;
      terms_[static_cast<std::size_t>(k)] = term;
    }
    return pairwise_sum(terms_) / static_cast<double>(inputs_.cols());
  }

  Vector gradient(const Vector& coeffs, double f0, double fd_step) const {
    Vector g(coeffs.size());
    for (Eigen::Index j = 0; j < coeffs.size(); ++j) {
      const double h = fd_step * (1.0 + std::abs(coeffs[j]));
      Vector plus = coeffs, minus = coeffs;
      plus[j] += h;
      minus[j] -= h;
      const double fp = (*this)(plus);
      const double fm = (*this)(minus);
      const bool okp = std::isfinite(fp), okm = std::isfinite(fm);
      if (okp && okm)
        g[j] = (fp - fm) / (plus[j] - minus[j]);
      else if (okp && std::isfinite(f0))
        g[j] = (fp - f0) / (plus[j] - coeffs[j]);
      else if (okm && std::isfinite(f0))
        g[j] = (f0 - fm) / (coeffs[j] - minus[j]);
      else
        g[j] = std::numeric_limits<double>::quiet_NaN();
    }
    return g;
  }

  const TriangularMapd& structure() const { return structure_; }
  std::uint64_t evaluations() const { return evaluations_; }

 private:
  TriangularMapd structure_;
  const LogDensity& log_target_;
  Matrix inputs_;
  Vector base_log_det_;
  mutable std::vector<double> terms_;
  mutable std::uint64_t evaluations_ = 0;
};

void check_samples(const Matrix& samples, int dim) {
  if (samples.cols() == 0) throw DimensionError("kl_objective: empty sample set");
  if (samples.rows() != dim) throw DimensionError("kl_objective: sample dimension mismatch");
}

/// Frozen pushforward through all but the last stage of `map`.
std::pair<Matrix, Vector> frozen_prefix(const DeepMapd& map, const Matrix& samples,
                                        std::size_t n_frozen) {
  Matrix x = samples;
  Vector ld = Vector::Zero(samples.cols());
  for (std::size_t s = 0; s < n_frozen; ++s)
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      auto [y, l] = map.stages()[s].eval_with_log_det(x.col(k));
      x.col(k) = y;
      ld[k] += l;
    }
  return {x, ld};
}

Vector sanitize(Vector g) {
  for (Eigen::Index j = 0; j < g.size(); ++j)
    if (!std::isfinite(g[j])) g[j] = 0.0;
  return g;
}

double finite_norm(const Vector& g) { return sanitize(g).norm(); }

StageReport train_stage(const StageObjective& objective, const BuildConfig& config,
                        Vector& coeffs) {
  StageReport rep;
  rep.num_coefficients = static_cast<int>(coeffs.size());
  double f = objective(coeffs);
  if (!std::isfinite(f))
    throw InfeasibleStartError(
        "objective is not finite at the identity map; the reference does not overlap the "
        "target support");
  rep.initial_objective = f;
  rep.objective_history.push_back(f);

  Vector g = objective.gradient(coeffs, f, config.fd_step);
  rep.initial_gradient_norm = finite_norm(g);
  g = sanitize(g);

  const Eigen::Index n = coeffs.size();
  Matrix H = Matrix::Identity(n, n);
  bool scaled = false;
  rep.stop_reason = "max_iterations";
  for (int it = 0; it < config.max_iterations; ++it) {
    Vector p = -H * g;
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      H.setIdentity();
      p = -g;
      slope = -g.squaredNorm();
    }
    if (slope == 0.0) {
      rep.converged = true;
      rep.stop_reason = "zero_gradient";
      break;
    }
    double t = 1.0;
    bool accepted = false;
    Vector candidate;
    double fc = kPosInf;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      candidate = coeffs + t * p;
      fc = objective(candidate);
      if (std::isfinite(fc) && fc <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      rep.stop_reason = "line_search_failed";
      break;
    }
    const Vector s = candidate - coeffs;
    coeffs = candidate;
    f = fc;
    rep.objective_history.push_back(f);
    rep.iterations = it + 1;

    Vector g_new = objective.gradient(coeffs, f, config.fd_step);
    rep.final_gradient_norm = finite_norm(g_new);
    g_new = sanitize(g_new);
    if (s.lpNorm<Eigen::Infinity>() < config.tolerance) {
      rep.converged = true;
      rep.stop_reason = "step_tolerance";
      g = g_new;
      break;
    }
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        H = (sy / y.squaredNorm()) * Matrix::Identity(n, n);
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Matrix V = Matrix::Identity(n, n) - rho * y * s.transpose();
      H = V.transpose() * H * V + rho * s * s.transpose();
    }
    g = g_new;
  }
  if (rep.iterations == 0) rep.final_gradient_norm = rep.initial_gradient_norm;
  rep.final_objective = f;
  rep.objective_evaluations = objective.evaluations();
  return rep;
}

}  // namespace

double kl_objective(const TriangularMapd& map, const LogDensity& log_target, const Matrix& samples) {
  check_samples(samples, map.dim());
  StageObjective obj(map, log_target, samples, Vector::Zero(samples.cols()));
  return obj.evaluate(map);
}

double kl_objective(const DeepMapd& map, const LogDensity& log_target, const Matrix& samples) {
  check_samples(samples, map.dim());
  auto [x, ld] = frozen_prefix(map, samples, map.stages().size() - 1);
  StageObjective obj(map.stages().back(), log_target, x, ld);
  return obj.evaluate(map.stages().back());
}

Vector objective_gradient(const TriangularMapd& map, const LogDensity& log_target,
                          const Matrix& samples, double fd_step) {
  return objective_gradient(DeepMapd(map), log_target, samples, fd_step);
}

Vector objective_gradient(const DeepMapd& map, const LogDensity& log_target, const Matrix& samples,
                          double fd_step) {
  check_samples(samples, map.dim());
  if (!(fd_step > 0)) throw DimensionError("fd_step must be positive");
  auto [x, ld] = frozen_prefix(map, samples, map.stages().size() - 1);
  StageObjective obj(map.stages().back(), log_target, x, ld);
  const Vector coeffs = map.stages().back().coefficients();
  return obj.gradient(coeffs, obj(coeffs), fd_step);
}

BuildResult build_map(const LogDensity& log_target, const ReferenceDensity& reference,
                      const BuildConfig& config) {
  config.validate();
  const int d = reference.dim();
  std::uint64_t target_evals = 0;
  const LogDensity counted = [&](const Vector& theta) {
    ++target_evals;
    return log_target(theta);
  };

  std::vector<TriangularMapd> stages;
  BuildReport report;
  report.n_samples = config.n_samples;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    Random rng(derive_seed(config.seed, s));
    const Matrix samples = reference.sample(rng, config.n_samples);

    Matrix inputs = samples;
    Vector base_ld = Vector::Zero(samples.cols());
    if (!stages.empty()) std::tie(inputs, base_ld) = frozen_prefix(DeepMapd(stages), samples, stages.size());

    const auto& deg = config.stages[s];
    const TriangularMapd start =
        TriangularMapd::identity(d, deg.degree_L, deg.degree_R, config.quadrature_order);
    StageObjective objective(start, counted, std::move(inputs), std::move(base_ld));
    Vector coeffs = start.coefficients();
    StageReport rep = train_stage(objective, config, coeffs);
    rep.stage = static_cast<int>(s) + 1;
    rep.degrees = deg;
    report.stages.push_back(std::move(rep));
    stages.push_back(start.with_coefficients(coeffs));
  }
  report.target_evaluations = target_evals;
  return BuildResult{DeepMapd(std::move(stages)), std::move(report)};
}

Matrix pushforward_samples(const DeepMapd& map, const ReferenceDensity& reference, Eigen::Index n,
                           std::uint64_t seed) {
  if (n < 1) throw DimensionError("pushforward_samples: n must be >= 1");
  if (reference.dim() != map.dim()) throw DimensionError("pushforward_samples: dimension mismatch");
  Random rng(seed);
  Matrix out(map.dim(), n);
  for (Eigen::Index k = 0; k < n; ++k) out.col(k) = map.eval(reference.sample(rng));
  return out;
}

nlohmann::json BuildReport::to_json() const {
  nlohmann::json j;
  j["n_samples"] = n_samples;
  j["target_evaluations"] = target_evaluations;
  j["stages"] = nlohmann::json::array();
  for (const auto& s : stages) {
    j["stages"].push_back({{"stage", s.stage},
                           {"ell_L", s.degrees.degree_L},
                           {"ell_R", s.degrees.degree_R},
                           {"num_coefficients", s.num_coefficients},
                           {"iterations", s.iterations},
                           {"objective_evaluations", s.objective_evaluations},
                           {"initial_objective", s.initial_objective},
                           {"final_objective", s.final_objective},
                           {"initial_gradient_norm", s.initial_gradient_norm},
                           {"final_gradient_norm", s.final_gradient_norm},
                           {"converged", s.converged},
                           {"stop_reason", s.stop_reason}});
  }
  return j;
}

}  // namespace mfmh
