#include "mfmh/samplers.hpp"

#include "mfmh/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <numbers>

namespace mfmh {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// NaN is treated like -inf: the state is outside the support.
double sanitize(double lp) { return std::isnan(lp) ? kNegInf : lp; }

double safe_eval(const LogDensity& f, const Vector& x) {
  if (!x.allFinite()) return kNegInf;
  return sanitize(f(x));
}

void check_start(double lp) {
  if (!std::isfinite(lp)) throw SamplerError("log-posterior at the start state is not finite");
}

/// Preallocated chain storage written step by step.
class ChainRecorder {
 public:
  ChainRecorder(const Vector& start, double start_lp, std::size_t iterations, std::uint64_t seed,
                const StepObserver& observer)
      : observer_(observer) {
    chain_.start = start;
    chain_.start_log_post = start_lp;
    chain_.seed = seed;
    const auto m = static_cast<Eigen::Index>(iterations);
    chain_.samples.resize(start.size(), m);
    chain_.log_posts.resize(m);
    chain_.log_alpha.resize(m);
    chain_.accepted.reserve(iterations);
  }

  void record(const Vector& theta, double lp, bool accepted, double log_alpha) {
    const auto k = static_cast<Eigen::Index>(chain_.accepted.size());
    chain_.samples.col(k) = theta;
    chain_.log_posts[k] = lp;
    chain_.log_alpha[k] = log_alpha;
    chain_.accepted.push_back(accepted ? 1 : 0);
    if (observer_) observer_(chain_.accepted.size(), accepted, lp, theta);
  }

  Chain finish(std::uint64_t evals) {
    const auto m = static_cast<Eigen::Index>(chain_.accepted.size());
    if (m < chain_.samples.cols()) {
      chain_.samples.conservativeResize(Eigen::NoChange, m);
      chain_.log_posts.conservativeResize(m);
      chain_.log_alpha.conservativeResize(m);
      chain_.truncated = true;
    }
    chain_.n_target_evals = evals;
    return std::move(chain_);
  }

 private:
  Chain chain_;
  const StepObserver& observer_;
};

}  // namespace

ProposalKernel::ProposalKernel(std::variant<IndependenceKernel, RandomWalkKernel> kind)
    : kind_(std::move(kind)) {}

ProposalKernel ProposalKernel::independence(ReferenceDensity reference) {
  return ProposalKernel(IndependenceKernel{std::move(reference)});
}

ProposalKernel ProposalKernel::random_walk(Vector step_variance) {
  if (step_variance.size() == 0) throw DimensionError("random-walk variance must be non-empty");
  if (!step_variance.allFinite() || !(step_variance.array() > 0.0).all())
    throw DimensionError("random-walk variances must be positive and finite");
  return ProposalKernel(RandomWalkKernel{std::move(step_variance)});
}

int ProposalKernel::dim() const {
  return std::visit(overloaded{[](const IndependenceKernel& k) { return k.reference.dim(); },
                               [](const RandomWalkKernel& k) {
                                 return static_cast<int>(k.step_variance.size());
                               }},
                    kind_);
}

Vector ProposalKernel::draw(const Vector& current, Random& rng) const {
  return std::visit(overloaded{[&](const IndependenceKernel& k) { return k.reference.sample(rng); },
                               [&](const RandomWalkKernel& k) {
                                 Vector z = rng.gaussian_vector(k.step_variance.size());
                                 Vector out = current + k.step_variance.cwiseSqrt().cwiseProduct(z);
                                 return out;
                               }},
                    kind_);
}

double ProposalKernel::log_density(const Vector& to, const Vector& from) const {
  return std::visit(
      overloaded{[&](const IndependenceKernel& k) { return k.reference.log_density(to); },
                 [&](const RandomWalkKernel& k) {
                   const auto& v = k.step_variance;
                   const double quad = 0.5 * ((to - from).array().square() / v.array()).sum();
                   return -quad - 0.5 * v.array().log().sum() -
                          0.5 * static_cast<double>(v.size()) * std::log(2.0 * std::numbers::pi);
                 }},
      kind_);
}

nlohmann::json ProposalKernel::to_json() const {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return std::visit(overloaded{[&](const IndependenceKernel& k) {
                                 return nlohmann::json{{"kind", "independence"},
                                                       {"mean", vec(k.reference.mean())},
                                                       {"stddev", vec(k.reference.stddev())}};
                               },
                               [&](const RandomWalkKernel& k) {
                                 return nlohmann::json{{"kind", "random_walk"},
                                                       {"step_variance", vec(k.step_variance)}};
                               }},
                    kind_);
}

double Chain::acceptance_rate() const {
  if (accepted.empty()) return 0.0;
  std::size_t n = 0;
  for (auto a : accepted) n += a;
  return static_cast<double>(n) / static_cast<double>(accepted.size());
}

Chain metropolis_hastings(const LogDensity& log_post, const ProposalKernel& proposal,
                          const Vector& start, std::size_t iterations, std::uint64_t seed,
                          const StepObserver& observer) {
  if (start.size() != proposal.dim()) throw DimensionError("start and proposal dimensions differ");
  if (iterations == 0) throw SamplerError("iterations must be >= 1");
  Random rng(seed);
  Vector theta = start;
  double lp = safe_eval(log_post, theta);
  check_start(lp);
  std::uint64_t evals = 1;
  ChainRecorder rec(start, lp, iterations, seed, observer);

  for (std::size_t it = 0; it < iterations; ++it) {
    Vector cand = proposal.draw(theta, rng);
    const double u = rng.uniform();
    const double lp_c = safe_eval(log_post, cand);
    ++evals;
    double log_alpha = kNegInf;
    if (lp_c != kNegInf) {
      const double lq_fwd = proposal.log_density(cand, theta);
      const double lq_rev = proposal.log_density(theta, cand);
      log_alpha = (lp_c - lp) + (lq_rev - lq_fwd);
    }
    const bool accept = log_alpha != kNegInf && std::log(u) < log_alpha;
    if (accept) {
      theta = std::move(cand);
      lp = lp_c;
    }
    rec.record(theta, lp, accept, log_alpha);
  }
  return rec.finish(evals);
}

Vector mfmh_default_start(const LogDensity& log_post_hifi, const DeepMapd& map,
                          const ReferenceDensity& reference, const Vector& fallback) {
  if (map.dim() != reference.dim()) throw DimensionError("map and reference dimensions differ");
  const Vector x = map.eval(reference.mean());
  if (!x.allFinite() || !std::isfinite(log_post_hifi(x))) return fallback;
  return x;
}

Chain mfmh(const LogDensity& log_post_hifi, const DeepMapd& map, const ProposalKernel& proposal,
           const Vector& start, std::size_t iterations, std::uint64_t seed,
           const StepObserver& observer) {
  if (start.size() != proposal.dim() || start.size() != map.dim())
    throw DimensionError("start, map and proposal dimensions differ");
  if (iterations == 0) throw SamplerError("iterations must be >= 1");
  Random rng(seed);
  Vector theta = start;
  double lp = safe_eval(log_post_hifi, theta);
  check_start(lp);
  Vector r = map.invert(theta);
  double ld = map.log_det_jacobian(r);
  if (!std::isfinite(ld)) throw SamplerError("map Jacobian is degenerate at the start state");
  std::uint64_t evals = 1;
  ChainRecorder rec(start, lp, iterations, seed, observer);

  for (std::size_t it = 0; it < iterations; ++it) {
    Vector r_c = proposal.draw(r, rng);
    const double u = rng.uniform();
    double log_alpha = kNegInf;
    double lp_c = kNegInf;
    double ld_c = kNegInf;
    Vector theta_c;
    if (r_c.allFinite()) {
      std::tie(theta_c, ld_c) = map.eval_with_log_det(r_c);
      lp_c = safe_eval(log_post_hifi, theta_c);
    }
    ++evals;
    if (lp_c != kNegInf && std::isfinite(ld_c)) {
      const double lq_fwd = proposal.log_density(r_c, r);
      const double lq_rev = proposal.log_density(r, r_c);
      log_alpha = (lp_c - lp) + (lq_rev - lq_fwd) + (ld_c - ld);
      if (std::isnan(log_alpha)) log_alpha = kNegInf;
    }
    const bool accept = log_alpha != kNegInf && std::log(u) < log_alpha;
    if (accept) {
      theta = std::move(theta_c);
      r = std::move(r_c);
      lp = lp_c;
      ld = ld_c;
    }
    rec.record(theta, lp, accept, log_alpha);
  }
  return rec.finish(evals);
}

Chain adaptive_metropolis_dram(const LogDensity& log_post, const Vector& start,
                               const DramOptions& options, const StepObserver& observer,
                               Matrix* final_covariance) {
  const Eigen::Index d = start.size();
  if (d == 0 || options.init_cov_diag.size() != d)
    throw DimensionError("start and initial covariance dimensions differ");
  if (!options.init_cov_diag.allFinite() || !(options.init_cov_diag.array() > 0.0).all())
    throw DimensionError("initial covariance entries must be positive and finite");
  if (options.iterations == 0) throw SamplerError("iterations must be >= 1");
  if (!(options.dr_scale > 0.0)) throw SamplerError("dr_scale must be positive");

  Random rng(options.seed);
  Vector theta = start;
  double lp = safe_eval(log_post, theta);
  check_start(lp);
  std::uint64_t evals = 1;
  ChainRecorder rec(start, lp, options.iterations, options.seed, observer);

  const double sd = 2.38 * 2.38 / static_cast<double>(d);
  // Proposal covariance; diagonal until adaptation begins.
  bool adapted = false;
  Vector diag_sqrt = options.init_cov_diag.cwiseSqrt();
  Matrix cov = options.init_cov_diag.asDiagonal();
  Matrix chol = diag_sqrt.asDiagonal();

  // Running mean and scatter of the history theta_0..theta_n.
  Vector mean = start;
  Matrix scatter = Matrix::Zero(d, d);
  double count = 1.0;

  auto step = [&](const Vector& z, double scale) -> Vector {
    if (!adapted) return theta + (scale * diag_sqrt.array()).matrix().cwiseProduct(z);
    return theta + scale * (chol * z);
  };
  auto log_q1 = [&](const Vector& to, const Vector& from) {
    // Unnormalized first-stage Gaussian density; normalization cancels in the DR ratio.
    const Vector diff = to - from;
    if (!adapted) return -0.5 * (diff.array().square() / cov.diagonal().array()).sum();
    return -0.5 * chol.triangularView<Eigen::Lower>().solve(diff).squaredNorm();
  };
  const double dr_sqrt = std::sqrt(options.dr_scale);
  const auto budget_left = [&] {
    return !options.max_target_evals || evals < *options.max_target_evals;
  };

  for (std::size_t it = 0; it < options.iterations; ++it) {
    if (!budget_left()) break;
    Vector y1 = step(rng.gaussian_vector(d), 1.0);
    const double u = rng.uniform();
    const double lp1 = safe_eval(log_post, y1);
    ++evals;
    const double log_alpha = lp1 == kNegInf ? kNegInf : lp1 - lp;
    bool accept = log_alpha != kNegInf && std::log(u) < log_alpha;
    if (accept) {
      theta = std::move(y1);
      lp = lp1;
    } else if (options.delayed_rejection && budget_left()) {
      Vector y2 = step(rng.gaussian_vector(d), dr_sqrt);
      const double u2 = rng.uniform();
      const double lp2 = safe_eval(log_post, y2);
      ++evals;
      if (lp2 != kNegInf) {
        // alpha1(x, y1) < 1 here, so the denominator factor is positive.
        const double a1_x = lp1 == kNegInf ? 0.0 : std::exp(std::min(0.0, lp1 - lp));
        const double a1_y2 = lp1 == kNegInf ? 0.0 : std::exp(std::min(0.0, lp1 - lp2));
        if (a1_y2 < 1.0) {
          const double num = lp2 + log_q1(y1, y2) + std::log1p(-a1_y2);
          const double den = lp + log_q1(y1, theta) + std::log1p(-a1_x);
          const double log_alpha2 = num - den;
          if (!std::isnan(log_alpha2) && std::log(u2) < log_alpha2) {
            theta = std::move(y2);
            lp = lp2;
            accept = true;
          }
        }
      }
    }
    rec.record(theta, lp, accept, log_alpha);

    // Welford update of the history moments.
    count += 1.0;
    const Vector delta = theta - mean;
    mean += delta / count;
    scatter.noalias() += delta * (theta - mean).transpose();

    if (it + 1 >= options.burn_adapt && options.burn_adapt < options.iterations) {
      const Matrix hist = scatter / (count - 1.0);
      Matrix next = sd * (hist + options.regularization * Matrix::Identity(d, d));
      Eigen::LLT<Matrix> llt(next);
      if (llt.info() == Eigen::Success) {
        cov = std::move(next);
        chol = llt.matrixL();
        adapted = true;
      }
    }
  }
  if (final_covariance) *final_covariance = cov;
  return rec.finish(evals);
}

Chain thin_and_burn(const Chain& chain, std::size_t burn, std::size_t stride) {
  if (stride == 0) throw SamplerError("stride must be >= 1");
  const auto m = static_cast<std::size_t>(chain.size());
  if (burn + stride > m) throw SamplerError("burn + stride exceeds the chain length");
  const std::size_t kept = (m - burn) / stride;
  Chain out;
  out.start = chain.start;
  out.start_log_post = chain.start_log_post;
  out.n_target_evals = chain.n_target_evals;
  out.seed = chain.seed;
  out.truncated = chain.truncated;
  out.samples.resize(chain.samples.rows(), static_cast<Eigen::Index>(kept));
  out.log_posts.resize(static_cast<Eigen::Index>(kept));
  out.log_alpha.resize(static_cast<Eigen::Index>(kept));
  out.accepted.resize(kept);
  for (std::size_t k = 0; k < kept; ++k) {
    // 1-based index burn + (k+1) stride.
    const auto src = static_cast<Eigen::Index>(burn + (k + 1) * stride - 1);
    const auto dst = static_cast<Eigen::Index>(k);
    out.samples.col(dst) = chain.samples.col(src);
    out.log_posts[dst] = chain.log_posts[src];
    out.log_alpha[dst] = chain.log_alpha[src];
    out.accepted[k] = chain.accepted[static_cast<std::size_t>(src)];
  }
  return out;
}

}  // namespace mfmh
