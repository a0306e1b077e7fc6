#pragma once

#include "mfmh/core.hpp"
#include "mfmh/mapbuild.hpp"
#include "mfmh/transport.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mfmh {

/// Proposal independent of the current state: draws from a reference density.
struct IndependenceKernel {
  ReferenceDensity reference;
};

/// Symmetric Gaussian random walk with diagonal covariance.
struct RandomWalkKernel {
  Vector step_variance;
};

class ProposalKernel {
 public:
  static ProposalKernel independence(ReferenceDensity reference);
  static ProposalKernel random_walk(Vector step_variance);

  int dim() const;
  bool is_independence() const { return std::holds_alternative<IndependenceKernel>(kind_); }
  const std::variant<IndependenceKernel, RandomWalkKernel>& kind() const { return kind_; }

  Vector draw(const Vector& current, Random& rng) const;
  /// log q(to | from), normalized.
  double log_density(const Vector& to, const Vector& from) const;

  nlohmann::json to_json() const;

 private:
  explicit ProposalKernel(std::variant<IndependenceKernel, RandomWalkKernel> kind);
  std::variant<IndependenceKernel, RandomWalkKernel> kind_;
};

/// Ordered chain states theta_1..theta_M (columns of `samples`) with per-step
/// bookkeeping. A rejected step repeats the previous state exactly.
struct Chain {
  Vector start;
  double start_log_post = 0.0;
  Matrix samples;            // d x M
  Vector log_posts;          // M
  std::vector<std::uint8_t> accepted;
  Vector log_alpha;          // log acceptance ratio of the (first-stage) proposal
  std::uint64_t n_target_evals = 0;
  std::uint64_t seed = 0;
  bool truncated = false;

  int dim() const { return static_cast<int>(samples.rows()); }
  Eigen::Index size() const { return samples.cols(); }
  double acceptance_rate() const;
};

/// Called once per completed iteration (1-based step).
using StepObserver =
    std::function<void(std::size_t step, bool accepted, double log_post, const Vector& theta)>;

/// Metropolis-Hastings in log space, one fresh log_post call per
/// iteration. Proposals with -inf (or NaN) log-posterior are rejected.
Chain metropolis_hastings(const LogDensity& log_post, const ProposalKernel& proposal,
                          const Vector& start, std::size_t iterations, std::uint64_t seed,
                          const StepObserver& observer = {});

/// Multifidelity MH: proposals are drawn on the reference side of `map` and pushed
/// forward; the acceptance ratio carries the Jacobian log-determinants at the
/// reference points. The reference-side state is inverted once at the start and
/// then carried along with the chain.
Chain mfmh(const LogDensity& log_post_hifi, const DeepMapd& map, const ProposalKernel& proposal,
           const Vector& start, std::size_t iterations, std::uint64_t seed,
           const StepObserver& observer = {});

/// Start for an MFMH chain when none is configured: the image of the reference
/// mean under `map`, or `fallback` if the posterior is not finite there.
/// Starting far in the tail of the pushforward can pin an independence chain
/// at its first state.
Vector mfmh_default_start(const LogDensity& log_post_hifi, const DeepMapd& map,
                          const ReferenceDensity& reference, const Vector& fallback);

struct DramOptions {
  Vector init_cov_diag;
  std::size_t iterations = 0;
  /// Adaptation starts after this many iterations; iterations disables it.
  std::size_t burn_adapt = 0;
  bool delayed_rejection = true;
  /// Covariance factor of the second-stage proposal.
  double dr_scale = 1.0 / 25.0;
  double regularization = 1e-10;
  std::uint64_t seed = 0;
  /// Optional budget: stop once this many target evaluations were spent.
  std::optional<std::uint64_t> max_target_evals;
};

/// Adaptive Metropolis with one delayed-rejection stage.
Chain adaptive_metropolis_dram(const LogDensity& log_post, const Vector& start,
                               const DramOptions& options, const StepObserver& observer = {},
                               Matrix* final_covariance = nullptr);

/// Keeps the states with 1-based indices burn + stride, burn + 2 stride, ...
Chain thin_and_burn(const Chain& chain, std::size_t burn, std::size_t stride);

}  // namespace mfmh
