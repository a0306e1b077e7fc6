#pragma once

#include "mfmh/core.hpp"

#include <Eigen/Cholesky>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

namespace mfmh {

enum class CostTag { HiFi, LoFi };

/// Parameter-to-observable map G. Implementations are deterministic.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;
  virtual Vector eval(const Vector& theta) const = 0;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual CostTag cost_tag() const { return CostTag::HiFi; }
  /// True when eval may be called from several threads at once.
  virtual bool concurrent_safe() const { return true; }
};

class LinearModel final : public ForwardModel {
 public:
  explicit LinearModel(Matrix A, CostTag tag = CostTag::HiFi) : A_(std::move(A)), tag_(tag) {}
  Vector eval(const Vector& theta) const override;
  int input_dim() const override { return static_cast<int>(A_.cols()); }
  int output_dim() const override { return static_cast<int>(A_.rows()); }
  CostTag cost_tag() const override { return tag_; }
  const Matrix& matrix() const { return A_; }

 private:
  Matrix A_;
  CostTag tag_;
};

class FunctionModel final : public ForwardModel {
 public:
  FunctionModel(std::function<Vector(const Vector&)> f, int input_dim, int output_dim,
                CostTag tag = CostTag::HiFi, bool concurrent_safe = true)
      : f_(std::move(f)), in_(input_dim), out_(output_dim), tag_(tag), safe_(concurrent_safe) {}
  Vector eval(const Vector& theta) const override;
  int input_dim() const override { return in_; }
  int output_dim() const override { return out_; }
  CostTag cost_tag() const override { return tag_; }
  bool concurrent_safe() const override { return safe_; }

 private:
  std::function<Vector(const Vector&)> f_;
  int in_;
  int out_;
  CostTag tag_;
  bool safe_;
};

/// Zero-mean Gaussian noise with SPD covariance.
class NoiseModel {
 public:
  static NoiseModel diagonal(Vector variances);
  static NoiseModel isotropic(int dim, double variance);
  static NoiseModel dense(const Matrix& covariance);

  int dim() const { return static_cast<int>(variances_.size()); }
  bool is_diagonal() const { return diagonal_; }
  /// Sigma^{-1/2} v (with the Cholesky factor for dense covariances).
  Vector whiten(const Vector& v) const;
  /// Sigma^{1/2} z.
  Vector color(const Vector& z) const;

 private:
  bool diagonal_ = true;
  Vector variances_;
  Matrix chol_;  // lower factor, dense case only
};

enum class PriorKind { Gaussian, LogNormal };

/// Gaussian or log-normal prior with diagonal covariance. For the log-normal,
/// log(theta) ~ N(mean, diag(cov_diag)) and the density is that of theta.
class Prior {
 public:
  static Prior gaussian(Vector mean, Vector cov_diag);
  static Prior lognormal(Vector log_mean, Vector log_cov_diag);
  /// Log-normal whose distribution mean and variance are the given moments.
  static Prior lognormal_from_moments(const Vector& mean, const Vector& variance);

  PriorKind kind() const { return kind_; }
  int dim() const { return static_cast<int>(mean_.size()); }
  const Vector& mean() const { return mean_; }
  const Vector& cov_diag() const { return cov_diag_; }

  double log_density(const Vector& theta) const;
  Vector sample(Random& rng) const;

 private:
  Prior(PriorKind kind, Vector mean, Vector cov_diag);
  PriorKind kind_;
  Vector mean_;
  Vector cov_diag_;
  double log_norm_;
};

/// What log_posterior_fn does when the forward model throws.
enum class FailurePolicy { Propagate, NegInf };

class BayesianProblem {
 public:
  BayesianProblem(std::shared_ptr<const ForwardModel> model, Vector data, NoiseModel noise,
                  Prior prior);

  int dim() const { return model_->input_dim(); }
  const ForwardModel& model() const { return *model_; }
  std::shared_ptr<const ForwardModel> model_ptr() const { return model_; }
  const Vector& data() const { return data_; }
  const NoiseModel& noise() const { return noise_; }
  const Prior& prior() const { return prior_; }

  /// 0.5 |Sigma^{-1/2}(G(theta) - y)|^2
  double misfit(const Vector& theta) const;
  /// -misfit + log prior; -inf outside the prior support without calling G.
  double log_posterior(const Vector& theta) const;
  LogDensity log_posterior_fn(FailurePolicy policy = FailurePolicy::NegInf) const;

 private:
  std::shared_ptr<const ForwardModel> model_;
  Vector data_;
  NoiseModel noise_;
  Prior prior_;
};

/// y = G(theta*) + Sigma^{1/2} z with z drawn from `seed`.
Vector synthesize_data(const ForwardModel& model, const Vector& truth, const NoiseModel& noise,
                       std::uint64_t seed);

}  // namespace mfmh
