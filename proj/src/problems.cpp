#include "mfmh/problems.hpp"

#include "mfmh/errors.hpp"

#include <cmath>
#include <numbers>

namespace mfmh {

Vector LinearModel::eval(const Vector& theta) const {
  if (theta.size() != A_.cols()) throw DimensionError("linear model: input dimension mismatch");
  return A_ * theta;
}

Vector FunctionModel::eval(const Vector& theta) const {
  if (theta.size() != in_) throw DimensionError("model: input dimension mismatch");
  Vector y = f_(theta);
  if (y.size() != out_) throw DimensionError("model: output dimension mismatch");
  return y;
}

NoiseModel NoiseModel::diagonal(Vector variances) {
  if (variances.size() == 0) throw DimensionError("noise covariance must be non-empty");
  if (!variances.allFinite() || !(variances.array() > 0.0).all())
    throw DimensionError("noise variances must be positive and finite");
  NoiseModel n;
  n.variances_ = std::move(variances);
  return n;
}

NoiseModel NoiseModel::isotropic(int dim, double variance) {
  return diagonal(Vector::Constant(dim, variance));
}

NoiseModel NoiseModel::dense(const Matrix& covariance) {
  if (covariance.rows() == 0 || covariance.rows() != covariance.cols())
    throw DimensionError("noise covariance must be square and non-empty");
  if (!covariance.isApprox(covariance.transpose(), 1e-12))
    throw DimensionError("noise covariance must be symmetric");
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success) throw DimensionError("noise covariance is not positive definite");
  NoiseModel n;
  n.diagonal_ = false;
  n.variances_ = covariance.diagonal();
  n.chol_ = llt.matrixL();
  return n;
}

Vector NoiseModel::whiten(const Vector& v) const {
  if (v.size() != variances_.size()) throw DimensionError("noise: dimension mismatch");
  if (diagonal_) return v.array() / variances_.array().sqrt();
  return chol_.triangularView<Eigen::Lower>().solve(v);
}

Vector NoiseModel::color(const Vector& z) const {
  if (z.size() != variances_.size()) throw DimensionError("noise: dimension mismatch");
  if (diagonal_) return z.array() * variances_.array().sqrt();
  return chol_.triangularView<Eigen::Lower>() * z;
}

Prior::Prior(PriorKind kind, Vector mean, Vector cov_diag)
    : kind_(kind), mean_(std::move(mean)), cov_diag_(std::move(cov_diag)) {
  if (mean_.size() == 0 || mean_.size() != cov_diag_.size())
    throw DimensionError("prior mean and covariance must be non-empty and of equal length");
  if (!mean_.allFinite() || !cov_diag_.allFinite() || !(cov_diag_.array() > 0.0).all())
    throw DimensionError("prior variances must be positive and finite");
  log_norm_ = -0.5 * cov_diag_.array().log().sum() -
              0.5 * static_cast<double>(mean_.size()) * std::log(2.0 * std::numbers::pi);
}

Prior Prior::gaussian(Vector mean, Vector cov_diag) {
  return Prior(PriorKind::Gaussian, std::move(mean), std::move(cov_diag));
}

Prior Prior::lognormal(Vector log_mean, Vector log_cov_diag) {
  return Prior(PriorKind::LogNormal, std::move(log_mean), std::move(log_cov_diag));
}

Prior Prior::lognormal_from_moments(const Vector& mean, const Vector& variance) {
  if (mean.size() != variance.size() || !(mean.array() > 0.0).all() ||
      !(variance.array() > 0.0).all())
    throw DimensionError("log-normal moments must be positive and of equal length");
  const Vector s2 = (1.0 + variance.array() / mean.array().square()).log();
  const Vector mu = mean.array().log() - 0.5 * s2.array();
  return lognormal(mu, s2);
}

double Prior::log_density(const Vector& theta) const {
  if (theta.size() != mean_.size()) throw DimensionError("prior: dimension mismatch");
  if (kind_ == PriorKind::Gaussian)
    return -0.5 * ((theta - mean_).array().square() / cov_diag_.array()).sum() + log_norm_;
  if (!(theta.array() > 0.0).all()) return kNegInf;
  const Vector lt = theta.array().log();
  return -0.5 * ((lt - mean_).array().square() / cov_diag_.array()).sum() - lt.sum() + log_norm_;
}

Vector Prior::sample(Random& rng) const {
  Vector z = mean_ + cov_diag_.cwiseSqrt().cwiseProduct(rng.gaussian_vector(mean_.size()));
  if (kind_ == PriorKind::LogNormal) return z.array().exp();
  return z;
}

BayesianProblem::BayesianProblem(std::shared_ptr<const ForwardModel> model, Vector data,
                                 NoiseModel noise, Prior prior)
    : model_(std::move(model)), data_(std::move(data)), noise_(std::move(noise)),
      prior_(std::move(prior)) {
  if (!model_) throw DimensionError("problem requires a forward model");
  if (data_.size() != model_->output_dim() || noise_.dim() != model_->output_dim())
    throw DimensionError("data, noise and model output dimensions differ");
  if (prior_.dim() != model_->input_dim())
    throw DimensionError("prior and model input dimensions differ");
}

double BayesianProblem::misfit(const Vector& theta) const {
  if (theta.size() != dim()) throw DimensionError("misfit: dimension mismatch");
  const Vector g = model_->eval(theta);
  if (g.size() != data_.size()) throw DimensionError("model output has the wrong length");
  return 0.5 * noise_.whiten(g - data_).squaredNorm();
}

double BayesianProblem::log_posterior(const Vector& theta) const {
  const double lp = prior_.log_density(theta);
  if (lp == kNegInf) return kNegInf;
  return -misfit(theta) + lp;
}

LogDensity BayesianProblem::log_posterior_fn(FailurePolicy policy) const {
  // Captures a copy so the evaluator outlives this object.
  auto self = std::make_shared<const BayesianProblem>(*this);
  if (policy == FailurePolicy::Propagate)
    return [self](const Vector& theta) { return self->log_posterior(theta); };
  return [self](const Vector& theta) {
    try {
      return self->log_posterior(theta);
    } catch (const ModelEvaluationError&) {
      return kNegInf;
    }
  };
}

Vector synthesize_data(const ForwardModel& model, const Vector& truth, const NoiseModel& noise,
                       std::uint64_t seed) {
  Random rng(seed);
  const Vector g = model.eval(truth);
  if (g.size() != noise.dim()) throw DimensionError("noise and model output dimensions differ");
  return g + noise.color(rng.gaussian_vector(g.size()));
}

}  // namespace mfmh
