#include "mfmh/errors.hpp"
#include "mfmh/problems.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <numbers>

using namespace mfmh;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Matrix small_operator() { return Matrix{{1.0, 0.5}, {-0.3, 2.0}, {0.7, 0.1}}; }

}  // namespace

TEST_CASE("misfit against a direct computation") {
  Matrix A = small_operator();
  Vector y{{0.4, -1.0, 2.0}};
  Vector var{{0.1, 0.2, 0.5}};
  BayesianProblem p(std::make_shared<LinearModel>(A), y, NoiseModel::diagonal(var),
                    Prior::gaussian(Vector::Zero(2), Vector::Ones(2)));
  Vector th{{0.3, 0.8}};
  Vector r = A * th - y;
  double expect = 0.0;
  for (int i = 0; i < 3; ++i) expect += 0.5 * r[i] * r[i] / var[i];
  CHECK(p.misfit(th) == doctest::Approx(expect).epsilon(1e-14));

  Matrix S{{0.5, 0.1, 0.0}, {0.1, 0.4, 0.05}, {0.0, 0.05, 0.3}};
  BayesianProblem q(std::make_shared<LinearModel>(A), y, NoiseModel::dense(S),
                    Prior::gaussian(Vector::Zero(2), Vector::Ones(2)));
  CHECK(q.misfit(th) == doctest::Approx(0.5 * r.dot(S.inverse() * r)).epsilon(1e-12));

  auto n = NoiseModel::dense(S);
  Vector z{{0.3, -0.2, 1.1}};
  CHECK((n.whiten(n.color(z)) - z).norm() < 1e-14);
  CHECK_THROWS_AS(NoiseModel::dense(Matrix{{1.0, 2.0}, {2.0, 1.0}}), DimensionError);
  CHECK_THROWS_AS(NoiseModel::diagonal(Vector{{1.0, 0.0}}), DimensionError);
}

TEST_CASE("linear-Gaussian posterior matches the conjugate density") {
  Matrix A = small_operator();
  Vector y{{0.4, -1.0, 2.0}};
  Vector var{{0.1, 0.2, 0.5}};
  Vector m0{{0.2, -0.1}};
  Vector c0{{1.5, 0.7}};
  BayesianProblem p(std::make_shared<LinearModel>(A), y, NoiseModel::diagonal(var),
                    Prior::gaussian(m0, c0));
  Matrix Si = var.cwiseInverse().asDiagonal();
  Matrix P = A.transpose() * Si * A + Matrix(c0.cwiseInverse().asDiagonal());
  Vector mpost = P.ldlt().solve(A.transpose() * Si * y + c0.cwiseInverse().cwiseProduct(m0));
  auto conj = [&](const Vector& t) { return -0.5 * (t - mpost).dot(P * (t - mpost)); };

  Random rng(3);
  const double offset = p.log_posterior(mpost) - conj(mpost);
  for (int k = 0; k < 20; ++k) {
    Vector t = 2.0 * rng.gaussian_vector(2);
    CHECK(p.log_posterior(t) - conj(t) == doctest::Approx(offset).epsilon(1e-10));
  }
}

TEST_CASE("gaussian prior density") {
  Prior g = Prior::gaussian(Vector{{1.0, -1.0}}, Vector{{4.0, 0.25}});
  Vector t{{0.0, 0.0}};
  const double expect = -0.5 * (1.0 / 4.0 + 1.0 / 0.25) - 0.5 * std::log(4.0 * 0.25) - kLog2Pi;
  CHECK(g.log_density(t) == doctest::Approx(expect).epsilon(1e-14));
  CHECK_THROWS_AS(Prior::gaussian(Vector{{1.0}}, Vector{{-1.0}}), DimensionError);
  CHECK_THROWS_AS(g.log_density(Vector::Zero(3)), DimensionError);
}

TEST_CASE("log-normal prior") {
  Vector mu{{0.2, -0.4}};
  Vector s2{{0.05, 0.3}};
  Prior p = Prior::lognormal(mu, s2);
  Vector t{{1.3, 0.6}};
  double expect = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double z = std::log(t[i]) - mu[i];
    expect += -0.5 * z * z / s2[i] - 0.5 * std::log(2.0 * std::numbers::pi * s2[i]) - std::log(t[i]);
  }
  CHECK(p.log_density(t) == doctest::Approx(expect).epsilon(1e-13));
  CHECK(p.log_density(Vector{{0.0, 1.0}}) == kNegInf);
  CHECK(p.log_density(Vector{{1.0, -2.0}}) == kNegInf);

  // Normalization in one dimension by midpoint quadrature on log-spaced cells.
  Prior one = Prior::lognormal(Vector::Constant(1, 0.1), Vector::Constant(1, 0.2));
  double mass = 0.0;
  const double a = std::log(1e-4), b = std::log(1e3);
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const double u = a + (b - a) * (k + 0.5) / n;
    mass += std::exp(one.log_density(Vector::Constant(1, std::exp(u))) + u) * (b - a) / n;
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));

  Prior m = Prior::lognormal_from_moments(Vector{{2.0, 1.0}}, Vector{{0.5, 0.1}});
  Random rng(5);
  Vector sum = Vector::Zero(2), sq = Vector::Zero(2);
  const int draws = 200000;
  for (int k = 0; k < draws; ++k) {
    Vector s = m.sample(rng);
    CHECK((s.array() > 0.0).all());
    sum += s;
    sq += s.cwiseProduct(s);
  }
  Vector mean = sum / draws;
  Vector var = sq / draws - mean.cwiseProduct(mean);
  CHECK(mean[0] == doctest::Approx(2.0).epsilon(0.01));
  CHECK(mean[1] == doctest::Approx(1.0).epsilon(0.01));
  CHECK(var[0] == doctest::Approx(0.5).epsilon(0.05));
  CHECK(var[1] == doctest::Approx(0.1).epsilon(0.05));
}

TEST_CASE("prior support is checked before the model runs") {
  auto calls = std::make_shared<std::atomic<int>>(0);
  auto model = std::make_shared<FunctionModel>(
      [calls](const Vector& t) {
        ++*calls;
        return Vector(t.array().square());
      },
      2, 2);
  BayesianProblem p(model, Vector::Ones(2), NoiseModel::isotropic(2, 0.1),
                    Prior::lognormal(Vector::Zero(2), Vector::Ones(2)));
  CHECK(p.log_posterior(Vector{{-1.0, 1.0}}) == kNegInf);
  CHECK(*calls == 0);
  CHECK(std::isfinite(p.log_posterior(Vector{{1.0, 1.0}})));
  CHECK(*calls == 1);
}

TEST_CASE("failure policy") {
  auto model = std::make_shared<FunctionModel>(
      [](const Vector& t) -> Vector {
        if (t[0] > 1.0) throw ModelEvaluationError("blew up");
        return t;
      },
      1, 1);
  BayesianProblem p(model, Vector::Zero(1), NoiseModel::isotropic(1, 1.0),
                    Prior::gaussian(Vector::Zero(1), Vector::Ones(1)));
  auto safe = p.log_posterior_fn();
  auto raw = p.log_posterior_fn(FailurePolicy::Propagate);
  CHECK(safe(Vector::Constant(1, 2.0)) == kNegInf);
  CHECK_THROWS_AS(raw(Vector::Constant(1, 2.0)), ModelEvaluationError);
  CHECK(safe(Vector::Constant(1, 0.5)) == raw(Vector::Constant(1, 0.5)));
}

TEST_CASE("synthetic data") {
  Matrix A = small_operator();
  LinearModel model(A);
  Vector truth{{0.5, 1.0}};
  auto noise = NoiseModel::diagonal(Vector{{0.01, 0.04, 0.09}});
  CHECK(synthesize_data(model, truth, noise, 7) == synthesize_data(model, truth, noise, 7));
  CHECK(synthesize_data(model, truth, noise, 7) != synthesize_data(model, truth, noise, 8));

  Vector sum = Vector::Zero(3), sq = Vector::Zero(3);
  const int n = 20000;
  for (int s = 0; s < n; ++s) {
    Vector z = noise.whiten(synthesize_data(model, truth, noise, static_cast<std::uint64_t>(s)) - A * truth);
    sum += z;
    sq += z.cwiseProduct(z);
  }
  CHECK((sum / n).cwiseAbs().maxCoeff() < 0.04);
  CHECK(((sq / n).array() - 1.0).abs().maxCoeff() < 0.05);
}

TEST_CASE("dimension checks") {
  auto model = std::make_shared<LinearModel>(small_operator());
  CHECK_THROWS_AS(BayesianProblem(model, Vector::Zero(2), NoiseModel::isotropic(3, 1.0),
                                  Prior::gaussian(Vector::Zero(2), Vector::Ones(2))),
                  DimensionError);
  CHECK_THROWS_AS(BayesianProblem(model, Vector::Zero(3), NoiseModel::isotropic(3, 1.0),
                                  Prior::gaussian(Vector::Zero(3), Vector::Ones(3))),
                  DimensionError);
  CHECK_THROWS_AS(model->eval(Vector::Zero(5)), DimensionError);
}
