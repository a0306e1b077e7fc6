#include "mfmh/errors.hpp"
#include "mfmh/mapbuild.hpp"

#include <Eigen/Cholesky>
#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace mfmh;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

LogDensity normal_1d(double sigma) {
  return [sigma](const Vector& x) {
    return -0.5 * x[0] * x[0] / (sigma * sigma) - 0.5 * kLog2Pi - std::log(sigma);
  };
}

LogDensity gaussian(const Vector& mu, const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  Matrix L = llt.matrixL();
  const double log_norm = -L.diagonal().array().log().sum() - 0.5 * static_cast<double>(mu.size()) * kLog2Pi;
  return [=](const Vector& x) {
    return -0.5 * L.triangularView<Eigen::Lower>().solve(x - mu).squaredNorm() + log_norm;
  };
}

LogDensity banana() {
  return [](const Vector& t) {
    const double b = t[1] - t[0] * t[0];
    return -0.5 * t[0] * t[0] - 0.5 * b * b - kLog2Pi;
  };
}

/// Antithetic draws whitened so the sample mean is 0 and the sample covariance I.
Matrix whitened_samples(int d, int n, std::uint64_t seed) {
  Random rng(seed);
  Matrix s(d, n);
  for (int k = 0; k < n / 2; ++k) {
    Vector z = rng.gaussian_vector(d);
    s.col(2 * k) = z;
    s.col(2 * k + 1) = -z;
  }
  Matrix C = s * s.transpose() / n;
  Matrix L = Eigen::LLT<Matrix>(C).matrixL();
  return L.triangularView<Eigen::Lower>().solve(s);
}

double mean_ref_log(const ReferenceDensity& ref, const Matrix& s) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < s.cols(); ++k) acc += ref.log_density(s.col(k));
  return acc / static_cast<double>(s.cols());
}

}  // namespace

TEST_CASE("reference density") {
  ReferenceDensity ref(Vector{{1.0, -2.0}}, Vector{{0.5, 2.0}});
  Vector x{{0.3, 0.4}};
  double expect = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double z = (x[i] - ref.mean()[i]) / ref.stddev()[i];
    expect += -0.5 * z * z - std::log(ref.stddev()[i]) - 0.5 * kLog2Pi;
  }
  CHECK(ref.log_density(x) == doctest::Approx(expect).epsilon(1e-14));
  CHECK_THROWS_AS(ReferenceDensity(Vector::Zero(2), Vector{{1.0, 0.0}}), DimensionError);

  Random rng(4);
  Matrix s = ref.sample(rng, 40000);
  Vector mean = s.rowwise().mean();
  for (int i = 0; i < 2; ++i) CHECK(std::abs(mean[i] - ref.mean()[i]) < 4.0 * ref.stddev()[i] / 200.0);
}

TEST_CASE("objective special cases") {
  ReferenceDensity ref = ReferenceDensity::standard(2);
  Random rng(1);
  Matrix s = ref.sample(rng, 300);
  auto id = identity_map(2, 1, 1);
  auto lt = [&](const Vector& x) { return ref.log_density(x); };
  CHECK(kl_objective(id, lt, s) == doctest::Approx(-mean_ref_log(ref, s)).epsilon(1e-13));

  Matrix s1 = ReferenceDensity::standard(1).sample(rng, 500);
  for (double sigma : {0.5, 1.0, 3.0}) {
    std::vector<MapComponentd> c{MapComponentd(1, 1, 0, 0, Vector::Zero(1), Vector::Constant(1, std::sqrt(sigma)))};
    TriangularMapd scale(c);
    const double expect = 0.5 * s1.squaredNorm() / 500.0 + 0.5 * kLog2Pi;
    CHECK(kl_objective(scale, normal_1d(sigma), s1) == doctest::Approx(expect).epsilon(1e-12));
  }

  std::vector<MapComponentd> zero{MapComponentd(1, 1, 0, 0, Vector::Zero(1), Vector::Zero(1))};
  CHECK(kl_objective(TriangularMapd(zero), normal_1d(1.0), s1) == kPosInf);
  CHECK_THROWS(kl_objective(identity_map(1, 1, 1), normal_1d(1.0), Matrix(1, 0)));
}

TEST_CASE("gradient vanishes at the exact map on whitened samples") {
  Vector mu{{1.0, -1.0}};
  Matrix cov{{1.0, 0.5}, {0.5, 1.0}};
  Matrix L = Eigen::LLT<Matrix>(cov).matrixL();
  auto exact = TriangularMapd::lower_affine(mu, L);
  Matrix s = whitened_samples(2, 10000, 3);
  Vector g = objective_gradient(exact, gaussian(mu, cov), s, 1e-6);
  CHECK(g.norm() < 1e-4);
}

TEST_CASE("constant-term gradient is zero by symmetry") {
  Matrix s = whitened_samples(2, 2000, 5);
  auto id = identity_map(2, 1, 1);
  ReferenceDensity ref = ReferenceDensity::standard(2);
  Vector g = objective_gradient(id, [&](const Vector& x) { return ref.log_density(x); }, s, 1e-6);
  // Packed as [L_1, R_1, L_2, R_2]; the constant L terms sit at 0 and 3.
  CHECK(std::abs(g[0]) < 1e-8);
  CHECK(std::abs(g[3]) < 1e-8);
}

TEST_CASE("gradient matches a five-point stencil") {
  Random rng(8);
  Matrix s = ReferenceDensity::standard(1).sample(rng, 400);
  auto lt = normal_1d(1.7);
  const double beta0 = 0.8;
  auto obj = [&](double b) {
    std::vector<MapComponentd> c{MapComponentd(1, 1, 0, 0, Vector::Constant(1, 0.3), Vector::Constant(1, b))};
    return kl_objective(TriangularMapd(c), lt, s);
  };
  std::vector<MapComponentd> c{MapComponentd(1, 1, 0, 0, Vector::Constant(1, 0.3), Vector::Constant(1, beta0))};
  Vector g = objective_gradient(TriangularMapd(c), lt, s, 1e-6);
  const double h = 1e-3;
  const double slope = (obj(beta0 - 2 * h) - 8 * obj(beta0 - h) + 8 * obj(beta0 + h) - obj(beta0 + 2 * h)) / (12 * h);
  CHECK(g[1] == doctest::Approx(slope).epsilon(1e-3));
}

TEST_CASE("building against the reference keeps the identity") {
  // The identity is stationary for the exact objective; the sample-average
  // optimum drifts by O(1/sqrt(n)), so the training set has to be large.
  ReferenceDensity ref = ReferenceDensity::standard(2);
  BuildConfig cfg;
  cfg.n_samples = 10000;
  cfg.stages = {{1, 0}};
  cfg.tolerance = 1e-6;
  cfg.seed = 2;
  auto res = build_map([&](const Vector& x) { return ref.log_density(x); }, ref, cfg);
  double worst = 0.0;
  for (double a = -3.0; a <= 3.0; a += 0.25)
    for (double b = -3.0; b <= 3.0; b += 0.25) {
      Vector r{{a, b}};
      worst = std::max(worst, (res.map.eval(r) - r).lpNorm<Eigen::Infinity>());
    }
  CHECK(worst < 0.05);
}

TEST_CASE("linear stage recovers a correlated Gaussian") {
  Vector mu{{1.0, -1.0}};
  Matrix cov{{1.0, 0.5}, {0.5, 1.0}};
  BuildConfig cfg;
  cfg.n_samples = 1000;
  cfg.stages = {{1, 1}};
  cfg.tolerance = 1e-6;
  cfg.seed = 3;
  auto res = build_map(gaussian(mu, cov), ReferenceDensity::standard(2), cfg);
  Matrix p = pushforward_samples(res.map, ReferenceDensity::standard(2), 100000, 99);
  Vector m = p.rowwise().mean();
  Matrix c = (p.colwise() - m) * (p.colwise() - m).transpose() / (p.cols() - 1.0);
  CHECK((m - mu).lpNorm<Eigen::Infinity>() < 0.05);
  CHECK((c - cov).norm() < 0.1);

  const auto& h = res.report.stages[0].objective_history;
  for (std::size_t k = 1; k < h.size(); ++k) CHECK(h[k] <= h[k - 1]);
  CHECK(res.report.stages[0].final_objective <= res.report.stages[0].initial_objective);

  Random rng(123);
  Matrix test = ReferenceDensity::standard(2).sample(rng, 5000);
  const double kl = kl_objective(res.map, gaussian(mu, cov), test) +
                    mean_ref_log(ReferenceDensity::standard(2), test);
  CHECK(kl >= -0.05);
  CHECK(kl < 0.05);
}

TEST_CASE("two stages on the banana") {
  BuildConfig cfg;
  cfg.n_samples = 500;
  cfg.stages = {{1, 1}, {2, 2}};
  cfg.tolerance = 1e-4;
  cfg.seed = 4;
  ReferenceDensity ref = ReferenceDensity::standard(2);
  auto res = build_map(banana(), ref, cfg);
  CHECK(res.map.stages().size() == 2);
  Random rng(77);
  Matrix test = ref.sample(rng, 10000);
  const double base = mean_ref_log(ref, test);
  const double kl_id = kl_objective(identity_map(2, 1, 1), banana(), test) + base;
  const double kl_map = kl_objective(res.map, banana(), test) + base;
  CHECK(kl_map <= 0.5 * kl_id);

  Matrix p = pushforward_samples(res.map, ref, 20000, 5);
  Eigen::ArrayXd t1sq = p.row(0).array().square();
  Eigen::ArrayXd t2 = p.row(1).array();
  const double cov = ((t1sq - t1sq.mean()) * (t2 - t2.mean())).mean();
  const double corr = cov / std::sqrt((t1sq - t1sq.mean()).square().mean() * (t2 - t2.mean()).square().mean());
  CHECK(corr > 0.5);
}

TEST_CASE("fixed seed gives identical coefficients") {
  BuildConfig cfg;
  cfg.n_samples = 200;
  cfg.stages = {{1, 1}, {1, 2}};
  cfg.seed = 10;
  auto a = build_map(banana(), ReferenceDensity::standard(2), cfg);
  auto b = build_map(banana(), ReferenceDensity::standard(2), cfg);
  for (std::size_t s = 0; s < 2; ++s)
    CHECK(a.map.stages()[s].coefficients() == b.map.stages()[s].coefficients());
}

TEST_CASE("constant offsets in the target") {
  BuildConfig cfg;
  cfg.n_samples = 300;
  cfg.stages = {{1, 1}};
  cfg.seed = 12;
  cfg.tolerance = 1e-6;
  auto lt = banana();
  auto shifted = [&](const Vector& x) { return lt(x) + 7.0; };
  Random rng(1);
  Matrix s = ReferenceDensity::standard(2).sample(rng, 300);
  auto id = identity_map(2, 1, 1);
  CHECK(kl_objective(id, lt, s) - kl_objective(id, shifted, s) == doctest::Approx(7.0).epsilon(1e-12));
  auto a = build_map(lt, ReferenceDensity::standard(2), cfg);
  auto b = build_map(shifted, ReferenceDensity::standard(2), cfg);
  Vector ca = a.map.stages()[0].coefficients();
  Vector cb = b.map.stages()[0].coefficients();
  CHECK((ca - cb).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("infeasible start and configuration errors") {
  auto half = [](const Vector& x) { return x[0] > 0 ? -0.5 * x.squaredNorm() : kNegInf; };
  BuildConfig cfg;
  cfg.n_samples = 50;
  CHECK_THROWS_AS(build_map(half, ReferenceDensity::standard(2), cfg), InfeasibleStartError);

  BuildConfig bad;
  bad.n_samples = 0;
  try {
    bad.validate();
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "n_samples");
  }
  bad = BuildConfig{};
  bad.stages.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
