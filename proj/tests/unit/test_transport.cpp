#include "mfmh/errors.hpp"
#include "mfmh/map_io.hpp"
#include "mfmh/transport.hpp"
#include "test_helpers.hpp"

#include <Eigen/LU>
#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace mfmh;
using testing_support::fd_jacobian;
using testing_support::random_map;

namespace {

TriangularMapd constant_map(int d, double a, double c, int q = kDefaultQuadratureOrder) {
  std::vector<MapComponentd> comps;
  for (int i = 1; i <= d; ++i) {
    Vector cL = Vector::Zero(1);
    cL[0] = a;
    Vector cR = Vector::Constant(1, c);
    comps.emplace_back(d, i, 0, 0, cL, cR, q);
  }
  return TriangularMapd(std::move(comps));
}

}  // namespace

TEST_CASE("identity map") {
  auto id = identity_map(2, 1, 2);
  Vector r{{0.3, -1.2}};
  CHECK(eval_map(id, r) == r);
  CHECK(log_det_jacobian(id, r) == 0.0);
  Vector th{{0.7, -2.0}};
  CHECK(invert_map(id, th) == th);
}

TEST_CASE("constant components") {
  auto m = constant_map(1, 1.0, 2.0);
  Vector r = Vector::Constant(1, 0.5);
  CHECK(eval_map(m, r)[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(invert_map(m, Vector::Constant(1, 3.0))[0] == doctest::Approx(0.5).epsilon(1e-14));

  auto s = constant_map(2, 0.0, 1.7);
  Vector x{{0.4, -0.9}};
  CHECK(log_det_jacobian(s, x) == doctest::Approx(4.0 * std::log(1.7)).epsilon(1e-14));

  // Negative coordinates integrate with the right sign.
  Vector neg = Vector::Constant(1, -0.5);
  CHECK(eval_map(m, neg)[0] == doctest::Approx(1.0 - 2.0).epsilon(1e-15));
}

TEST_CASE("integrated square of a linear root") {
  for (int q : {2, 3, 16, 64}) {
    MapComponentd c(1, 1, 0, 1, Vector::Zero(1), Vector{{1.0, 1.0}}, q);
    TriangularMapd m({c});
    CHECK(eval_map(m, Vector::Constant(1, 1.0))[0] == doctest::Approx(7.0 / 3.0).epsilon(1e-14));
  }
  MapComponentd c1(1, 1, 0, 1, Vector::Zero(1), Vector{{1.0, 1.0}}, 1);
  CHECK(std::abs(TriangularMapd({c1}).eval(Vector::Constant(1, 1.0))[0] - 7.0 / 3.0) > 1e-3);
}

TEST_CASE("quadrature exactness once q exceeds the root degree") {
  for (int p = 0; p <= 4; ++p) {
    auto ref = random_map(2, 2, p, 100 + p, 0.3, 64);
    auto low = random_map(2, 2, p, 100 + p, 0.3, p + 1);
    Random rng(9);
    for (int k = 0; k < 20; ++k) {
      Vector r = 1.5 * rng.gaussian_vector(2);
      Vector a = ref.eval(r), b = low.eval(r);
      for (int i = 0; i < 2; ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-13));
    }
  }
}

TEST_CASE("log-determinant matches finite differences") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto m = random_map(3, 2, 2, 7 + s);
    Random rng(s);
    for (int k = 0; k < 20; ++k) {
      Vector r = rng.gaussian_vector(3);
      Matrix J = fd_jacobian([&](const Vector& x) { return Vector(m.eval(x)); }, r);
      double ref = 0.0;
      for (int i = 0; i < 3; ++i) ref += std::log(std::abs(J(i, i)));
      CHECK(m.log_det_jacobian(r) == doctest::Approx(ref).epsilon(1e-5));
    }
  }
}

TEST_CASE("degenerate root gives -inf and refuses inversion") {
  auto m = constant_map(2, 0.5, 0.0);
  Vector r{{0.1, 0.2}};
  CHECK(log_det_jacobian(m, r) == kNegInf);
  CHECK(pullback_logdensity(m, [](const Vector&) { return 0.0; }, r) == kNegInf);
  CHECK_THROWS_AS(invert_map(m, Vector{{1.0, 1.0}}), DegenerateMapError);
}

TEST_CASE("inversion roundtrip") {
  auto m = random_map(3, 2, 2, 42);
  Random rng(1);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    Vector r = rng.gaussian_vector(3);
    Vector back = invert_map(m, m.eval(r));
    worst = std::max(worst, (back - r).lpNorm<Eigen::Infinity>());
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("invalid input") {
  auto id = identity_map(2, 1, 1);
  CHECK_THROWS_AS(id.eval(Vector::Zero(3)), DimensionError);
  CHECK_THROWS_AS(id.eval(Vector{{0.0, std::nan("")}}), NonFiniteError);
  CHECK_THROWS_AS(MapComponentd(2, 1, 1, 1, Vector::Zero(3), Vector::Ones(2)), DimensionError);
}

TEST_CASE("monotone and triangular") {
  auto m = random_map(3, 2, 3, 5, 0.5);
  Random rng(3);
  for (int k = 0; k < 20; ++k) {
    Vector r = rng.gaussian_vector(3);
    for (int i = 0; i < 3; ++i) {
      double prev = -kPosInf;
      for (double t = -4.0; t <= 4.0; t += 0.05) {
        Vector x = r;
        x[i] = t;
        const double v = m.eval(x)[i];
        CHECK(v >= prev);
        prev = v;
      }
      Vector y = r;
      for (int j = i + 1; j < 3; ++j) y[j] += 1.3;
      CHECK(m.eval(y)[i] == m.eval(r)[i]);
    }
  }
}

TEST_CASE("pullback density") {
  auto id = identity_map(2, 1, 1);
  auto lt = [](const Vector& x) { return -0.5 * x.squaredNorm() + 0.25 * x[0]; };
  Vector r{{0.2, -0.4}};
  CHECK(pullback_logdensity(id, lt, r) == lt(r));

  const double sigma = 1.7;
  auto scale = constant_map(1, 0.0, std::sqrt(sigma));
  auto normal = [](const Vector& x) { return -0.5 * x.squaredNorm() - 0.5 * std::log(2 * std::numbers::pi); };
  for (double t : {-1.0, 0.0, 0.3, 2.0}) {
    const double ref = -0.5 * (sigma * t) * (sigma * t) - 0.5 * std::log(2 * std::numbers::pi) + std::log(sigma);
    CHECK(pullback_logdensity(scale, normal, Vector::Constant(1, t)) == doctest::Approx(ref).epsilon(1e-13));
  }
  // The pullback of a normalized density is normalized.
  double total = 0.0;
  const double dx = 1e-3;
  for (double t = -10.0; t <= 10.0; t += dx) total += std::exp(pullback_logdensity(scale, normal, Vector::Constant(1, t))) * dx;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("deep maps") {
  auto A = random_map(2, 2, 2, 11);
  auto B = random_map(2, 1, 2, 12);
  auto C = random_map(2, 2, 1, 13);
  DeepMapd AB = compose(std::vector<TriangularMapd>{A, B});
  DeepMapd idA = compose(std::vector<TriangularMapd>{identity_map(2, 1, 1), A});
  DeepMapd ABC = compose(std::vector<TriangularMapd>{A, B, C});
  DeepMapd nested = compose(std::vector<DeepMapd>{AB, DeepMapd(C)});
  Random rng(17);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    Vector r = rng.gaussian_vector(2);
    CHECK((idA.eval(r) - A.eval(r)).lpNorm<Eigen::Infinity>() < 1e-14);
    CHECK(idA.log_det_jacobian(r) == doctest::Approx(A.log_det_jacobian(r)).epsilon(1e-14));
    CHECK(AB.eval(r) == B.eval(A.eval(r)));
    CHECK(ABC.eval(r) == nested.eval(r));

    const double ld = AB.log_det_jacobian(r);
    CHECK(ld == doctest::Approx(A.log_det_jacobian(r) + B.log_det_jacobian(A.eval(r))).epsilon(1e-13));
    Matrix J = fd_jacobian([&](const Vector& x) { return Vector(AB.eval(x)); }, r);
    CHECK(ld == doctest::Approx(std::log(std::abs(J.determinant()))).epsilon(1e-5));

    auto lt = [](const Vector& x) { return -0.5 * x.squaredNorm(); };
    CHECK(pullback_logdensity(AB, lt, r) == doctest::Approx(lt(AB.eval(r)) + ld).epsilon(1e-14));
    worst = std::max(worst, (AB.invert(AB.eval(r)) - r).lpNorm<Eigen::Infinity>());
  }
  CHECK(worst < 1e-8);
  CHECK_THROWS_AS(compose(std::vector<TriangularMapd>{A, identity_map(3, 1, 1)}), DimensionError);
}

TEST_CASE("lower affine map reproduces an affine transform") {
  Matrix L{{2.0, 0.0}, {0.5, 0.8}};
  Vector b{{1.0, -1.0}};
  auto m = TriangularMapd::lower_affine(b, L);
  Vector r{{0.3, -0.7}};
  Vector ref = b + L * r;
  CHECK((m.eval(r) - ref).lpNorm<Eigen::Infinity>() < 1e-14);
  CHECK(m.log_det_jacobian(r) == doctest::Approx(std::log(2.0 * 0.8)).epsilon(1e-14));
}

TEST_CASE("map files roundtrip exactly") {
  DeepMapd m = compose(std::vector<TriangularMapd>{random_map(3, 1, 1, 1), random_map(3, 2, 2, 2)});
  auto back = map_from_json(nlohmann::json::parse(map_to_json(m)));
  REQUIRE(back.stages().size() == 2);
  for (std::size_t s = 0; s < 2; ++s)
    CHECK(back.stages()[s].coefficients() == m.stages()[s].coefficients());
  Vector r{{0.1, 0.2, -0.3}};
  CHECK(back.eval(r) == m.eval(r));
  CHECK_THROWS_AS(map_from_json(nlohmann::json::parse("{\"d\": 2}")), IoError);
}

TEST_CASE("scalar-generic evaluation") {
  TriangularMap<float> mf = TriangularMap<float>::identity(2, 1, 1);
  Eigen::VectorXf r(2);
  r << 0.25f, -0.5f;
  CHECK(mf.eval(r) == r);
  TriangularMap<long double> ml = TriangularMap<long double>::identity(2, 1, 2);
  Eigen::Matrix<long double, Eigen::Dynamic, 1> x(2);
  x << 0.25L, -0.5L;
  CHECK(ml.invert(ml.eval(x)) == x);
}
