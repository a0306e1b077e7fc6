#pragma once

#include "mfmh/errors.hpp"

#include <Eigen/Core>

#include <cmath>
#include <numbers>

namespace mfmh {

/// Gauss-Legendre rule on [-1, 1]; exact for polynomials of degree 2*order-1.
template <typename Scalar>
struct GaussLegendre {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> nodes;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights;

  explicit GaussLegendre(int order) : nodes(order), weights(order) {
    using std::abs;
    using std::cos;
    if (order < 1) throw DimensionError("quadrature order must be positive");
    const Scalar eps = std::numeric_limits<Scalar>::epsilon();
    const int half = (order + 1) / 2;
    for (int i = 0; i < half; ++i) {
      Scalar x = cos(Scalar(std::numbers::pi) * (Scalar(i) + Scalar(0.75)) /
                     (Scalar(order) + Scalar(0.5)));
      Scalar dp(0);
      for (int it = 0; it < 100; ++it) {
        Scalar p0(1), p1(0);
        for (int k = 1; k <= order; ++k) {
          const Scalar p2 = p1;
          p1 = p0;
          p0 = ((Scalar(2 * k - 1)) * x * p1 - Scalar(k - 1) * p2) / Scalar(k);
        }
        dp = Scalar(order) * (x * p0 - p1) / (x * x - Scalar(1));
        const Scalar dx = p0 / dp;
        x -= dx;
        if (abs(dx) <= Scalar(4) * eps) break;
      }
      // Recompute the derivative at the converged node for the weight.
      Scalar p0(1), p1(0);
      for (int k = 1; k <= order; ++k) {
        const Scalar p2 = p1;
        p1 = p0;
        p0 = ((Scalar(2 * k - 1)) * x * p1 - Scalar(k - 1) * p2) / Scalar(k);
      }
      dp = Scalar(order) * (x * p0 - p1) / (x * x - Scalar(1));
      const Scalar w = Scalar(2) / ((Scalar(1) - x * x) * dp * dp);
      nodes[i] = -x;
      nodes[order - 1 - i] = x;
      weights[i] = w;
      weights[order - 1 - i] = w;
    }
    if (order % 2 == 1) nodes[order / 2] = Scalar(0);
    // Absorb the rounding residual into the last weight so that constants
    // integrate exactly in summation order (2 - partial is exact since the
    // partial sum lies in [1, 2]); the identity map is then reproduced
    // bit-for-bit.
    if (order > 1) {
      Scalar partial(0);
      for (int k = 0; k + 1 < order; ++k) partial += weights[k];
      weights[order - 1] = Scalar(2) - partial;
    }
  }

  int order() const { return static_cast<int>(nodes.size()); }

  /// Integral of f over [0, b]; b < 0 gives the signed integral.
  template <typename F>
  Scalar integrate_from_zero(Scalar b, F&& f) const {
    const Scalar half = b / Scalar(2);
    Scalar sum(0);
    for (Eigen::Index k = 0; k < nodes.size(); ++k)
      sum += weights[k] * f(half * (nodes[k] + Scalar(1)));
    return half * sum;
  }
};

}  // namespace mfmh
