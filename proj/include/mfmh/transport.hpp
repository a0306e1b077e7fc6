#pragma once

// Monotone lower-triangular transport maps.
//
// Component i of a map T is
//
//   T_i(r_1..r_i) = L_i(r_1..r_{i-1}) + \int_0^{r_i} R_i(r_1..r_{i-1}, t)^2 dt
//
// with L_i and R_i expanded in total-degree monomials. The squared integrand
// makes every T_i non-decreasing in its last argument, so the Jacobian is
// lower triangular with diagonal entries R_i(r_1..r_i)^2 >= 0.

#include "mfmh/errors.hpp"
#include "mfmh/polybasis.hpp"
#include "mfmh/quadrature.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace mfmh {

inline constexpr int kDefaultQuadratureOrder = 16;

template <typename Scalar>
struct InversionOptions {
  Scalar tolerance = Scalar(1e-12);
  int max_iterations = 200;
  /// Derivatives below this count as flat for the Newton step.
  Scalar min_slope = Scalar(1e-14);
};

template <typename Scalar>
class MapComponent {
 public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  /// Restriction of the component to a fixed prefix (r_1..r_{i-1}):
  /// T_i(prefix, s) = offset + \int_0^s poly(t)^2 dt, poly in the monomial basis.
  struct Section {
    Scalar offset;
    Vec poly;
  };

  MapComponent(int dim, int index, int degree_L, int degree_R, Vec coeffs_L, Vec coeffs_R,
               int quadrature_order = kDefaultQuadratureOrder)
      : dim_(dim),
        index_(index),
        set_L_(dim, index - 1, degree_L),
        set_R_(dim, index, degree_R),
        coeffs_L_(std::move(coeffs_L)),
        coeffs_R_(std::move(coeffs_R)),
        rule_(quadrature_order) {
    if (index < 1 || index > dim)
      throw DimensionError("component index " + std::to_string(index) + " outside 1.." +
                           std::to_string(dim));
    if (coeffs_L_.size() != static_cast<Eigen::Index>(set_L_.size()) ||
        coeffs_R_.size() != static_cast<Eigen::Index>(set_R_.size()))
      throw DimensionError("component " + std::to_string(index) +
                           ": coefficient lengths do not match index sets (" +
                           std::to_string(set_L_.size()) + ", " + std::to_string(set_R_.size()) +
                           ")");
  }

  int dim() const noexcept { return dim_; }
  int index() const noexcept { return index_; }
  int degree_L() const noexcept { return set_L_.max_degree(); }
  int degree_R() const noexcept { return set_R_.max_degree(); }
  int quadrature_order() const noexcept { return rule_.order(); }
  const MultiIndexSet& set_L() const noexcept { return set_L_; }
  const MultiIndexSet& set_R() const noexcept { return set_R_; }
  const Vec& coeffs_L() const noexcept { return coeffs_L_; }
  const Vec& coeffs_R() const noexcept { return coeffs_R_; }

  Eigen::Index num_coefficients() const noexcept { return coeffs_L_.size() + coeffs_R_.size(); }

  MapComponent with_coefficients(Vec coeffs_L, Vec coeffs_R) const {
    MapComponent out(*this);
    if (coeffs_L.size() != coeffs_L_.size() || coeffs_R.size() != coeffs_R_.size())
      throw DimensionError("with_coefficients: length mismatch");
    out.coeffs_L_ = std::move(coeffs_L);
    out.coeffs_R_ = std::move(coeffs_R);
    return out;
  }

  /// `r` must hold at least index()-1 leading coordinates.
  Section section(const Scalar* r) const {
    const int prefix = index_ - 1;
    const int deg = std::max(degree_L(), degree_R());
    // powers[k * (deg + 1) + e] = r_k^e
    std::vector<Scalar> powers(static_cast<std::size_t>(prefix * (deg + 1)));
    for (int k = 0; k < prefix; ++k) {
      Scalar* row = powers.data() + k * (deg + 1);
      row[0] = Scalar(1);
      for (int e = 1; e <= deg; ++e) row[e] = row[e - 1] * r[k];
    }
    auto prefix_monomial = [&](const MultiIndex& j) {
      Scalar v(1);
      for (int k = 0; k < prefix; ++k)
        if (j[k] != 0) v *= powers[static_cast<std::size_t>(k * (deg + 1) + j[k])];
      return v;
    };

    Section sec{Scalar(0), Vec::Zero(degree_R() + 1)};
    for (std::size_t m = 0; m < set_L_.size(); ++m)
      sec.offset += coeffs_L_[static_cast<Eigen::Index>(m)] * prefix_monomial(set_L_[m]);
    for (std::size_t m = 0; m < set_R_.size(); ++m) {
      const MultiIndex& j = set_R_[m];
      sec.poly[j[prefix]] += coeffs_R_[static_cast<Eigen::Index>(m)] * prefix_monomial(j);
    }
    return sec;
  }

  static Scalar root_value(const Section& sec, Scalar t) {
    Scalar acc(0);
    for (Eigen::Index p = sec.poly.size() - 1; p >= 0; --p) acc = acc * t + sec.poly[p];
    return acc;
  }

  Scalar value(const Section& sec, Scalar s) const {
    const Scalar integral = rule_.integrate_from_zero(s, [&](Scalar t) {
      const Scalar v = root_value(sec, t);
      return v * v;
    });
    return sec.offset + integral;
  }

  Scalar evaluate(const Scalar* r) const { return value(section(r), r[index_ - 1]); }

  /// R_i(r_1..r_i); the Jacobian diagonal entry is its square.
  Scalar diagonal_root(const Scalar* r) const { return root_value(section(r), r[index_ - 1]); }

  /// Solves T_i(prefix, s) = target for s by safeguarded Newton inside a
  /// doubling bracket.
  Scalar solve(const Section& sec, Scalar target, const InversionOptions<Scalar>& opt) const {
    using std::abs;
    auto f = [&](Scalar s) { return value(sec, s) - target; };
    Scalar lo(-1), hi(1);
    Scalar flo = f(lo), fhi = f(hi);
    const Scalar limit = std::ldexp(Scalar(1), 60);
    while (flo > 0 || fhi < 0) {
      if (flo > 0) flo = f(lo *= 2);
      if (fhi < 0) fhi = f(hi *= 2);
      if (-lo > limit || hi > limit) {
        if (flo == fhi)
          throw DegenerateMapError("component " + std::to_string(index_) +
                                   " is flat in its last argument");
        throw NoRootError("component " + std::to_string(index_) +
                          ": map range does not cover the target value");
      }
    }
    if (!(flo <= 0 && fhi >= 0))
      throw NonFiniteError("component " + std::to_string(index_) + ": non-finite map value");

    bool saw_slope = false;
    Scalar s(0);
    for (int it = 0; it < opt.max_iterations; ++it) {
      const Scalar fs = f(s);
      if (!std::isfinite(static_cast<double>(fs)))
        throw NonFiniteError("component " + std::to_string(index_) + ": non-finite map value");
      if (fs < 0)
        lo = s;
      else
        hi = s;
      if (abs(fs) <= opt.tolerance) {
        // A small residual can still hide a sizeable error in s where the
        // slope is small; one more Newton step removes it.
        const Scalar root = root_value(sec, s);
        const Scalar slope = root * root;
        if (fs != 0 && slope > opt.min_slope) {
          const Scalar next = s - fs / slope;
          if (next >= lo && next <= hi && abs(f(next)) <= abs(fs)) return next;
        }
        return s;
      }
      const Scalar mid = lo + (hi - lo) / 2;
      // Bracket collapsed to adjacent floating-point numbers.
      if (mid == lo || mid == hi) return s;
      const Scalar root = root_value(sec, s);
      const Scalar slope = root * root;
      Scalar next = mid;
      if (slope > opt.min_slope) {
        saw_slope = true;
        next = s - fs / slope;
        if (next == s) return s;
        if (!(next >= lo && next <= hi)) next = mid;
      }
      s = next;
    }
    if (!saw_slope)
      throw DegenerateMapError("component " + std::to_string(index_) +
                               ": derivative vanishes throughout the bracket");
    throw NoRootError("component " + std::to_string(index_) + ": root finding did not converge");
  }

 private:
  int dim_;
  int index_;
  MultiIndexSet set_L_;
  MultiIndexSet set_R_;
  Vec coeffs_L_;
  Vec coeffs_R_;
  GaussLegendre<Scalar> rule_;
};

template <typename Scalar>
class TriangularMap {
 public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Component = MapComponent<Scalar>;

  explicit TriangularMap(std::vector<Component> components) : components_(std::move(components)) {
    if (components_.empty()) throw DimensionError("a map needs at least one component");
    const int d = static_cast<int>(components_.size());
    for (int c = 0; c < d; ++c)
      if (components_[c].dim() != d || components_[c].index() != c + 1)
        throw DimensionError("component " + std::to_string(c + 1) +
                             " does not fit a map of dimension " + std::to_string(d));
  }

  /// T(r) = r: zero L coefficients and R equal to the constant 1.
  static TriangularMap identity(int dim, int degree_L, int degree_R,
                                int quadrature_order = kDefaultQuadratureOrder) {
    if (dim <= 0) throw DimensionError("invalid dimension");
    std::vector<Component> comps;
    for (int i = 1; i <= dim; ++i) {
      MultiIndexSet set_L(dim, i - 1, degree_L), set_R(dim, i, degree_R);
      Vec cR = Vec::Zero(static_cast<Eigen::Index>(set_R.size()));
      cR[0] = Scalar(1);  // the zero index comes first in graded order
      comps.emplace_back(dim, i, degree_L, degree_R,
                         Vec::Zero(static_cast<Eigen::Index>(set_L.size())), cR, quadrature_order);
    }
    return TriangularMap(std::move(comps));
  }

  /// Exact representation of T(r) = offset + lower * r for a lower-triangular
  /// matrix with positive diagonal (linear L, constant R).
  static TriangularMap lower_affine(const Vec& offset, const Mat& lower,
                                    int quadrature_order = kDefaultQuadratureOrder) {
    const auto d = static_cast<int>(offset.size());
    if (d == 0 || lower.rows() != d || lower.cols() != d)
      throw DimensionError("lower_affine: shape mismatch");
    std::vector<Component> comps;
    for (int i = 1; i <= d; ++i) {
      if (!(lower(i - 1, i - 1) > Scalar(0)))
        throw DegenerateMapError("lower_affine: diagonal must be positive");
      MultiIndexSet set_L(d, i - 1, 1), set_R(d, i, 0);
      Vec cL(static_cast<Eigen::Index>(set_L.size()));
      for (std::size_t m = 0; m < set_L.size(); ++m) {
        const MultiIndex& j = set_L[m];
        cL[static_cast<Eigen::Index>(m)] = offset[i - 1];
        for (int k = 0; k < d; ++k)
          if (j[k] == 1) cL[static_cast<Eigen::Index>(m)] = lower(i - 1, k);
      }
      Vec cR(1);
      using std::sqrt;
      cR[0] = sqrt(lower(i - 1, i - 1));
      comps.emplace_back(d, i, 1, 0, cL, cR, quadrature_order);
    }
    return TriangularMap(std::move(comps));
  }

  int dim() const noexcept { return static_cast<int>(components_.size()); }
  const std::vector<Component>& components() const noexcept { return components_; }

  template <typename Derived>
  Vec eval(const Eigen::MatrixBase<Derived>& r) const {
    check_input(r);
    const Vec x = r;
    Vec out(dim());
    for (int c = 0; c < dim(); ++c) out[c] = components_[c].evaluate(x.data());
    return out;
  }

  template <typename Derived>
  Scalar log_det_jacobian(const Eigen::MatrixBase<Derived>& r) const {
    check_input(r);
    const Vec x = r;
    using std::abs;
    using std::log;
    Scalar ld(0);
    for (int c = 0; c < dim(); ++c) ld += Scalar(2) * log(abs(components_[c].diagonal_root(x.data())));
    return ld;
  }

  /// Map value and Jacobian log-determinant from one pass over the components.
  template <typename Derived>
  std::pair<Vec, Scalar> eval_with_log_det(const Eigen::MatrixBase<Derived>& r) const {
    check_input(r);
    const Vec x = r;
    using std::abs;
    using std::log;
    Vec out(dim());
    Scalar ld(0);
    for (int c = 0; c < dim(); ++c) {
      const auto sec = components_[c].section(x.data());
      out[c] = components_[c].value(sec, x[c]);
      ld += Scalar(2) * log(abs(Component::root_value(sec, x[c])));
    }
    return {out, ld};
  }

  /// Sequential one-dimensional inversion, component by component.
  template <typename Derived>
  Vec invert(const Eigen::MatrixBase<Derived>& theta,
             const InversionOptions<Scalar>& opt = {}) const {
    check_input(theta);
    if (!(opt.tolerance > Scalar(0))) throw DimensionError("inversion tolerance must be positive");
    Vec r = Vec::Zero(dim());
    for (int c = 0; c < dim(); ++c) {
      const auto sec = components_[c].section(r.data());
      r[c] = components_[c].solve(sec, theta[c], opt);
    }
    return r;
  }

  Eigen::Index num_coefficients() const {
    Eigen::Index n = 0;
    for (const auto& c : components_) n += c.num_coefficients();
    return n;
  }

  /// All coefficients, component by component, L before R.
  Vec coefficients() const {
    Vec out(num_coefficients());
    Eigen::Index pos = 0;
    for (const auto& c : components_) {
      out.segment(pos, c.coeffs_L().size()) = c.coeffs_L();
      pos += c.coeffs_L().size();
      out.segment(pos, c.coeffs_R().size()) = c.coeffs_R();
      pos += c.coeffs_R().size();
    }
    return out;
  }

  TriangularMap with_coefficients(const Vec& coeffs) const {
    if (coeffs.size() != num_coefficients())
      throw DimensionError("with_coefficients: expected " + std::to_string(num_coefficients()) +
                           " coefficients");
    std::vector<Component> comps;
    Eigen::Index pos = 0;
    for (const auto& c : components_) {
      Vec cL = coeffs.segment(pos, c.coeffs_L().size());
      pos += c.coeffs_L().size();
      Vec cR = coeffs.segment(pos, c.coeffs_R().size());
      pos += c.coeffs_R().size();
      comps.push_back(c.with_coefficients(std::move(cL), std::move(cR)));
    }
    return TriangularMap(std::move(comps));
  }

 private:
  template <typename Derived>
  void check_input(const Eigen::MatrixBase<Derived>& r) const {
    if (r.size() != dim())
      throw DimensionError("map input has length " + std::to_string(r.size()) + ", expected " +
                           std::to_string(dim()));
    if (!r.allFinite()) throw NonFiniteError("map input is not finite");
  }

  std::vector<Component> components_;
};

/// Left composition T^(k) o ... o T^(1); stages are applied first to last.
template <typename Scalar>
class DeepMap {
 public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Stage = TriangularMap<Scalar>;

  explicit DeepMap(std::vector<Stage> stages) : stages_(std::move(stages)) {
    if (stages_.empty()) throw DimensionError("a deep map needs at least one stage");
    for (const auto& s : stages_)
      if (s.dim() != stages_.front().dim())
        throw DimensionError("all stages of a deep map must share the dimension");
  }
  DeepMap(Stage single) : DeepMap(std::vector<Stage>{std::move(single)}) {}  // NOLINT

  int dim() const noexcept { return stages_.front().dim(); }
  const std::vector<Stage>& stages() const noexcept { return stages_; }

  template <typename Derived>
  Vec eval(const Eigen::MatrixBase<Derived>& r) const {
    Vec x = r;
    for (const auto& s : stages_) x = s.eval(x);
    return x;
  }

  /// Chain rule: stage log-determinants summed at the intermediate points.
  template <typename Derived>
  Scalar log_det_jacobian(const Eigen::MatrixBase<Derived>& r) const {
    return eval_with_log_det(r).second;
  }

  template <typename Derived>
  std::pair<Vec, Scalar> eval_with_log_det(const Eigen::MatrixBase<Derived>& r) const {
    Vec x = r;
    Scalar ld(0);
    for (const auto& s : stages_) {
      auto [y, l] = s.eval_with_log_det(x);
      ld += l;
      x = std::move(y);
    }
    return {x, ld};
  }

  template <typename Derived>
  Vec invert(const Eigen::MatrixBase<Derived>& theta,
             const InversionOptions<Scalar>& opt = {}) const {
    Vec r = theta;
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) r = it->invert(r, opt);
    return r;
  }

 private:
  std::vector<Stage> stages_;
};

using MapComponentd = MapComponent<double>;
using TriangularMapd = TriangularMap<double>;
using DeepMapd = DeepMap<double>;

// Free-function spellings of the map operations.

template <typename Scalar = double>
TriangularMap<Scalar> identity_map(int dim, int degree_L, int degree_R,
                                   int quadrature_order = kDefaultQuadratureOrder) {
  return TriangularMap<Scalar>::identity(dim, degree_L, degree_R, quadrature_order);
}

template <typename Map, typename Derived>
auto eval_map(const Map& map, const Eigen::MatrixBase<Derived>& r) {
  return map.eval(r);
}

template <typename Map, typename Derived>
auto log_det_jacobian(const Map& map, const Eigen::MatrixBase<Derived>& r) {
  return map.log_det_jacobian(r);
}

template <typename Map, typename Derived, typename Scalar = typename Derived::Scalar>
auto invert_map(const Map& map, const Eigen::MatrixBase<Derived>& theta,
                Scalar tolerance = Scalar(1e-12)) {
  InversionOptions<Scalar> opt;
  opt.tolerance = tolerance;
  return map.invert(theta, opt);
}

/// log target(T(r)) + log|det grad T(r)|; -inf propagates from either term.
template <typename Map, typename LogTarget, typename Derived>
auto pullback_logdensity(const Map& map, const LogTarget& log_target,
                         const Eigen::MatrixBase<Derived>& r) {
  auto [theta, ld] = map.eval_with_log_det(r);
  using Scalar = decltype(ld);
  if (ld == -std::numeric_limits<Scalar>::infinity()) return ld;
  return Scalar(log_target(theta)) + ld;
}

template <typename Scalar>
DeepMap<Scalar> compose(std::vector<TriangularMap<Scalar>> stages) {
  return DeepMap<Scalar>(std::move(stages));
}

template <typename Scalar>
DeepMap<Scalar> compose(const std::vector<DeepMap<Scalar>>& maps) {
  std::vector<TriangularMap<Scalar>> stages;
  for (const auto& m : maps)
    for (const auto& s : m.stages()) stages.push_back(s);
  return DeepMap<Scalar>(std::move(stages));
}

}  // namespace mfmh
