#pragma once

#include "mfmh/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace mfmh {

/// Exponents (j_1, ..., j_d) of a monomial.
using MultiIndex = std::vector<int>;

/// Truncated total-degree index set: every j with |j|_1 <= max_degree and
/// j_k = 0 for k > active_dim. Indices are kept in graded lexicographic order
/// (by total degree, then lexicographically descending, so x1 before x2).
class MultiIndexSet {
 public:
  MultiIndexSet(int dim, int active_dim, int max_degree)
      : dim_(dim), active_dim_(active_dim), max_degree_(max_degree) {
    if (dim <= 0 || active_dim < 0 || active_dim > dim)
      throw DimensionError("invalid dimension: d=" + std::to_string(dim) +
                           ", i=" + std::to_string(active_dim));
    if (max_degree < 0) throw DimensionError("negative maximal degree");
    MultiIndex current(dim, 0);
    enumerate(current, 0, max_degree);
    std::sort(indices_.begin(), indices_.end(), [](const MultiIndex& a, const MultiIndex& b) {
      const int da = std::accumulate(a.begin(), a.end(), 0);
      const int db = std::accumulate(b.begin(), b.end(), 0);
      if (da != db) return da < db;
      return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
    });
  }

  int dim() const noexcept { return dim_; }
  int active_dim() const noexcept { return active_dim_; }
  int max_degree() const noexcept { return max_degree_; }
  std::size_t size() const noexcept { return indices_.size(); }

  const MultiIndex& operator[](std::size_t m) const { return indices_[m]; }
  auto begin() const noexcept { return indices_.begin(); }
  auto end() const noexcept { return indices_.end(); }

  bool contains(const MultiIndex& j) const {
    return std::find(indices_.begin(), indices_.end(), j) != indices_.end();
  }

  friend bool operator==(const MultiIndexSet&, const MultiIndexSet&) = default;

 private:
  void enumerate(MultiIndex& current, int coord, int budget) {
    if (coord == active_dim_) {
      indices_.push_back(current);
      return;
    }
    for (int e = 0; e <= budget; ++e) {
      current[coord] = e;
      enumerate(current, coord + 1, budget - e);
    }
    current[coord] = 0;
  }

  int dim_;
  int active_dim_;
  int max_degree_;
  std::vector<MultiIndex> indices_;
};

inline MultiIndexSet total_degree_set(int dim, int active_dim, int max_degree) {
  return MultiIndexSet(dim, active_dim, max_degree);
}

/// Monomials of `set` evaluated at `point`, with 0^0 = 1.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> eval_basis(
    const MultiIndexSet& set, const Eigen::MatrixBase<Derived>& point) {
  using Scalar = typename Derived::Scalar;
  if (point.size() != set.dim())
    throw DimensionError("eval_basis: point has length " + std::to_string(point.size()) +
                         ", expected " + std::to_string(set.dim()));
  const int deg = set.max_degree();
  // powers(e, k) = point[k]^e
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> powers(deg + 1, set.dim());
  for (int k = 0; k < set.dim(); ++k) {
    powers(0, k) = Scalar(1);
    for (int e = 1; e <= deg; ++e) powers(e, k) = powers(e - 1, k) * point[k];
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> values(static_cast<Eigen::Index>(set.size()));
  for (std::size_t m = 0; m < set.size(); ++m) {
    Scalar v(1);
    const MultiIndex& j = set[m];
    for (int k = 0; k < set.active_dim(); ++k)
      if (j[k] != 0) v *= powers(j[k], k);
    values[static_cast<Eigen::Index>(m)] = v;
  }
  return values;
}

}  // namespace mfmh
