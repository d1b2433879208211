#ifndef APEX_KMEANSPP_HPP
#define APEX_KMEANSPP_HPP

#include <random>

#include "apex/core.hpp"

namespace apex {

/// k-means++ seeding: the first center uniform, each next one drawn proportional to the squared
/// distance to the nearest chosen center. Falls back to uniform draws when all distances vanish.
template <typename Derived, typename Rng>
MatrixX<typename Derived::Scalar> kmeanspp_centers(const Eigen::MatrixBase<Derived>& x, int k, Rng& rng) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = x.rows();
  MatrixX<Scalar> centers(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::uniform_real_distribution<Scalar> unit(0, 1);
  centers.row(0) = x.row(pick(rng));
  VectorX<Scalar> d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const Scalar total = d2.sum();
    Eigen::Index chosen = n - 1;
    if (total <= 0) {
      chosen = pick(rng);
    } else {
      const Scalar target = unit(rng) * total;
      Scalar acc = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target) {
          chosen = i;
          break;
        }
      }
    }
    centers.row(c) = x.row(chosen);
    d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

}  // namespace apex

#endif  // APEX_KMEANSPP_HPP
