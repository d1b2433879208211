#ifndef APEX_QUALITY_HPP
#define APEX_QUALITY_HPP

#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "apex/core.hpp"
#include "apex/embedding_io.hpp"
#include "apex/manifold.hpp"

namespace apex {

inline constexpr double kDefaultCollisionThreshold = 1e-2;

/// S_k^c: for every class, for every prototype, the row indices assigned to it.
using HardAssignment = std::vector<std::vector<std::vector<Eigen::Index>>>;

/// Each sample goes to the own-class prototype of maximum cosine; ties go to the smaller index.
HardAssignment hard_assign(const Matrix& z, const std::vector<int>& labels, const PrototypeManifold& manifold);
HardAssignment hard_assign(const EmbeddingSet& set, const PrototypeManifold& manifold);

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

/// Mean cosine between a prototype and its assigned rows; empty when nothing is assigned.
template <typename DerivedP, typename DerivedZ>
std::optional<double> cohesion(const Eigen::MatrixBase<DerivedP>& prototype,
                               const Eigen::MatrixBase<DerivedZ>& assigned) {
  if (assigned.rows() == 0) return std::nullopt;
  double sum = 0;
  for (Eigen::Index i = 0; i < assigned.rows(); ++i) sum += cosine(prototype.transpose(), assigned.row(i).transpose());
  return sum / static_cast<double>(assigned.rows());
}

/// Soft-weighted cohesion: sum_i w_i cos(p, z_i) / sum_i w_i. Empty when the weights vanish.
template <typename DerivedP, typename DerivedZ, typename DerivedW>
std::optional<double> soft_cohesion(const Eigen::MatrixBase<DerivedP>& prototype, const Eigen::MatrixBase<DerivedZ>& z,
                                    const Eigen::MatrixBase<DerivedW>& weights) {
  const double total = weights.sum();
  if (!(total > 0)) return std::nullopt;
  double sum = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) sum += weights[i] * cosine(prototype.transpose(), z.row(i).transpose());
  return sum / total;
}

/// 1 - max cosine to any prototype of another class. Throws InputError on a single-class manifold.
double separation(const PrototypeManifold& manifold, int c, int k);

constexpr double quality(double q_c, double q_s) noexcept { return q_c + q_s; }

/// Fresh per-prototype cohesion (null -> 0) and separation of class c against the given samples.
struct FreshQuality {
  std::vector<Vector> cohesion;
  std::vector<Vector> separation;
};
FreshQuality fresh_quality(const Matrix& z, const std::vector<int>& labels, const PrototypeManifold& manifold);

struct PrototypeQuality {
  int cls = 0;
  int index = 0;
  std::optional<double> q_c;  // null when the prototype received no samples
  double q_s = 0;
  double q = 0;  // q_c (or 0 when null) + q_s
};

struct CollidingPair {
  std::pair<int, int> a;  // (class, index), a.first < b.first
  std::pair<int, int> b;
  double distance = 0;  // 1 - cosine
};

struct QualityReport {
  std::vector<PrototypeQuality> prototypes;
  double min_q_s = 0;
  std::vector<CollidingPair> colliding_pairs;
  double collision_threshold = kDefaultCollisionThreshold;
  int total_prototypes = 0;
  int colliding_prototypes = 0;
  double pct_colliding = 0;  // prototypes in >= 1 pair, as a percentage of M
};

/// Per-prototype quality plus every cross-class pair with 1 - cosine < threshold, listed once.
QualityReport collision_report(const PrototypeManifold& manifold, const EmbeddingSet& set,
                               double threshold = kDefaultCollisionThreshold);

void to_json(nlohmann::json& j, const QualityReport& r);

}  // namespace apex

#endif  // APEX_QUALITY_HPP
