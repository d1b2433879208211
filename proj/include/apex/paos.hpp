#ifndef APEX_PAOS_HPP
#define APEX_PAOS_HPP

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "apex/core.hpp"
#include "apex/embedding_io.hpp"
#include "apex/manifold.hpp"

/**
 * @file paos.hpp
 *
 * @brief Posterior-aware OOD scoring.
 *
 * Prototype quality Q defines an energy E = -Q and a Gibbs distribution over a class's
 * prototypes at temperature tau_q. The class confidence is the negative free energy
 * tau_q log sum_k exp(Q_k / tau_q). A sample's score is the minimum over classes of its
 * Mahalanobis distance to the class mean (shared precision) divided by 1 + alpha * Conf(c).
 * Lower scores are more in-distribution.
 */
namespace apex {

/// Denominators below this are clamped (and flagged) so a negative confidence cannot flip a distance.
inline constexpr double kDenominatorFloor = 0.1;
inline constexpr double kDefaultShrinkage = 1e-3;
inline constexpr double kCovarianceFloor = 1e-8;

constexpr double prototype_energy(double q) noexcept { return -q; }

template <typename Derived>
VectorX<typename Derived::Scalar> gibbs_weights(const Eigen::MatrixBase<Derived>& qualities,
                                                typename Derived::Scalar tau_q) {
  using Scalar = typename Derived::Scalar;
  if (qualities.size() == 0) throw InputError("gibbs_weights needs at least one prototype");
  if (!(tau_q > 0)) throw InputError("tau_q must be > 0");
  // exp(-E / tau_q) with E = -Q.
  const VectorX<Scalar> logits = -qualities.unaryExpr([](Scalar q) { return Scalar(prototype_energy(q)); }) / tau_q;
  const Scalar m = logits.maxCoeff();
  VectorX<Scalar> w = (logits.array() - m).exp();
  return w / w.sum();
}

/// Conf(c) = tau_q * log sum_k exp(Q_k / tau_q).
template <typename Derived>
typename Derived::Scalar class_confidence(const Eigen::MatrixBase<Derived>& qualities,
                                          typename Derived::Scalar tau_q) {
  if (qualities.size() == 0) throw InputError("class_confidence needs at least one prototype");
  if (!(tau_q > 0)) throw InputError("tau_q must be > 0");
  return tau_q * log_sum_exp((qualities.derived() / tau_q).eval());
}

/// (h - mu)^T P (h - mu).
template <typename DerivedH, typename DerivedM, typename DerivedP>
typename DerivedH::Scalar mahalanobis(const Eigen::MatrixBase<DerivedH>& h, const Eigen::MatrixBase<DerivedM>& mu,
                                      const Eigen::MatrixBase<DerivedP>& precision) {
  if (h.size() != mu.size() || precision.rows() != h.size() || precision.cols() != h.size()) {
    throw InputError("mahalanobis: dimension mismatch");
  }
  const VectorX<typename DerivedH::Scalar> d = h.derived().reshaped() - mu.derived().reshaped();
  return d.dot(precision * d);
}

struct PaosStats {
  Matrix means;        // C x D
  Matrix precision;    // D x D
  Vector conf;         // C
  double alpha = 0.5;
  double tau_q = 1.0;
  double shrinkage = kDefaultShrinkage;
  double ridge = 0;    // absolute value added to the covariance diagonal
  Vector denominators;             // 1 + alpha * conf, after clamping
  std::vector<int> clamped_classes;  // classes whose denominator hit kDenominatorFloor

  int class_count() const noexcept { return static_cast<int>(means.rows()); }
  Eigen::Index dim() const noexcept { return means.cols(); }
};

struct FitOptions {
  double shrinkage = kDefaultShrinkage;  // relative: adds shrinkage * trace(S) / D
  double floor = kCovarianceFloor;       // absolute: always added on top
  bool clamp_denominators = true;
};

/// Pooled within-class covariance (biased) of the set around its class means.
Matrix pooled_covariance(const EmbeddingSet& set, const Matrix& means);

/**
 * Class means, shared precision and calibration denominators.
 *
 * Sigma = S + (shrinkage * trace(S) / D + floor) I where S is the pooled within-class covariance.
 * Throws NumericalError when Sigma is not positive definite.
 */
PaosStats fit_gaussian_stats(const EmbeddingSet& set, const Vector& conf, double alpha, double tau_q,
                             const FitOptions& options = {});

/// Per-class confidence from a manifold's EMA quality (Q = cohesion + separation).
Vector manifold_confidence(const PrototypeManifold& manifold, double tau_q);
/// Per-class confidence from explicit per-class quality vectors.
Vector confidence_from_quality(const std::vector<Vector>& qualities, double tau_q);

struct PaosScore {
  double score = 0;
  int argmin_class = 0;
};

template <typename Derived>
PaosScore paos_score(const Eigen::MatrixBase<Derived>& h, const PaosStats& stats) {
  if (h.size() != stats.dim()) throw InputError("paos_score: dimension mismatch");
  PaosScore best{std::numeric_limits<double>::infinity(), 0};
  for (int c = 0; c < stats.class_count(); ++c) {
    const double denom = stats.denominators[c];
    if (!(denom > 0)) {
      throw NumericalError("calibration denominator of class " + std::to_string(c) + " is not positive");
    }
    const double s = mahalanobis(h.derived(), stats.means.row(c), stats.precision) / denom;
    if (s < best.score) best = {s, c};
  }
  return best;
}

/// Row-wise paos_score, order preserving. A zero-row input yields an empty result.
std::vector<PaosScore> score_batch(const Matrix& features, const PaosStats& stats);

/// Plain minimum Mahalanobis distance over classes (no calibration).
std::vector<double> min_mahalanobis(const Matrix& features, const PaosStats& stats);

/// Scores CSV: index,score,argmin_class.
void save_scores(const std::vector<PaosScore>& scores, const std::filesystem::path& path);
std::vector<double> load_score_column(const std::filesystem::path& path);

/// `<stem>.json` metadata (conf, alpha, tau_q, ...) plus `<stem>.means.bin` / `<stem>.precision.bin`.
void save_stats(const PaosStats& stats, const std::filesystem::path& json_path);
PaosStats load_stats(const std::filesystem::path& json_path);

/// Recomputes denominators for a new alpha.
PaosStats with_alpha(PaosStats stats, double alpha, bool clamp = true);

}  // namespace apex

#endif  // APEX_PAOS_HPP
