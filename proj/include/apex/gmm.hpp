#ifndef APEX_GMM_HPP
#define APEX_GMM_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "apex/config.hpp"
#include "apex/core.hpp"
#include "apex/embedding_io.hpp"

/**
 * @file gmm.hpp
 *
 * @brief Per-class prototype-count selection: EM-fitted Gaussian mixtures scored by BIC, plus the
 * heuristic count assignments used as ablation baselines.
 */
namespace apex {

/// Lower bound on every component variance (diagonal entry or covariance eigenvalue).
inline constexpr double kVarianceFloor = 1e-6;

struct GmmModel {
  int k = 0;
  CovKind cov_kind = CovKind::kDiagonal;
  Vector weights;                 // k
  Matrix means;                   // k x D
  std::vector<Matrix> covariances;  // k entries: D x 1 variances (diagonal) or D x D (full)
  double log_likelihood = 0;      // total over the fit data
  int iterations = 0;             // EM iterations of the winning restart
  std::vector<double> ll_trace;   // per-iteration total log-likelihood of the winning restart
};

struct GmmOptions {
  CovKind cov_kind = CovKind::kDiagonal;
  std::uint64_t seed = 0;
  int restarts = 4;
  int max_iters = 200;
  /// Stop once the per-sample mean log-likelihood improves by less than this.
  double tol = 1e-6;
};

/**
 * Best-of-restarts EM fit. Every restart is seeded by k-means++ on its own derived stream.
 *
 * Throws InputError when n < k and NumericalError (naming the restart) on a non-finite likelihood.
 */
GmmModel fit_gmm(const Matrix& features, int k, const GmmOptions& options);

/// Total log-likelihood of `features` under `model`.
double gmm_log_likelihood(const GmmModel& model, const Matrix& features);

/// Free parameter count: (k - 1) mixing weights, k * d means, plus k * d or k * d(d+1)/2 covariance terms.
constexpr long long param_count(int k, int d, CovKind kind) {
  const long long kk = k, dd = d;
  const long long cov = kind == CovKind::kFull ? dd * (dd + 1) / 2 : dd;
  return (kk - 1) + kk * dd + kk * cov;
}

/// N(k, D) ln(n) - 2 log L. Throws InputError when n < 2.
double bic(const GmmModel& model, Eigen::Index n, Eigen::Index d, CovKind kind);

struct KTraceEntry {
  int k = 0;
  std::optional<double> bic;  // empty when the candidate was infeasible (n < k)
};

struct KSelection {
  int best_k = 0;
  std::vector<KTraceEntry> trace;
};

/// Fits every feasible candidate and returns the BIC argmin, ties toward the smaller k.
KSelection select_k(const Matrix& features, const std::vector<int>& candidates, const GmmOptions& options);

enum class KStrategyKind { kBic, kFixed, kRandomUniform, kDirichletNoise, kShuffleOfBic };

struct KStrategy {
  KStrategyKind kind = KStrategyKind::kBic;
  int fixed_k = 6;    // kFixed
  int range_lo = 1;   // kRandomUniform, inclusive
  int range_hi = 10;  // kRandomUniform, inclusive

  static KStrategy bic() { return {}; }
  static KStrategy fixed(int k) { return {KStrategyKind::kFixed, k}; }
  static KStrategy random_uniform(int lo, int hi) { return {KStrategyKind::kRandomUniform, 6, lo, hi}; }
  static KStrategy dirichlet_noise() { return {KStrategyKind::kDirichletNoise}; }
  static KStrategy shuffle_of_bic() { return {KStrategyKind::kShuffleOfBic}; }

  void validate() const;
};

std::string to_string(KStrategyKind kind);
KStrategyKind k_strategy_from_string(const std::string& s);

struct ClassKSelection {
  int k = 0;
  int bic_k = 0;  // the BIC choice when it was computed, else 0
  std::vector<KTraceEntry> trace;
};

struct KSelectionReport {
  KStrategy strategy;
  std::uint64_t seed = 0;
  CovKind cov_kind = CovKind::kDiagonal;
  bool features_normalized = false;
  std::vector<ClassKSelection> per_class;

  std::vector<int> k_map() const;
  int total_prototypes() const;
};

/**
 * Assigns a prototype count to every class.
 *
 * Strategies other than kFixed and kRandomUniform run BIC selection first. Class fits draw from
 * streams derived from (seed, class index) so the result does not depend on evaluation order.
 */
KSelectionReport assign_k_all_classes(const EmbeddingSet& set, const RunConfig& config,
                                      const KStrategy& strategy, std::uint64_t seed);

/// Dirichlet(concentration = counts) proportions scaled to sum(counts), largest-remainder
/// rounded, clamped to >= 1.
std::vector<int> dirichlet_perturb(const std::vector<int>& counts, std::uint64_t seed);

/// A seeded permutation of `counts` that differs from the input whenever the input is not constant.
std::vector<int> shuffle_counts(const std::vector<int>& counts, std::uint64_t seed);

void to_json(nlohmann::json& j, const KSelectionReport& r);
void from_json(const nlohmann::json& j, KSelectionReport& r);

}  // namespace apex

#endif  // APEX_GMM_HPP
