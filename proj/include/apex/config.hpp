#ifndef APEX_CONFIG_HPP
#define APEX_CONFIG_HPP

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "apex/core.hpp"

namespace apex {

enum class CovKind { kDiagonal, kFull };

/// Hyper-parameters shared by every stage. Defaults are the pipeline defaults.
struct RunConfig {
  double tau = 0.1;          // posterior temperature (tau = 1 / kappa)
  double tau_p = 0.1;        // prototype-contrast temperature
  double tau_q = 1.0;        // quality temperature
  double lambda_pc = 1.0;    // weight of the prototype-contrastive loss
  double alpha = 0.5;        // calibration strength
  double beta_p = 0.01;      // prototype EMA momentum
  double beta_q = -1.0;      // quality EMA momentum; negative means "same as beta_p"
  double epsilon_ot = 0.05;  // Sinkhorn regularization
  std::vector<int> k_candidates = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::uint64_t seed = 0;
  CovKind cov_kind = CovKind::kDiagonal;

  // Trainer.
  int epochs = 200;
  double learning_rate = 0.5;
  int batch_size = 0;  // 0: full set when N <= 1024, else 1024
  int sinkhorn_iters = 100;
  double sinkhorn_tol = 1e-6;

  // GMM.
  int gmm_restarts = 4;
  int gmm_max_iters = 200;
  double gmm_tol = 1e-6;

  // Scoring.
  double shrinkage = 1e-3;
  bool instantaneous_quality = false;
  bool raw_score_features = false;  // Mahalanobis statistics on the unnormalized input features

  double quality_momentum() const noexcept { return beta_q < 0 ? beta_p : beta_q; }

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, RunConfig& c);

const char* to_string(CovKind kind);
CovKind cov_kind_from_string(const std::string& s);

}  // namespace apex

#endif  // APEX_CONFIG_HPP
