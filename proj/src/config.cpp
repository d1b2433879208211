#include "apex/config.hpp"

#include <cmath>
#include <string>

namespace apex {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

}  // namespace

void RunConfig::validate() const {
  require(std::isfinite(tau) && tau > 0, "tau must be > 0");
  require(std::isfinite(tau_p) && tau_p > 0, "tau_p must be > 0");
  require(std::isfinite(tau_q) && tau_q > 0, "tau_q must be > 0");
  require(std::isfinite(lambda_pc) && lambda_pc >= 0, "lambda must be >= 0");
  require(std::isfinite(alpha) && alpha >= 0, "alpha must be >= 0");
  require(beta_p >= 0 && beta_p <= 1, "beta_p must lie in [0, 1]");
  require(beta_q <= 1, "beta_q must lie in [0, 1]");
  require(std::isfinite(epsilon_ot) && epsilon_ot > 0, "epsilon must be > 0");
  require(!k_candidates.empty(), "k_candidates must be non-empty");
  for (int k : k_candidates) require(k >= 1, "every k candidate must be >= 1");
  require(epochs >= 0, "epochs must be >= 0");
  require(std::isfinite(learning_rate) && learning_rate >= 0, "learning rate must be >= 0");
  require(batch_size >= 0, "batch size must be >= 0");
  require(sinkhorn_iters >= 1, "sinkhorn iterations must be >= 1");
  require(sinkhorn_tol > 0, "sinkhorn tolerance must be > 0");
  require(gmm_restarts >= 1, "gmm restarts must be >= 1");
  require(gmm_max_iters >= 1, "gmm max iterations must be >= 1");
  require(gmm_tol > 0, "gmm tolerance must be > 0");
  require(std::isfinite(shrinkage) && shrinkage >= 0, "shrinkage must be >= 0");
}

const char* to_string(CovKind kind) { return kind == CovKind::kFull ? "full" : "diagonal"; }

CovKind cov_kind_from_string(const std::string& s) {
  if (s == "diagonal") return CovKind::kDiagonal;
  if (s == "full") return CovKind::kFull;
  throw ConfigError("invalid config: cov_kind must be 'diagonal' or 'full', got '" + s + "'");
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{
      {"tau", c.tau},
      {"tau_p", c.tau_p},
      {"tau_q", c.tau_q},
      {"lambda", c.lambda_pc},
      {"alpha", c.alpha},
      {"beta_p", c.beta_p},
      {"beta_q", c.quality_momentum()},
      {"epsilon", c.epsilon_ot},
      {"k_candidates", c.k_candidates},
      {"seed", c.seed},
      {"cov_kind", to_string(c.cov_kind)},
      {"epochs", c.epochs},
      {"lr", c.learning_rate},
      {"batch_size", c.batch_size},
      {"sinkhorn_iters", c.sinkhorn_iters},
      {"sinkhorn_tol", c.sinkhorn_tol},
      {"gmm_restarts", c.gmm_restarts},
      {"gmm_max_iters", c.gmm_max_iters},
      {"gmm_tol", c.gmm_tol},
      {"shrinkage", c.shrinkage},
      {"instantaneous_quality", c.instantaneous_quality},
      {"raw_score_features", c.raw_score_features},
  };
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("invalid config: expected a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "tau") c.tau = value.get<double>();
      else if (key == "tau_p") c.tau_p = value.get<double>();
      else if (key == "tau_q") c.tau_q = value.get<double>();
      else if (key == "lambda") c.lambda_pc = value.get<double>();
      else if (key == "alpha") c.alpha = value.get<double>();
      else if (key == "beta_p") c.beta_p = value.get<double>();
      else if (key == "beta_q") c.beta_q = value.get<double>();
      else if (key == "epsilon") c.epsilon_ot = value.get<double>();
      else if (key == "k_candidates") c.k_candidates = value.get<std::vector<int>>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "cov_kind") c.cov_kind = cov_kind_from_string(value.get<std::string>());
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "lr") c.learning_rate = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "sinkhorn_iters") c.sinkhorn_iters = value.get<int>();
      else if (key == "sinkhorn_tol") c.sinkhorn_tol = value.get<double>();
      else if (key == "gmm_restarts") c.gmm_restarts = value.get<int>();
      else if (key == "gmm_max_iters") c.gmm_max_iters = value.get<int>();
      else if (key == "gmm_tol") c.gmm_tol = value.get<double>();
      else if (key == "shrinkage") c.shrinkage = value.get<double>();
      else if (key == "instantaneous_quality") c.instantaneous_quality = value.get<bool>();
      else if (key == "raw_score_features") c.raw_score_features = value.get<bool>();
      else throw ConfigError("invalid config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

}  // namespace apex
