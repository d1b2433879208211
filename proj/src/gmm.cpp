#include "apex/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "apex/kmeanspp.hpp"

namespace apex {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void floor_covariance(Matrix& cov, CovKind kind) {
  if (kind == CovKind::kDiagonal) {
    cov = cov.cwiseMax(kVarianceFloor);
    return;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.eigenvalues().minCoeff() >= kVarianceFloor) return;
  const Vector clamped = eig.eigenvalues().cwiseMax(kVarianceFloor);
  cov = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
  cov = 0.5 * (cov + cov.transpose()).eval();
}

/// Per-sample log N(x | mean, cov) for one component.
Vector component_log_density(const Matrix& x, const RowVectorX<double>& mean, const Matrix& cov,
                             CovKind kind) {
  const auto d = static_cast<double>(x.cols());
  const Matrix centered = x.rowwise() - mean;
  if (kind == CovKind::kDiagonal) {
    const double log_det = cov.array().log().sum();
    const Vector maha = (centered.array().square().rowwise() / cov.col(0).transpose().array()).rowwise().sum();
    return (-0.5 * (d * kLog2Pi + log_det + maha.array())).matrix();
  }
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance lost positive definiteness");
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Matrix solved = llt.matrixL().solve(centered.transpose());
  const Vector maha = solved.colwise().squaredNorm().transpose();
  return (-0.5 * (d * kLog2Pi + log_det + maha.array())).matrix();
}

/// E-step. Fills responsibilities (n x k) and returns the total log-likelihood.
double expectation(const GmmModel& model, const Matrix& x, Matrix* resp) {
  const Eigen::Index n = x.rows();
  Matrix log_resp(n, model.k);
  for (int j = 0; j < model.k; ++j) {
    log_resp.col(j) = component_log_density(x, model.means.row(j), model.covariances[j], model.cov_kind)
                          .array() +
                      std::log(model.weights[j]);
  }
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lse = log_sum_exp(log_resp.row(i));
    total += lse;
    if (resp) resp->row(i) = (log_resp.row(i).array() - lse).exp();
  }
  return total;
}

void maximization(const Matrix& x, const Matrix& resp, GmmModel& model) {
  const Vector nk = resp.colwise().sum().transpose().array() + 10 * std::numeric_limits<double>::epsilon();
  model.weights = nk / nk.sum();
  model.means = (resp.transpose() * x).array().colwise() / nk.array();
  for (int j = 0; j < model.k; ++j) {
    const Matrix centered = x.rowwise() - model.means.row(j);
    Matrix cov;
    if (model.cov_kind == CovKind::kDiagonal) {
      cov = (centered.array().square().colwise() * resp.col(j).array()).colwise().sum().transpose() / nk[j];
    } else {
      cov = (centered.transpose() * resp.col(j).asDiagonal() * centered) / nk[j];
      cov = 0.5 * (cov + cov.transpose()).eval();
    }
    floor_covariance(cov, model.cov_kind);
    model.covariances[j] = std::move(cov);
  }
}

GmmModel fit_once(const Matrix& x, int k, const GmmOptions& options, std::uint64_t run_seed, int run) {
  std::mt19937_64 rng(run_seed);
  const Matrix centers = kmeanspp_centers(x, k, rng);
  Matrix resp = Matrix::Zero(x.rows(), k);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    (centers.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
    resp(i, best) = 1.0;
  }

  GmmModel model;
  model.k = k;
  model.cov_kind = options.cov_kind;
  model.covariances.resize(k);
  maximization(x, resp, model);

  const double n = static_cast<double>(x.rows());
  double previous = -std::numeric_limits<double>::infinity();
  for (int it = 1;; ++it) {
    const double ll = expectation(model, x, &resp);
    if (!std::isfinite(ll)) {
      throw NumericalError("EM produced a non-finite log-likelihood in run " + std::to_string(run) +
                           " (k=" + std::to_string(k) + ", iteration " + std::to_string(it) + ")");
    }
    model.log_likelihood = ll;
    model.iterations = it;
    model.ll_trace.push_back(ll);
    if (it > 1 && std::abs(ll - previous) / n < options.tol) break;
    if (it >= options.max_iters) break;
    previous = ll;
    maximization(x, resp, model);
  }
  return model;
}

}  // namespace

GmmModel fit_gmm(const Matrix& features, int k, const GmmOptions& options) {
  if (k < 1) throw InputError("component count must be >= 1");
  if (features.rows() < k) {
    throw InputError("infeasible GMM: " + std::to_string(features.rows()) + " samples for k=" +
                     std::to_string(k));
  }
  if (!features.allFinite()) throw InputError("GMM features contain non-finite values");
  std::optional<GmmModel> best;
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    GmmModel m = fit_once(features, k, options, derive_seed(options.seed, Stage::kGmm, k, r), r);
    if (!best || m.log_likelihood > best->log_likelihood) best = std::move(m);
  }
  return *std::move(best);
}

double gmm_log_likelihood(const GmmModel& model, const Matrix& features) {
  return expectation(model, features, nullptr);
}

double bic(const GmmModel& model, Eigen::Index n, Eigen::Index d, CovKind kind) {
  if (n < 2) throw InputError("BIC undefined for fewer than 2 samples");
  const auto params = static_cast<double>(param_count(model.k, static_cast<int>(d), kind));
  return params * std::log(static_cast<double>(n)) - 2.0 * model.log_likelihood;
}

KSelection select_k(const Matrix& features, const std::vector<int>& candidates, const GmmOptions& options) {
  if (candidates.empty()) throw InputError("candidate set is empty");
  KSelection out;
  std::optional<std::pair<double, int>> best;
  for (int k : candidates) {
    if (k < 1) throw InputError("candidate k must be >= 1");
    if (features.rows() < k) {
      out.trace.push_back({k, std::nullopt});
      continue;
    }
    const GmmModel model = fit_gmm(features, k, options);
    const double value = bic(model, features.rows(), features.cols(), options.cov_kind);
    out.trace.push_back({k, value});
    if (!best || value < best->first || (value == best->first && k < best->second)) best = {value, k};
  }
  if (!best) {
    throw InputError("no feasible candidate: " + std::to_string(features.rows()) +
                     " samples, smallest candidate " +
                     std::to_string(*std::min_element(candidates.begin(), candidates.end())));
  }
  out.best_k = best->second;
  return out;
}

void KStrategy::validate() const {
  if (kind == KStrategyKind::kFixed && fixed_k < 1) throw ConfigError("fixed k must be >= 1");
  if (kind == KStrategyKind::kRandomUniform && (range_lo < 1 || range_hi < range_lo)) {
    throw ConfigError("random-uniform range must satisfy 1 <= lo <= hi");
  }
}

std::string to_string(KStrategyKind kind) {
  switch (kind) {
    case KStrategyKind::kBic: return "bic";
    case KStrategyKind::kFixed: return "fixed";
    case KStrategyKind::kRandomUniform: return "random-uniform";
    case KStrategyKind::kDirichletNoise: return "dirichlet-noise";
    case KStrategyKind::kShuffleOfBic: return "shuffle-of-bic";
  }
  return "unknown";
}

KStrategyKind k_strategy_from_string(const std::string& s) {
  for (auto kind : {KStrategyKind::kBic, KStrategyKind::kFixed, KStrategyKind::kRandomUniform,
                    KStrategyKind::kDirichletNoise, KStrategyKind::kShuffleOfBic}) {
    if (to_string(kind) == s) return kind;
  }
  throw ConfigError("unknown K strategy '" + s + "'");
}

std::vector<int> KSelectionReport::k_map() const {
  std::vector<int> out;
  out.reserve(per_class.size());
  for (const auto& c : per_class) out.push_back(c.k);
  return out;
}

int KSelectionReport::total_prototypes() const {
  int m = 0;
  for (const auto& c : per_class) m += c.k;
  return m;
}

std::vector<int> dirichlet_perturb(const std::vector<int>& counts, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int budget = std::accumulate(counts.begin(), counts.end(), 0);
  std::vector<double> draws(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    std::gamma_distribution<double> gamma(static_cast<double>(counts[c]), 1.0);
    draws[c] = gamma(rng);
  }
  const double total = std::accumulate(draws.begin(), draws.end(), 0.0);
  std::vector<int> out(counts.size());
  std::vector<double> remainder(counts.size());
  int assigned = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const double share = total > 0 ? draws[c] / total * budget : static_cast<double>(counts[c]);
    out[c] = static_cast<int>(std::floor(share));
    remainder[c] = share - out[c];
    assigned += out[c];
  }
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (int i = 0; i < budget - assigned; ++i) ++out[order[i % order.size()]];
  for (int& k : out) k = std::max(k, 1);
  return out;
}

std::vector<int> shuffle_counts(const std::vector<int>& counts, std::uint64_t seed) {
  std::vector<int> out = counts;
  if (counts.size() < 2) return out;
  if (std::adjacent_find(counts.begin(), counts.end(), std::not_equal_to<>()) == counts.end()) {
    return out;  // constant: every permutation is a no-op
  }
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::shuffle(out.begin(), out.end(), rng);
    if (out != counts) return out;
  }
  out = counts;
  std::rotate(out.begin(), out.begin() + 1, out.end());
  return out;
}

KSelectionReport assign_k_all_classes(const EmbeddingSet& set, const RunConfig& config,
                                      const KStrategy& strategy, std::uint64_t seed) {
  strategy.validate();
  KSelectionReport report;
  report.strategy = strategy;
  report.seed = seed;
  report.cov_kind = config.cov_kind;
  report.features_normalized = set.normalized();
  report.per_class.resize(set.class_count());

  const bool needs_bic = strategy.kind == KStrategyKind::kBic ||
                         strategy.kind == KStrategyKind::kDirichletNoise ||
                         strategy.kind == KStrategyKind::kShuffleOfBic;
  if (needs_bic) {
    for (int c = 0; c < set.class_count(); ++c) {
      const Matrix x = set.class_features(c);
      if (x.rows() == 0) throw InputError("class " + std::to_string(c) + " has no samples");
      GmmOptions options;
      options.cov_kind = config.cov_kind;
      options.seed = derive_seed(seed, Stage::kGmm, static_cast<std::uint64_t>(c));
      options.restarts = config.gmm_restarts;
      options.max_iters = config.gmm_max_iters;
      options.tol = config.gmm_tol;
      KSelection sel;
      try {
        sel = select_k(x, config.k_candidates, options);
      } catch (const InputError& e) {
        throw InputError("class " + std::to_string(c) + ": " + e.what());
      }
      report.per_class[c].bic_k = sel.best_k;
      report.per_class[c].k = sel.best_k;
      report.per_class[c].trace = std::move(sel.trace);
    }
  }

  const std::uint64_t stream = derive_seed(seed, Stage::kKAssignment);
  std::vector<int> bic_ks;
  for (const auto& c : report.per_class) bic_ks.push_back(c.bic_k);
  switch (strategy.kind) {
    case KStrategyKind::kBic:
      break;
    case KStrategyKind::kFixed:
      for (auto& c : report.per_class) c.k = strategy.fixed_k;
      break;
    case KStrategyKind::kRandomUniform: {
      std::mt19937_64 rng(stream);
      std::uniform_int_distribution<int> draw(strategy.range_lo, strategy.range_hi);
      for (auto& c : report.per_class) c.k = draw(rng);
      break;
    }
    case KStrategyKind::kDirichletNoise: {
      const auto ks = dirichlet_perturb(bic_ks, stream);
      for (std::size_t c = 0; c < ks.size(); ++c) report.per_class[c].k = ks[c];
      break;
    }
    case KStrategyKind::kShuffleOfBic: {
      const auto ks = shuffle_counts(bic_ks, stream);
      for (std::size_t c = 0; c < ks.size(); ++c) report.per_class[c].k = ks[c];
      break;
    }
  }
  return report;
}

void to_json(nlohmann::json& j, const KSelectionReport& r) {
  nlohmann::json strategy = {{"kind", to_string(r.strategy.kind)}};
  if (r.strategy.kind == KStrategyKind::kFixed) strategy["k"] = r.strategy.fixed_k;
  if (r.strategy.kind == KStrategyKind::kRandomUniform) {
    strategy["range"] = {r.strategy.range_lo, r.strategy.range_hi};
  }
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& pc = r.per_class[c];
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& t : pc.trace) {
      if (t.bic) {
        trace.push_back({{"k", t.k}, {"bic", *t.bic}});
      } else {
        trace.push_back({{"k", t.k}, {"skipped", true}});
      }
    }
    classes.push_back({{"class", c}, {"k", pc.k}, {"bic_k", pc.bic_k}, {"trace", trace}});
  }
  j = nlohmann::json{{"strategy", strategy},
                     {"seed", r.seed},
                     {"cov_kind", to_string(r.cov_kind)},
                     {"features_normalized", r.features_normalized},
                     {"total_prototypes", r.total_prototypes()},
                     {"classes", classes}};
}

void from_json(const nlohmann::json& j, KSelectionReport& r) {
  try {
    const auto& s = j.at("strategy");
    r.strategy = KStrategy{};
    r.strategy.kind = k_strategy_from_string(s.at("kind").get<std::string>());
    if (s.contains("k")) r.strategy.fixed_k = s.at("k").get<int>();
    if (s.contains("range")) {
      r.strategy.range_lo = s.at("range").at(0).get<int>();
      r.strategy.range_hi = s.at("range").at(1).get<int>();
    }
    r.seed = j.at("seed").get<std::uint64_t>();
    r.cov_kind = cov_kind_from_string(j.at("cov_kind").get<std::string>());
    r.features_normalized = j.value("features_normalized", false);
    r.per_class.clear();
    for (const auto& c : j.at("classes")) {
      ClassKSelection pc;
      pc.k = c.at("k").get<int>();
      pc.bic_k = c.value("bic_k", 0);
      for (const auto& t : c.value("trace", nlohmann::json::array())) {
        KTraceEntry e{t.at("k").get<int>(), std::nullopt};
        if (t.contains("bic")) e.bic = t.at("bic").get<double>();
        pc.trace.push_back(e);
      }
      if (pc.k < 1) throw ConfigError("k-report class k must be >= 1");
      r.per_class.push_back(std::move(pc));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed k-report: ") + e.what());
  }
}

}  // namespace apex
