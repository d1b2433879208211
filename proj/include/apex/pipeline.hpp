#ifndef APEX_PIPELINE_HPP
#define APEX_PIPELINE_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "apex/config.hpp"
#include "apex/embedding_io.hpp"
#include "apex/gmm.hpp"
#include "apex/metrics.hpp"
#include "apex/paos.hpp"
#include "apex/quality.hpp"
#include "apex/trainer.hpp"

/**
 * @file pipeline.hpp
 *
 * @brief End-to-end run: K selection, manifold training, quality audit, PAOS fit, scoring and
 * metrics. The CLI subcommands are thin wrappers over the same helpers.
 */
namespace apex {

inline constexpr const char* kToolVersion = "0.1.0";

/// Features the Gaussian statistics live on: the unit-normalized rows, or the raw rows on request.
Matrix scoring_features(const EmbeddingSet& set, const RunConfig& config);

/**
 * Per-class Conf(c). By default from the manifold's EMA quality; with instantaneous_quality, from
 * a fresh hard assignment of the (normalized) fit set against the manifold.
 */
Vector class_confidences(const PrototypeManifold& manifold, const EmbeddingSet& fit_set, const RunConfig& config);

/// Class means, shared precision and calibration denominators from the fit set.
PaosStats fit_stats(const PrototypeManifold& manifold, const EmbeddingSet& fit_set, const RunConfig& config);

struct PipelineInputs {
  EmbeddingSet id_train;
  EmbeddingSet id_test;
  std::vector<std::pair<std::string, EmbeddingSet>> ood;
  std::map<std::string, std::filesystem::path> paths;  // source files, when loaded from disk
};

/// Reads a directory written by write_benchmark (id_train, id_test, every ood_<name>).
PipelineInputs load_benchmark_dir(const std::filesystem::path& dir);

struct PipelineOptions {
  RunConfig config;
  KStrategy strategy;
  std::vector<double> alpha_sweep;  // empty: no sweep
  double collision_threshold = 1e-2;
  std::filesystem::path out_dir;    // empty: nothing is written
};

struct AlphaRow {
  double alpha = 0;
  std::string ood;
  ScoreReport metrics;
};

struct PipelineResult {
  KSelectionReport k_report;
  TrainResult train;
  std::optional<QualityReport> quality;  // empty for single-class sets
  PaosStats stats;
  std::vector<double> id_scores;
  std::vector<std::pair<std::string, ScoreReport>> metrics;  // one per OOD set
  std::vector<AlphaRow> sweep;
  nlohmann::json manifest;

  const ScoreReport& metrics_for(const std::string& ood) const;
};

PipelineResult run_pipeline(const PipelineInputs& inputs, const PipelineOptions& options);

/// Alpha sweep rows as CSV: alpha,ood,auroc,fpr@95,aupr.
void save_sweep(const std::vector<AlphaRow>& rows, const std::filesystem::path& path);

/// Writes pretty JSON followed by a newline.
void write_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace apex

#endif  // APEX_PIPELINE_HPP
