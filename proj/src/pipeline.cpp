#include "apex/pipeline.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>

namespace apex {

namespace {

std::vector<double> score_values(const Matrix& features, const PaosStats& stats) {
  std::vector<double> out;
  for (const auto& s : score_batch(features, stats)) out.push_back(s.score);
  return out;
}

std::string shortest(double v) {
  std::array<char, 32> buf;
  const auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), p);
}

}  // namespace

Matrix scoring_features(const EmbeddingSet& set, const RunConfig& config) {
  return config.raw_score_features ? set.features() : normalized_rows(set.features());
}

Vector class_confidences(const PrototypeManifold& manifold, const EmbeddingSet& fit_set, const RunConfig& config) {
  if (!config.instantaneous_quality) return manifold_confidence(manifold, config.tau_q);
  if (manifold.class_count() < 2) throw InputError("instantaneous quality needs at least two classes");
  const FreshQuality fresh = fresh_quality(normalized_rows(fit_set.features()), fit_set.labels(), manifold);
  std::vector<Vector> q;
  for (int c = 0; c < manifold.class_count(); ++c) q.push_back(fresh.cohesion[c] + fresh.separation[c]);
  return confidence_from_quality(q, config.tau_q);
}

PaosStats fit_stats(const PrototypeManifold& manifold, const EmbeddingSet& fit_set, const RunConfig& config) {
  if (fit_set.class_count() != manifold.class_count()) {
    throw InputError("fit set has " + std::to_string(fit_set.class_count()) + " classes, manifold has " +
                     std::to_string(manifold.class_count()));
  }
  if (fit_set.dim() != manifold.dim()) throw InputError("fit set dimension does not match the manifold");
  const EmbeddingSet h(scoring_features(fit_set, config), fit_set.labels(), fit_set.class_count());
  FitOptions options;
  options.shrinkage = config.shrinkage;
  return fit_gaussian_stats(h, class_confidences(manifold, fit_set, config), config.alpha, config.tau_q, options);
}

PipelineInputs load_benchmark_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InputError("benchmark directory not found: " + dir.string());
  PipelineInputs in;
  auto find = [&](const std::string& stem) -> std::filesystem::path {
    for (const char* ext : {".bin", ".csv"}) {
      const auto p = dir / (stem + ext);
      if (std::filesystem::exists(p)) return p;
    }
    throw InputError("missing " + stem + " in " + dir.string());
  };
  in.paths["id_train"] = find("id_train");
  in.paths["id_test"] = find("id_test");
  in.id_train = load_embeddings(in.paths["id_train"]);
  in.id_test = load_embeddings(in.paths["id_test"]);

  std::vector<std::filesystem::path> ood_files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    const auto ext = entry.path().extension().string();
    if (name.rfind("ood_", 0) == 0 && (ext == ".bin" || ext == ".csv")) ood_files.push_back(entry.path());
  }
  std::sort(ood_files.begin(), ood_files.end());
  for (const auto& p : ood_files) {
    const std::string name = p.stem().string().substr(4);
    in.paths["ood_" + name] = p;
    in.ood.emplace_back(name, load_embeddings(p));
  }
  return in;
}

const ScoreReport& PipelineResult::metrics_for(const std::string& ood) const {
  for (const auto& [name, r] : metrics) {
    if (name == ood) return r;
  }
  throw InputError("no metrics for OOD set '" + ood + "'");
}

PipelineResult run_pipeline(const PipelineInputs& inputs, const PipelineOptions& options) {
  const RunConfig& config = options.config;
  config.validate();
  options.strategy.validate();
  if (inputs.id_test.dim() != inputs.id_train.dim()) throw InputError("id_test dimension does not match id_train");

  const EmbeddingSet train = normalize_rows(inputs.id_train);
  PipelineResult r;
  r.k_report = assign_k_all_classes(inputs.id_train, config, options.strategy, config.seed);
  r.train = toy_train(train, r.k_report, config);
  if (train.class_count() >= 2) r.quality = collision_report(r.train.manifold, train, options.collision_threshold);

  r.stats = fit_stats(r.train.manifold, inputs.id_train, config);
  const Matrix id_h = scoring_features(inputs.id_test, config);
  r.id_scores = score_values(id_h, r.stats);
  std::vector<Matrix> ood_h;
  for (const auto& [name, set] : inputs.ood) {
    if (set.dim() != inputs.id_train.dim()) throw InputError("OOD set '" + name + "' has the wrong dimension");
    ood_h.push_back(scoring_features(set, config));
    r.metrics.emplace_back(name, evaluate(r.id_scores, score_values(ood_h.back(), r.stats)));
  }
  for (double alpha : options.alpha_sweep) {
    const PaosStats s = with_alpha(r.stats, alpha);
    const std::vector<double> id = score_values(id_h, s);
    for (std::size_t o = 0; o < inputs.ood.size(); ++o) {
      r.sweep.push_back({alpha, inputs.ood[o].first, evaluate(id, score_values(ood_h[o], s))});
    }
  }

  nlohmann::json files = nlohmann::json::object();
  nlohmann::json input_files = nlohmann::json::object();
  for (const auto& [k, p] : inputs.paths) input_files[k] = p.string();
  r.manifest = {{"tool", "apex"},
                {"version", kToolVersion},
                {"seed", config.seed},
                {"strategy", to_string(options.strategy.kind)},
                {"config", config},
                {"inputs", input_files}};
  if (options.out_dir.empty()) return r;

  const auto& dir = options.out_dir;
  std::filesystem::create_directories(dir);
  auto record = [&](const std::string& key, const std::string& file) { files[key] = file; };

  write_json(r.k_report, dir / "k_report.json");
  record("k_report", "k_report.json");
  save_manifold(r.train.manifold, dir / "manifold.json", {{"seed", config.seed}, {"config", config}});
  record("manifold", "manifold.json");
  record("manifold_prototypes", "manifold.prototypes.bin");
  record("manifold_quality", "manifold.quality.bin");
  save_loss_trace(r.train.trace, dir / "loss_trace.csv");
  record("loss_trace", "loss_trace.csv");
  save_embeddings(EmbeddingSet(r.train.embeddings, train.labels(), train.class_count()), dir / "train_embeddings.bin");
  record("train_embeddings", "train_embeddings.bin");
  if (r.quality) {
    write_json(*r.quality, dir / "quality.json");
    record("quality", "quality.json");
  }
  save_stats(r.stats, dir / "stats.json");
  record("stats", "stats.json");
  record("stats_means", "stats.means.bin");
  record("stats_precision", "stats.precision.bin");

  std::vector<PaosScore> id_rows = score_batch(id_h, r.stats);
  save_scores(id_rows, dir / "scores_id_test.csv");
  record("scores_id_test", "scores_id_test.csv");
  for (std::size_t o = 0; o < inputs.ood.size(); ++o) {
    const std::string& name = inputs.ood[o].first;
    save_scores(score_batch(ood_h[o], r.stats), dir / ("scores_ood_" + name + ".csv"));
    record("scores_ood_" + name, "scores_ood_" + name + ".csv");
    write_json(r.metrics[o].second, dir / ("metrics_" + name + ".json"));
    record("metrics_" + name, "metrics_" + name + ".json");
  }
  if (!r.sweep.empty()) {
    save_sweep(r.sweep, dir / "alpha_sweep.csv");
    record("alpha_sweep", "alpha_sweep.csv");
  }
  r.manifest["files"] = files;
  write_json(r.manifest, dir / "manifest.json");
  return r;
}

void save_sweep(const std::vector<AlphaRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "alpha,ood,auroc,fpr@95,aupr\n";
  for (const auto& row : rows) {
    out << shortest(row.alpha) << ',' << row.ood << ',' << shortest(row.metrics.auroc) << ','
        << shortest(row.metrics.fpr_at_95) << ',' << shortest(row.metrics.aupr) << '\n';
  }
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path.string() + " not found");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace apex
