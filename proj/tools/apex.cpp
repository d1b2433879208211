#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "apex/pipeline.hpp"
#include "apex/synth.hpp"

namespace fs = std::filesystem;
using namespace apex;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau, tau_p, tau_q, lambda, alpha, beta_p, beta_q, epsilon, lr, shrinkage;
  std::optional<int> epochs, batch_size, k_max;
  std::optional<std::string> cov_kind;
  bool instantaneous = false;
  bool raw_features = false;
};

void add_seed_flag(CLI::App* app, ConfigFlags& f) {
  app->add_option("--config", f.config_path, "JSON config file (flags override it)");
  app->add_option("--seed", f.seed, "Run seed (APEX_SEED overrides)");
}

void add_selection_flags(CLI::App* app, ConfigFlags& f) {
  app->add_option("--k-max", f.k_max, "Largest candidate K")->check(CLI::PositiveNumber);
  app->add_option("--cov-kind", f.cov_kind, "diagonal or full");
}

void add_train_flags(CLI::App* app, ConfigFlags& f) {
  app->add_option("--epochs", f.epochs);
  app->add_option("--lr", f.lr);
  app->add_option("--lambda", f.lambda);
  app->add_option("--tau", f.tau);
  app->add_option("--tau-p", f.tau_p);
  app->add_option("--beta-p", f.beta_p);
  app->add_option("--beta-q", f.beta_q);
  app->add_option("--epsilon", f.epsilon);
  app->add_option("--batch-size", f.batch_size);
}

void add_score_flags(CLI::App* app, ConfigFlags& f) {
  app->add_option("--alpha", f.alpha);
  app->add_option("--tau-q", f.tau_q);
  app->add_option("--shrinkage", f.shrinkage);
  app->add_flag("--instantaneous-quality", f.instantaneous, "Conf from fresh quality instead of the EMA state");
  app->add_flag("--raw-features", f.raw_features, "Fit and score on unnormalized features");
}

std::optional<std::uint64_t> env_seed() {
  const char* env = std::getenv("APEX_SEED");
  if (env == nullptr || *env == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument(env);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("invalid config: APEX_SEED must be an unsigned integer, got '" + std::string(env) + "'");
  }
}

RunConfig resolve_config(const ConfigFlags& f) {
  RunConfig c;
  if (!f.config_path.empty()) {
    if (!fs::exists(f.config_path)) throw InputError("config not found: " + f.config_path);
    c = read_json(f.config_path).get<RunConfig>();
  }
  if (f.seed) c.seed = *f.seed;
  if (f.tau) c.tau = *f.tau;
  if (f.tau_p) c.tau_p = *f.tau_p;
  if (f.tau_q) c.tau_q = *f.tau_q;
  if (f.lambda) c.lambda_pc = *f.lambda;
  if (f.alpha) c.alpha = *f.alpha;
  if (f.beta_p) c.beta_p = *f.beta_p;
  if (f.beta_q) c.beta_q = *f.beta_q;
  if (f.epsilon) c.epsilon_ot = *f.epsilon;
  if (f.lr) c.learning_rate = *f.lr;
  if (f.shrinkage) c.shrinkage = *f.shrinkage;
  if (f.epochs) c.epochs = *f.epochs;
  if (f.batch_size) c.batch_size = *f.batch_size;
  if (f.cov_kind) c.cov_kind = cov_kind_from_string(*f.cov_kind);
  if (f.k_max) {
    c.k_candidates.clear();
    for (int k = 1; k <= *f.k_max; ++k) c.k_candidates.push_back(k);
  }
  if (f.instantaneous) c.instantaneous_quality = true;
  if (f.raw_features) c.raw_score_features = true;
  if (const auto env = env_seed()) c.seed = *env;
  c.validate();
  return c;
}

struct StrategyFlags {
  std::string kind = "bic";
  std::optional<int> k;
  std::vector<int> range;
};

void add_strategy_flags(CLI::App* app, StrategyFlags& s) {
  app->add_option("--strategy", s.kind, "bic, fixed, random-uniform, dirichlet-noise or shuffle-of-bic");
  app->add_option("--k", s.k, "K for the fixed strategy");
  app->add_option("--k-range", s.range, "LO HI for random-uniform")->expected(2);
}

KStrategy resolve_strategy(const StrategyFlags& s, const RunConfig& config) {
  KStrategy out;
  out.kind = k_strategy_from_string(s.kind);
  if (out.kind == KStrategyKind::kFixed) {
    if (!s.k) throw ConfigError("invalid config: --strategy fixed needs --k");
    out.fixed_k = *s.k;
  }
  if (s.range.size() == 2) {
    out.range_lo = s.range[0];
    out.range_hi = s.range[1];
  } else {
    out.range_lo = *std::min_element(config.k_candidates.begin(), config.k_candidates.end());
    out.range_hi = *std::max_element(config.k_candidates.begin(), config.k_candidates.end());
  }
  out.validate();
  return out;
}

std::vector<double> parse_sweep(const std::string& text) {
  std::vector<double> out;
  if (text.empty()) return out;
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::logic_error&) {
      throw ConfigError("invalid config: bad alpha sweep value '" + s + "'");
    }
  };
  // LO:HI:STEP or a comma separated list.
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw ConfigError("invalid config: alpha sweep must be LO:HI:STEP");
    const double lo = number(parts[0]), hi = number(parts[1]), step = number(parts[2]);
    if (!(step > 0) || hi < lo) throw ConfigError("invalid config: alpha sweep range is empty");
    const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
    for (int i = 0; i <= n; ++i) out.push_back(std::round((lo + i * step) * 1e12) / 1e12);
    return out;
  }
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');) out.push_back(number(p));
  return out;
}

std::vector<double> scores_of(const std::vector<PaosScore>& s) {
  std::vector<double> out;
  for (const auto& x : s) out.push_back(x.score);
  return out;
}

// --- subcommands ----------------------------------------------------------------------------

struct SynthArgs {
  std::string spec_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "bin";
};

int cmd_synth(const SynthArgs& a) {
  nlohmann::json j;
  if (!a.spec_path.empty()) {
    if (!fs::exists(a.spec_path)) throw InputError("spec not found: " + a.spec_path);
    j = read_json(a.spec_path);
  } else {
    j = {{"preset", a.preset.empty() ? "hetero2" : a.preset}};
  }
  if (!j.is_object()) throw InputError("benchmark description must be a JSON object");
  if (a.seed) j["seed"] = *a.seed;
  if (const auto env = env_seed()) j["seed"] = *env;
  BenchmarkSpec spec;
  try {
    spec = j.get<BenchmarkSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("invalid benchmark description: " + std::string(e.what()));
  }
  if (a.format != "csv" && a.format != "bin") throw ConfigError("invalid config: --format must be bin or csv");
  const auto format = a.format == "csv" ? EmbeddingFormat::kCsv : EmbeddingFormat::kBinary;
  const auto paths = write_benchmark(generate(spec), a.out, format);
  for (const auto& [key, p] : paths) std::cout << key << ": " << p.string() << '\n';
  return 0;
}

struct SelectArgs {
  std::string embeddings, out;
  ConfigFlags cfg;
  StrategyFlags strategy;
};

int cmd_select_k(const SelectArgs& a) {
  const RunConfig config = resolve_config(a.cfg);
  const KStrategy strategy = resolve_strategy(a.strategy, config);
  const EmbeddingSet set = load_embeddings(a.embeddings);
  const KSelectionReport report = assign_k_all_classes(set, config, strategy, config.seed);
  write_json(report, a.out);
  std::cout << "k_map:";
  for (int k : report.k_map()) std::cout << ' ' << k;
  std::cout << '\n';
  return 0;
}

struct TrainArgs {
  std::string embeddings, k_report, out, trace;
  ConfigFlags cfg;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig config = resolve_config(a.cfg);
  const EmbeddingSet set = normalize_rows(load_embeddings(a.embeddings));
  if (!fs::exists(a.k_report)) throw InputError("k-report not found: " + a.k_report);
  KSelectionReport report;
  try {
    report = read_json(a.k_report).get<KSelectionReport>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("invalid k-report " + a.k_report + ": " + e.what());
  }
  if (static_cast<int>(report.per_class.size()) != set.class_count()) {
    throw InputError("k-report covers " + std::to_string(report.per_class.size()) + " classes, embeddings have " +
                     std::to_string(set.class_count()));
  }
  const TrainResult result = toy_train(set, report, config);
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_manifold(result.manifold, out, {{"seed", config.seed}, {"config", config}});
  const fs::path trace = a.trace.empty() ? out.parent_path() / (out.stem().string() + ".trace.csv") : fs::path(a.trace);
  save_loss_trace(result.trace, trace);
  if (!result.trace.empty()) {
    std::cout << "l_total: " << result.trace.front().l_total << " -> " << result.trace.back().l_total << '\n';
  }
  return 0;
}

struct QualityArgs {
  std::string manifold, embeddings, out;
  double threshold = 1e-2;
};

int cmd_quality(const QualityArgs& a) {
  const PrototypeManifold m = load_manifold(a.manifold);
  const EmbeddingSet set = normalize_rows(load_embeddings(a.embeddings));
  if (set.class_count() != m.class_count() || set.dim() != m.dim()) {
    throw InputError("embeddings do not match the manifold's classes or dimension");
  }
  const QualityReport report = collision_report(m, set, a.threshold);
  write_json(report, a.out);
  std::cout << "colliding pairs: " << report.colliding_pairs.size() << ", min q_s: " << report.min_q_s << '\n';
  return 0;
}

struct ScoreArgs {
  std::string manifold, stats, fit, out, id, sweep;
  std::vector<std::string> tests;
  ConfigFlags cfg;
};

int cmd_score(const ScoreArgs& a) {
  const RunConfig config = resolve_config(a.cfg);
  PaosStats stats;
  if (!a.stats.empty()) {
    stats = load_stats(a.stats);
    if (a.cfg.alpha) stats = with_alpha(stats, config.alpha);
  } else {
    if (a.manifold.empty() || a.fit.empty()) throw ConfigError("invalid config: score needs --stats or --manifold with --fit");
    stats = fit_stats(load_manifold(a.manifold), load_embeddings(a.fit), config);
  }
  const fs::path dir(a.out);
  fs::create_directories(dir);
  if (a.stats.empty()) save_stats(stats, dir / "stats.json");
  for (const auto& t : a.tests) {
    const EmbeddingSet set = load_embeddings(t);
    save_scores(score_batch(scoring_features(set, config), stats), dir / ("scores_" + fs::path(t).stem().string() + ".csv"));
  }
  const std::vector<double> alphas = parse_sweep(a.sweep);
  if (!alphas.empty()) {
    if (a.id.empty()) throw ConfigError("invalid config: --alpha-sweep needs --id to name the in-distribution test set");
    const Matrix id_h = scoring_features(load_embeddings(a.id), config);
    std::vector<std::pair<std::string, Matrix>> ood;
    for (const auto& t : a.tests) {
      if (fs::path(t) != fs::path(a.id)) ood.emplace_back(fs::path(t).stem().string(), scoring_features(load_embeddings(t), config));
    }
    if (ood.empty()) throw ConfigError("invalid config: --alpha-sweep needs at least one OOD --test besides --id");
    std::vector<AlphaRow> rows;
    for (double alpha : alphas) {
      const PaosStats s = with_alpha(stats, alpha);
      const auto id_scores = scores_of(score_batch(id_h, s));
      for (const auto& [name, h] : ood) rows.push_back({alpha, name, evaluate(id_scores, scores_of(score_batch(h, s)))});
    }
    save_sweep(rows, dir / "alpha_sweep.csv");
  }
  return 0;
}

struct EvalArgs {
  std::string id_scores, ood_scores, orientation = "lower-is-id", out;
};

int cmd_eval(const EvalArgs& a) {
  const ScoreReport r =
      evaluate(load_score_column(a.id_scores), load_score_column(a.ood_scores), orientation_from_string(a.orientation));
  const nlohmann::json j = r;
  if (a.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(j, a.out);
  }
  return 0;
}

struct PipelineArgs {
  std::string spec_path, preset, data, out, sweep;
  double threshold = 1e-2;
  ConfigFlags cfg;
  StrategyFlags strategy;
};

int cmd_pipeline(const PipelineArgs& a) {
  const RunConfig config = resolve_config(a.cfg);
  const KStrategy strategy = resolve_strategy(a.strategy, config);
  const fs::path out(a.out);
  fs::path data_dir;
  if (!a.data.empty()) {
    data_dir = a.data;
  } else {
    BenchmarkSpec spec;
    if (!a.spec_path.empty()) {
      if (!fs::exists(a.spec_path)) throw InputError("spec not found: " + a.spec_path);
      try {
        spec = read_json(a.spec_path).get<BenchmarkSpec>();
      } catch (const nlohmann::json::exception& e) {
        throw InputError("invalid benchmark description " + a.spec_path + ": " + e.what());
      }
    } else {
      spec = nlohmann::json{{"preset", a.preset.empty() ? "hetero2" : a.preset}, {"seed", config.seed}}
                 .get<BenchmarkSpec>();
    }
    data_dir = out / "data";
    write_benchmark(generate(spec), data_dir);
  }
  PipelineOptions options;
  options.config = config;
  options.strategy = strategy;
  options.alpha_sweep = parse_sweep(a.sweep);
  options.collision_threshold = a.threshold;
  options.out_dir = out;
  const PipelineResult r = run_pipeline(load_benchmark_dir(data_dir), options);
  for (const auto& [name, m] : r.metrics) {
    std::cout << name << ": auroc " << m.auroc << ", fpr@95 " << m.fpr_at_95 << ", aupr " << m.aupr << '\n';
  }
  std::cout << "manifest: " << (out / "manifest.json").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"apex: adaptive prototype manifolds and posterior-aware OOD scoring"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic benchmark");
  s->add_option("--spec", synth.spec_path, "Benchmark description JSON");
  s->add_option("--preset", synth.preset, "hetero2 or three-cluster (when no --spec)");
  s->add_option("--seed", synth.seed);
  s->add_option("--format", synth.format, "bin or csv");
  s->add_option("--out", synth.out, "Output directory")->required();

  SelectArgs select;
  auto* k = app.add_subcommand("select-k", "Assign a prototype count to every class");
  k->add_option("--embeddings", select.embeddings)->required();
  k->add_option("--out", select.out)->required();
  add_seed_flag(k, select.cfg);
  add_selection_flags(k, select.cfg);
  add_strategy_flags(k, select.strategy);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train the prototype manifold");
  t->add_option("--embeddings", train.embeddings)->required();
  t->add_option("--k-report", train.k_report)->required();
  t->add_option("--out", train.out, "Manifold checkpoint JSON")->required();
  t->add_option("--trace", train.trace, "Loss trace CSV (default <out stem>.trace.csv)");
  add_seed_flag(t, train.cfg);
  add_train_flags(t, train.cfg);

  QualityArgs quality;
  auto* q = app.add_subcommand("quality", "Prototype quality and collision report");
  q->add_option("--manifold", quality.manifold)->required();
  q->add_option("--embeddings", quality.embeddings)->required();
  q->add_option("--threshold", quality.threshold);
  q->add_option("--out", quality.out)->required();

  ScoreArgs score;
  auto* sc = app.add_subcommand("score", "Posterior-aware OOD scores");
  sc->add_option("--manifold", score.manifold);
  sc->add_option("--stats", score.stats, "Saved stats checkpoint instead of fitting");
  sc->add_option("--fit", score.fit, "Labeled embeddings for the Gaussian statistics");
  sc->add_option("--test", score.tests, "Embeddings to score (repeatable)");
  sc->add_option("--id", score.id, "In-distribution test set for --alpha-sweep");
  sc->add_option("--alpha-sweep", score.sweep, "LO:HI:STEP or a comma separated list");
  sc->add_option("--out", score.out, "Output directory")->required();
  add_seed_flag(sc, score.cfg);
  add_score_flags(sc, score.cfg);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "FPR@95, AUROC and AUPR from score files");
  e->add_option("--id-scores", eval.id_scores)->required();
  e->add_option("--ood-scores", eval.ood_scores)->required();
  e->add_option("--orientation", eval.orientation, "lower-is-id or higher-is-id");
  e->add_option("--out", eval.out, "Metrics JSON (default stdout)");

  PipelineArgs pipe;
  auto* p = app.add_subcommand("pipeline", "Run every stage end to end");
  p->add_option("--spec", pipe.spec_path, "Benchmark description JSON");
  p->add_option("--preset", pipe.preset, "hetero2 or three-cluster");
  p->add_option("--data", pipe.data, "Directory written by synth instead of generating");
  p->add_option("--alpha-sweep", pipe.sweep, "LO:HI:STEP or a comma separated list");
  p->add_option("--threshold", pipe.threshold, "Collision threshold");
  p->add_option("--out", pipe.out, "Output directory")->required();
  add_seed_flag(p, pipe.cfg);
  add_selection_flags(p, pipe.cfg);
  add_train_flags(p, pipe.cfg);
  add_score_flags(p, pipe.cfg);
  add_strategy_flags(p, pipe.strategy);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*k) return cmd_select_k(select);
    if (*t) return cmd_train(train);
    if (*q) return cmd_quality(quality);
    if (*sc) return cmd_score(score);
    if (*e) return cmd_eval(eval);
    if (*p) return cmd_pipeline(pipe);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return err.kind() == ErrorKind::kNumerical ? kExitNumerical : kExitUsage;
  } catch (const nlohmann::json::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
