#include "apex/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace apex {

namespace {

constexpr double kMaxMeanCosine = 0.3;
constexpr std::uint64_t kMeanStream = 0xFFFF;
constexpr std::uint64_t kOodStream = 0x10000;

double sample_beta(double a, double b, std::mt19937_64& rng) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

Vector gaussian_vector(Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = normal(rng);
  return v;
}

Vector random_unit(Eigen::Index d, std::mt19937_64& rng) {
  for (;;) {
    Vector v = gaussian_vector(d, rng);
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

// Random unit means with pairwise cosine at most kMaxMeanCosine.
std::vector<Vector> separated_means(int count, int d, std::mt19937_64& rng) {
  std::vector<Vector> means;
  int attempts = 0;
  while (static_cast<int>(means.size()) < count) {
    if (++attempts > 100000) throw InputError("cannot place separated means in dimension " + std::to_string(d));
    Vector v = random_unit(d, rng);
    const bool ok = std::all_of(means.begin(), means.end(), [&](const Vector& m) { return m.dot(v) <= kMaxMeanCosine; });
    if (ok) means.push_back(std::move(v));
  }
  return means;
}

void validate_components(const std::vector<VmfComponent>& comps, int d, const std::string& owner) {
  if (comps.empty()) throw InputError(owner + " has no components");
  for (std::size_t j = 0; j < comps.size(); ++j) {
    const auto& c = comps[j];
    const std::string where = owner + " component " + std::to_string(j);
    if (!(c.kappa >= 0) || !std::isfinite(c.kappa)) throw InputError(where + ": kappa must be >= 0");
    if (c.n < 1) throw InputError(where + ": sample count must be >= 1");
    if (c.kappa > 0 || c.mean.size() > 0) {
      if (c.mean.size() != d) throw InputError(where + ": mean has dimension " + std::to_string(c.mean.size()));
      if (std::abs(c.mean.norm() - 1.0) > kUnitNormTolerance) throw InputError(where + ": mean is not unit-norm");
    }
  }
}

VmfComponent component_from_json(const nlohmann::json& j) {
  VmfComponent c;
  c.kappa = j.value("kappa", 0.0);
  c.n = j.at("n").get<int>();
  if (j.contains("mean")) {
    const auto m = j.at("mean").get<std::vector<double>>();
    c.mean = Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
  }
  return c;
}

nlohmann::json component_to_json(const VmfComponent& c) {
  nlohmann::json j = {{"kappa", c.kappa}, {"n", c.n}};
  if (c.mean.size() > 0) j["mean"] = std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size());
  return j;
}

Matrix sample_component(const VmfComponent& c, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  if (c.kappa == 0) return sample_uniform_sphere(d, c.n, rng);
  return sample_vmf(c.mean, c.kappa, c.n, rng);
}

}  // namespace

Matrix sample_uniform_sphere(Eigen::Index d, Eigen::Index n, std::mt19937_64& rng) {
  if (d < 2) throw InputError("sphere dimension must be >= 2");
  Matrix out(n, d);
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = random_unit(d, rng).transpose();
  return out;
}

Matrix sample_vmf(const Vector& mean, double kappa, Eigen::Index n, std::mt19937_64& rng) {
  const Eigen::Index d = mean.size();
  if (d < 2) throw InputError("vMF mean must have dimension >= 2");
  if (std::abs(mean.norm() - 1.0) > kUnitNormTolerance) throw InputError("vMF mean is not unit-norm");
  if (!(kappa >= 0) || !std::isfinite(kappa)) throw InputError("vMF kappa must be finite and >= 0");
  if (n < 0) throw InputError("vMF sample count must be >= 0");
  if (kappa == 0) return sample_uniform_sphere(d, n, rng);

  const double dm1 = static_cast<double>(d - 1);
  const double b = dm1 / (2 * kappa + std::sqrt(4 * kappa * kappa + dm1 * dm1));
  const double x0 = (1 - b) / (1 + b);
  const double c = kappa * x0 + dm1 * std::log(1 - x0 * x0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Matrix out(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    double w = 0;
    for (;;) {
      const double z = sample_beta(dm1 / 2, dm1 / 2, rng);
      w = (1 - (1 + b) * z) / (1 - (1 - b) * z);
      const double u = unif(rng);
      if (kappa * w + dm1 * std::log(1 - x0 * w) - c >= std::log(u)) break;
    }
    Vector v;
    for (;;) {
      v = gaussian_vector(d, rng);
      v -= v.dot(mean) * mean;
      const double vn = v.norm();
      if (vn > 1e-12) {
        v /= vn;
        break;
      }
    }
    Vector x = w * mean + std::sqrt(std::max(0.0, 1 - w * w)) * v;
    out.row(i) = (x / x.norm()).transpose();
  }
  return out;
}

Matrix sample_vmf(const Vector& mean, double kappa, Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_vmf(mean, kappa, n, rng);
}

void BenchmarkSpec::validate() const {
  if (dimension < 2) throw InputError("benchmark dimension must be >= 2");
  if (classes.empty()) throw InputError("benchmark needs at least one class");
  for (std::size_t c = 0; c < classes.size(); ++c) {
    validate_components(classes[c].components, dimension, "class " + std::to_string(c));
  }
  for (const auto& o : ood) validate_components(o.components, dimension, "ood set '" + o.name + "'");
}

void to_json(nlohmann::json& j, const BenchmarkSpec& s) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : s.classes) {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& comp : c.components) comps.push_back(component_to_json(comp));
    classes.push_back({{"name", c.name}, {"components", comps}});
  }
  nlohmann::json ood = nlohmann::json::array();
  for (const auto& o : s.ood) {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& comp : o.components) comps.push_back(component_to_json(comp));
    ood.push_back({{"name", o.name}, {"components", comps}});
  }
  j = {{"dimension", s.dimension}, {"seed", s.seed}, {"classes", classes}, {"ood", ood}};
}

void from_json(const nlohmann::json& j, BenchmarkSpec& s) {
  if (!j.is_object()) throw InputError("benchmark description must be a JSON object");
  const std::uint64_t seed = j.value("seed", std::uint64_t{0});
  if (j.contains("preset")) {
    const auto preset = j.at("preset").get<std::string>();
    if (preset == "hetero2") {
      s = hetero2_spec(seed, j.value("dimension", 16), j.value("per_component", 300));
    } else if (preset == "three-cluster") {
      s = three_cluster_spec(seed, j.value("dimension", 8), j.value("per_component", 200));
    } else {
      throw InputError("unknown benchmark preset '" + preset + "'");
    }
    return;
  }
  s = BenchmarkSpec{};
  s.dimension = j.at("dimension").get<int>();
  s.seed = seed;
  for (const auto& c : j.at("classes")) {
    ClassSpec cs;
    cs.name = c.value("name", "class" + std::to_string(s.classes.size()));
    for (const auto& comp : c.at("components")) cs.components.push_back(component_from_json(comp));
    s.classes.push_back(std::move(cs));
  }
  if (j.contains("ood")) {
    for (const auto& o : j.at("ood")) {
      OodSpec os;
      os.name = o.at("name").get<std::string>();
      for (const auto& comp : o.at("components")) os.components.push_back(component_from_json(comp));
      s.ood.push_back(std::move(os));
    }
  }
}

BenchmarkSpec hetero2_spec(std::uint64_t seed, int dimension, int per_component) {
  std::mt19937_64 rng(derive_seed(seed, Stage::kSynth, kMeanStream));
  const auto means = separated_means(4, dimension, rng);
  BenchmarkSpec s;
  s.dimension = dimension;
  s.seed = seed;
  s.classes.push_back({"A", {{means[0], 50.0, per_component}}});
  s.classes.push_back({"B", {{means[1], 50.0, per_component}, {means[2], 50.0, per_component},
                             {means[3], 50.0, per_component}}});
  const Vector mean_b = (means[1] + means[2] + means[3]).normalized();
  const Vector between = (means[0] + mean_b).normalized();
  s.ood.push_back({"far", {{Vector(), 0.0, per_component}}});
  s.ood.push_back({"near", {{between, 20.0, per_component}}});
  return s;
}

BenchmarkSpec three_cluster_spec(std::uint64_t seed, int dimension, int per_component) {
  std::mt19937_64 rng(derive_seed(seed, Stage::kSynth, kMeanStream));
  const auto means = separated_means(3, dimension, rng);
  BenchmarkSpec s;
  s.dimension = dimension;
  s.seed = seed;
  ClassSpec c{"trimodal", {}};
  for (const auto& m : means) c.components.push_back({m, 50.0, per_component});
  s.classes.push_back(std::move(c));
  return s;
}

int train_count(int n) {
  if (n < 2) throw InputError("component with " + std::to_string(n) + " sample(s) cannot be split");
  return std::clamp(n * 4 / 5, 1, n - 1);
}

const EmbeddingSet& Benchmark::ood_set(const std::string& name) const {
  for (const auto& [n, set] : ood) {
    if (n == name) return set;
  }
  throw InputError("no OOD set named '" + name + "'");
}

Benchmark generate(const BenchmarkSpec& spec) {
  spec.validate();
  const int d = spec.dimension;
  const int classes = static_cast<int>(spec.classes.size());
  Benchmark out;
  out.seed = spec.seed;

  std::vector<Matrix> train_blocks, test_blocks;
  std::vector<int> train_labels, test_labels;
  Eigen::Index n_train = 0, n_test = 0;
  for (int c = 0; c < classes; ++c) {
    const auto& comps = spec.classes[c].components;
    out.components_per_class.push_back(static_cast<int>(comps.size()));
    out.class_names.push_back(spec.classes[c].name);
    for (std::size_t j = 0; j < comps.size(); ++j) {
      const int tr = train_count(comps[j].n);
      const Matrix x = sample_component(comps[j], d, derive_seed(spec.seed, Stage::kSynth, c, j));
      train_blocks.push_back(x.topRows(tr));
      test_blocks.push_back(x.bottomRows(comps[j].n - tr));
      train_labels.insert(train_labels.end(), tr, c);
      test_labels.insert(test_labels.end(), comps[j].n - tr, c);
      n_train += tr;
      n_test += comps[j].n - tr;
    }
  }
  auto stack = [d](const std::vector<Matrix>& blocks, Eigen::Index rows) {
    Matrix m(rows, d);
    Eigen::Index r = 0;
    for (const auto& b : blocks) {
      m.middleRows(r, b.rows()) = b;
      r += b.rows();
    }
    return m;
  };
  out.id_train = EmbeddingSet(stack(train_blocks, n_train), std::move(train_labels), classes);
  out.id_test = EmbeddingSet(stack(test_blocks, n_test), std::move(test_labels), classes);

  for (std::size_t o = 0; o < spec.ood.size(); ++o) {
    std::vector<Matrix> blocks;
    Eigen::Index rows = 0;
    for (std::size_t j = 0; j < spec.ood[o].components.size(); ++j) {
      blocks.push_back(sample_component(spec.ood[o].components[j], d,
                                        derive_seed(spec.seed, Stage::kSynth, kOodStream + o, j)));
      rows += blocks.back().rows();
    }
    out.ood.emplace_back(spec.ood[o].name, EmbeddingSet(stack(blocks, rows), std::vector<int>(rows, 0), 1));
  }
  return out;
}

nlohmann::json ground_truth_json(const Benchmark& b, const std::map<std::string, std::string>& files) {
  nlohmann::json counts = nlohmann::json::object();
  for (std::size_t c = 0; c < b.components_per_class.size(); ++c) counts[std::to_string(c)] = b.components_per_class[c];
  nlohmann::json ood = nlohmann::json::array();
  for (const auto& [name, set] : b.ood) ood.push_back(name);
  return {{"seed", b.seed},
          {"components_per_class", counts},
          {"class_names", b.class_names},
          {"ood_sets", ood},
          {"n_train", b.id_train.size()},
          {"n_test", b.id_test.size()},
          {"files", files}};
}

std::map<std::string, std::filesystem::path> write_benchmark(const Benchmark& b, const std::filesystem::path& dir,
                                                             EmbeddingFormat format) {
  std::filesystem::create_directories(dir);
  const std::string ext = format == EmbeddingFormat::kCsv ? ".csv" : ".bin";
  std::map<std::string, std::filesystem::path> paths;
  std::map<std::string, std::string> names;
  auto write = [&](const std::string& key, const EmbeddingSet& set) {
    const std::string file = key + ext;
    save_embeddings(set, dir / file, format);
    paths[key] = dir / file;
    names[key] = file;
  };
  write("id_train", b.id_train);
  write("id_test", b.id_test);
  for (const auto& [name, set] : b.ood) write("ood_" + name, set);
  paths["ground_truth"] = dir / "ground_truth.json";
  std::ofstream out(paths["ground_truth"]);
  if (!out) throw InputError("cannot write " + paths["ground_truth"].string());
  out << ground_truth_json(b, names).dump(2) << '\n';
  return paths;
}

}  // namespace apex
