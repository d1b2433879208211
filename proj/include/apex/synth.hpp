#ifndef APEX_SYNTH_HPP
#define APEX_SYNTH_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "apex/core.hpp"
#include "apex/embedding_io.hpp"

/**
 * @file synth.hpp
 *
 * @brief Seeded synthetic benchmarks built from von Mises-Fisher mixtures on the unit sphere.
 */
namespace apex {

/// n i.i.d. vMF(mean, kappa) draws as rows (Wood's rejection sampler). kappa = 0 is uniform.
Matrix sample_vmf(const Vector& mean, double kappa, Eigen::Index n, std::mt19937_64& rng);
Matrix sample_vmf(const Vector& mean, double kappa, Eigen::Index n, std::uint64_t seed);

/// Uniform draws on the unit sphere S^{d-1}.
Matrix sample_uniform_sphere(Eigen::Index d, Eigen::Index n, std::mt19937_64& rng);

struct VmfComponent {
  Vector mean;  // empty when kappa == 0
  double kappa = 0;
  int n = 0;
};

struct ClassSpec {
  std::string name;
  std::vector<VmfComponent> components;
};

struct OodSpec {
  std::string name;
  std::vector<VmfComponent> components;
};

struct BenchmarkSpec {
  int dimension = 0;
  std::vector<ClassSpec> classes;
  std::vector<OodSpec> ood;
  std::uint64_t seed = 0;

  /// Throws InputError on a bad kappa, count, dimension or non-unit mean.
  void validate() const;
};

void to_json(nlohmann::json& j, const BenchmarkSpec& s);
/// Accepts either an explicit spec or {"preset": "hetero2" | "three-cluster", "seed": ...}.
void from_json(const nlohmann::json& j, BenchmarkSpec& s);

/**
 * Default benchmark: D = 16, class A with one component and class B with three (kappa 50,
 * 300 samples each). The four component means are random with pairwise cosine <= 0.3. Far OOD is
 * the uniform sphere, near OOD a kappa 20 vMF centered between the two class means.
 */
BenchmarkSpec hetero2_spec(std::uint64_t seed, int dimension = 16, int per_component = 300);

/// A single class made of three well-separated components; the K-recovery fixture.
BenchmarkSpec three_cluster_spec(std::uint64_t seed, int dimension = 8, int per_component = 200);

struct Benchmark {
  EmbeddingSet id_train;
  EmbeddingSet id_test;
  std::vector<std::pair<std::string, EmbeddingSet>> ood;  // spec order
  std::vector<int> components_per_class;
  std::vector<std::string> class_names;
  std::uint64_t seed = 0;

  const EmbeddingSet& ood_set(const std::string& name) const;
};

/// Training share of an n-sample component: floor(0.8 n) clamped to [1, n - 1].
int train_count(int n);

/// Deterministic given spec.seed. Each component is split 80/20 into train and test.
Benchmark generate(const BenchmarkSpec& spec);

/// Ground-truth sidecar: component counts per class plus file names.
nlohmann::json ground_truth_json(const Benchmark& b, const std::map<std::string, std::string>& files);

/// Writes id_train, id_test, ood_<name> and ground_truth.json into dir. Returns name -> path.
std::map<std::string, std::filesystem::path> write_benchmark(const Benchmark& b, const std::filesystem::path& dir,
                                                             EmbeddingFormat format = EmbeddingFormat::kBinary);

}  // namespace apex

#endif  // APEX_SYNTH_HPP
