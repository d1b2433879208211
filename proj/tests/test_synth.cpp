#include <doctest.h>

#include <random>

#include "apex/synth.hpp"
#include "support.hpp"

using namespace apex;

namespace {

Vector unit(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out.normalized();
}

double max_norm_error(const Matrix& m) { return (m.rowwise().norm().array() - 1).abs().maxCoeff(); }

BenchmarkSpec one_component(int n) {
  BenchmarkSpec s;
  s.dimension = 3;
  s.seed = 4;
  s.classes.push_back({"a", {{unit({1, 0, 0}), 50, n}}});
  return s;
}

}  // namespace

TEST_CASE("kappa zero is uniform") {
  const Matrix z = sample_vmf(unit({0, 0, 1}), 0.0, 10000, std::uint64_t{1});
  CHECK(z.colwise().mean().norm() < 0.05);
  CHECK(max_norm_error(z) <= 1e-9);
}

TEST_CASE("large kappa concentrates around the mean") {
  const Vector mu = unit({1, 2, -1, 0.5});
  const Matrix z = sample_vmf(mu, 500, 1000, std::uint64_t{2});
  CHECK((z * mu).mean() > 0.99);
  CHECK(max_norm_error(z) <= 1e-9);
}

TEST_CASE("vMF mean resultant length matches theory") {
  // In D = 3 the expected cosine is coth(kappa) - 1 / kappa.
  const Vector mu = unit({0, 1, 0});
  for (double kappa : {1.0, 5.0, 20.0}) {
    const Matrix z = sample_vmf(mu, kappa, 20000, std::uint64_t{3});
    const double want = 1.0 / std::tanh(kappa) - 1.0 / kappa;
    CHECK(std::abs((z * mu).mean() - want) < 0.01);
  }
}

TEST_CASE("single draws and bad means") {
  for (double kappa : {0.0, 1.0, 1e4}) {
    const Matrix z = sample_vmf(unit({1, 1}), kappa, 1, std::uint64_t{5});
    CHECK(z.rows() == 1);
    CHECK(std::abs(z.row(0).norm() - 1) <= 1e-9);
  }
  Vector bad(2);
  bad << 1, 1;
  CHECK_THROWS_AS(sample_vmf(bad, 10, 3, std::uint64_t{0}), InputError);
  CHECK_THROWS_AS(sample_vmf(unit({1, 0}), -1, 3, std::uint64_t{0}), InputError);
}

TEST_CASE("uniform sphere resultant bound") {
  int within = 0;
  const int n = 2000;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix z = sample_uniform_sphere(16, n, rng);
    within += z.colwise().mean().norm() <= 3.0 / std::sqrt(static_cast<double>(n)) ? 1 : 0;
  }
  CHECK(within == 20);
}

TEST_CASE("train and test split") {
  CHECK(train_count(10) == 8);
  CHECK(train_count(2) == 1);
  CHECK(train_count(3) == 2);
  CHECK_THROWS_AS(train_count(1), InputError);

  const Benchmark b = generate(one_component(10));
  CHECK(b.id_train.size() == 8);
  CHECK(b.id_test.size() == 2);
  CHECK_THROWS_AS(generate(one_component(1)), InputError);
}

TEST_CASE("hetero2 layout and ground truth") {
  const BenchmarkSpec spec = hetero2_spec(7);
  CHECK_NOTHROW(spec.validate());
  std::vector<Vector> means = {spec.classes[0].components[0].mean};
  for (const auto& c : spec.classes[1].components) means.push_back(c.mean);
  REQUIRE(means.size() == 4);
  for (std::size_t i = 0; i < means.size(); ++i) {
    for (std::size_t j = i + 1; j < means.size(); ++j) CHECK(means[i].dot(means[j]) <= 0.3);
  }

  const Benchmark b = generate(spec);
  CHECK(b.components_per_class == std::vector<int>{1, 3});
  CHECK(b.id_train.size() == 4 * 240);
  CHECK(b.id_test.size() == 4 * 60);
  CHECK(b.id_train.class_sizes() == std::vector<int>{240, 720});
  CHECK(max_norm_error(b.id_train.features()) <= 1e-9);
  CHECK(max_norm_error(b.ood_set("far").features()) <= 1e-9);
  CHECK(max_norm_error(b.ood_set("near").features()) <= 1e-9);
  CHECK(b.ood_set("far").class_count() == 1);
  CHECK_THROWS_AS(b.ood_set("missing"), InputError);

  const nlohmann::json gt = ground_truth_json(b, {});
  CHECK(gt.at("components_per_class") == nlohmann::json({{"0", 1}, {"1", 3}}));
}

TEST_CASE("generation is byte deterministic") {
  support::TempDir dir("synth");
  const BenchmarkSpec spec = three_cluster_spec(3);
  const auto first = write_benchmark(generate(spec), dir / "a");
  const auto second = write_benchmark(generate(spec), dir / "b");
  REQUIRE(first.size() == second.size());
  for (const auto& [name, path] : first) {
    CHECK(support::read_file(path) == support::read_file(second.at(name)));
  }
  CHECK(first.count("ground_truth") == 1);
  const Benchmark other = generate(three_cluster_spec(4));
  CHECK_FALSE(other.id_train == generate(spec).id_train);
}

TEST_CASE("benchmark description json") {
  const BenchmarkSpec spec = hetero2_spec(2);
  const nlohmann::json j = spec;
  const BenchmarkSpec back = j.get<BenchmarkSpec>();
  CHECK(back.dimension == 16);
  CHECK(back.classes.size() == 2);
  CHECK(back.ood.size() == 2);
  CHECK(back.seed == 2);

  const BenchmarkSpec preset = nlohmann::json({{"preset", "hetero2"}, {"seed", 2}}).get<BenchmarkSpec>();
  CHECK(nlohmann::json(preset) == j);
  CHECK_THROWS_AS(nlohmann::json({{"preset", "nine-cluster"}}).get<BenchmarkSpec>(), InputError);

  BenchmarkSpec bad = one_component(10);
  bad.classes[0].components[0].kappa = -2;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = one_component(10);
  bad.classes[0].components[0].mean = Vector::Ones(3);
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = one_component(10);
  bad.classes[0].components[0].n = 0;
  CHECK_THROWS_AS(bad.validate(), InputError);
}
