#include <doctest.h>

#include <cmath>
#include <random>

#include "apex/metrics.hpp"
#include "oracles.hpp"

using namespace apex;

namespace {

using Scores = std::vector<double>;

Scores transform(const Scores& s, double (*f)(double)) {
  Scores out;
  for (double x : s) out.push_back(f(x));
  return out;
}

Scores random_scores(std::size_t n, double shift, bool coarse, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(shift, 1);
  Scores s(n);
  // Coarse scores are rounded to force ties.
  for (double& x : s) x = coarse ? std::round(normal(rng) * 2) / 2 : normal(rng);
  return s;
}

}  // namespace

TEST_CASE("auroc examples") {
  CHECK(auroc({1, 2, 3}, {4, 5}) == 1.0);
  CHECK(auroc({1, 2, 2, 3}, {3, 2, 1, 2}) == 0.5);
  CHECK(auroc({1, 2, 3}, {2.5, 3.5}) == 5.0 / 6.0);
  CHECK(auroc({1, 2, 3}, {2.5, 3.5}) == oracle::auroc({1, 2, 3}, {2.5, 3.5}));
  CHECK(auroc({4, 5}, {1, 2, 3}, Orientation::kHigherIsId) == 1.0);
}

TEST_CASE("fpr at 95 examples") {
  CHECK(fpr_at_tpr({1, 2, 3}, {4, 5}) == 0.0);
  Scores same(20);
  for (int i = 0; i < 20; ++i) same[i] = i * 0.5;
  CHECK(fpr_at_tpr(same, same) == 0.95);

  // Threshold is the 19th smallest ID score, 18.
  Scores id(20);
  for (int i = 0; i < 20; ++i) id[i] = i;
  const Scores ood = {17.5, 18, 18.5, 19, 25, 3, 40, 18.0000001};
  CHECK(fpr_at_tpr(id, ood) == oracle::fpr_at(id, ood, 0.95));
  CHECK(fpr_at_tpr(id, ood) == 3.0 / 8.0);
}

TEST_CASE("aupr examples") {
  CHECK(aupr({1, 2, 3}, {4, 5}) == 1.0);
  for (int n : {1, 4, 9}) {
    Scores id(n);
    for (int i = 0; i < n; ++i) id[i] = i + 1;
    CHECK(aupr(id, {0.0}) == doctest::Approx(1.0 / (n + 1)).epsilon(1e-15));
  }
  const Scores id = {0.1, 0.4, 0.35, 0.8, 0.2};
  const Scores ood = {0.9, 0.3, 0.7, 0.4, 0.05};
  CHECK(std::abs(aupr(id, ood) - oracle::aupr(id, ood)) <= 1e-12);
}

TEST_CASE("metrics match brute force oracles on random instances") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> size(1, 200);
  for (int trial = 0; trial < 200; ++trial) {
    const bool coarse = trial % 2 == 0;
    const Scores id = random_scores(size(rng), 0.0, coarse, rng);
    const Scores ood = random_scores(size(rng), 0.8, coarse, rng);
    CHECK(auroc(id, ood) == doctest::Approx(oracle::auroc(id, ood)).epsilon(1e-14));
    CHECK(fpr_at_tpr(id, ood) == oracle::fpr_at(id, ood, 0.95));
    CHECK(aupr(id, ood) == doctest::Approx(oracle::aupr(id, ood)).epsilon(1e-12));
  }
}

TEST_CASE("auroc is invariant under increasing transforms") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const Scores id = random_scores(40, 0.0, trial % 2, rng);
    const Scores ood = random_scores(30, 1.0, trial % 2, rng);
    const double base = auroc(id, ood);
    auto exp_f = [](double x) { return std::exp(x); };
    auto affine = [](double x) { return 3.0 * x - 7.0; };
    CHECK(std::abs(auroc(transform(id, exp_f), transform(ood, exp_f)) - base) <= 1e-12);
    CHECK(std::abs(auroc(transform(id, affine), transform(ood, affine)) - base) <= 1e-12);
  }
}

TEST_CASE("swapping sets and orientation") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Scores id = random_scores(25, 0.0, trial % 2, rng);
    const Scores ood = random_scores(35, 0.5, trial % 2, rng);
    CHECK(std::abs(auroc(id, ood) + auroc(ood, id) - 1) <= 1e-12);
    CHECK(auroc(id, ood, Orientation::kHigherIsId) == auroc(ood, id));
  }
}

TEST_CASE("fpr is monotone in the target") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    const Scores id = random_scores(60, 0.0, trial % 2, rng);
    const Scores ood = random_scores(50, 0.7, trial % 2, rng);
    double prev = -1;
    for (int step = 1; step <= 20; ++step) {
      const double f = fpr_at_tpr(id, ood, Orientation::kLowerIsId, step / 20.0);
      CHECK(f >= prev);
      prev = f;
    }
  }
}

TEST_CASE("metrics errors and report") {
  CHECK_THROWS_AS(auroc({}, {1}), InputError);
  CHECK_THROWS_AS(fpr_at_tpr({1}, {}), InputError);
  CHECK_THROWS_AS(aupr({1, std::nan("")}, {1}), InputError);
  CHECK(orientation_from_string("higher-is-id") == Orientation::kHigherIsId);
  CHECK(std::string(to_string(Orientation::kLowerIsId)) == "lower-is-id");
  CHECK_THROWS_AS(orientation_from_string("sideways"), ConfigError);

  const ScoreReport r = evaluate({1, 2, 3}, {4, 5});
  CHECK(r.auroc == 1.0);
  CHECK(r.fpr_at_95 == 0.0);
  CHECK(r.aupr == 1.0);
  const nlohmann::json j = r;
  CHECK(j.at("fpr@95") == 0.0);
  CHECK(j.at("n_id") == 3);
  CHECK(j.at("n_ood") == 2);
  CHECK(j.at("orientation") == "lower-is-id");
  const ScoreReport same = evaluate({1, 1, 1}, {1, 1});
  CHECK(same.auroc == 0.5);
}
