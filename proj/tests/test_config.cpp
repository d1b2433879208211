#include <doctest.h>

#include "apex/config.hpp"

using namespace apex;

TEST_CASE("config defaults validate") {
  const RunConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.alpha == 0.5);
  CHECK(c.tau_q == 1.0);
  CHECK(c.beta_p == 0.01);
  CHECK(c.quality_momentum() == c.beta_p);
  CHECK(c.epsilon_ot == 0.05);
  CHECK(c.cov_kind == CovKind::kDiagonal);
  CHECK(c.k_candidates.front() == 1);
  CHECK(c.k_candidates.back() == 10);
}

TEST_CASE("config rejects invalid values") {
  auto bad = [](auto mutate) {
    RunConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  bad([](RunConfig& c) { c.tau = 0; });
  bad([](RunConfig& c) { c.tau_p = -1; });
  bad([](RunConfig& c) { c.tau_q = 0; });
  bad([](RunConfig& c) { c.lambda_pc = -0.1; });
  bad([](RunConfig& c) { c.alpha = -1; });
  bad([](RunConfig& c) { c.beta_p = 1.5; });
  bad([](RunConfig& c) { c.epsilon_ot = 0; });
  bad([](RunConfig& c) { c.k_candidates.clear(); });
  bad([](RunConfig& c) { c.k_candidates = {0, 1}; });
  bad([](RunConfig& c) { c.epochs = -1; });
}

TEST_CASE("config json round trip") {
  RunConfig c;
  c.tau = 0.25;
  c.seed = 0xFFFFFFFFFFFFFFFFULL;
  c.cov_kind = CovKind::kFull;
  c.k_candidates = {2, 4};
  c.instantaneous_quality = true;
  const nlohmann::json j = c;
  const RunConfig back = j.get<RunConfig>();
  CHECK(back.tau == 0.25);
  CHECK(back.seed == c.seed);
  CHECK(back.cov_kind == CovKind::kFull);
  CHECK(back.k_candidates == std::vector<int>{2, 4});
  CHECK(back.instantaneous_quality);
  CHECK(nlohmann::json(back) == j);
}

TEST_CASE("config json rejects unknown keys and bad types") {
  CHECK_THROWS_AS(nlohmann::json({{"taux", 1.0}}).get<RunConfig>(), ConfigError);
  CHECK_THROWS_AS(nlohmann::json({{"tau", "fast"}}).get<RunConfig>(), ConfigError);
  CHECK_THROWS_AS(nlohmann::json({{"cov_kind", "spherical"}}).get<RunConfig>(), ConfigError);
  CHECK(nlohmann::json({{"lambda", 0.0}}).get<RunConfig>().lambda_pc == 0.0);
}
