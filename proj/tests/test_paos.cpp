#include <doctest.h>

#include <random>

#include "apex/paos.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace apex;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

EmbeddingSet gaussian_classes(int classes, int per, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0, 1);
  Matrix x(classes * per, d);
  std::vector<int> y(classes * per);
  for (int i = 0; i < classes * per; ++i) {
    y[i] = i % classes;
    for (int j = 0; j < d; ++j) x(i, j) = normal(rng) * (1 + 0.3 * j) + 4.0 * (j == y[i] % d);
  }
  return EmbeddingSet(x, y, classes);
}

Matrix random_spd(int d, std::mt19937_64& rng) {
  const Matrix a = support::random_unit_rows(d, d, rng);
  return a * a.transpose() + 0.5 * Matrix::Identity(d, d);
}

PaosStats manual_stats(const Matrix& means, const Matrix& precision, const Vector& conf, double alpha) {
  PaosStats s;
  s.means = means;
  s.precision = precision;
  s.conf = conf;
  return with_alpha(s, alpha);
}

}  // namespace

TEST_CASE("prototype energy negates quality") {
  static_assert(prototype_energy(2.0) == -2.0);
  CHECK(prototype_energy(0.0) == 0.0);
  CHECK(prototype_energy(-0.3) == 0.3);
}

TEST_CASE("gibbs weights closed forms") {
  const Vector u = gibbs_weights(vec({0.7, 0.7, 0.7, 0.7}), 1.0);
  CHECK((u.array() - 0.25).abs().maxCoeff() <= 1e-15);
  const Vector two = gibbs_weights(vec({1, 0}), 1.0);
  const double e = std::exp(1.0);
  CHECK(two[0] == doctest::Approx(e / (e + 1)).epsilon(1e-14));
  CHECK(two[1] == doctest::Approx(1 / (e + 1)).epsilon(1e-14));
  const Vector three = gibbs_weights(vec({2, 1, 0}), 0.5);
  const auto o = oracle::gibbs({2, 1, 0}, 0.5);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(three[k] - o[k]) <= 1e-12);
}

TEST_CASE("gibbs weights sum to one and ignore a common shift") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 50; ++trial) {
    Vector q(1 + trial % 6);
    for (auto& x : q) x = u(rng);
    const double tau = 0.05 + 0.1 * (trial % 10);
    const Vector w = gibbs_weights(q, tau);
    CHECK(std::abs(w.sum() - 1) <= 1e-12);
    const Vector shifted = gibbs_weights((q.array() + u(rng)).matrix(), tau);
    CHECK((w - shifted).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("class confidence closed forms") {
  CHECK(class_confidence(vec({0.83}), 1.0) == 0.83);
  CHECK(class_confidence(vec({0.4, 0.4}), 0.5) == doctest::Approx(0.4 + 0.5 * std::log(2.0)).epsilon(1e-15));
  CHECK(std::abs(class_confidence(vec({1.5, 0.5, 0.2}), 1.0) - oracle::conf({1.5, 0.5, 0.2}, 1.0)) <= 1e-12);
}

TEST_CASE("class confidence monotonicity and low temperature limit") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 3);
  for (int trial = 0; trial < 50; ++trial) {
    Vector q(1 + trial % 5);
    for (auto& x : q) x = u(rng);
    const double base = class_confidence(q, 1.0);
    for (Eigen::Index k = 0; k < q.size(); ++k) {
      Vector up = q;
      up[k] += 0.1;
      CHECK(class_confidence(up, 1.0) > base);
    }
    CHECK(std::abs(class_confidence(q, 1e-4) - q.maxCoeff()) <= 1e-3);
  }
}

TEST_CASE("confidence from manifold quality") {
  Matrix p(2, 2);
  p << 1, 0, 0, 1;
  Matrix r(1, 2);
  r << -1, 0;
  PrototypeManifold m({p, r}, 10);
  m.quality(0).cohesion << 0.5, 0.25;
  m.quality(0).separation << 1.0, 1.0;
  m.quality(1).cohesion << 0.75;
  m.quality(1).separation << 2.0;
  const Vector conf = manifold_confidence(m, 1.0);
  CHECK(conf[0] == doctest::Approx(oracle::conf({1.5, 1.25}, 1.0)).epsilon(1e-14));
  CHECK(conf[1] == doctest::Approx(2.75).epsilon(1e-15));
  CHECK(confidence_from_quality({vec({1.5, 1.25}), vec({2.75})}, 1.0) == conf);
}

TEST_CASE("mahalanobis closed forms and oracle") {
  const Vector mu = vec({1, -2});
  CHECK(mahalanobis(mu, mu, Matrix::Identity(2, 2)) == 0.0);
  CHECK(mahalanobis(vec({3, 4}), vec({0, 0}), Matrix::Identity(2, 2)) == 25.0);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix prec = random_spd(4, rng);
    const Vector h = support::random_unit_rows(1, 4, rng).row(0).transpose() * 3;
    const Vector m = support::random_unit_rows(1, 4, rng).row(0).transpose();
    const double got = mahalanobis(h, m, prec);
    CHECK(oracle::rel_close(got, oracle::mahalanobis(oracle::to_vec(h), oracle::to_vec(m), oracle::to_mat(prec)),
                            1e-10));
    CHECK(got >= 0);
  }
  CHECK_THROWS_AS(mahalanobis(vec({1, 2, 3}), mu, Matrix::Identity(2, 2)), InputError);
}

TEST_CASE("paos score closed forms") {
  Matrix means(2, 2);
  means << 1, 0, -1, 0;
  const Matrix eye = Matrix::Identity(2, 2);
  const Vector h = vec({0, 2});  // distance 5 to both means

  const PaosStats plain = manual_stats(means, eye, vec({1, 0}), 0.0);
  CHECK(paos_score(h, plain).score == 5.0);
  CHECK(paos_score(means.row(1).transpose(), plain).score == 0.0);
  CHECK(paos_score(means.row(1).transpose(), plain).argmin_class == 1);

  const PaosStats cal = manual_stats(means, eye, vec({1, 0}), 0.5);
  CHECK(paos_score(h, cal).score == doctest::Approx(5.0 / 1.5).epsilon(1e-15));
  CHECK(paos_score(h, cal).argmin_class == 0);
  CHECK(paos_score(means.row(0).transpose(), cal).score == 0.0);
}

TEST_CASE("calibration clamps small denominators") {
  Matrix means(2, 1);
  means << 0, 10;
  const PaosStats s = manual_stats(means, Matrix::Identity(1, 1), vec({-4, 0}), 0.5);
  CHECK(s.denominators[0] == kDenominatorFloor);
  CHECK(s.clamped_classes == std::vector<int>{0});
  CHECK(paos_score(vec({1}), s).score == doctest::Approx(10.0));

  PaosStats raw;
  raw.means = means;
  raw.precision = Matrix::Identity(1, 1);
  raw.conf = vec({-4, 0});
  const PaosStats unclamped = with_alpha(raw, 0.5, false);
  CHECK(unclamped.denominators[0] == -1.0);
  CHECK_THROWS_AS(paos_score(vec({1}), unclamped), NumericalError);
  CHECK_THROWS_AS(with_alpha(raw, -0.1), ConfigError);
}

TEST_CASE("paos score matches the oracle and calibration is monotone") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const int c = 2 + trial % 3;
    const Matrix means = support::random_unit_rows(c, 3, rng) * 2;
    const Matrix prec = random_spd(3, rng);
    Vector conf(c);
    std::uniform_real_distribution<double> u(-0.5, 3);
    for (auto& x : conf) x = u(rng);
    const double alpha = 0.25 * (trial % 5);
    const PaosStats s = manual_stats(means, prec, conf, alpha);
    const Vector h = support::random_unit_rows(1, 3, rng).row(0).transpose() * 1.5;
    const PaosScore got = paos_score(h, s);
    const double want =
        oracle::paos(oracle::to_vec(h), oracle::to_mat(means), oracle::to_mat(prec), oracle::to_vec(conf), alpha);
    CHECK(oracle::rel_close(got.score, want, 1e-12));

    Vector boosted = conf;
    boosted[got.argmin_class] += 0.7;
    CHECK(paos_score(h, manual_stats(means, prec, boosted, alpha)).score <= got.score);
  }
}

TEST_CASE("alpha zero with identity precision is squared distance to the nearest mean") {
  std::mt19937_64 rng(5);
  const Matrix means = support::random_unit_rows(4, 5, rng);
  const PaosStats s = manual_stats(means, Matrix::Identity(5, 5), Vector::Zero(4), 0.0);
  const Matrix z = support::random_unit_rows(50, 5, rng);
  const auto scores = score_batch(z, s);
  const auto plain = min_mahalanobis(z, s);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < 4; ++c) {
      const Vector d = (z.row(i) - means.row(c)).transpose();
      best = std::min(best, d.dot(Matrix::Identity(5, 5) * d));
    }
    CHECK(scores[i].score == best);
    CHECK(plain[i] == scores[i].score);
  }
}

TEST_CASE("score batch") {
  std::mt19937_64 rng(6);
  const Matrix means = support::random_unit_rows(3, 4, rng);
  const PaosStats s = manual_stats(means, random_spd(4, rng), vec({0.5, 1.5, 2.5}), 0.5);
  CHECK(score_batch(Matrix(0, 4), s).empty());
  const auto at_mean = score_batch(means.topRows(1), s);
  REQUIRE(at_mean.size() == 1);
  CHECK(at_mean[0].score == 0.0);
  const Matrix z = support::random_unit_rows(100, 4, rng);
  const auto batch = score_batch(z, s);
  for (Eigen::Index i = 0; i < 100; ++i) {
    const PaosScore one = paos_score(z.row(i), s);
    CHECK(batch[i].score == one.score);
    CHECK(batch[i].argmin_class == one.argmin_class);
  }
  CHECK_THROWS_AS(score_batch(Matrix::Zero(2, 3), s), InputError);
}

TEST_CASE("gaussian stats on basis vectors") {
  const int d = 4;
  const EmbeddingSet set(Matrix::Identity(d, d), std::vector<int>(d, 0), 1);
  FitOptions opt;
  opt.shrinkage = 0.1;
  opt.floor = 0;
  const PaosStats s = fit_gaussian_stats(set, vec({0.0}), 0.5, 1.0, opt);
  CHECK((s.means.row(0).array() - 0.25).abs().maxCoeff() <= 1e-15);

  // Direct covariance: (1/N) sum (e_i - mu)(e_i - mu)^T = I/4 - 1/16.
  Matrix cov = Matrix::Identity(d, d) / 4.0 - Matrix::Constant(d, d, 1.0 / 16);
  const double trace = cov.trace();
  cov.diagonal().array() += 0.1 * trace / d;
  CHECK(s.ridge == doctest::Approx(0.1 * trace / d).epsilon(1e-14));
  CHECK((s.precision * cov - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((s.precision - s.precision.transpose()).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("gaussian stats without shrinkage invert the covariance") {
  const EmbeddingSet set = gaussian_classes(3, 200, 5, 7);
  FitOptions opt;
  opt.shrinkage = 0;
  opt.floor = 0;
  const PaosStats s = fit_gaussian_stats(set, vec({0.1, 0.2, 0.3}), 0.5, 1.0, opt);
  const Matrix cov = pooled_covariance(set, s.means);
  CHECK((s.precision * cov - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-8);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(s.precision);
  CHECK(eig.eigenvalues().minCoeff() > 0);
  CHECK(s.denominators[2] == doctest::Approx(1.15).epsilon(1e-15));
}

TEST_CASE("degenerate covariance needs shrinkage") {
  Matrix x(2, 3);
  x << 1, 2, 3, -1, 0, 4;
  const EmbeddingSet set(x, {0, 1}, 2);
  FitOptions none;
  none.floor = 0;
  CHECK_THROWS_WITH_AS(fit_gaussian_stats(set, vec({0, 0}), 0.5, 1.0, none), doctest::Contains("shrinkage"),
                       NumericalError);
  const PaosStats floored = fit_gaussian_stats(set, vec({0, 0}), 0.5, 1.0);
  CHECK(floored.precision.allFinite());
  CHECK(floored.ridge == kCovarianceFloor);
}

TEST_CASE("gaussian stats input errors") {
  const EmbeddingSet set = gaussian_classes(2, 10, 3, 1);
  CHECK_THROWS_AS(fit_gaussian_stats(set, vec({0}), 0.5, 1.0), InputError);
  CHECK_THROWS_AS(fit_gaussian_stats(set, vec({0, std::nan("")}), 0.5, 1.0), InputError);
  const EmbeddingSet gap(Matrix::Identity(3, 3), {0, 0, 2}, 3);
  CHECK_THROWS_WITH_AS(fit_gaussian_stats(gap, vec({0, 0, 0}), 0.5, 1.0), doctest::Contains("class 1"), InputError);
}

TEST_CASE("stats and score files round trip") {
  support::TempDir dir("paos");
  const EmbeddingSet set = gaussian_classes(3, 40, 4, 2);
  const PaosStats s = fit_gaussian_stats(set, vec({0.5, -3.0, 1.0}), 0.5, 1.0);
  save_stats(s, dir / "stats.json");
  const PaosStats back = load_stats(dir / "stats.json");
  CHECK(back.alpha == 0.5);
  CHECK(back.conf == s.conf);
  CHECK(back.clamped_classes == std::vector<int>{1});
  CHECK((back.means - s.means).cwiseAbs().maxCoeff() <= 1e-5 * s.means.cwiseAbs().maxCoeff());
  CHECK((back.denominators - s.denominators).cwiseAbs().maxCoeff() == 0.0);

  const auto scores = score_batch(set.features(), s);
  save_scores(scores, dir / "scores.csv");
  const auto column = load_score_column(dir / "scores.csv");
  REQUIRE(column.size() == scores.size());
  for (std::size_t i = 0; i < column.size(); ++i) CHECK(column[i] == scores[i].score);
  CHECK(support::read_file(dir / "scores.csv").rfind("index,score,argmin_class\n", 0) == 0);

  std::ofstream(dir / "bare.csv") << "0.5\n1.25\n";
  CHECK(load_score_column(dir / "bare.csv") == std::vector<double>{0.5, 1.25});
  std::ofstream(dir / "bad.csv") << "score\n0.5\nabc\n";
  CHECK_THROWS_AS(load_score_column(dir / "bad.csv"), InputError);
  CHECK_THROWS_AS(load_stats(dir / "absent.json"), InputError);
}
