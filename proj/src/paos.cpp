#include "apex/paos.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace apex {

Matrix pooled_covariance(const EmbeddingSet& set, const Matrix& means) {
  Matrix centered = set.features();
  for (Eigen::Index i = 0; i < centered.rows(); ++i) centered.row(i) -= means.row(set.labels()[i]);
  Matrix s = centered.transpose() * centered / static_cast<double>(set.size());
  return 0.5 * (s + s.transpose());
}

PaosStats with_alpha(PaosStats stats, double alpha, bool clamp) {
  if (!(alpha >= 0)) throw ConfigError("alpha must be >= 0");
  stats.alpha = alpha;
  stats.denominators = (1.0 + alpha * stats.conf.array()).matrix();
  stats.clamped_classes.clear();
  if (clamp) {
    for (Eigen::Index c = 0; c < stats.denominators.size(); ++c) {
      if (stats.denominators[c] < kDenominatorFloor) {
        stats.denominators[c] = kDenominatorFloor;
        stats.clamped_classes.push_back(static_cast<int>(c));
      }
    }
  }
  return stats;
}

PaosStats fit_gaussian_stats(const EmbeddingSet& set, const Vector& conf, double alpha, double tau_q,
                             const FitOptions& options) {
  const int classes = set.class_count();
  if (conf.size() != classes) {
    throw InputError("confidence vector has " + std::to_string(conf.size()) + " entries for " +
                     std::to_string(classes) + " classes");
  }
  if (!conf.allFinite()) throw InputError("class confidences must be finite");
  const auto sizes = set.class_sizes();
  PaosStats stats;
  stats.means.resize(classes, set.dim());
  for (int c = 0; c < classes; ++c) {
    if (sizes[c] == 0) throw InputError("class " + std::to_string(c) + " has no samples");
    stats.means.row(c) = set.class_features(c).colwise().mean();
  }
  const Matrix s = pooled_covariance(set, stats.means);
  const auto d = static_cast<double>(set.dim());
  stats.shrinkage = options.shrinkage;
  stats.ridge = options.shrinkage * s.trace() / d + options.floor;
  const Matrix sigma = s + stats.ridge * Matrix::Identity(set.dim(), set.dim());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0) || lo < hi * 1e-15) {
    throw NumericalError("pooled covariance is not invertible (min eigenvalue " + std::to_string(lo) +
                         "); increase shrinkage");
  }
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("pooled covariance is not positive definite; increase shrinkage");
  }
  Matrix precision = llt.solve(Matrix::Identity(set.dim(), set.dim()));
  stats.precision = 0.5 * (precision + precision.transpose());
  stats.conf = conf;
  stats.tau_q = tau_q;
  return with_alpha(std::move(stats), alpha, options.clamp_denominators);
}

Vector confidence_from_quality(const std::vector<Vector>& qualities, double tau_q) {
  Vector conf(static_cast<Eigen::Index>(qualities.size()));
  for (std::size_t c = 0; c < qualities.size(); ++c) conf[c] = class_confidence(qualities[c], tau_q);
  return conf;
}

Vector manifold_confidence(const PrototypeManifold& manifold, double tau_q) {
  std::vector<Vector> q;
  for (int c = 0; c < manifold.class_count(); ++c) {
    q.push_back(manifold.quality(c).cohesion + manifold.quality(c).separation);
  }
  return confidence_from_quality(q, tau_q);
}

std::vector<PaosScore> score_batch(const Matrix& features, const PaosStats& stats) {
  if (features.rows() > 0 && features.cols() != stats.dim()) {
    throw InputError("score_batch: feature dimension " + std::to_string(features.cols()) +
                     " does not match stats dimension " + std::to_string(stats.dim()));
  }
  std::vector<PaosScore> out;
  out.reserve(features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) out.push_back(paos_score(features.row(i), stats));
  return out;
}

std::vector<double> min_mahalanobis(const Matrix& features, const PaosStats& stats) {
  std::vector<double> out;
  out.reserve(features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < stats.class_count(); ++c) {
      best = std::min(best, mahalanobis(features.row(i).transpose(), stats.means.row(c).transpose(), stats.precision));
    }
    out.push_back(best);
  }
  return out;
}

void save_scores(const std::vector<PaosScore>& scores, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "index,score,argmin_class\n";
  std::array<char, 32> buf;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), scores[i].score);
    out << i << ',' << std::string_view(buf.data(), p - buf.data()) << ',' << scores[i].argmin_class << '\n';
  }
}

std::vector<double> load_score_column(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("score file not found: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + ": empty score file");
  // Either the index,score,argmin_class layout or a bare single column.
  const bool indexed = line.rfind("index,score", 0) == 0;
  std::vector<double> out;
  auto parse = [&](std::string_view cell, std::size_t row) {
    double v = 0;
    const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || !std::isfinite(v)) {
      throw InputError(path.string() + ": invalid score at row " + std::to_string(row));
    }
    out.push_back(v);
  };
  if (!indexed && line != "score") parse(line, 0);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (indexed) {
      const auto a = line.find(',');
      const auto b = line.find(',', a + 1);
      if (a == std::string::npos) throw InputError(path.string() + ": malformed row " + std::to_string(row));
      parse(std::string_view(line).substr(a + 1, b == std::string::npos ? std::string::npos : b - a - 1), row);
    } else {
      parse(line, row);
    }
    ++row;
  }
  return out;
}

void save_stats(const PaosStats& stats, const std::filesystem::path& json_path) {
  const std::string stem = json_path.stem().string();
  const auto dir = json_path.parent_path();
  const std::string means_name = stem + ".means.bin";
  const std::string precision_name = stem + ".precision.bin";
  std::vector<int> mean_labels(stats.class_count());
  for (int c = 0; c < stats.class_count(); ++c) mean_labels[c] = c;
  save_matrix_binary(stats.means, mean_labels, stats.class_count(), dir / means_name);
  save_matrix_binary(stats.precision, std::vector<int>(stats.dim(), 0), 1, dir / precision_name);

  nlohmann::json meta = {
      {"kind", "apex-paos-stats"},
      {"classes", stats.class_count()},
      {"dimension", stats.dim()},
      {"conf", std::vector<double>(stats.conf.data(), stats.conf.data() + stats.conf.size())},
      {"alpha", stats.alpha},
      {"tau_q", stats.tau_q},
      {"shrinkage", stats.shrinkage},
      {"ridge", stats.ridge},
      {"clamped_classes", stats.clamped_classes},
      {"means_file", means_name},
      {"precision_file", precision_name},
  };
  std::ofstream out(json_path);
  if (!out) throw InputError("cannot write " + json_path.string());
  out << meta.dump(2) << '\n';
}

PaosStats load_stats(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw InputError("stats checkpoint not found: " + json_path.string());
  PaosStats stats;
  bool clamp = true;
  try {
    const auto meta = nlohmann::json::parse(in);
    const auto conf = meta.at("conf").get<std::vector<double>>();
    stats.conf = Eigen::Map<const Vector>(conf.data(), static_cast<Eigen::Index>(conf.size()));
    stats.alpha = meta.at("alpha").get<double>();
    stats.tau_q = meta.at("tau_q").get<double>();
    stats.shrinkage = meta.value("shrinkage", kDefaultShrinkage);
    stats.ridge = meta.value("ridge", 0.0);
    const auto dir = json_path.parent_path();
    stats.means = load_matrix_binary(dir / meta.at("means_file").get<std::string>());
    stats.precision = load_matrix_binary(dir / meta.at("precision_file").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed stats checkpoint " + json_path.string() + ": " + e.what());
  }
  if (stats.conf.size() != stats.means.rows() || stats.precision.rows() != stats.means.cols() ||
      stats.precision.cols() != stats.means.cols()) {
    throw InputError("stats checkpoint matrices are inconsistent");
  }
  stats.precision = 0.5 * (stats.precision + stats.precision.transpose()).eval();
  return with_alpha(std::move(stats), stats.alpha, clamp);
}

}  // namespace apex
