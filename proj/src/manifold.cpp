#include "apex/manifold.hpp"

#include <fstream>
#include <random>

#include "apex/kmeanspp.hpp"

namespace apex {

namespace {

void check_unit_rows(const Matrix& p, int c) {
  for (Eigen::Index j = 0; j < p.rows(); ++j) {
    if (std::abs(p.row(j).norm() - 1.0) > kUnitNormTolerance) {
      throw InputError("prototype " + std::to_string(j) + " of class " + std::to_string(c) +
                       " is not unit norm");
    }
  }
}

}  // namespace

PrototypeManifold::PrototypeManifold(std::vector<Matrix> prototypes, double kappa)
    : prototypes_(std::move(prototypes)), kappa_(kappa) {
  if (prototypes_.empty()) throw InputError("manifold needs at least one class");
  if (!(kappa_ > 0)) throw InputError("vMF concentration must be > 0");
  const Eigen::Index d = prototypes_.front().cols();
  quality_.resize(prototypes_.size());
  for (std::size_t c = 0; c < prototypes_.size(); ++c) {
    const Matrix& p = prototypes_[c];
    if (p.rows() < 1) throw InputError("class " + std::to_string(c) + " has no prototypes");
    if (p.cols() != d) throw InputError("prototype dimensions differ across classes");
    check_unit_rows(p, static_cast<int>(c));
    quality_[c].cohesion = Vector::Zero(p.rows());
    quality_[c].separation = Vector::Zero(p.rows());
  }
}

std::vector<int> PrototypeManifold::k_map() const {
  std::vector<int> out;
  for (const auto& p : prototypes_) out.push_back(static_cast<int>(p.rows()));
  return out;
}

int PrototypeManifold::total_prototypes() const {
  int m = 0;
  for (const auto& p : prototypes_) m += static_cast<int>(p.rows());
  return m;
}

int PrototypeManifold::offset(int c) const {
  int off = 0;
  for (int i = 0; i < c; ++i) off += k(i);
  return off;
}

Matrix PrototypeManifold::stacked() const {
  Matrix out(total_prototypes(), dim());
  Eigen::Index row = 0;
  for (const auto& p : prototypes_) {
    out.middleRows(row, p.rows()) = p;
    row += p.rows();
  }
  return out;
}

std::vector<int> PrototypeManifold::stacked_classes() const {
  std::vector<int> out;
  for (int c = 0; c < class_count(); ++c) out.insert(out.end(), k(c), c);
  return out;
}

void PrototypeManifold::set_prototypes(int c, Matrix p) {
  if (p.rows() != k(c) || p.cols() != dim()) {
    throw InputError("set_prototypes: shape mismatch for class " + std::to_string(c));
  }
  check_unit_rows(p, c);
  prototypes_[c] = std::move(p);
}

double PrototypeManifold::max_norm_error() const {
  double worst = 0;
  for (const auto& p : prototypes_) {
    worst = std::max(worst, (p.rowwise().norm().array() - 1.0).abs().maxCoeff());
  }
  return worst;
}

bool PrototypeManifold::operator==(const PrototypeManifold& other) const {
  if (kappa_ != other.kappa_ || prototypes_.size() != other.prototypes_.size()) return false;
  for (std::size_t c = 0; c < prototypes_.size(); ++c) {
    if (prototypes_[c].rows() != other.prototypes_[c].rows() || prototypes_[c] != other.prototypes_[c]) {
      return false;
    }
    if (quality_[c].cohesion != other.quality_[c].cohesion ||
        quality_[c].separation != other.quality_[c].separation) {
      return false;
    }
  }
  return true;
}

PrototypeManifold init_prototypes(const EmbeddingSet& set, const std::vector<int>& k_map,
                                  InitStrategy strategy, std::uint64_t seed, double kappa) {
  if (static_cast<int>(k_map.size()) != set.class_count()) {
    throw InputError("k_map has " + std::to_string(k_map.size()) + " entries for " +
                     std::to_string(set.class_count()) + " classes");
  }
  std::vector<Matrix> prototypes;
  for (int c = 0; c < set.class_count(); ++c) {
    const int k = k_map[c];
    if (k < 1) throw InputError("class " + std::to_string(c) + " needs at least one prototype");
    std::mt19937_64 rng(derive_seed(seed, Stage::kInit, static_cast<std::uint64_t>(c)));
    Matrix p;
    if (strategy == InitStrategy::kKmeansPlusPlus) {
      const Matrix x = set.class_features(c);
      if (x.rows() < k) {
        throw InputError("insufficient samples for kmeans++ in class " + std::to_string(c) + ": " +
                         std::to_string(x.rows()) + " samples for " + std::to_string(k) + " prototypes");
      }
      p = kmeanspp_centers(normalized_rows(x), k, rng);
    } else {
      std::normal_distribution<double> normal;
      p.resize(k, set.dim());
      for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = normal(rng);
    }
    prototypes.push_back(normalized_rows(p));
  }
  return PrototypeManifold(std::move(prototypes), kappa);
}

void ema_update_prototypes(PrototypeManifold& manifold, int c, const Matrix& batch,
                           const AssignmentMatrix& weights, double beta_p) {
  const Matrix& p = manifold.prototypes(c);
  if (weights.weights.rows() != p.rows() || weights.weights.cols() != batch.rows()) {
    throw InputError("assignment shape does not match class " + std::to_string(c) + " prototypes and batch");
  }
  if (batch.cols() != p.cols()) throw InputError("batch dimension does not match prototypes");
  if (beta_p == 0) return;
  Matrix blended = (1.0 - beta_p) * p + beta_p * (weights.weights * batch);
  for (Eigen::Index j = 0; j < blended.rows(); ++j) {
    const double n = blended.row(j).norm();
    if (!(n > 0) || !std::isfinite(n)) {
      throw NumericalError("EMA update of prototype " + std::to_string(j) + " in class " +
                           std::to_string(c) + " cancelled to zero");
    }
    if (std::abs(n - 1.0) > 32 * std::numeric_limits<double>::epsilon()) blended.row(j) /= n;
  }
  manifold.set_prototypes(c, std::move(blended));
}

void ema_update_quality(PrototypeManifold& manifold, int c, const Vector& fresh_cohesion,
                        const Vector& fresh_separation, double beta_q) {
  QualityState& q = manifold.quality(c);
  if (fresh_cohesion.size() != q.cohesion.size() || fresh_separation.size() != q.separation.size()) {
    throw InputError("fresh quality length does not match class " + std::to_string(c));
  }
  q.cohesion = (1.0 - beta_q) * q.cohesion + beta_q * fresh_cohesion;
  q.separation = (1.0 - beta_q) * q.separation + beta_q * fresh_separation;
}

void save_manifold(const PrototypeManifold& manifold, const std::filesystem::path& json_path,
                   const nlohmann::json& extra_metadata) {
  const std::string stem = json_path.stem().string();
  const auto dir = json_path.parent_path();
  const std::string proto_name = stem + ".prototypes.bin";
  const std::string quality_name = stem + ".quality.bin";

  const int m = manifold.total_prototypes();
  Matrix quality(m, 2);
  for (int c = 0; c < manifold.class_count(); ++c) {
    quality.block(manifold.offset(c), 0, manifold.k(c), 1) = manifold.quality(c).cohesion;
    quality.block(manifold.offset(c), 1, manifold.k(c), 1) = manifold.quality(c).separation;
  }
  const auto classes = manifold.stacked_classes();
  save_matrix_binary(manifold.stacked(), classes, manifold.class_count(), dir / proto_name);
  save_matrix_binary(quality, classes, manifold.class_count(), dir / quality_name);

  nlohmann::json meta = extra_metadata;
  meta["kind"] = "apex-manifold";
  meta["k_map"] = manifold.k_map();
  meta["dimension"] = manifold.dim();
  meta["kappa"] = manifold.kappa();
  meta["prototypes_file"] = proto_name;
  meta["quality_file"] = quality_name;
  std::ofstream out(json_path);
  if (!out) throw InputError("cannot write " + json_path.string());
  out << meta.dump(2) << '\n';
}

PrototypeManifold load_manifold(const std::filesystem::path& json_path, nlohmann::json* metadata) {
  std::ifstream in(json_path);
  if (!in) throw InputError("manifold checkpoint not found: " + json_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("malformed manifold checkpoint " + json_path.string() + ": " + e.what());
  }
  const auto dir = json_path.parent_path();
  std::vector<int> k_map;
  double kappa = 0;
  std::string proto_name, quality_name;
  try {
    k_map = meta.at("k_map").get<std::vector<int>>();
    kappa = meta.at("kappa").get<double>();
    proto_name = meta.at("prototypes_file").get<std::string>();
    quality_name = meta.at("quality_file").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed manifold checkpoint " + json_path.string() + ": " + e.what());
  }
  const Matrix stacked = normalized_rows(load_matrix_binary(dir / proto_name));
  const Matrix quality = load_matrix_binary(dir / quality_name);
  int m = 0;
  for (int k : k_map) m += k;
  if (stacked.rows() != m || quality.rows() != m || quality.cols() != 2) {
    throw InputError("manifold checkpoint matrices do not match k_map");
  }
  std::vector<Matrix> prototypes;
  int off = 0;
  for (int k : k_map) {
    prototypes.push_back(stacked.middleRows(off, k));
    off += k;
  }
  PrototypeManifold manifold(std::move(prototypes), kappa);
  for (int c = 0; c < manifold.class_count(); ++c) {
    manifold.quality(c).cohesion = quality.block(manifold.offset(c), 0, manifold.k(c), 1);
    manifold.quality(c).separation = quality.block(manifold.offset(c), 1, manifold.k(c), 1);
  }
  if (metadata) *metadata = std::move(meta);
  return manifold;
}

}  // namespace apex
