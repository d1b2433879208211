#ifndef APEX_MANIFOLD_HPP
#define APEX_MANIFOLD_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "apex/core.hpp"
#include "apex/embedding_io.hpp"
#include "apex/sinkhorn.hpp"

namespace apex {

/// EMA-tracked quality of one class's prototypes.
struct QualityState {
  Vector cohesion;    // K_c
  Vector separation;  // K_c
};

/**
 * @brief Per-class prototype sets on the unit hypersphere plus their EMA quality state.
 *
 * The vMF concentration is kappa = 1 / tau. Its normalizer C_D(kappa) cancels in the class
 * posterior and is never evaluated.
 */
class PrototypeManifold {
 public:
  PrototypeManifold() = default;
  /// Every row of every class matrix must be unit norm. Quality state starts at zero.
  PrototypeManifold(std::vector<Matrix> prototypes, double kappa);

  int class_count() const noexcept { return static_cast<int>(prototypes_.size()); }
  Eigen::Index dim() const noexcept { return prototypes_.empty() ? 0 : prototypes_.front().cols(); }
  double kappa() const noexcept { return kappa_; }

  const Matrix& prototypes(int c) const { return prototypes_.at(c); }
  const std::vector<Matrix>& all_prototypes() const noexcept { return prototypes_; }
  int k(int c) const { return static_cast<int>(prototypes_.at(c).rows()); }
  std::vector<int> k_map() const;
  int total_prototypes() const;  // M
  /// Offset of class c's first prototype in the stacked M x D order.
  int offset(int c) const;
  /// All prototypes stacked class by class (M x D).
  Matrix stacked() const;
  /// Class of each stacked prototype row.
  std::vector<int> stacked_classes() const;

  const QualityState& quality(int c) const { return quality_.at(c); }
  QualityState& quality(int c) { return quality_.at(c); }

  /// Replaces class c's prototypes; rows must be unit norm and the count must not change.
  void set_prototypes(int c, Matrix p);

  double max_norm_error() const;

  bool operator==(const PrototypeManifold& other) const;

 private:
  std::vector<Matrix> prototypes_;
  std::vector<QualityState> quality_;
  double kappa_ = 10.0;
};

enum class InitStrategy { kKmeansPlusPlus, kRandomUnit };

/// kmeans++ seeds from each class's normalized features; random-unit draws uniform directions.
PrototypeManifold init_prototypes(const EmbeddingSet& set, const std::vector<int>& k_map,
                                  InitStrategy strategy, std::uint64_t seed, double kappa);

/// p_k <- Normalize((1 - beta) p_k + beta * sum_i w_{k,i} z_i) for every prototype of class c.
void ema_update_prototypes(PrototypeManifold& manifold, int c, const Matrix& batch,
                           const AssignmentMatrix& weights, double beta_p);

/// q <- (1 - beta) q + beta * fresh, independently for the cohesion and separation tracks.
void ema_update_quality(PrototypeManifold& manifold, int c, const Vector& fresh_cohesion,
                        const Vector& fresh_separation, double beta_q);

/**
 * Checkpoint layout: `<stem>.json` holds metadata (k_map, kappa, seed, config echo, file names);
 * `<stem>.prototypes.bin` holds the stacked M x D prototypes labeled by class and
 * `<stem>.quality.bin` the M x 2 (cohesion, separation) EMA state, both in the embedding
 * binary layout.
 */
void save_manifold(const PrototypeManifold& manifold, const std::filesystem::path& json_path,
                   const nlohmann::json& extra_metadata = nlohmann::json::object());
PrototypeManifold load_manifold(const std::filesystem::path& json_path,
                                nlohmann::json* metadata = nullptr);

}  // namespace apex

#endif  // APEX_MANIFOLD_HPP
