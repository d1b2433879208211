#ifndef APEX_TRAINER_HPP
#define APEX_TRAINER_HPP

#include <filesystem>
#include <vector>

#include "apex/config.hpp"
#include "apex/embedding_io.hpp"
#include "apex/gmm.hpp"
#include "apex/losses.hpp"
#include "apex/manifold.hpp"

namespace apex {

struct TrainResult {
  PrototypeManifold manifold;
  PrototypeManifold initial_manifold;
  std::vector<LossBreakdown> trace;  // one entry per epoch
  Matrix embeddings;                 // final embeddings, same row order as the input
};

/**
 * Desk-scale stand-in for encoder training: the embeddings themselves are the parameters.
 *
 * Each epoch shuffles the set into mini-batches. Per batch: Sinkhorn weights for every class
 * present, the total loss and its analytic gradient (weights and prototypes held fixed), a
 * projected-gradient step on the sphere, then EMA prototype updates. Quality EMA is refreshed at
 * the end of every epoch from a hard assignment of the current embeddings.
 */
TrainResult toy_train(const EmbeddingSet& set, const KSelectionReport& k_report, const RunConfig& config);

/// Writes the loss trace as CSV: epoch,l_mle,l_pc,l_total.
void save_loss_trace(const std::vector<LossBreakdown>& trace, const std::filesystem::path& path);

}  // namespace apex

#endif  // APEX_TRAINER_HPP
