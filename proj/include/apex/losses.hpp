#ifndef APEX_LOSSES_HPP
#define APEX_LOSSES_HPP

#include <vector>

#include "apex/config.hpp"
#include "apex/core.hpp"
#include "apex/embedding_io.hpp"
#include "apex/manifold.hpp"

/**
 * @file losses.hpp
 *
 * @brief vMF-mixture class posterior, the likelihood and prototype-contrastive losses, and the
 * analytic likelihood gradient with respect to the embeddings.
 *
 * Per-sample mixture weights are passed as an N x M matrix whose columns follow the manifold's
 * stacked prototype order: row i, block c holds w_{i,.}^c and each block sums to 1.
 */
namespace apex {

struct ClassPosterior {
  Vector probs;   // P(c | z), length C
  Vector logits;  // log sum_k w_k^c exp(p_k^c . z / tau), length C
};

struct LossBreakdown {
  double l_mle = 0;
  double l_pc = 0;
  double l_total = 0;
  double lambda = 0;
};

/**
 * Posterior over classes for one embedding. The vMF normalizer is shared by every class and
 * cancels, so only the exponentials are evaluated (log-sum-exp stabilized).
 */
template <typename Derived>
ClassPosterior class_posterior(const Eigen::MatrixBase<Derived>& z, const PrototypeManifold& manifold,
                               const std::vector<Vector>& weights_by_class, double tau) {
  const int classes = manifold.class_count();
  if (static_cast<int>(weights_by_class.size()) != classes) {
    throw InputError("class_posterior: expected weights for " + std::to_string(classes) + " classes");
  }
  ClassPosterior out;
  out.logits.resize(classes);
  for (int c = 0; c < classes; ++c) {
    const Vector& w = weights_by_class[c];
    if (w.size() != manifold.k(c)) {
      throw InputError("class_posterior: weight vector of class " + std::to_string(c) + " has length " +
                       std::to_string(w.size()) + ", expected " + std::to_string(manifold.k(c)));
    }
    const Vector terms = w.array().log() + (manifold.prototypes(c) * z.derived().transpose()).array() / tau;
    out.logits[c] = log_sum_exp(terms);
  }
  const double norm = log_sum_exp(out.logits);
  out.probs = (out.logits.array() - norm).exp();
  return out;
}

/// N x M weights with every class block uniform (1 / K_c).
Matrix uniform_sample_weights(Eigen::Index n, const PrototypeManifold& manifold);

/// Per-class weight vectors of sample i, sliced out of an N x M weight matrix.
std::vector<Vector> weights_by_class(const Matrix& weights, Eigen::Index i, const PrototypeManifold& manifold);

/// -(1/N) sum_i log P(y_i | z_i).
double mle_loss(const Matrix& z, const std::vector<int>& labels, const PrototypeManifold& manifold,
                const Matrix& weights, double tau);
double mle_loss(const EmbeddingSet& batch, const PrototypeManifold& manifold, const Matrix& weights, double tau);

/**
 * Analytic gradient of mle_loss with respect to every z_i, weights and prototypes held fixed:
 *
 *   dL/dz_i = -(1/(N tau)) [ sum_k r_k^{y_i} p_k^{y_i} - sum_c P(c|z_i) sum_k r_k^c p_k^c ]
 *
 * where r^c is the softmax of log w^c + P^c z / tau within class c.
 */
Matrix mle_gradient(const Matrix& z, const std::vector<int>& labels, const PrototypeManifold& manifold,
                    const Matrix& weights, double tau);
Matrix mle_gradient(const EmbeddingSet& batch, const PrototypeManifold& manifold, const Matrix& weights,
                    double tau);

/**
 * Prototype-contrastive loss -(1/M) sum log(D_j^c / Z_j^c). A singleton class has an empty
 * intra-class sum; its D is taken as exp(1 / tau_p), self-similarity at cosine 1.
 */
double pc_loss(const PrototypeManifold& manifold, double tau_p);

LossBreakdown total_loss(const Matrix& z, const std::vector<int>& labels, const PrototypeManifold& manifold,
                         const Matrix& weights, const RunConfig& config);
LossBreakdown total_loss(const EmbeddingSet& batch, const PrototypeManifold& manifold, const Matrix& weights,
                         const RunConfig& config);

}  // namespace apex

#endif  // APEX_LOSSES_HPP
