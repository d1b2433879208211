#include "apex/losses.hpp"

#include <cmath>

namespace apex {

namespace {

void check_batch(const Matrix& z, const std::vector<int>& labels, const PrototypeManifold& manifold,
                 const Matrix& weights) {
  if (z.rows() == 0) throw InputError("loss needs a non-empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != z.rows()) throw InputError("label count does not match batch");
  if (z.cols() != manifold.dim()) throw InputError("batch dimension does not match the manifold");
  if (weights.rows() != z.rows() || weights.cols() != manifold.total_prototypes()) {
    throw InputError("weight matrix must be N x M");
  }
  for (int y : labels) {
    if (y < 0 || y >= manifold.class_count()) throw InputError("label outside the manifold's classes");
  }
}

/// log P(y_i | z_i) for every sample; optionally the per-sample gradient rows of -log P.
Vector log_true_posteriors(const Matrix& z, const std::vector<int>& labels, const PrototypeManifold& manifold,
                           const Matrix& weights, double tau, Matrix* neg_grad) {
  const int classes = manifold.class_count();
  const Matrix protos = manifold.stacked();
  const Matrix sims = z * protos.transpose();  // N x M
  const Matrix log_terms = weights.array().log() + sims.array() / tau;
  Vector out(z.rows());
  if (neg_grad) neg_grad->setZero(z.rows(), z.cols());
  Vector logits(classes);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (int c = 0; c < classes; ++c) {
      logits[c] = log_sum_exp(log_terms.row(i).segment(manifold.offset(c), manifold.k(c)));
    }
    const double norm = log_sum_exp(logits);
    const int y = labels[i];
    out[i] = logits[y] - norm;
    if (!neg_grad) continue;
    // d logit_c / dz = (1/tau) sum_k r_k^c p_k^c with r^c the within-class softmax.
    RowVectorX<double> g = RowVectorX<double>::Zero(z.cols());
    for (int c = 0; c < classes; ++c) {
      const auto block = log_terms.row(i).segment(manifold.offset(c), manifold.k(c));
      if (!std::isfinite(logits[c])) continue;
      const RowVectorX<double> r = (block.array() - logits[c]).exp();
      const double p_c = std::exp(logits[c] - norm);
      const double coeff = (c == y ? 1.0 : 0.0) - p_c;
      g.noalias() += coeff * (r * manifold.prototypes(c));
    }
    neg_grad->row(i) = g / tau;
  }
  return out;
}

}  // namespace

Matrix uniform_sample_weights(Eigen::Index n, const PrototypeManifold& manifold) {
  Matrix w(n, manifold.total_prototypes());
  for (int c = 0; c < manifold.class_count(); ++c) {
    w.middleCols(manifold.offset(c), manifold.k(c)).setConstant(1.0 / manifold.k(c));
  }
  return w;
}

std::vector<Vector> weights_by_class(const Matrix& weights, Eigen::Index i, const PrototypeManifold& manifold) {
  std::vector<Vector> out;
  for (int c = 0; c < manifold.class_count(); ++c) {
    out.push_back(weights.row(i).segment(manifold.offset(c), manifold.k(c)).transpose());
  }
  return out;
}

double mle_loss(const Matrix& z, const std::vector<int>& labels, const PrototypeManifold& manifold,
                const Matrix& weights, double tau) {
  check_batch(z, labels, manifold, weights);
  const Vector log_p = log_true_posteriors(z, labels, manifold, weights, tau, nullptr);
  for (Eigen::Index i = 0; i < log_p.size(); ++i) {
    if (!std::isfinite(log_p[i])) {
      throw NumericalError("true-class posterior of sample " + std::to_string(i) + " is zero");
    }
  }
  return -log_p.mean();
}

double mle_loss(const EmbeddingSet& batch, const PrototypeManifold& manifold, const Matrix& weights, double tau) {
  return mle_loss(batch.features(), batch.labels(), manifold, weights, tau);
}

Matrix mle_gradient(const Matrix& z, const std::vector<int>& labels, const PrototypeManifold& manifold,
                    const Matrix& weights, double tau) {
  check_batch(z, labels, manifold, weights);
  Matrix grad;
  log_true_posteriors(z, labels, manifold, weights, tau, &grad);
  // grad holds d log P / dz; the loss is the negated mean.
  return -grad / static_cast<double>(z.rows());
}

Matrix mle_gradient(const EmbeddingSet& batch, const PrototypeManifold& manifold, const Matrix& weights,
                    double tau) {
  return mle_gradient(batch.features(), batch.labels(), manifold, weights, tau);
}

double pc_loss(const PrototypeManifold& manifold, double tau_p) {
  if (manifold.class_count() < 2) throw InputError("prototype-contrastive loss needs at least two classes");
  const Matrix protos = manifold.stacked();
  const std::vector<int> owner = manifold.stacked_classes();
  const Matrix scaled = protos * protos.transpose() / tau_p;
  const auto m = static_cast<Eigen::Index>(owner.size());
  double total = 0;
  std::vector<double> intra, inter;
  for (Eigen::Index j = 0; j < m; ++j) {
    intra.clear();
    inter.clear();
    for (Eigen::Index l = 0; l < m; ++l) {
      if (l == j) continue;
      (owner[l] == owner[j] ? intra : inter).push_back(scaled(j, l));
    }
    const double log_d = intra.empty()
                             ? 1.0 / tau_p
                             : log_sum_exp(Eigen::Map<const Vector>(intra.data(), static_cast<Eigen::Index>(intra.size())));
    const double log_z = log_sum_exp(Eigen::Map<const Vector>(inter.data(), static_cast<Eigen::Index>(inter.size())));
    total += log_d - log_z;
  }
  return -total / static_cast<double>(m);
}

LossBreakdown total_loss(const Matrix& z, const std::vector<int>& labels, const PrototypeManifold& manifold,
                         const Matrix& weights, const RunConfig& config) {
  LossBreakdown out;
  out.lambda = config.lambda_pc;
  out.l_mle = mle_loss(z, labels, manifold, weights, config.tau);
  // A single-class manifold has no contrastive term; that is only acceptable when it is switched off.
  out.l_pc = manifold.class_count() < 2 && out.lambda == 0 ? 0.0 : pc_loss(manifold, config.tau_p);
  out.l_total = out.l_mle + out.lambda * out.l_pc;
  return out;
}

LossBreakdown total_loss(const EmbeddingSet& batch, const PrototypeManifold& manifold, const Matrix& weights,
                         const RunConfig& config) {
  return total_loss(batch.features(), batch.labels(), manifold, weights, config);
}

}  // namespace apex
