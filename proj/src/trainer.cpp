#include "apex/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "apex/quality.hpp"
#include "apex/sinkhorn.hpp"

namespace apex {

namespace {

constexpr int kMaxFullBatch = 1024;

void project_step(Matrix& z, const std::vector<Eigen::Index>& rows, const Matrix& grad, double lr) {
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto zi = z.row(rows[r]);
    const RowVectorX<double> g = grad.row(static_cast<Eigen::Index>(r));
    const RowVectorX<double> tangent = g - g.dot(zi) * zi;
    zi -= lr * tangent;
    const double n = zi.norm();
    if (!(n > 0)) throw NumericalError("gradient step collapsed embedding " + std::to_string(rows[r]));
    zi /= n;
  }
}

}  // namespace

TrainResult toy_train(const EmbeddingSet& set, const KSelectionReport& k_report, const RunConfig& config) {
  config.validate();
  if (!set.normalized()) throw InputError("toy_train needs unit-norm embeddings");
  const auto k_map = k_report.k_map();
  PrototypeManifold manifold =
      init_prototypes(set, k_map, InitStrategy::kKmeansPlusPlus, config.seed, 1.0 / config.tau);

  TrainResult result{manifold, manifold, {}, set.features()};
  Matrix& z = result.embeddings;
  const std::vector<int>& labels = set.labels();
  const Eigen::Index n = set.size();
  const Eigen::Index batch_size =
      config.batch_size > 0 ? config.batch_size : (n <= kMaxFullBatch ? n : kMaxFullBatch);
  const double beta_q = config.quality_momentum();

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(config.seed, Stage::kTrain, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    LossBreakdown epoch_loss;
    epoch_loss.lambda = config.lambda_pc;
    int batch_index = 0;
    for (Eigen::Index start = 0; start < n; start += batch_size, ++batch_index) {
      const Eigen::Index len = std::min(batch_size, n - start);
      std::vector<Eigen::Index> rows(order.begin() + start, order.begin() + start + len);
      std::sort(rows.begin(), rows.end());

      Matrix zb(len, z.cols());
      std::vector<int> yb(len);
      for (Eigen::Index r = 0; r < len; ++r) {
        zb.row(r) = z.row(rows[r]);
        yb[r] = labels[rows[r]];
      }

      // (1) Within-class transport weights; other classes keep uniform blocks.
      Matrix weights = uniform_sample_weights(len, manifold);
      std::vector<std::vector<Eigen::Index>> members(manifold.class_count());
      for (Eigen::Index r = 0; r < len; ++r) members[yb[r]].push_back(r);
      std::vector<AssignmentMatrix> plans(manifold.class_count());
      for (int c = 0; c < manifold.class_count(); ++c) {
        if (members[c].empty()) continue;
        Matrix zc(static_cast<Eigen::Index>(members[c].size()), z.cols());
        for (std::size_t r = 0; r < members[c].size(); ++r) zc.row(r) = zb.row(members[c][r]);
        plans[c] = batch_class_weights(zc, manifold.prototypes(c), config.epsilon_ot, config.sinkhorn_iters,
                                       config.sinkhorn_tol);
        for (std::size_t r = 0; r < members[c].size(); ++r) {
          weights.row(members[c][r]).segment(manifold.offset(c), manifold.k(c)) =
              plans[c].weights.col(static_cast<Eigen::Index>(r)).transpose();
        }
      }

      // (2) Loss and gradient.
      const LossBreakdown loss = total_loss(zb, yb, manifold, weights, config);
      if (!std::isfinite(loss.l_total)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index));
      }
      const double share = static_cast<double>(len) / static_cast<double>(n);
      epoch_loss.l_mle += share * loss.l_mle;
      epoch_loss.l_pc += share * loss.l_pc;

      // (3) Projected gradient step.
      if (config.learning_rate != 0) {
        const Matrix grad = mle_gradient(zb, yb, manifold, weights, config.tau);
        project_step(z, rows, grad, config.learning_rate);
      }

      // (4) EMA prototype update from the stepped batch.
      for (int c = 0; c < manifold.class_count(); ++c) {
        if (members[c].empty()) continue;
        Matrix zc(static_cast<Eigen::Index>(members[c].size()), z.cols());
        for (std::size_t r = 0; r < members[c].size(); ++r) zc.row(r) = z.row(rows[members[c][r]]);
        ema_update_prototypes(manifold, c, zc, plans[c], config.beta_p);
      }
    }
    epoch_loss.l_total = epoch_loss.l_mle + epoch_loss.lambda * epoch_loss.l_pc;
    result.trace.push_back(epoch_loss);

    if (manifold.class_count() < 2) continue;  // separation needs another class
    const FreshQuality fresh = fresh_quality(z, labels, manifold);
    for (int c = 0; c < manifold.class_count(); ++c) {
      ema_update_quality(manifold, c, fresh.cohesion[c], fresh.separation[c], beta_q);
    }
  }
  result.manifold = std::move(manifold);
  return result;
}

void save_loss_trace(const std::vector<LossBreakdown>& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "epoch,l_mle,l_pc,l_total\n";
  out.precision(17);
  for (std::size_t e = 0; e < trace.size(); ++e) {
    out << e << ',' << trace[e].l_mle << ',' << trace[e].l_pc << ',' << trace[e].l_total << '\n';
  }
}

}  // namespace apex
