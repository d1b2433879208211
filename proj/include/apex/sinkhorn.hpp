#ifndef APEX_SINKHORN_HPP
#define APEX_SINKHORN_HPP

#include <cmath>
#include <limits>
#include <string>

#include "apex/core.hpp"

/**
 * @file sinkhorn.hpp
 *
 * @brief Entropy-regularized optimal transport between a class's prototypes and its batch samples.
 *
 * The plan has the form W = diag(u) exp(S / eps) diag(v). Scalings are carried as log-potentials
 * f = log u, g = log v so that small eps never under- or overflows.
 */
namespace apex {

inline constexpr double kDefaultSinkhornEpsilon = 0.05;
inline constexpr int kDefaultSinkhornIters = 100;
inline constexpr double kDefaultSinkhornTol = 1e-6;

template <typename Scalar>
struct BasicAssignment {
  MatrixX<Scalar> weights;  // K x B, rows = prototypes, columns = samples
  VectorX<Scalar> row_marginals;
  VectorX<Scalar> col_marginals;
  int iterations_used = 0;
  bool converged = false;
  Scalar row_residual = 0;  // max |row sum - target|
  Scalar col_residual = 0;  // max |column sum - target|
};

using AssignmentMatrix = BasicAssignment<double>;

/**
 * Log-domain Sinkhorn-Knopp.
 *
 * Alternates f <- log a - LSE_j(S/eps + g) and g <- log b - LSE_i(S/eps + f) until both marginal
 * residuals (max-norm) are <= tol or max_iters is reached.
 */
template <typename DerivedS, typename DerivedA, typename DerivedB>
BasicAssignment<typename DerivedS::Scalar> sinkhorn(const Eigen::MatrixBase<DerivedS>& similarities,
                                                    typename DerivedS::Scalar epsilon,
                                                    const Eigen::MatrixBase<DerivedA>& row_marginals,
                                                    const Eigen::MatrixBase<DerivedB>& col_marginals,
                                                    int max_iters = kDefaultSinkhornIters,
                                                    typename DerivedS::Scalar tol = kDefaultSinkhornTol) {
  using Scalar = typename DerivedS::Scalar;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using ColArray = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index k = similarities.rows();
  const Eigen::Index b = similarities.cols();

  if (k == 0 || b == 0) throw InputError("sinkhorn needs a non-empty similarity matrix");
  if (row_marginals.size() != k || col_marginals.size() != b) {
    throw InputError("sinkhorn marginal lengths do not match the similarity matrix shape");
  }
  if (!(epsilon > 0)) throw InputError("sinkhorn epsilon must be > 0");
  if (!similarities.allFinite()) throw InputError("sinkhorn similarities must be finite");
  if ((row_marginals.array() < 0).any() || (col_marginals.array() < 0).any() ||
      !row_marginals.allFinite() || !col_marginals.allFinite()) {
    throw InputError("sinkhorn marginals must be finite and non-negative");
  }
  const Scalar row_total = row_marginals.sum();
  const Scalar col_total = col_marginals.sum();
  if (std::abs(row_total - col_total) > Scalar(1e-12)) {
    throw InputError("sinkhorn marginal totals differ: " + std::to_string(row_total) + " vs " +
                     std::to_string(col_total));
  }

  const Array kernel = similarities.array() / epsilon;
  const ColArray log_a = row_marginals.array().log();
  const ColArray log_b = col_marginals.array().log();
  ColArray f = ColArray::Zero(k);
  ColArray g = ColArray::Zero(b);
  constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();

  auto lse_rows = [&](const ColArray& pot) {  // LSE over j of kernel(i, j) + pot(j)
    ColArray out(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto row = kernel.row(i).transpose() + pot;
      const Scalar m = row.maxCoeff();
      out[i] = std::isfinite(m) ? m + std::log((row - m).exp().sum()) : kNegInf;
    }
    return out;
  };
  auto lse_cols = [&](const ColArray& pot) {  // LSE over i of kernel(i, j) + pot(i)
    ColArray out(b);
    for (Eigen::Index j = 0; j < b; ++j) {
      const auto col = kernel.col(j) + pot;
      const Scalar m = col.maxCoeff();
      out[j] = std::isfinite(m) ? m + std::log((col - m).exp().sum()) : kNegInf;
    }
    return out;
  };
  // A zero marginal pins its potential at -inf; keep it there rather than producing NaN.
  auto update = [](const ColArray& log_target, const ColArray& lse) {
    ColArray out(log_target.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      out[i] = std::isfinite(log_target[i]) && std::isfinite(lse[i]) ? log_target[i] - lse[i] : kNegInf;
    }
    return out;
  };

  BasicAssignment<Scalar> result;
  result.row_marginals = row_marginals;
  result.col_marginals = col_marginals;
  ColArray row_lse = lse_rows(g);
  for (int it = 1; it <= std::max(1, max_iters); ++it) {
    f = update(log_a, row_lse);
    g = update(log_b, lse_cols(f));
    result.iterations_used = it;
    // Columns are exact after the g-step; the row residual measures how far f has to move.
    row_lse = lse_rows(g);
    const ColArray row_sums = (row_lse + f).exp();
    result.row_residual = (row_sums - row_marginals.array()).abs().maxCoeff();
    if (result.row_residual <= tol) break;
  }

  result.weights.resize(k, b);
  for (Eigen::Index j = 0; j < b; ++j) {
    for (Eigen::Index i = 0; i < k; ++i) {
      const Scalar e = f[i] + kernel(i, j) + g[j];
      result.weights(i, j) = std::isfinite(e) ? std::exp(e) : Scalar(0);
    }
  }
  if (!result.weights.allFinite()) {
    throw NumericalError("sinkhorn produced a non-finite transport plan");
  }
  result.row_residual = (result.weights.rowwise().sum() - row_marginals).cwiseAbs().maxCoeff();
  result.col_residual = (result.weights.colwise().sum().transpose() - col_marginals).cwiseAbs().maxCoeff();
  result.converged = result.row_residual <= tol && result.col_residual <= tol;
  return result;
}

/**
 * Soft assignment of one class's batch samples to that class's prototypes.
 *
 * Runs sinkhorn on prototypes * batch^T with uniform marginals (1/K rows, 1/B columns), then
 * rescales every column to sum to exactly 1 so each sample carries a distribution over prototypes.
 * The returned marginals describe the rescaled plan.
 */
template <typename DerivedZ, typename DerivedP>
BasicAssignment<typename DerivedZ::Scalar> batch_class_weights(
    const Eigen::MatrixBase<DerivedZ>& batch, const Eigen::MatrixBase<DerivedP>& prototypes,
    typename DerivedZ::Scalar epsilon = kDefaultSinkhornEpsilon, int max_iters = kDefaultSinkhornIters,
    typename DerivedZ::Scalar tol = kDefaultSinkhornTol) {
  using Scalar = typename DerivedZ::Scalar;
  if (batch.rows() == 0) throw InputError("batch_class_weights needs a non-empty batch");
  if (batch.cols() != prototypes.cols()) {
    throw InputError("batch and prototype dimensions differ");
  }
  const Eigen::Index k = prototypes.rows();
  const Eigen::Index b = batch.rows();
  const MatrixX<Scalar> similarities = prototypes * batch.transpose();
  auto out = sinkhorn(similarities, epsilon, VectorX<Scalar>::Constant(k, Scalar(1) / Scalar(k)),
                      VectorX<Scalar>::Constant(b, Scalar(1) / Scalar(b)), max_iters, tol);
  for (Eigen::Index j = 0; j < b; ++j) {
    const Scalar s = out.weights.col(j).sum();
    if (!(s > 0)) throw NumericalError("sample " + std::to_string(j) + " received no transport mass");
    out.weights.col(j) /= s;
  }
  // Marginals follow the rescale: columns now sum to 1, rows to B/K.
  out.row_marginals *= Scalar(b);
  out.col_marginals.setOnes();
  out.row_residual = (out.weights.rowwise().sum() - out.row_marginals).cwiseAbs().maxCoeff();
  out.col_residual = (out.weights.colwise().sum().transpose() - out.col_marginals).cwiseAbs().maxCoeff();
  return out;
}

}  // namespace apex

#endif  // APEX_SINKHORN_HPP
