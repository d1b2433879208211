#ifndef APEX_EMBEDDING_IO_HPP
#define APEX_EMBEDDING_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "apex/core.hpp"

namespace apex {

/// Tolerance on |norm - 1| under which a row counts as unit length.
inline constexpr double kUnitNormTolerance = 1e-6;

/**
 * @brief N labeled D-dimensional feature vectors.
 *
 * Features are stored in 64-bit reals regardless of the on-disk format. The normalized flag is
 * computed by inspection, never trusted from input.
 */
class EmbeddingSet {
 public:
  EmbeddingSet() = default;

  /// Validates and takes ownership. Throws InputError naming the offending row.
  EmbeddingSet(Matrix features, std::vector<int> labels, int class_count);

  const Matrix& features() const noexcept { return features_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  int class_count() const noexcept { return class_count_; }
  bool normalized() const noexcept { return normalized_; }

  Eigen::Index size() const noexcept { return features_.rows(); }
  Eigen::Index dim() const noexcept { return features_.cols(); }

  /// Sample count per class, length class_count().
  std::vector<int> class_sizes() const;
  /// Row indices of the samples labeled c, in file order.
  std::vector<Eigen::Index> class_indices(int c) const;
  /// Features of class c stacked in file order.
  Matrix class_features(int c) const;

  /// A copy restricted to the given rows, keeping the class count.
  EmbeddingSet subset(const std::vector<Eigen::Index>& rows) const;

  bool operator==(const EmbeddingSet& other) const;

 private:
  Matrix features_;
  std::vector<int> labels_;
  int class_count_ = 0;
  bool normalized_ = false;
};

enum class EmbeddingFormat { kCsv, kBinary };

/// Picks the format from the extension: ".csv" is CSV, everything else raw binary.
EmbeddingFormat format_from_path(const std::filesystem::path& path);

EmbeddingSet load_embeddings(const std::filesystem::path& path, EmbeddingFormat format);
inline EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  return load_embeddings(path, format_from_path(path));
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path,
                     EmbeddingFormat format);
inline void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  save_embeddings(set, path, format_from_path(path));
}

/// Raw-binary matrix I/O for checkpoints: same layout as embedding files, labels carried along.
void save_matrix_binary(const Matrix& rows, const std::vector<int>& labels, int class_count,
                        const std::filesystem::path& path);
Matrix load_matrix_binary(const std::filesystem::path& path, std::vector<int>* labels = nullptr);

/// Projects every row onto the unit sphere. Throws InputError on a zero-norm row.
EmbeddingSet normalize_rows(const EmbeddingSet& set);

/// Row-wise normalization of a bare matrix; the same arithmetic as normalize_rows.
template <typename Derived>
MatrixX<typename Derived::Scalar> normalized_rows(const Eigen::MatrixBase<Derived>& x) {
  MatrixX<typename Derived::Scalar> out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const auto n = out.row(i).norm();
    if (n == 0) throw InputError("zero-norm row at row " + std::to_string(i));
    // Rows within a few ulps of unit length are left untouched so normalization is idempotent.
    using Scalar = typename Derived::Scalar;
    if (std::abs(n - Scalar(1)) > 32 * std::numeric_limits<Scalar>::epsilon()) out.row(i) /= n;
  }
  return out;
}

}  // namespace apex

#endif  // APEX_EMBEDDING_IO_HPP
