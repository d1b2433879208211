#ifndef APEX_CORE_HPP
#define APEX_CORE_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

/**
 * @file core.hpp
 *
 * @brief Dense type aliases, the error hierarchy and seed derivation shared by every module.
 */
namespace apex {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using IndexVector = Eigen::Matrix<int, Eigen::Dynamic, 1>;

/// Failure category. Maps onto CLI exit codes: input/config -> 2, numerical -> 3.
enum class ErrorKind { kInput, kConfig, kNumerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct InputError : Error {
  explicit InputError(const std::string& what) : Error(ErrorKind::kInput, what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::kNumerical, what) {}
};

/// Pipeline stages that draw randomness. Mixed into the seed so stages never share a stream.
enum class Stage : std::uint64_t {
  kGmm = 1,
  kKAssignment = 2,
  kInit = 3,
  kTrain = 4,
  kSynth = 5,
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from the run seed, a stage and up to two sub-indices.
constexpr std::uint64_t derive_seed(std::uint64_t seed, Stage stage, std::uint64_t a = 0,
                                    std::uint64_t b = 0) noexcept {
  std::uint64_t s = mix64(seed ^ mix64(static_cast<std::uint64_t>(stage)));
  s = mix64(s ^ mix64(a + 0x632BE59BD9B4E019ULL));
  return mix64(s ^ mix64(b + 0x85157AF5ULL));
}

/// Numerically stable log(sum(exp(v))). Returns -inf for an empty or all -inf input.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) return -std::numeric_limits<Scalar>::infinity();
  const Scalar m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace apex

#endif  // APEX_CORE_HPP
