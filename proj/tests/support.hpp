#ifndef APEX_TESTS_SUPPORT_HPP
#define APEX_TESTS_SUPPORT_HPP

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "apex/core.hpp"
#include "apex/manifold.hpp"

namespace support {

inline apex::Matrix random_unit_rows(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0, 1);
  apex::Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = normal(rng);
    m.row(i).normalize();
  }
  return m;
}

inline apex::PrototypeManifold random_manifold(const std::vector<int>& k_map, Eigen::Index d, std::mt19937_64& rng,
                                               double kappa = 10.0) {
  std::vector<apex::Matrix> p;
  for (int k : k_map) p.push_back(random_unit_rows(k, d, rng));
  return apex::PrototypeManifold(std::move(p), kappa);
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("apex_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace support

#endif  // APEX_TESTS_SUPPORT_HPP
