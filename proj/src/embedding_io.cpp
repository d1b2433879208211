#include "apex/embedding_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace apex {

namespace {

constexpr std::array<char, 4> kMagic = {'A', 'P', 'E', 'X'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 64;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.append(bytes.data(), bytes.size());
}

template <typename T>
T get_le(const char* in) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), in, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

bool rows_unit_norm(const Matrix& x) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (std::abs(x.row(i).norm() - 1.0) > kUnitNormTolerance) return false;
  }
  return true;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("short write to " + path.string());
}

EmbeddingSet load_csv(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + ": empty file, missing header");
  const auto header = split(trim(line), ',');
  if (header.size() < 3 || trim(header[0]) != "label") {
    throw InputError(path.string() + ": malformed header, expected label,f0,f1,...");
  }
  const auto dim = static_cast<Eigen::Index>(header.size() - 1);
  for (Eigen::Index j = 0; j < dim; ++j) {
    if (trim(header[j + 1]) != "f" + std::to_string(j)) {
      throw InputError(path.string() + ": malformed header column " + std::to_string(j + 1));
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  Eigen::Index row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (static_cast<Eigen::Index>(cells.size()) != dim + 1) {
      throw InputError("dimension mismatch at row " + std::to_string(row) + ": expected " +
                       std::to_string(dim) + " features, got " + std::to_string(cells.size() - 1));
    }
    const auto label_cell = trim(cells[0]);
    int label = -1;
    const auto [lp, lec] = std::from_chars(label_cell.data(), label_cell.data() + label_cell.size(), label);
    if (lec != std::errc() || lp != label_cell.data() + label_cell.size() || label < 0) {
      throw InputError("invalid label at row " + std::to_string(row));
    }
    labels.push_back(label);
    for (Eigen::Index j = 0; j < dim; ++j) {
      const auto cell = trim(cells[j + 1]);
      double v = 0;
      const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || p != cell.data() + cell.size()) {
        throw InputError("unparsable value at row " + std::to_string(row) + ", column " +
                         std::to_string(j));
      }
      if (!std::isfinite(v)) throw InputError("non-finite value at row " + std::to_string(row));
      values.push_back(v);
    }
    ++row;
  }
  if (row == 0) throw InputError(path.string() + ": no samples");

  Matrix features(row, dim);
  for (Eigen::Index i = 0; i < row; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) features(i, j) = values[i * dim + j];
  }
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  return EmbeddingSet(std::move(features), std::move(labels), classes);
}

struct BinaryPayload {
  Matrix features;
  std::vector<int> labels;
  int class_count = 0;
};

BinaryPayload load_binary(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < kHeaderBytes) throw InputError(path.string() + ": truncated header");
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw InputError(path.string() + ": malformed header, bad magic");
  }
  const char* h = bytes.data();
  const auto version = get_le<std::uint32_t>(h + 4);
  const auto n = get_le<std::uint64_t>(h + 8);
  const auto d = get_le<std::uint32_t>(h + 16);
  const auto c = get_le<std::uint32_t>(h + 20);
  if (version != kVersion) {
    throw InputError(path.string() + ": unsupported version " + std::to_string(version));
  }
  for (std::size_t i = 24; i < kHeaderBytes; ++i) {
    if (h[i] != 0) throw InputError(path.string() + ": malformed header, reserved bytes not zero");
  }
  const std::uint64_t expected = kHeaderBytes + n * d * 4 + n * 4;
  if (bytes.size() != expected) {
    throw InputError(path.string() + ": size " + std::to_string(bytes.size()) +
                     " does not match header (expected " + std::to_string(expected) + ")");
  }

  BinaryPayload out;
  out.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  out.labels.resize(n);
  out.class_count = static_cast<int>(c);
  const char* p = bytes.data() + kHeaderBytes;
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j, p += 4) {
      const auto v = get_le<float>(p);
      if (!std::isfinite(v)) throw InputError("non-finite value at row " + std::to_string(i));
      out.features(static_cast<Eigen::Index>(i), j) = static_cast<double>(v);
    }
  }
  for (std::uint64_t i = 0; i < n; ++i, p += 4) {
    const auto label = get_le<std::uint32_t>(p);
    if (label >= c) {
      throw InputError("label " + std::to_string(label) + " >= class count " + std::to_string(c) +
                       " at row " + std::to_string(i));
    }
    out.labels[i] = static_cast<int>(label);
  }
  return out;
}

std::string encode_binary(const Matrix& rows, const std::vector<int>& labels, int class_count) {
  std::string out;
  out.reserve(kHeaderBytes + rows.size() * 4 + labels.size() * 4);
  out.append(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(rows.rows()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(rows.cols()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(class_count));
  out.append(kHeaderBytes - out.size(), '\0');
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) put_le<float>(out, static_cast<float>(rows(i, j)));
  }
  for (int label : labels) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(label));
  return out;
}

}  // namespace

EmbeddingSet::EmbeddingSet(Matrix features, std::vector<int> labels, int class_count)
    : features_(std::move(features)), labels_(std::move(labels)), class_count_(class_count) {
  if (features_.rows() < 1) throw InputError("embedding set needs at least one row");
  if (features_.cols() < 2) throw InputError("embedding dimension must be at least 2");
  if (class_count_ < 1) throw InputError("class count must be at least 1");
  if (static_cast<Eigen::Index>(labels_.size()) != features_.rows()) {
    throw InputError("label count " + std::to_string(labels_.size()) + " does not match row count " +
                     std::to_string(features_.rows()));
  }
  for (Eigen::Index i = 0; i < features_.rows(); ++i) {
    if (!features_.row(i).allFinite()) throw InputError("non-finite value at row " + std::to_string(i));
    const int label = labels_[i];
    if (label < 0 || label >= class_count_) {
      throw InputError("label " + std::to_string(label) + " out of range at row " + std::to_string(i));
    }
  }
  normalized_ = rows_unit_norm(features_);
}

std::vector<int> EmbeddingSet::class_sizes() const {
  std::vector<int> counts(class_count_, 0);
  for (int label : labels_) ++counts[label];
  return counts;
}

std::vector<Eigen::Index> EmbeddingSet::class_indices(int c) const {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < size(); ++i) {
    if (labels_[i] == c) rows.push_back(i);
  }
  return rows;
}

Matrix EmbeddingSet::class_features(int c) const {
  const auto rows = class_indices(c);
  Matrix out(static_cast<Eigen::Index>(rows.size()), dim());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(r) = features_.row(rows[r]);
  return out;
}

EmbeddingSet EmbeddingSet::subset(const std::vector<Eigen::Index>& rows) const {
  Matrix f(static_cast<Eigen::Index>(rows.size()), dim());
  std::vector<int> l(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    f.row(r) = features_.row(rows[r]);
    l[r] = labels_[rows[r]];
  }
  return EmbeddingSet(std::move(f), std::move(l), class_count_);
}

bool EmbeddingSet::operator==(const EmbeddingSet& other) const {
  return class_count_ == other.class_count_ && labels_ == other.labels_ &&
         features_.rows() == other.features_.rows() && features_.cols() == other.features_.cols() &&
         features_ == other.features_;
}

EmbeddingFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? EmbeddingFormat::kCsv : EmbeddingFormat::kBinary;
}

EmbeddingSet load_embeddings(const std::filesystem::path& path, EmbeddingFormat format) {
  if (!std::filesystem::exists(path)) throw InputError("embedding file not found: " + path.string());
  if (format == EmbeddingFormat::kCsv) return load_csv(path);
  auto payload = load_binary(path);
  return EmbeddingSet(std::move(payload.features), std::move(payload.labels), payload.class_count);
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path,
                     EmbeddingFormat format) {
  if (format == EmbeddingFormat::kBinary) {
    write_file(path, encode_binary(set.features(), set.labels(), set.class_count()));
    return;
  }
  std::string out = "label";
  for (Eigen::Index j = 0; j < set.dim(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  std::array<char, 32> buf;
  for (Eigen::Index i = 0; i < set.size(); ++i) {
    out += std::to_string(set.labels()[i]);
    for (Eigen::Index j = 0; j < set.dim(); ++j) {
      // Shortest representation that round-trips to the same double.
      const auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), set.features()(i, j));
      out += ',';
      out.append(buf.data(), p);
    }
    out += '\n';
  }
  write_file(path, out);
}

void save_matrix_binary(const Matrix& rows, const std::vector<int>& labels, int class_count,
                        const std::filesystem::path& path) {
  if (static_cast<Eigen::Index>(labels.size()) != rows.rows()) {
    throw InputError("label count does not match row count for " + path.string());
  }
  write_file(path, encode_binary(rows, labels, class_count));
}

Matrix load_matrix_binary(const std::filesystem::path& path, std::vector<int>* labels) {
  if (!std::filesystem::exists(path)) throw InputError("matrix file not found: " + path.string());
  auto payload = load_binary(path);
  if (labels) *labels = std::move(payload.labels);
  return std::move(payload.features);
}

EmbeddingSet normalize_rows(const EmbeddingSet& set) {
  return EmbeddingSet(normalized_rows(set.features()), set.labels(), set.class_count());
}

}  // namespace apex
