#pragma once

// Embedding primitives shared by the memory and retrieval stages: cosine
// similarity, a deterministic hashed 3-gram text encoder, and an exact
// cosine nearest-neighbor index with a binary snapshot format.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "fashrec/error.hpp"
#include "fashrec/io.hpp"

namespace fashrec {

using Vector = Eigen::VectorXd;

inline double cosine_similarity(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), ErrorKind::Numeric,
          "dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  const double na = a.norm();
  const double nb = b.norm();
  require(na > 0.0 && nb > 0.0, ErrorKind::Numeric, "cosine of a zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

inline Vector l2_normalized(const Vector& v) {
  const double n = v.norm();
  require(n > 0.0 && std::isfinite(n), ErrorKind::Numeric, "cannot normalize zero vector");
  return v / n;
}

// Hashed character 3-grams of the lowercased, space-padded text, each
// projected through a seeded +-1 sign row, summed and L2-normalized. The
// sign matrix is never materialized: row g is the bit stream of
// splitmix64(hash(g) ^ seed-mix + word).
inline Vector baseline_encode(std::string_view text, int dim, std::uint64_t seed = 0) {
  require(dim >= 8, ErrorKind::Config, "baseline_encode: dim must be >= 8");
  std::string padded = " ";
  for (char c : text) padded += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  padded += ' ';
  std::vector<std::string_view> grams;
  const std::string_view pv(padded);
  if (pv.size() < 3) {
    grams.push_back(pv);
  } else {
    for (std::size_t i = 0; i + 3 <= pv.size(); ++i) grams.push_back(pv.substr(i, 3));
  }
  const std::uint64_t seed_mix = splitmix64(seed ^ 0x5eedf00dULL);
  Vector v = Vector::Zero(dim);
  for (auto g : grams) {
    const std::uint64_t row = fnv1a64(g) ^ seed_mix;
    std::uint64_t bits = 0;
    for (int j = 0; j < dim; ++j) {
      if (j % 64 == 0) bits = splitmix64(row + static_cast<std::uint64_t>(j / 64));
      v[j] += (bits >> (j % 64)) & 1ULL ? 1.0 : -1.0;
    }
  }
  // Every gram cancelling out is possible in principle; use a fixed basis vector then.
  if (v.squaredNorm() == 0.0) v[0] = 1.0;
  return v / v.norm();
}

// Anything that maps text into a fixed-dimension space.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  virtual Vector encode(std::string_view text) const = 0;
};

class BaselineEncoder final : public TextEncoder {
 public:
  explicit BaselineEncoder(int dim = 256, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {
    require(dim >= 8, ErrorKind::Config, "baseline encoder dim must be >= 8");
  }
  std::string id() const override {
    return "baseline-3gram/d" + std::to_string(dim_) + "/s" + std::to_string(seed_);
  }
  int dim() const override { return dim_; }
  Vector encode(std::string_view text) const override { return baseline_encode(text, dim_, seed_); }

 private:
  int dim_;
  std::uint64_t seed_;
};

struct Scored {
  std::string key;
  double similarity = 0.0;

  bool operator==(const Scored&) const = default;
};

// Exact cosine index. Results are ordered by similarity descending, then key
// ascending, so output does not depend on insertion order.
class VectorIndex {
 public:
  explicit VectorIndex(int dim = 0) : dim_(dim) {}

  void add(std::string key, const Vector& v) {
    require(dim_ > 0, ErrorKind::Config, "VectorIndex: dim must be positive");
    require(v.size() == dim_, ErrorKind::Numeric,
            "VectorIndex: dimension mismatch for key " + key);
    require(v.allFinite(), ErrorKind::Numeric, "VectorIndex: non-finite vector for key " + key);
    const double n = v.norm();
    require(n > 0.0, ErrorKind::Numeric, "VectorIndex: zero vector for key " + key);
    auto [it, inserted] = slot_.emplace(key, keys_.size());
    require(inserted, ErrorKind::Validation, "VectorIndex: duplicate key " + key);
    keys_.push_back(std::move(key));
    raw_.insert(raw_.end(), v.data(), v.data() + dim_);
    for (int j = 0; j < dim_; ++j) unit_.push_back(v[j] / n);
  }

  int dim() const { return dim_; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }
  const std::string& key(std::size_t i) const { return keys_.at(i); }
  bool contains(const std::string& key) const { return slot_.count(key) != 0; }

  Vector vector(std::size_t i) const {
    return Eigen::Map<const Vector>(raw_.data() + i * static_cast<std::size_t>(dim_), dim_);
  }

  std::optional<Vector> find(const std::string& key) const {
    auto it = slot_.find(key);
    if (it == slot_.end()) return std::nullopt;
    return vector(it->second);
  }

  std::vector<Scored> search(const Vector& query, std::size_t k) const {
    require(k >= 1, ErrorKind::Config, "nn_search: k must be >= 1");
    require(!empty(), ErrorKind::Config, "nn_search: empty index");
    require(query.size() == dim_, ErrorKind::Numeric,
            "nn_search: dimension mismatch: index " + std::to_string(dim_) + ", query " +
                std::to_string(query.size()));
    const Vector q = l2_normalized(query);
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMajor> rows(unit_.data(), static_cast<Eigen::Index>(size()), dim_);
    const Vector scores = rows * q;

    std::vector<std::size_t> order(size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t take = std::min(k, order.size());
    auto better = [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return keys_[a] < keys_[b];
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                      order.end(), better);
    std::vector<Scored> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
      out.push_back({keys_[order[i]], std::clamp(scores[order[i]], -1.0, 1.0)});
    return out;
  }

  // Layout (little-endian): "FRVI" u32:version=1 u32:dim u64:count, then per
  // entry u32:key_len key_bytes f32[dim].
  void save(const std::filesystem::path& path) const {
    auto out = open_output(path, std::ios::binary);
    out.write("FRVI", 4);
    binio::put<std::uint32_t>(out, 1);
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    binio::put<std::uint64_t>(out, size());
    for (std::size_t i = 0; i < size(); ++i) {
      binio::put_string(out, keys_[i]);
      for (int j = 0; j < dim_; ++j)
        binio::put<float>(out, static_cast<float>(raw_[i * static_cast<std::size_t>(dim_) + j]));
    }
    if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
  }

  static VectorIndex load(const std::filesystem::path& path) {
    auto in = open_input(path, std::ios::binary);
    binio::expect_magic(in, "FRVI");
    const auto version = binio::get<std::uint32_t>(in);
    require(version == 1, ErrorKind::Validation, "unsupported index version");
    VectorIndex index(static_cast<int>(binio::get<std::uint32_t>(in)));
    const auto count = binio::get<std::uint64_t>(in);
    Vector v(index.dim());
    for (std::uint64_t i = 0; i < count; ++i) {
      auto key = binio::get_string(in);
      for (int j = 0; j < index.dim(); ++j) v[j] = binio::get<float>(in);
      index.add(std::move(key), v);
    }
    return index;
  }

 private:
  int dim_;
  std::vector<std::string> keys_;
  std::vector<double> raw_;   // row-major, as added
  std::vector<double> unit_;  // row-major, L2-normalized
  std::unordered_map<std::string, std::size_t> slot_;
};

inline std::vector<Scored> nn_search(const VectorIndex& index, const Vector& query,
                                     std::size_t k) {
  return index.search(query, k);
}

}  // namespace fashrec
