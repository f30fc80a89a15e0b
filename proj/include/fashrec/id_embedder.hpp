#pragma once

// Session-based next-item model whose item embedding table serves as the ID
// embedding space. A session is the L2-normalized mean of its context items'
// embeddings; the next item is scored by cosine / temperature under a full
// softmax over the catalog.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "fashrec/corpus.hpp"
#include "fashrec/embedcore.hpp"
#include "fashrec/io.hpp"

namespace fashrec {

class ItemEmbeddingTable {
 public:
  ItemEmbeddingTable() = default;
  // Rows of `vectors` follow `ids`. The cold vector defaults to the centroid.
  ItemEmbeddingTable(std::vector<std::string> ids, Eigen::MatrixXd vectors,
                     std::optional<Vector> cold = std::nullopt)
      : ids_(std::move(ids)), vectors_(std::move(vectors)) {
    require(!ids_.empty(), ErrorKind::Validation, "item table: no items");
    require(static_cast<Eigen::Index>(ids_.size()) == vectors_.rows() && vectors_.cols() >= 1,
            ErrorKind::Validation, "item table: ids and vectors disagree");
    require(vectors_.allFinite(), ErrorKind::Numeric, "item table: non-finite embedding");
    for (std::size_t i = 0; i < ids_.size(); ++i)
      require(row_of_.emplace(ids_[i], i).second, ErrorKind::Validation,
              "item table: duplicate id " + ids_[i]);
    cold_ = cold ? *cold : Vector(vectors_.colwise().mean().transpose());
    require(cold_.size() == vectors_.cols() && cold_.allFinite(), ErrorKind::Validation,
            "item table: invalid cold vector");
  }

  int dim() const { return static_cast<int>(vectors_.cols()); }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const Eigen::MatrixXd& matrix() const { return vectors_; }
  const Vector& cold_vector() const { return cold_; }
  bool contains(const std::string& id) const { return row_of_.count(id) != 0; }
  std::optional<std::size_t> row(const std::string& id) const {
    auto it = row_of_.find(id);
    if (it == row_of_.end()) return std::nullopt;
    return it->second;
  }
  // Unknown ids resolve to the cold vector.
  Vector lookup(const std::string& id) const {
    auto r = row(id);
    return r ? Vector(vectors_.row(static_cast<Eigen::Index>(*r)).transpose()) : cold_;
  }

  // Exact-cosine index over all rows.
  VectorIndex to_index() const {
    VectorIndex index(dim());
    for (std::size_t i = 0; i < ids_.size(); ++i)
      index.add(ids_[i], vectors_.row(static_cast<Eigen::Index>(i)).transpose());
    return index;
  }

  // Rows as an FRVI index plus a JSON sidecar
  // {"dim", "temperature", "cold_vector": [..]}.
  void save(const std::filesystem::path& index_path, const std::filesystem::path& sidecar_path,
            double temperature) const {
    to_index().save(index_path);
    std::vector<double> cold(cold_.data(), cold_.data() + cold_.size());
    json sidecar = {{"dim", dim()}, {"temperature", temperature}, {"cold_vector", cold}};
    write_text(sidecar_path, sidecar.dump() + "\n");
  }

  // Returns the table and the stored temperature.
  static std::pair<ItemEmbeddingTable, double> load(const std::filesystem::path& index_path,
                                                    const std::filesystem::path& sidecar_path) {
    const auto index = VectorIndex::load(index_path);
    json sidecar;
    try {
      sidecar = json::parse(read_text(sidecar_path));
    } catch (const json::exception& e) {
      fail(ErrorKind::Validation, sidecar_path.string() + ": " + e.what());
    }
    const auto cold = sidecar.at("cold_vector").get<std::vector<double>>();
    std::vector<std::string> ids;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(index.size()), index.dim());
    for (std::size_t i = 0; i < index.size(); ++i) {
      ids.push_back(index.key(i));
      m.row(static_cast<Eigen::Index>(i)) = index.vector(i).transpose();
    }
    Vector c = Eigen::Map<const Vector>(cold.data(), static_cast<Eigen::Index>(cold.size()));
    return {ItemEmbeddingTable(std::move(ids), std::move(m), std::move(c)),
            sidecar.at("temperature").get<double>()};
  }

  void round_to_float() {
    vectors_ = vectors_.cast<float>().cast<double>();
    cold_ = cold_.cast<float>().cast<double>();
  }

 private:
  friend struct IdTrainer;
  std::vector<std::string> ids_;
  Eigen::MatrixXd vectors_;
  Vector cold_;
  std::unordered_map<std::string, std::size_t> row_of_;
};

inline Vector session_encode(std::span<const std::string> context,
                             const ItemEmbeddingTable& table) {
  require(!context.empty(), ErrorKind::Validation, "session_encode: empty context");
  Vector mean = Vector::Zero(table.dim());
  for (const auto& id : context) mean += table.lookup(id);
  mean /= static_cast<double>(context.size());
  const double n = mean.norm();
  require(n > 0 && std::isfinite(n), ErrorKind::Numeric, "session_encode: zero session vector");
  return mean / n;
}

struct SessionExample {
  std::vector<std::string> context;  // prior item events, oldest first
  std::string target;                // purchased item
};

// One example per purchase that has at least one earlier item event. Search
// events are skipped. `window` > 0 keeps only the most recent items.
inline std::vector<SessionExample> session_examples(std::span<const InteractionSequence> seqs,
                                                    std::size_t window = 0) {
  std::vector<SessionExample> out;
  for (const auto& seq : seqs) {
    std::vector<std::string> ctx;
    for (const auto& e : seq.events) {
      if (e.is_search()) continue;
      if (e.action == Action::Purchase && !ctx.empty()) {
        const std::size_t from = window && ctx.size() > window ? ctx.size() - window : 0;
        out.push_back({{ctx.begin() + static_cast<std::ptrdiff_t>(from), ctx.end()}, e.payload});
      }
      ctx.push_back(e.payload);
    }
  }
  return out;
}

// Mean softmax cross-entropy over the examples. When `grad` is given it must
// be table-shaped; d(loss)/d(rows) is added to it. Context ids missing from
// the table use the cold vector and receive no gradient.
inline double next_item_loss(std::span<const SessionExample> batch,
                             const ItemEmbeddingTable& table, double temperature,
                             Eigen::MatrixXd* grad = nullptr) {
  require(temperature > 0, ErrorKind::Config, "next_item_loss: temperature must be > 0");
  require(!batch.empty(), ErrorKind::Validation, "next_item_loss: empty batch");
  const auto& E = table.matrix();
  const Vector norms = E.rowwise().norm();
  require((norms.array() > 0).all(), ErrorKind::Numeric, "next_item_loss: zero item embedding");
  const Eigen::MatrixXd U = norms.cwiseInverse().asDiagonal() * E;  // unit rows
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0;
  for (const auto& ex : batch) {
    const auto t = table.row(ex.target);
    require(t.has_value(), ErrorKind::Validation, "next_item_loss: unknown target " + ex.target);
    require(!ex.context.empty(), ErrorKind::Validation, "next_item_loss: empty context");
    Vector mean = Vector::Zero(table.dim());
    for (const auto& id : ex.context) mean += table.lookup(id);
    mean /= static_cast<double>(ex.context.size());
    const double mnorm = mean.norm();
    require(mnorm > 0, ErrorKind::Numeric, "next_item_loss: zero session vector");
    const Vector s = mean / mnorm;
    const Vector logits = (U * s) / temperature;
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    total += lse - logits[static_cast<Eigen::Index>(*t)];
    if (!grad) continue;

    Vector dlogit = (logits.array() - lse).exp().matrix();
    dlogit[static_cast<Eigen::Index>(*t)] -= 1.0;
    const Vector dcos = dlogit * (scale / temperature);
    // cos_v = u_v . s with u_v = E_v / |E_v|
    const Vector us = U * s;
    for (Eigen::Index v = 0; v < E.rows(); ++v)
      grad->row(v) += (dcos[v] / norms[v]) * (s - U.row(v).transpose() * us[v]).transpose();
    const Vector ds = U.transpose() * dcos;
    const Vector dmean = (ds - s * s.dot(ds)) / mnorm;
    for (const auto& id : ex.context)
      if (auto r = table.row(id))
        grad->row(static_cast<Eigen::Index>(*r)) +=
            dmean.transpose() / static_cast<double>(ex.context.size());
  }
  return total * scale;
}

struct IdTrainConfig {
  int d_id = 64;
  double temperature = 0.07;
  double lr = 1e-2;
  int epochs = 20;
  std::size_t batch = 16;
  std::size_t context_window = 0;  // 0 = full history
  std::uint64_t seed = 0;

  void validate() const {
    require(d_id >= 1 && temperature > 0 && lr > 0 && epochs >= 0 && batch >= 1,
            ErrorKind::Config, "id training: invalid d_id, temperature, lr, epochs or batch");
  }
};

struct IdTrainResult {
  ItemEmbeddingTable table;
  // Full-data mean loss: entry 0 at initialization, then one per epoch.
  std::vector<double> loss_trace;
};

inline ItemEmbeddingTable init_item_table(const Catalog& catalog, int d_id, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d_id)));
  std::vector<std::string> ids;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(catalog.size()), d_id);
  for (const auto& item : catalog.items()) {
    const auto r = static_cast<Eigen::Index>(ids.size());
    for (Eigen::Index c = 0; c < d_id; ++c) m(r, c) = dist(rng);
    ids.push_back(item.item_id);
  }
  return ItemEmbeddingTable(std::move(ids), std::move(m));
}

struct IdTrainer {
  static void step(ItemEmbeddingTable& table, const Eigen::MatrixXd& grad, double lr) {
    table.vectors_ -= lr * grad;
  }
  static void finish(ItemEmbeddingTable& table) {
    table.cold_ = table.vectors_.colwise().mean().transpose();
    table.round_to_float();
  }
};

// Mini-batch SGD; single-threaded and determined by cfg.seed. Every catalog
// item gets a row; the cold vector is the centroid of the trained rows.
inline IdTrainResult train_id_model(std::span<const InteractionSequence> seqs,
                                    const Catalog& catalog, const IdTrainConfig& cfg) {
  cfg.validate();
  auto examples = session_examples(seqs, cfg.context_window);
  require(!examples.empty(), ErrorKind::Validation,
          "id training: no (context, purchase) examples in the training sequences");
  for (const auto& ex : examples)
    require(catalog.contains(ex.target), ErrorKind::Validation,
            "id training: unknown item " + ex.target);

  IdTrainResult result;
  result.table = init_item_table(catalog, cfg.d_id, cfg.seed);
  result.loss_trace.push_back(next_item_loss(examples, result.table, cfg.temperature));
  std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x6964ULL));
  const auto& ids = result.table.ids();
  Eigen::MatrixXd grad(static_cast<Eigen::Index>(ids.size()), cfg.d_id);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(examples.begin(), examples.end(), rng);
    for (std::size_t start = 0; start < examples.size(); start += cfg.batch) {
      const std::size_t end = std::min(examples.size(), start + cfg.batch);
      grad.setZero();
      const double loss = next_item_loss(
          std::span<const SessionExample>(examples.data() + start, end - start), result.table,
          cfg.temperature, &grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        fail(ErrorKind::Numeric, "id training diverged at epoch " + std::to_string(epoch) +
                                     " (loss " + std::to_string(loss) +
                                     "); lower the learning rate");
      IdTrainer::step(result.table, grad, cfg.lr);
    }
    result.loss_trace.push_back(next_item_loss(examples, result.table, cfg.temperature));
  }
  IdTrainer::finish(result.table);
  return result;
}

}  // namespace fashrec
