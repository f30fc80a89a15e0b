#pragma once

// Query-product memory: normalized search queries, embedded as index keys,
// mapped to their organically ranked product lists.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "fashrec/corpus.hpp"
#include "fashrec/embedcore.hpp"
#include "fashrec/io.hpp"

namespace fashrec {

struct MemoryLookupParams {
  std::size_t num_queries = 3;   // nearest stored queries consulted
  std::size_t num_products = 5;  // products taken from each match

  void validate() const {
    require(num_queries >= 1 && num_products >= 1, ErrorKind::Config,
            "memory lookup: num_queries and num_products must be >= 1");
  }
};

// Lowercase and collapse runs of whitespace; trims both ends.
inline std::string normalize_query(std::string_view q) {
  std::string out;
  bool pending_space = false;
  for (char c : q) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

class QueryProductMemory {
 public:
  QueryProductMemory() = default;
  QueryProductMemory(VectorIndex keys, std::map<std::string, std::vector<std::string>> products,
                     std::string encoder_id)
      : keys_(std::move(keys)), products_(std::move(products)), encoder_id_(std::move(encoder_id)) {
    require(keys_.size() == products_.size(), ErrorKind::Validation,
            "memory: key index and product map disagree");
    for (const auto& [q, items] : products_) {
      require(keys_.contains(q), ErrorKind::Validation, "memory: no key for query " + q);
      require(!items.empty(), ErrorKind::Validation, "memory: empty product list for " + q);
    }
  }

  const VectorIndex& keys() const { return keys_; }
  const std::string& encoder_id() const { return encoder_id_; }
  std::size_t size() const { return products_.size(); }
  bool empty() const { return products_.empty(); }
  bool contains(const std::string& normalized_query) const {
    return products_.count(normalized_query) != 0;
  }
  const std::vector<std::string>& products(const std::string& normalized_query) const {
    return products_.at(normalized_query);
  }
  const std::map<std::string, std::vector<std::string>>& all_products() const { return products_; }

  // Writes the key index in the FRVI format plus a JSON sidecar
  // {"encoder_id": str, "queries": {query: [item_id, ...]}}.
  void save(const std::filesystem::path& index_path,
            const std::filesystem::path& sidecar_path) const {
    keys_.save(index_path);
    json sidecar = {{"encoder_id", encoder_id_}, {"queries", products_}};
    write_text(sidecar_path, sidecar.dump(1) + "\n");
  }

  static QueryProductMemory load(const std::filesystem::path& index_path,
                                 const std::filesystem::path& sidecar_path) {
    auto sidecar = json::parse(read_text(sidecar_path));
    return QueryProductMemory(
        VectorIndex::load(index_path),
        sidecar.at("queries").get<std::map<std::string, std::vector<std::string>>>(),
        sidecar.at("encoder_id").get<std::string>());
  }

 private:
  VectorIndex keys_;
  std::map<std::string, std::vector<std::string>> products_;
  std::string encoder_id_;
};

struct MemoryBuildOptions {
  bool purchased_only = false;
};

inline QueryProductMemory build_memory(std::span<const QueryLogRecord> log, const Catalog& catalog,
                                       const TextEncoder& encoder,
                                       const MemoryBuildOptions& opts = {}) {
  require(!log.empty(), ErrorKind::Validation, "build_memory: empty query log");
  // query -> item -> best (smallest) organic position
  std::map<std::string, std::map<std::string, int>> best;
  for (const auto& r : log) {
    require(catalog.contains(r.item_id), ErrorKind::Validation,
            "build_memory: unknown item_id " + r.item_id);
    if (opts.purchased_only && !r.purchased) continue;
    const auto q = normalize_query(r.query);
    if (q.empty()) continue;
    auto& slot = best[q];
    auto [it, fresh] = slot.emplace(r.item_id, r.organic_position);
    if (!fresh) it->second = std::min(it->second, r.organic_position);
  }
  require(!best.empty(), ErrorKind::Validation, "build_memory: no usable records");

  VectorIndex keys(encoder.dim());
  std::map<std::string, std::vector<std::string>> products;
  for (const auto& [q, items] : best) {
    std::vector<std::pair<int, std::string>> ranked;
    for (const auto& [id, pos] : items) ranked.emplace_back(pos, id);
    std::sort(ranked.begin(), ranked.end());
    auto& list = products[q];
    for (auto& [pos, id] : ranked) list.push_back(id);
    keys.add(q, encoder.encode(q));
  }
  return QueryProductMemory(std::move(keys), std::move(products), encoder.id());
}

// Products of the nearest stored queries, in match order, without repeats.
// A stored query equal to the normalized input always comes first.
inline std::vector<std::string> lookup(const QueryProductMemory& mem, std::string_view query,
                                       const MemoryLookupParams& params,
                                       const TextEncoder& encoder) {
  params.validate();
  require(!mem.empty(), ErrorKind::Config, "memory lookup on empty memory");
  require(encoder.id() == mem.encoder_id(), ErrorKind::Config,
          "memory encoder mismatch: memory built with '" + mem.encoder_id() + "', got '" +
              encoder.id() + "'");
  const auto q = normalize_query(query);
  std::vector<std::string> matches;
  if (mem.contains(q)) matches.push_back(q);
  for (const auto& hit : mem.keys().search(encoder.encode(q), params.num_queries + 1)) {
    if (matches.size() == params.num_queries) break;
    if (hit.key != q) matches.push_back(hit.key);
  }
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& m : matches) {
    const auto& items = mem.products(m);
    for (std::size_t i = 0; i < items.size() && i < params.num_products; ++i)
      if (seen.insert(items[i]).second) out.push_back(items[i]);
  }
  return out;
}

}  // namespace fashrec
