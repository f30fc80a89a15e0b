#pragma once

// Turning a generated (id, title) pair into a ranked item list: nearest
// neighbours in the ID-embedding space and in the title-embedding space,
// merged positionally (mixup): the first N items come from the ID list, the
// rest from title-list positions N+1 onward.

#include <filesystem>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "fashrec/corpus.hpp"
#include "fashrec/embedcore.hpp"
#include "fashrec/generator.hpp"
#include "fashrec/id_embedder.hpp"
#include "fashrec/io.hpp"
#include "fashrec/promptgen.hpp"

namespace fashrec {

enum class ListSource { IdSpace, TitleSpace, Mixup };

inline const char* to_string(ListSource s) {
  switch (s) {
    case ListSource::IdSpace: return "id";
    case ListSource::TitleSpace: return "title";
    case ListSource::Mixup: return "mixup";
  }
  return "?";
}

struct RankedEntry {
  std::string item_id;
  double score = 0.0;
  ListSource origin = ListSource::IdSpace;  // space the entry was retrieved from

  bool operator==(const RankedEntry&) const = default;
};

struct RankedList {
  std::vector<RankedEntry> entries;
  ListSource source = ListSource::Mixup;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& e : entries) out.push_back(e.item_id);
    return out;
  }
  bool operator==(const RankedList&) const = default;
};

struct MixupParams {
  std::size_t n_head = 1;    // items taken from the ID list
  std::size_t k_total = 10;  // result length

  void validate() const {
    require(k_total >= 1, ErrorKind::Config, "mixup: k_total must be >= 1");
    require(n_head <= k_total, ErrorKind::Config, "mixup: n_head must be <= k_total");
  }
};

inline RankedList to_ranked(const std::vector<Scored>& hits, ListSource source) {
  RankedList out{{}, source};
  for (const auto& h : hits) out.entries.push_back({h.key, h.similarity, source});
  return out;
}

// Exact cosine neighbours of the generated id's embedding; an id missing from
// the table is embedded as the cold vector.
inline RankedList retrieve_by_id(const GenerationOutput& gen, const ItemEmbeddingTable& table,
                                 const VectorIndex& id_index, std::size_t k) {
  require(k >= 1, ErrorKind::Config, "retrieve_by_id: k must be >= 1");
  return to_ranked(id_index.search(table.lookup(gen.item_id), k), ListSource::IdSpace);
}

inline RankedList retrieve_by_id(const GenerationOutput& gen, const ItemEmbeddingTable& table,
                                 std::size_t k) {
  return retrieve_by_id(gen, table, table.to_index(), k);
}

// Catalog titles encoded with `encoder`, keyed by item_id.
inline VectorIndex build_title_index(const Catalog& catalog, const TextEncoder& encoder) {
  VectorIndex index(encoder.dim());
  for (const auto& item : catalog.items()) index.add(item.item_id, encoder.encode(item.title()));
  return index;
}

inline RankedList retrieve_by_title_text(std::string_view text, const TextEncoder& encoder,
                                         const VectorIndex& title_index, std::size_t k) {
  require(k >= 1, ErrorKind::Config, "retrieve_by_title: k must be >= 1");
  require(encoder.dim() == title_index.dim(), ErrorKind::Config,
          "retrieve_by_title: encoder and title index dimensions differ");
  return to_ranked(title_index.search(encoder.encode(text), k), ListSource::TitleSpace);
}

inline RankedList retrieve_by_title(const GenerationOutput& gen, const TextEncoder& encoder,
                                    const VectorIndex& title_index, std::size_t k) {
  require(!gen.title.empty(), ErrorKind::Validation, "retrieve_by_title: empty generated title");
  return retrieve_by_title_text(gen.title, encoder, title_index, k);
}

// Head: the first n_head ID-list entries. Then title-list entries from
// position n_head+1 on, skipping items already chosen. When the lists run
// short, backfill with the remaining ID-list entries and finally the skipped
// head of the title list, so the result has min(k_total, |union|) items.
inline RankedList mixup_merge(const RankedList& id_list, const RankedList& title_list,
                              const MixupParams& params) {
  params.validate();
  RankedList out{{}, ListSource::Mixup};
  std::unordered_set<std::string> chosen;
  auto take = [&](const RankedEntry& e) {
    if (out.entries.size() < params.k_total && chosen.insert(e.item_id).second)
      out.entries.push_back(e);
  };
  const auto& ids = id_list.entries;
  const auto& titles = title_list.entries;
  const std::size_t head = std::min(params.n_head, ids.size());
  for (std::size_t i = 0; i < head; ++i) take(ids[i]);
  for (std::size_t i = params.n_head; i < titles.size(); ++i) take(titles[i]);
  for (std::size_t i = head; i < ids.size(); ++i) take(ids[i]);
  for (std::size_t i = 0; i < std::min(params.n_head, titles.size()); ++i) take(titles[i]);
  return out;
}

// ---------------------------------------------------------------------------
// End-to-end pipeline

struct Recommendation {
  std::string user_id;
  std::string truth;  // empty when unknown
  RankedList ranked;
  ParseStatus parse_status = ParseStatus::Failed;
  GenerationOutput parsed;
  std::string raw;     // last generation text
  int attempts = 0;    // generator calls
  bool fallback = false;
};

// Frozen components. A null ID table disables the ID path (N is then 0); a
// null title encoder disables the title path (N is then K).
struct Recommender {
  const PromptBuilder* prompts = nullptr;
  const TextGenerator* generator = nullptr;
  GenerationParams gen_params;
  const ItemEmbeddingTable* id_table = nullptr;
  const VectorIndex* id_index = nullptr;
  const TextEncoder* title_encoder = nullptr;
  const VectorIndex* title_index = nullptr;
  MixupParams mix;

  bool id_path() const { return id_table != nullptr; }
  bool title_path() const { return title_encoder != nullptr; }

  void validate() const {
    require(prompts && generator, ErrorKind::Config, "recommender: prompt builder and generator required");
    require(id_path() || title_path(), ErrorKind::Config,
            "recommender: at least one of the ID and title paths is required");
    require(!id_path() || id_index, ErrorKind::Config, "recommender: ID path needs an index");
    require(!title_path() || title_index, ErrorKind::Config,
            "recommender: title path needs a title index");
    gen_params.validate();
    mix.validate();
  }

  MixupParams effective_mix() const {
    MixupParams m = mix;
    if (!id_path()) m.n_head = 0;
    if (!title_path()) m.n_head = m.k_total;
    return m;
  }

  // Build prompt, generate, parse, retrieve from both spaces, merge. A Failed
  // parse is retried once; if it fails again the raw text is used as a title
  // query (or, without a title path, the cold vector as an ID query).
  Recommendation recommend(const InteractionSequence& history, std::string truth = {}) const {
    validate();
    Recommendation rec;
    rec.user_id = history.user_id;
    rec.truth = std::move(truth);
    const Prompt prompt = prompts->build(history);
    for (int attempt = 0; attempt < 2; ++attempt) {
      rec.raw = generator->generate(prompt, gen_params);
      ++rec.attempts;
      rec.parsed = parse_generation(rec.raw);
      if (rec.parsed.parse_status != ParseStatus::Failed) break;
    }
    rec.parse_status = rec.parsed.parse_status;
    const MixupParams m = effective_mix();
    const std::size_t depth = m.k_total + m.n_head;

    if (rec.parse_status == ParseStatus::Failed) {
      rec.fallback = true;
      rec.ranked = title_path()
                       ? retrieve_by_title_text(rec.raw, *title_encoder, *title_index, m.k_total)
                       : retrieve_by_id({}, *id_table, *id_index, m.k_total);
      rec.ranked.source = ListSource::Mixup;
      return rec;
    }
    RankedList id_list{{}, ListSource::IdSpace}, title_list{{}, ListSource::TitleSpace};
    if (id_path() && m.n_head > 0) id_list = retrieve_by_id(rec.parsed, *id_table, *id_index, depth);
    if (title_path() && m.n_head < m.k_total)
      title_list = retrieve_by_title(rec.parsed, *title_encoder, *title_index, depth);
    rec.ranked = mixup_merge(id_list, title_list, m);
    return rec;
  }
};

// Run output, one JSON object per line:
// {"user_id", "truth", "ranked": [id], "parse_status", "sources": [id|title]}
inline json to_json(const Recommendation& r) {
  json sources = json::array();
  for (const auto& e : r.ranked.entries) sources.push_back(to_string(e.origin));
  return {{"user_id", r.user_id},
          {"truth", r.truth},
          {"ranked", r.ranked.ids()},
          {"parse_status", to_string(r.parse_status)},
          {"sources", sources}};
}

struct RunRecord {
  std::string user_id;
  std::string truth;
  std::vector<std::string> ranked;
  std::string parse_status;
};

inline RunRecord to_record(const Recommendation& r) {
  return {r.user_id, r.truth, r.ranked.ids(), to_string(r.parse_status)};
}

inline void write_run(const std::filesystem::path& path, std::span<const Recommendation> recs) {
  auto out = open_output(path);
  for (const auto& r : recs) out << to_json(r).dump() << '\n';
  require(static_cast<bool>(out), ErrorKind::Io, "write failed: " + path.string());
}

inline std::vector<RunRecord> load_run(const std::filesystem::path& path) {
  std::vector<RunRecord> out;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    out.push_back({j.at("user_id").get<std::string>(), j.at("truth").get<std::string>(),
                   j.at("ranked").get<std::vector<std::string>>(),
                   j.value("parse_status", std::string("strict"))});
  });
  return out;
}

}  // namespace fashrec
