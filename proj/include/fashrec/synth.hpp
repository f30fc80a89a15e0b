#pragma once

// Deterministic synthetic corpora with planted structure:
//   - items are grouped into families; every title in a family contains the
//     family word, and every query for the family contains it too;
//   - item-to-item transitions follow a planted successor map with
//     probability `transition_prob`, uniform otherwise.

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "fashrec/corpus.hpp"

namespace fashrec {

struct SynthSpec {
  std::size_t num_items = 200;
  std::size_t num_users = 50;
  std::size_t family_size = 5;  // titles per family; num_items must divide
  double transition_prob = 0.9;
  std::size_t min_steps = 5;  // item events per user, uniform in [min, max]
  std::size_t max_steps = 13;
  double search_prob = 0.3;    // chance of a search before an item event
  double purchase_prob = 0.4;  // non-final item events
  std::size_t family_offset = 0;  // first word of the family word list
  std::string category = "footwear";
  std::string id_prefix = "I";
};

struct SynthCorpus {
  Catalog catalog;
  std::vector<InteractionSequence> sequences;
  std::vector<QueryLogRecord> querylog;
  // Planted structure, for tests.
  std::unordered_map<std::string, std::string> successor;    // item -> planted next item
  std::unordered_map<std::string, std::size_t> family_of;    // item -> family index
  std::vector<std::string> family_words;                     // per family
  std::vector<std::string> family_query;                     // canonical query per family
  std::vector<std::vector<std::string>> family_items;        // per family, catalog order
};

namespace synth_detail {

inline const std::vector<std::string>& base_words() {
  static const std::vector<std::string> words = {
      "boot",     "sandal",  "sneaker",  "loafer",   "pump",     "slipper", "clog",
      "mule",     "oxford",  "wedge",    "espadrille", "moccasin", "backpack", "tote",
      "duffel",   "satchel", "clutch",   "wallet",   "suitcase", "briefcase", "crossbody",
      "necklace", "bracelet", "earring", "ring",     "pendant",  "anklet",  "brooch",
      "watch",    "scarf",   "belt",     "beanie",   "fedora",   "glove",   "sunglasses",
      "dress",    "skirt",   "blouse",   "sweater",  "cardigan", "hoodie",  "jacket",
      "parka",    "blazer",  "jeans",    "legging",  "jumpsuit", "romper",  "kimono",
      "tunic",    "vest",    "poncho",   "trench",   "chino",    "jogger",  "bikini",
      "pajama",   "robe",    "sock",     "tights",   "camisole", "bodysuit", "overall",
      "windbreaker"};
  return words;
}

// Pronounceable filler words beyond the base list; bijective in index.
inline std::string pseudo_word(std::size_t i) {
  static const char* onset[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static const char* nucleus[] = {"a", "e", "i", "o", "u"};
  std::string w;
  do {
    w += onset[i % 14];
    i /= 14;
    w += nucleus[i % 5];
    i /= 5;
  } while (i > 0);
  return w + "x";
}

inline std::string family_word(std::size_t i) {
  const auto& base = base_words();
  return i < base.size() ? base[i] : pseudo_word(i - base.size());
}

inline const std::vector<std::string> kBrands = {
    "acme", "northwind", "lumen", "verdant", "orbit", "halcyon", "ember", "tundra",
    "solace", "quarry", "meridian", "cobalt", "juniper", "atlas", "nimbus", "sierra"};
inline const std::vector<std::string> kColors = {
    "black", "white", "red", "navy", "olive", "beige", "grey", "brown",
    "pink", "teal", "burgundy", "mustard", "ivory", "charcoal"};
inline const std::vector<std::string> kMaterials = {
    "leather", "suede", "canvas", "cotton", "wool", "denim", "linen", "silk", "nylon", "knit"};
inline const std::vector<std::string> kStyles = {
    "classic", "slim", "casual", "vintage", "sport", "minimal", "chunky", "cropped",
    "relaxed", "pleated", "quilted", "waterproof"};
inline const std::vector<std::string> kSizes = {"xs", "s", "m", "l", "xl"};
inline const std::vector<std::string> kAudience = {"womens", "mens", "kids", "unisex"};

template <typename Rng>
const std::string& pick(const std::vector<std::string>& v, Rng& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

template <typename Rng>
double unit(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace synth_detail

inline SynthCorpus synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
  using namespace synth_detail;
  require(spec.num_items >= 2 && spec.family_size >= 1 && spec.num_users >= 1,
          ErrorKind::Config, "synth: need >= 2 items, >= 1 user, family_size >= 1");
  require(spec.num_items % spec.family_size == 0, ErrorKind::Config,
          "synth: num_items must be a multiple of family_size");
  require(spec.min_steps >= 1 && spec.min_steps <= spec.max_steps, ErrorKind::Config,
          "synth: invalid step range");
  require(spec.transition_prob >= 0.0 && spec.transition_prob <= 1.0, ErrorKind::Config,
          "synth: transition_prob must be in [0, 1]");

  std::mt19937_64 rng(seed);
  SynthCorpus out;
  const std::size_t families = spec.num_items / spec.family_size;

  // Catalog: unique titles "<brand> <color> <material> <family> <style>".
  std::set<std::string> titles;
  std::vector<std::string> ids;
  out.family_items.resize(families);
  for (std::size_t f = 0; f < families; ++f) {
    const auto word = family_word(spec.family_offset + f);
    out.family_words.push_back(word);
    out.family_query.push_back(pick(kAudience, rng) + " " + word);
    for (std::size_t j = 0; j < spec.family_size; ++j) {
      std::string title, brand, color, material;
      do {
        brand = pick(kBrands, rng);
        color = pick(kColors, rng);
        material = pick(kMaterials, rng);
        title = brand + " " + color + " " + material + " " + word + " " + pick(kStyles, rng);
      } while (!titles.insert(title).second);
      const auto id = spec.id_prefix + std::to_string(100000 + ids.size());
      out.catalog.add({id,
                       {{"title", title},
                        {"category", spec.category},
                        {"brand", brand},
                        {"color", color},
                        {"material", material},
                        {"size", pick(kSizes, rng)}}});
      out.family_of[id] = f;
      out.family_items[f].push_back(id);
      ids.push_back(id);
    }
  }

  // Planted successor: a single random cycle, so no item maps to itself.
  std::vector<std::string> cycle = ids;
  std::shuffle(cycle.begin(), cycle.end(), rng);
  for (std::size_t i = 0; i < cycle.size(); ++i)
    out.successor[cycle[i]] = cycle[(i + 1) % cycle.size()];

  auto query_variant = [&](std::size_t f, std::size_t v) {
    const auto& word = out.family_words[f];
    switch (v % 3) {
      case 0: return out.family_query[f];
      case 1: return kColors[(f * 7 + v) % kColors.size()] + " " + word;
      default: return word + " " + kMaterials[(f * 3 + v) % kMaterials.size()];
    }
  };

  // Query log: every family item appears under every variant, positions are
  // a random permutation; canonical-query records are all purchases.
  for (std::size_t f = 0; f < families; ++f) {
    for (std::size_t v = 0; v < 3; ++v) {
      std::vector<std::size_t> pos(spec.family_size);
      for (std::size_t j = 0; j < pos.size(); ++j) pos[j] = j + 1;
      std::shuffle(pos.begin(), pos.end(), rng);
      for (std::size_t j = 0; j < spec.family_size; ++j) {
        const bool bought = v == 0 || unit(rng) < 0.3;
        out.querylog.push_back({query_variant(f, v), out.family_items[f][j],
                                static_cast<int>(pos[j]), bought});
      }
    }
  }

  // Interaction sequences: planted Markov walks with interleaved searches.
  std::uniform_int_distribution<std::size_t> any_item(0, ids.size() - 1);
  std::uniform_int_distribution<std::size_t> steps(spec.min_steps, spec.max_steps);
  std::uniform_int_distribution<std::int64_t> gap(1, 600);
  for (std::size_t u = 0; u < spec.num_users; ++u) {
    InteractionSequence seq{"u" + std::to_string(u), {}};
    std::int64_t t = 1'600'000'000 + static_cast<std::int64_t>(u) * 100'000;
    std::string cur = ids[any_item(rng)];
    const std::size_t n = steps(rng);
    for (std::size_t k = 0; k < n; ++k) {
      if (k > 0)
        cur = unit(rng) < spec.transition_prob ? out.successor.at(cur) : ids[any_item(rng)];
      if (unit(rng) < spec.search_prob) {
        seq.events.push_back(InteractionEvent::search(
            query_variant(out.family_of.at(cur), static_cast<std::size_t>(unit(rng) * 3)), t));
        t += gap(rng);
      }
      const bool last = k + 1 == n;
      seq.events.push_back(last || unit(rng) < spec.purchase_prob
                               ? InteractionEvent::purchase(cur, t)
                               : InteractionEvent::click(cur, t));
      t += gap(rng);
    }
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

inline void write_synth(const std::filesystem::path& dir, const SynthCorpus& c) {
  write_catalog(dir / "catalog.jsonl", c.catalog);
  write_interactions(dir / "interactions.jsonl", c.sequences);
  write_querylog(dir / "querylog.jsonl", c.querylog);
}

}  // namespace fashrec
