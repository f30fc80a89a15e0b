#pragma once

// Users, items, queries and interaction sequences; line-delimited JSON
// ingestion; evaluation splits (leave-one-out, cold-start, low-resource).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fashrec/error.hpp"
#include "fashrec/io.hpp"

namespace fashrec {

struct Item {
  std::string item_id;
  std::map<std::string, std::string> attributes;  // must contain "title"

  const std::string& title() const { return attributes.at("title"); }

  // Empty string when the attribute is absent.
  std::string attribute(const std::string& key) const {
    auto it = attributes.find(key);
    return it == attributes.end() ? std::string{} : it->second;
  }

  bool operator==(const Item&) const = default;
};

class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<Item> items) {
    for (auto& item : items) add(std::move(item));
  }

  void add(Item item) {
    require(!item.item_id.empty(), ErrorKind::Validation, "item with empty item_id");
    require(item.item_id.find_first_of("| \t\r\n") == std::string::npos, ErrorKind::Validation,
            "item_id may not contain '|' or whitespace: " + item.item_id);
    auto title = item.attributes.find("title");
    require(title != item.attributes.end(), ErrorKind::Validation,
            "missing title for item " + item.item_id);
    // Titles are single-line and trimmed so they survive the response grammar.
    for (auto& c : title->second)
      if (c == '\n' || c == '\r' || c == '\t') c = ' ';
    const auto first = title->second.find_first_not_of(' ');
    require(first != std::string::npos, ErrorKind::Validation,
            "missing title for item " + item.item_id);
    title->second = title->second.substr(first, title->second.find_last_not_of(' ') - first + 1);
    auto [it, inserted] = index_.emplace(item.item_id, items_.size());
    require(inserted, ErrorKind::Validation, "duplicate item_id: " + item.item_id);
    items_.push_back(std::move(item));
  }

  const Item* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &items_[it->second];
  }

  const Item& at(const std::string& id) const {
    const Item* item = find(id);
    if (!item) fail(ErrorKind::Validation, "unknown item_id: " + id);
    return *item;
  }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::span<const Item> items() const { return items_; }

 private:
  std::vector<Item> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Action { Search, Click, Purchase };

inline const char* to_string(Action a) {
  switch (a) {
    case Action::Search: return "search";
    case Action::Click: return "click";
    case Action::Purchase: return "purchase";
  }
  return "?";
}

inline Action parse_action(const std::string& s) {
  if (s == "search") return Action::Search;
  if (s == "click") return Action::Click;
  if (s == "purchase") return Action::Purchase;
  fail(ErrorKind::Validation, "malformed action: '" + s + "'");
}

// payload is the query text for searches and the item_id otherwise.
struct InteractionEvent {
  Action action = Action::Click;
  std::int64_t timestamp = 0;
  std::string payload;

  bool is_search() const { return action == Action::Search; }
  bool is_item() const { return action != Action::Search; }

  static InteractionEvent search(std::string query, std::int64_t t) {
    return {Action::Search, t, std::move(query)};
  }
  static InteractionEvent click(std::string item_id, std::int64_t t) {
    return {Action::Click, t, std::move(item_id)};
  }
  static InteractionEvent purchase(std::string item_id, std::int64_t t) {
    return {Action::Purchase, t, std::move(item_id)};
  }

  bool operator==(const InteractionEvent&) const = default;
};

struct InteractionSequence {
  std::string user_id;
  std::vector<InteractionEvent> events;

  bool operator==(const InteractionSequence&) const = default;
};

struct QueryLogRecord {
  std::string query;
  std::string item_id;
  int organic_position = 0;
  bool purchased = false;

  bool operator==(const QueryLogRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Loading and writing

inline Catalog load_catalog(const std::filesystem::path& path) {
  Catalog catalog;
  for_each_jsonl(path, [&](const json& row, std::size_t line) {
    const auto where = path.string() + ":" + std::to_string(line) + ": ";
    if (!row.is_object() || !row.contains("item_id") || !row.contains("attributes"))
      fail(ErrorKind::Validation, where + "expected fields item_id and attributes");
    Item item;
    item.item_id = row.at("item_id").get<std::string>();
    for (const auto& [k, v] : row.at("attributes").items())
      item.attributes[k] = v.get<std::string>();
    try {
      catalog.add(std::move(item));
    } catch (const Error& e) {
      fail(e.kind(), where + e.what());
    }
  });
  return catalog;
}

inline void write_catalog(const std::filesystem::path& path, const Catalog& catalog) {
  auto out = open_output(path);
  for (const auto& item : catalog.items()) {
    json row = {{"item_id", item.item_id}, {"attributes", item.attributes}};
    out << row.dump() << '\n';
  }
}

// Sorts events by timestamp (ties keep input order) and removes clicks on
// items the user purchases later in the sequence.
inline InteractionSequence normalize_sequence(InteractionSequence seq) {
  std::stable_sort(seq.events.begin(), seq.events.end(),
                   [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  std::unordered_set<std::string> purchased_later;
  std::vector<InteractionEvent> kept;
  for (auto it = seq.events.rbegin(); it != seq.events.rend(); ++it) {
    if (it->action == Action::Purchase) purchased_later.insert(it->payload);
    if (it->action == Action::Click && purchased_later.count(it->payload)) continue;
    kept.push_back(*it);
  }
  std::reverse(kept.begin(), kept.end());
  seq.events = std::move(kept);
  return seq;
}

// One JSON object per user. Multiple lines for the same user are merged.
// Output order follows first appearance of each user.
inline std::vector<InteractionSequence> load_interactions(const std::filesystem::path& path,
                                                          const Catalog& catalog) {
  std::vector<InteractionSequence> seqs;
  std::unordered_map<std::string, std::size_t> by_user;
  for_each_jsonl(path, [&](const json& row, std::size_t line) {
    const auto where = path.string() + ":" + std::to_string(line) + ": ";
    const auto user = row.at("user_id").get<std::string>();
    require(!user.empty(), ErrorKind::Validation, where + "empty user_id");
    auto [slot, fresh] = by_user.emplace(user, seqs.size());
    if (fresh) seqs.push_back({user, {}});
    auto& seq = seqs[slot->second];
    for (const auto& ev : row.at("events")) {
      InteractionEvent event;
      try {
        event.action = parse_action(ev.at("action").get<std::string>());
      } catch (const Error& e) {
        fail(e.kind(), where + e.what());
      }
      event.timestamp = ev.at("t").get<std::int64_t>();
      require(event.timestamp >= 0, ErrorKind::Validation, where + "negative timestamp");
      if (event.is_search()) {
        event.payload = ev.at("query").get<std::string>();
      } else {
        event.payload = ev.at("item_id").get<std::string>();
        require(catalog.contains(event.payload), ErrorKind::Validation,
                where + "unknown item_id: " + event.payload);
      }
      seq.events.push_back(std::move(event));
    }
  });
  std::vector<InteractionSequence> out;
  out.reserve(seqs.size());
  for (auto& s : seqs) {
    auto n = normalize_sequence(std::move(s));
    if (!n.events.empty()) out.push_back(std::move(n));
  }
  return out;
}

inline json event_to_json(const InteractionEvent& e) {
  json j = {{"action", to_string(e.action)}, {"t", e.timestamp}};
  j[e.is_search() ? "query" : "item_id"] = e.payload;
  return j;
}

inline void write_interactions(const std::filesystem::path& path,
                               std::span<const InteractionSequence> seqs) {
  auto out = open_output(path);
  for (const auto& s : seqs) {
    json events = json::array();
    for (const auto& e : s.events) events.push_back(event_to_json(e));
    out << json{{"user_id", s.user_id}, {"events", events}}.dump() << '\n';
  }
}

inline std::vector<QueryLogRecord> load_querylog(const std::filesystem::path& path) {
  std::vector<QueryLogRecord> records;
  for_each_jsonl(path, [&](const json& row, std::size_t) {
    records.push_back({row.at("query").get<std::string>(), row.at("item_id").get<std::string>(),
                       row.at("organic_position").get<int>(),
                       row.value("purchased", false)});
  });
  return records;
}

inline void write_querylog(const std::filesystem::path& path,
                           std::span<const QueryLogRecord> records) {
  auto out = open_output(path);
  for (const auto& r : records) {
    out << json{{"query", r.query},
                {"item_id", r.item_id},
                {"organic_position", r.organic_position},
                {"purchased", r.purchased}}
               .dump()
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitKind { LeaveOneOut, ColdStart, ZeroShot, LowResource };

inline const char* to_string(SplitKind k) {
  switch (k) {
    case SplitKind::LeaveOneOut: return "leave-one-out";
    case SplitKind::ColdStart: return "cold-start";
    case SplitKind::ZeroShot: return "zero-shot";
    case SplitKind::LowResource: return "low-resource";
  }
  return "?";
}

struct TestPair {
  InteractionSequence history;  // events before the held-out purchase
  std::string truth;            // held-out purchased item_id
};

struct DatasetSplit {
  std::vector<InteractionSequence> train;
  std::vector<TestPair> test;
  SplitKind kind = SplitKind::LeaveOneOut;
  double ratio = 1.0;  // LowResource only
  std::size_t dropped_no_purchase = 0;
  std::size_t dropped_empty_history = 0;
  std::vector<std::string> warnings;

  std::size_t drop_count() const { return dropped_no_purchase + dropped_empty_history; }
};

// The final purchase of each sequence is held out. The training copy keeps
// only the events strictly before it. Sequences without a purchase, or whose
// final purchase is their first event, are dropped and counted.
inline DatasetSplit leave_one_out_split(std::span<const InteractionSequence> seqs) {
  DatasetSplit split;
  for (const auto& seq : seqs) {
    auto last = std::find_if(seq.events.rbegin(), seq.events.rend(),
                             [](const auto& e) { return e.action == Action::Purchase; });
    if (last == seq.events.rend()) {
      ++split.dropped_no_purchase;
      continue;
    }
    const auto cut = static_cast<std::size_t>(std::distance(seq.events.begin(), last.base()) - 1);
    if (cut == 0) {
      ++split.dropped_empty_history;
      continue;
    }
    InteractionSequence history{seq.user_id, {seq.events.begin(), seq.events.begin() + cut}};
    split.train.push_back(history);
    split.test.push_back({std::move(history), seq.events[cut].payload});
  }
  return split;
}

inline std::unordered_set<std::string> interacted_items(
    std::span<const InteractionSequence> seqs) {
  std::unordered_set<std::string> seen;
  for (const auto& s : seqs)
    for (const auto& e : s.events)
      if (e.is_item()) seen.insert(e.payload);
  return seen;
}

inline DatasetSplit cold_start_filter(const DatasetSplit& split) {
  require(split.kind == SplitKind::LeaveOneOut, ErrorKind::Config,
          "cold_start_filter expects a leave-one-out split");
  DatasetSplit out = split;
  out.kind = SplitKind::ColdStart;
  const auto warm = interacted_items(split.train);
  std::erase_if(out.test, [&](const TestPair& p) { return warm.count(p.truth) != 0; });
  if (out.test.empty())
    out.warnings.push_back("cold-start filter removed every test pair: no cold items");
  return out;
}

inline DatasetSplit low_resource_sample(const DatasetSplit& split, double ratio,
                                        std::uint64_t seed) {
  require(ratio > 0.0 && ratio <= 1.0, ErrorKind::Config,
          "low-resource ratio must be in (0, 1], got " + std::to_string(ratio));
  DatasetSplit out = split;
  out.kind = SplitKind::LowResource;
  out.ratio = ratio;
  const std::size_t n = split.train.size();
  if (n == 0) return out;
  auto keep = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  keep = std::clamp<std::size_t>(keep, 1, n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(keep);
  std::sort(order.begin(), order.end());
  out.train.clear();
  for (auto i : order) out.train.push_back(split.train[i]);
  return out;
}

}  // namespace fashrec
