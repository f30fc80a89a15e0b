#pragma once

// Text generation and perplexity interfaces, deterministic local mocks, and
// the perplexity-ranked training curriculum.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fashrec/corpus.hpp"
#include "fashrec/io.hpp"
#include "fashrec/promptgen.hpp"

namespace fashrec {

struct GenerationParams {
  std::size_t max_new_tokens = 64;
  double temperature = 0.05;
  double top_p = 0.95;

  void validate() const {
    require(max_new_tokens >= 1, ErrorKind::Config, "max_new_tokens must be >= 1");
    require(temperature > 0.0, ErrorKind::Config, "temperature must be > 0");
    require(top_p > 0.0 && top_p <= 1.0, ErrorKind::Config, "top_p must be in (0, 1]");
  }
};

// Implementations must tolerate concurrent calls.
class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string name() const = 0;
  virtual std::string generate(const Prompt& prompt, const GenerationParams& params) const = 0;
};

class PerplexityScorer {
 public:
  virtual ~PerplexityScorer() = default;
  // exp(mean negative log-likelihood per response token); prompt.response set.
  virtual double perplexity(const Prompt& prompt_with_response) const = 0;
};

// prompt id -> item the mock treats as the correct next purchase
using TruthMap = std::unordered_map<std::string, Item>;

namespace mock_detail {

inline const Item& truth_for(const TruthMap& truth, const Prompt& p, const char* who) {
  auto it = truth.find(p.id);
  if (it == truth.end())
    fail(ErrorKind::Config, std::string(who) + ": no truth registered for prompt " + p.id);
  return it->second;
}

// Uniform [0,1) draw fixed by (seed, key, salt).
inline double draw(std::uint64_t seed, std::string_view key, std::uint64_t salt = 0) {
  const auto h = splitmix64(fnv1a64(key) ^ splitmix64(seed + salt));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline std::string corrupt_id(std::uint64_t seed, std::string_view key) {
  return "NOSUCH-" + hex64(splitmix64(fnv1a64(key) ^ seed));
}

}  // namespace mock_detail

// Emits the canonical response line for the registered truth.
class OracleMock final : public TextGenerator {
 public:
  explicit OracleMock(TruthMap truth) : truth_(std::move(truth)) {}
  std::string name() const override { return "oracle"; }
  std::string generate(const Prompt& p, const GenerationParams&) const override {
    return render_response(mock_detail::truth_for(truth_, p, "oracle mock"));
  }

 private:
  TruthMap truth_;
};

// Keeps the truth title but, with probability p_corrupt per prompt, replaces
// the id with one that is not in any catalog.
class NoisyMock final : public TextGenerator {
 public:
  NoisyMock(TruthMap truth, double p_corrupt, std::uint64_t seed = 0)
      : truth_(std::move(truth)), p_corrupt_(p_corrupt), seed_(seed) {
    require(p_corrupt >= 0.0 && p_corrupt <= 1.0, ErrorKind::Config,
            "noisy mock: p_corrupt must be in [0, 1]");
  }
  std::string name() const override { return "noisy"; }
  std::string generate(const Prompt& p, const GenerationParams&) const override {
    const Item& item = mock_detail::truth_for(truth_, p, "noisy mock");
    const bool corrupt = mock_detail::draw(seed_, p.id) < p_corrupt_;
    return "ID: " + (corrupt ? mock_detail::corrupt_id(seed_, p.id) : item.item_id) +
           " | TITLE: " + item.title();
  }

 private:
  TruthMap truth_;
  double p_corrupt_;
  std::uint64_t seed_;
};

// Unknown id plus a degraded title: each truth-title word survives with
// probability keep_prob (at least one always survives). Stands in for a model
// that has the right idea but not the exact product.
class ParaphraseMock final : public TextGenerator {
 public:
  ParaphraseMock(TruthMap truth, double keep_prob, std::uint64_t seed = 0)
      : truth_(std::move(truth)), keep_prob_(keep_prob), seed_(seed) {
    require(keep_prob >= 0.0 && keep_prob <= 1.0, ErrorKind::Config,
            "paraphrase mock: keep_prob must be in [0, 1]");
  }
  std::string name() const override { return "paraphrase"; }
  std::string generate(const Prompt& p, const GenerationParams&) const override {
    const Item& item = mock_detail::truth_for(truth_, p, "paraphrase mock");
    std::vector<std::string> words;
    std::istringstream ss(item.title());
    for (std::string w; ss >> w;) words.push_back(w);
    std::string title;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (mock_detail::draw(seed_, p.id, i + 1) >= keep_prob_) continue;
      title += (title.empty() ? "" : " ") + words[i];
    }
    if (title.empty()) title = words[static_cast<std::size_t>(
        mock_detail::draw(seed_, p.id) * static_cast<double>(words.size()))];
    return "ID: " + mock_detail::corrupt_id(seed_, p.id) + " | TITLE: " + title;
  }

 private:
  TruthMap truth_;
  double keep_prob_;
  std::uint64_t seed_;
};

// Never produces anything parseable.
class FailingMock final : public TextGenerator {
 public:
  explicit FailingMock(std::string text = "I would recommend something nice")
      : text_(std::move(text)) {}
  std::string name() const override { return "failing"; }
  std::string generate(const Prompt&, const GenerationParams&) const override {
    ++calls_;
    return text_;
  }
  std::size_t calls() const { return calls_.load(); }

 private:
  std::string text_;
  mutable std::atomic<std::size_t> calls_{0};
};

// Adapts any callable; handy for one-off test generators.
class LambdaGenerator final : public TextGenerator {
 public:
  using Fn = std::function<std::string(const Prompt&, const GenerationParams&)>;
  LambdaGenerator(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}
  std::string name() const override { return name_; }
  std::string generate(const Prompt& p, const GenerationParams& g) const override {
    return fn_(p, g);
  }

 private:
  std::string name_;
  Fn fn_;
};

// ---------------------------------------------------------------------------
// Perplexity mocks

class TablePerplexity final : public PerplexityScorer {
 public:
  explicit TablePerplexity(std::map<std::string, double> by_prompt_id)
      : table_(std::move(by_prompt_id)) {}
  double perplexity(const Prompt& p) const override {
    auto it = table_.find(p.id);
    if (it == table_.end())
      fail(ErrorKind::Config, "table perplexity: no value for prompt " + p.id);
    return it->second;
  }

 private:
  std::map<std::string, double> table_;
};

// Character unigram model over the response text.
class UnigramPerplexity final : public PerplexityScorer {
 public:
  explicit UnigramPerplexity(std::map<char, double> probs, double unseen_prob = 1e-6)
      : probs_(std::move(probs)), unseen_(unseen_prob) {
    for (const auto& [c, p] : probs_)
      require(p > 0.0 && p <= 1.0, ErrorKind::Config, "unigram: probabilities must be in (0, 1]");
    require(unseen_ > 0.0, ErrorKind::Config, "unigram: unseen_prob must be > 0");
  }

  // Add-one smoothed character frequencies of the given texts.
  static UnigramPerplexity fit(std::span<const std::string> texts) {
    std::map<char, double> counts;
    double total = 0;
    for (const auto& t : texts)
      for (char c : t) {
        counts[c] += 1;
        total += 1;
      }
    const double denom = total + static_cast<double>(counts.size()) + 1.0;
    for (auto& [c, n] : counts) n = (n + 1.0) / denom;
    return UnigramPerplexity(std::move(counts), 1.0 / denom);
  }

  double perplexity(const Prompt& p) const override {
    require(p.response.has_value() && !p.response->empty(), ErrorKind::Config,
            "perplexity requires a non-empty response");
    double nll = 0;
    for (char c : *p.response) {
      auto it = probs_.find(c);
      nll -= std::log(it == probs_.end() ? unseen_ : it->second);
    }
    return std::exp(nll / static_cast<double>(p.response->size()));
  }

 private:
  std::map<char, double> probs_;
  double unseen_;
};

// ---------------------------------------------------------------------------
// Curriculum

struct CurriculumEntry {
  std::string prompt_id;
  int epochs = 1;
  double perplexity = 0.0;
};

struct CurriculumSchedule {
  std::vector<CurriculumEntry> entries;  // input prompt order
  double threshold_fraction = 0.2;

  json to_json() const {
    json rows = json::array();
    for (const auto& e : entries)
      rows.push_back({{"prompt_id", e.prompt_id}, {"epochs", e.epochs}, {"perplexity", e.perplexity}});
    return {{"threshold_fraction", threshold_fraction}, {"entries", rows}};
  }
};

// ceil(fraction * n), treating products within 1e-9 of an integer as exact so
// that e.g. 0.2 * 15 selects 3 rather than 4.
inline std::size_t high_perplexity_count(double fraction, std::size_t n) {
  const double x = fraction * static_cast<double>(n);
  const double r = std::round(x);
  return static_cast<std::size_t>(std::abs(x - r) < 1e-9 ? r : std::ceil(x));
}

inline CurriculumSchedule build_curriculum(std::span<const Prompt> prompts,
                                           const PerplexityScorer& scorer,
                                           double fraction = 0.2, int high_epochs = 3,
                                           int base_epochs = 1) {
  require(fraction > 0.0 && fraction < 1.0, ErrorKind::Config,
          "curriculum fraction must be in (0, 1)");
  require(base_epochs >= 1 && high_epochs >= base_epochs, ErrorKind::Config,
          "curriculum epochs must satisfy high >= base >= 1");
  CurriculumSchedule schedule;
  schedule.threshold_fraction = fraction;
  for (const auto& p : prompts) {
    const double ppl = scorer.perplexity(p);
    require(std::isfinite(ppl) && ppl > 0.0, ErrorKind::Numeric,
            "non-positive perplexity for prompt " + p.id);
    schedule.entries.push_back({p.id, base_epochs, ppl});
  }
  std::vector<std::size_t> order(schedule.entries.size());
  std::iota(order.begin(), order.end(), 0);
  const auto& e = schedule.entries;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (e[a].perplexity != e[b].perplexity) return e[a].perplexity > e[b].perplexity;
    return e[a].prompt_id < e[b].prompt_id;
  });
  const auto top = high_perplexity_count(fraction, order.size());
  for (std::size_t i = 0; i < top; ++i) schedule.entries[order[i]].epochs = high_epochs;
  return schedule;
}

}  // namespace fashrec
