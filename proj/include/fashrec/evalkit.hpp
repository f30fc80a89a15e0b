#pragma once

// Ranking metrics for a single relevant item, evaluation drivers and reports.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fashrec/corpus.hpp"
#include "fashrec/io.hpp"
#include "fashrec/retrieval.hpp"

namespace fashrec {

// 1-based rank of `truth`, or 0 when absent.
inline std::size_t rank_of(std::span<const std::string> ranked, const std::string& truth) {
  for (std::size_t i = 0; i < ranked.size(); ++i)
    if (ranked[i] == truth) return i + 1;
  return 0;
}

inline double recall_at(std::span<const std::string> ranked, const std::string& truth,
                        std::size_t n) {
  require(n >= 1, ErrorKind::Config, "recall_at: n must be >= 1");
  const auto r = rank_of(ranked, truth);
  return r != 0 && r <= n ? 1.0 : 0.0;
}

// 1 / log2(rank + 1) within the cutoff; the ideal DCG is 1.
inline double ndcg_at(std::span<const std::string> ranked, const std::string& truth,
                      std::size_t n) {
  require(n >= 1, ErrorKind::Config, "ndcg_at: n must be >= 1");
  const auto r = rank_of(ranked, truth);
  return r != 0 && r <= n ? 1.0 / std::log2(static_cast<double>(r) + 1.0) : 0.0;
}

// Reciprocal rank over the whole returned list.
inline double mrr(std::span<const std::string> ranked, const std::string& truth) {
  const auto r = rank_of(ranked, truth);
  return r != 0 ? 1.0 / static_cast<double>(r) : 0.0;
}

struct EvalResult {
  double recall = 0;  // Recall@n
  double ndcg = 0;    // NDCG@n
  double mrr = 0;
  std::size_t n = 10;
  std::size_t count = 0;  // evaluated pairs
  std::size_t drops = 0;  // sequences excluded before evaluation
};

inline EvalResult evaluate_run(std::span<const RunRecord> run, std::size_t n,
                               std::size_t drops = 0) {
  require(!run.empty(), ErrorKind::Validation, "evaluate_run: empty run");
  require(n >= 1, ErrorKind::Config, "evaluate_run: n must be >= 1");
  double r = 0, g = 0, m = 0;
  for (const auto& rec : run) {
    r += recall_at(rec.ranked, rec.truth, n);
    g += ndcg_at(rec.ranked, rec.truth, n);
    m += mrr(rec.ranked, rec.truth);
  }
  const double c = static_cast<double>(run.size());
  return {r / c, g / c, m / c, n, run.size(), drops};
}

inline EvalResult evaluate_run(std::span<const Recommendation> recs, std::size_t n,
                               std::size_t drops = 0) {
  std::vector<RunRecord> run;
  for (const auto& r : recs) run.push_back(to_record(r));
  return evaluate_run(run, n, drops);
}

struct EvalReport {
  std::string setting;
  std::string category;
  EvalResult result;
  std::string config_hash;

  json to_json() const {
    return {{"setting", setting},         {"category", category},
            {"n", result.n},              {"recall", result.recall},
            {"ndcg", result.ndcg},        {"mrr", result.mrr},
            {"count", result.count},      {"drops", result.drops},
            {"config_hash", config_hash}};
  }

  std::string table() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%-14s %-14s %9s %9s %9s %7s %6s\n"
                  "%-14s %-14s %9.4f %9.4f %9.4f %7zu %6zu\n",
                  "setting", "category", ("recall@" + std::to_string(result.n)).c_str(),
                  ("ndcg@" + std::to_string(result.n)).c_str(), "mrr", "count", "drops",
                  setting.c_str(), category.c_str(), result.recall, result.ndcg, result.mrr,
                  result.count, result.drops);
    return buf;
  }
};

// Runs `rec` over every test pair on `jobs` worker threads. Output order
// matches the input order regardless of scheduling. The first worker error is
// rethrown after all workers stop.
inline std::vector<Recommendation> run_pipeline(const Recommender& rec,
                                                std::span<const TestPair> pairs,
                                                std::size_t jobs = 1) {
  rec.validate();
  std::vector<Recommendation> out(pairs.size());
  jobs = std::max<std::size_t>(1, std::min(jobs, pairs.size()));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next++;
      if (i >= pairs.size() || stop) return;
      try {
        out[i] = rec.recommend(pairs[i].history, pairs[i].truth);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        stop = true;
        return;
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

struct ZeroShotOutcome {
  EvalResult result;
  std::vector<Recommendation> run;
  std::vector<std::string> notices;
};

// Evaluates category Y with a title encoder trained on category X. Y's title
// index is built with X's encoder; the ID path never runs because item tables
// do not transfer across catalogs.
inline ZeroShotOutcome zero_shot_eval(const TextEncoder& source_title_encoder,
                                      const std::string& source_category,
                                      const Catalog& target_catalog,
                                      const std::string& target_category,
                                      std::span<const TestPair> target_test,
                                      const PromptBuilder& prompts, const TextGenerator& gen,
                                      const GenerationParams& gen_params, MixupParams mix,
                                      std::size_t n = 10, std::size_t jobs = 1,
                                      std::size_t drops = 0) {
  ZeroShotOutcome out;
  if (source_category == target_category)
    out.notices.push_back("warning: zero-shot source and target category are both '" +
                          source_category + "'; this is not a transfer setting");
  if (mix.n_head != 0) {
    out.notices.push_back("note: ID path disabled in zero-shot; mixup N forced from " +
                          std::to_string(mix.n_head) + " to 0");
    mix.n_head = 0;
  }
  const auto title_index = build_title_index(target_catalog, source_title_encoder);
  Recommender rec;
  rec.prompts = &prompts;
  rec.generator = &gen;
  rec.gen_params = gen_params;
  rec.title_encoder = &source_title_encoder;
  rec.title_index = &title_index;
  rec.mix = mix;
  out.run = run_pipeline(rec, target_test, jobs);
  out.result = evaluate_run(out.run, n, drops);
  return out;
}

}  // namespace fashrec
