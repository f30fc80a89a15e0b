#pragma once

// Command-line driver: every pipeline stage as a subcommand, with file
// artifacts between stages and a manifest recording how each was produced.
//
//   synth          write a synthetic corpus (catalog, interactions, query log)
//   ingest         validate inputs, split, write the split
//   build-memory   query-product memory from the query log
//   make-prompts   training/test prompts and the perplexity curriculum
//   train-title    title/query embedding model
//   train-id       item embedding table
//   recommend      run the pipeline over the test split
//   evaluate       recommend (or read a run file) and write the report
//
// Exit status: 0 success, 1 configuration / IO / runtime error, 2 invalid
// input data.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fashrec/config.hpp"
#include "fashrec/corpus.hpp"
#include "fashrec/evalkit.hpp"
#include "fashrec/generator.hpp"
#include "fashrec/id_embedder.hpp"
#include "fashrec/memory.hpp"
#include "fashrec/promptgen.hpp"
#include "fashrec/remote.hpp"
#include "fashrec/retrieval.hpp"
#include "fashrec/synth.hpp"
#include "fashrec/title_embedder.hpp"

namespace fashrec {

inline constexpr const char* kVersion = "0.1.0";

namespace cli_detail {

namespace fs = std::filesystem;

struct Overrides {
  std::string config_path;
  std::optional<std::string> catalog, interactions, querylog, artifacts, setting, generator,
      endpoint;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<double> ratio;
  std::vector<std::string> ablations;
  std::vector<std::string> sets;  // dotted.key=value
};

inline void set_dotted(json& patch, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, ErrorKind::Config,
          "--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // bare strings need no quoting
  }
  json* node = &patch;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    require(!part.empty(), ErrorKind::Config, "--set: malformed key '" + key + "'");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

// Precedence: command-line flags > environment > config file > defaults.
inline RunConfig resolve_config(const Overrides& o, std::vector<std::string>& notes) {
  json patch = json::object();
  if (!o.config_path.empty()) {
    try {
      patch = json::parse(read_text(o.config_path));
    } catch (const json::parse_error& e) {
      fail(ErrorKind::Config, o.config_path + ": " + e.what());
    }
    // Relative paths in a config file are relative to the file itself.
    const fs::path base = fs::path(o.config_path).parent_path();
    auto rebase = [&](json& v) {
      if (v.is_string() && !v.get<std::string>().empty() && fs::path(v.get<std::string>()).is_relative())
        v = (base / v.get<std::string>()).lexically_normal().generic_string();
    };
    if (patch.is_object() && patch.contains("paths") && patch["paths"].is_object())
      for (auto& [k, v] : patch["paths"].items()) rebase(v);
    if (patch.is_object() && patch.contains("template") && patch["template"].is_object() &&
        patch["template"].contains("path"))
      rebase(patch["template"]["path"]);
    if (patch.is_object() && patch.contains("zero_shot") && patch["zero_shot"].is_object() &&
        patch["zero_shot"].contains("source_artifacts"))
      rebase(patch["zero_shot"]["source_artifacts"]);
  }
  if (const char* env = std::getenv(kEndpointEnv); env && *env && !o.endpoint) {
    patch["generator"]["endpoint"] = env;
    notes.push_back(std::string("generator endpoint taken from ") + kEndpointEnv);
  }
  auto put = [&](const char* a, const char* b, const auto& v) {
    if (v) (b ? patch[a][b] : patch[a]) = *v;
  };
  put("paths", "catalog", o.catalog);
  put("paths", "interactions", o.interactions);
  put("paths", "querylog", o.querylog);
  put("paths", "artifacts", o.artifacts);
  put("setting", nullptr, o.setting);
  put("generator", "kind", o.generator);
  put("generator", "endpoint", o.endpoint);
  put("seed", nullptr, o.seed);
  put("jobs", nullptr, o.jobs);
  put("low_resource_ratio", nullptr, o.ratio);
  for (const auto& a : o.ablations) {
    static const std::vector<std::string> known = {"no_attributes", "no_memory", "no_title_emb",
                                                   "no_id_emb"};
    require(std::find(known.begin(), known.end(), a) != known.end(), ErrorKind::Config,
            "--ablation must be one of no_attributes, no_memory, no_title_emb, no_id_emb");
    patch["ablation"][a] = true;
  }
  for (const auto& s : o.sets) set_dotted(patch, s);
  RunConfig cfg = config_from_json(patch);
  validate(cfg);
  return cfg;
}

inline std::string required(const std::string& value, const char* field) {
  require(!value.empty(), ErrorKind::Config, std::string("config: '") + field + "' is required");
  return value;
}

inline std::string file_hash(const std::string& path) {
  return path.empty() ? "-" : hex64(fnv1a64(read_text(path)));
}

struct Data {
  Catalog catalog;
  std::vector<InteractionSequence> sequences;
  std::vector<QueryLogRecord> querylog;
  bool has_querylog = false;
};

inline Data load_data(const RunConfig& cfg, bool need_interactions = true) {
  Data d;
  d.catalog = load_catalog(required(cfg.catalog, "paths.catalog"));
  if (need_interactions)
    d.sequences = load_interactions(required(cfg.interactions, "paths.interactions"), d.catalog);
  if (!cfg.querylog.empty()) {
    d.querylog = load_querylog(cfg.querylog);
    d.has_querylog = true;
  }
  return d;
}

inline std::string category_of(const RunConfig& cfg, const Catalog& catalog) {
  if (!cfg.category.empty()) return cfg.category;
  for (const auto& item : catalog.items()) {
    const auto c = item.attribute("category");
    if (!c.empty()) return c;
  }
  return "all";
}

inline DatasetSplit make_split(const RunConfig& cfg, const Data& d) {
  DatasetSplit split = leave_one_out_split(d.sequences);
  if (cfg.setting == "cold-start") split = cold_start_filter(split);
  if (cfg.setting == "low-resource") split = low_resource_sample(split, cfg.low_resource_ratio, cfg.seed);
  if (cfg.setting == "zero-shot") split.kind = SplitKind::ZeroShot;
  return split;
}

inline PromptTemplate make_template(const RunConfig& cfg) {
  PromptTemplate t = cfg.template_path.empty() ? PromptTemplate{} : load_template(cfg.template_path);
  t.max_tokens = cfg.max_tokens;
  if (cfg.ablation.no_attributes) t.attribute_keys = {"title"};
  t.validate();
  return t;
}

// Per-run state shared by the stage implementations.
class Run {
 public:
  Run(std::string command, RunConfig cfg, std::vector<std::string> notes, std::ostream& out,
      std::ostream& err)
      : command_(std::move(command)),
        cfg_(std::move(cfg)),
        notes_(std::move(notes)),
        out_(out),
        err_(err),
        art_(cfg_.artifacts) {}

  const RunConfig& cfg() const { return cfg_; }
  const fs::path& art() const { return art_; }
  std::ostream& out() { return out_; }
  void note(std::string n) {
    err_ << "note: " << n << '\n';
    notes_.push_back(std::move(n));
  }
  void output(const fs::path& p) { outputs_.push_back(fs::relative(p, art_).generic_string()); }

  // Reuses an artifact directory whose recorded key matches; otherwise
  // builds it with `build` and records the key.
  template <typename Load, typename Build>
  auto cached(const std::string& name, const std::string& key, Load&& load, Build&& build) {
    const fs::path dir = art_ / name;
    const fs::path stamp = dir / "key.txt";
    if (command_ != "train-" + name && command_ != "build-" + name && fs::exists(stamp) &&
        read_text(stamp) == key) {
      note(name + ": reusing " + dir.generic_string());
      return load(dir);
    }
    auto v = build(dir);
    write_text(stamp, key);
    note(name + ": built " + dir.generic_string());
    return v;
  }

  void write_manifest() {
    const fs::path path = art_ / "manifest.json";
    json m = json::object();
    if (fs::exists(path)) {
      try {
        m = json::parse(read_text(path));
      } catch (const json::exception&) {
        m = json::object();
      }
    }
    m["stages"][command_] = {
        {"config_hash", config_hash(cfg_)},
        {"seed", cfg_.seed},
        {"versions",
         {{"fashrec", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                        "." + std::to_string(EIGEN_MINOR_VERSION)},
          {"cli11", CLI11_VERSION}}},
        {"config", to_json(cfg_)},
        {"notes", notes_},
        {"outputs", outputs_}};
    write_text(path, m.dump(2) + "\n");
  }

 private:
  std::string command_;
  RunConfig cfg_;
  std::vector<std::string> notes_;
  std::vector<std::string> outputs_;
  std::ostream& out_;
  std::ostream& err_;
  fs::path art_;
};

// --- artifacts --------------------------------------------------------------

inline std::string key_of(std::initializer_list<std::string> parts) {
  std::string s;
  for (const auto& p : parts) s += p + '\n';
  return hex64(fnv1a64(s));
}

inline std::unique_ptr<TextEncoder> memory_encoder(const RunConfig& cfg) {
  return std::make_unique<BaselineEncoder>(cfg.memory_encoder_dim, cfg.seed);
}

inline QueryProductMemory memory_artifact(Run& run, const Data& d, const TextEncoder& enc) {
  const auto& cfg = run.cfg();
  require(d.has_querylog, ErrorKind::Config, "config: 'paths.querylog' is required for the memory");
  const auto key = key_of({"memory", file_hash(cfg.catalog), file_hash(cfg.querylog), enc.id(),
                           std::to_string(cfg.memory_purchased_only)});
  return run.cached(
      "memory", key,
      [](const fs::path& dir) { return QueryProductMemory::load(dir / "index.frvi", dir / "queries.json"); },
      [&](const fs::path& dir) {
        auto mem = build_memory(d.querylog, d.catalog, enc, {cfg.memory_purchased_only});
        mem.save(dir / "index.frvi", dir / "queries.json");
        run.output(dir / "index.frvi");
        run.output(dir / "queries.json");
        return mem;
      });
}

inline TitleModel title_artifact(Run& run, const Data& d) {
  const auto& cfg = run.cfg();
  require(d.has_querylog, ErrorKind::Config,
          "config: 'paths.querylog' is required to train the title model");
  const auto key = key_of({"title", file_hash(cfg.catalog), file_hash(cfg.querylog),
                           to_json(cfg)["title_training"].dump(), std::to_string(cfg.seed)});
  return run.cached(
      "title", key, [](const fs::path& dir) { return TitleModel::load(dir / "model.frte"); },
      [&](const fs::path& dir) {
        auto tc = cfg.title_training;
        tc.seed = cfg.seed;
        auto res = train_title_model(title_training_pairs(d.querylog, d.catalog), tc);
        res.model.save(dir / "model.frte");
        write_loss_csv(dir / "loss.csv", res.loss_trace);
        run.output(dir / "model.frte");
        run.output(dir / "loss.csv");
        return std::move(res.model);
      });
}

inline ItemEmbeddingTable id_artifact(Run& run, const Data& d, const DatasetSplit& split) {
  const auto& cfg = run.cfg();
  const auto key = key_of({"id", file_hash(cfg.catalog), file_hash(cfg.interactions),
                           to_json(cfg)["id_training"].dump(), std::to_string(cfg.seed),
                           cfg.setting, std::to_string(cfg.low_resource_ratio)});
  return run.cached(
      "id", key,
      [](const fs::path& dir) { return ItemEmbeddingTable::load(dir / "table.frvi", dir / "table.json").first; },
      [&](const fs::path& dir) {
        auto ic = cfg.id_training;
        ic.seed = cfg.seed;
        auto res = train_id_model(split.train, d.catalog, ic);
        res.table.save(dir / "table.frvi", dir / "table.json", ic.temperature);
        std::ostringstream csv;
        csv.precision(17);
        csv << "epoch,loss\n";  // epoch 0 is the initial table
        for (std::size_t i = 0; i < res.loss_trace.size(); ++i)
          csv << i << ',' << res.loss_trace[i] << '\n';
        write_text(dir / "loss.csv", csv.str());
        run.output(dir / "table.frvi");
        run.output(dir / "table.json");
        run.output(dir / "loss.csv");
        return std::move(res.table);
      });
}

inline TruthMap truth_map(const Catalog& catalog, std::span<const TestPair> pairs) {
  TruthMap t;
  for (const auto& p : pairs) t[p.history.user_id] = catalog.at(p.truth);
  return t;
}

inline std::unique_ptr<TextGenerator> make_generator(const RunConfig& cfg, TruthMap truth) {
  const auto& g = cfg.generator;
  if (g.kind == "oracle") return std::make_unique<OracleMock>(std::move(truth));
  if (g.kind == "noisy") return std::make_unique<NoisyMock>(std::move(truth), g.noise, cfg.seed);
  if (g.kind == "paraphrase")
    return std::make_unique<ParaphraseMock>(std::move(truth), g.keep_prob, cfg.seed);
  if (g.kind == "failing") return std::make_unique<FailingMock>();
  return std::make_unique<RemoteGenerator>(RemoteOptions{g.endpoint, g.timeout_s, g.retries});
}

// Everything `recommend` needs, owned in one place.
struct Pipeline {
  Data data;
  DatasetSplit split;
  PromptTemplate tmpl;
  std::unique_ptr<TextEncoder> mem_encoder;
  std::optional<QueryProductMemory> memory;
  std::optional<PromptBuilder> prompts;
  std::optional<TitleModel> title_model;
  std::unique_ptr<TextEncoder> title_encoder;
  std::optional<VectorIndex> title_index;
  std::optional<ItemEmbeddingTable> id_table;
  std::optional<VectorIndex> id_index;
  std::unique_ptr<TextGenerator> generator;
  Recommender rec;
};

inline std::unique_ptr<Pipeline> build_pipeline(Run& run) {
  const auto& cfg = run.cfg();
  auto p = std::make_unique<Pipeline>();
  p->data = load_data(cfg);
  p->split = make_split(cfg, p->data);
  for (const auto& w : p->split.warnings) run.note(w);
  require(!p->split.test.empty(), ErrorKind::Validation,
          "no test pairs for setting '" + cfg.setting + "'");
  p->tmpl = make_template(cfg);
  if (!cfg.ablation.no_memory && p->data.has_querylog) {
    p->mem_encoder = memory_encoder(cfg);
    p->memory = memory_artifact(run, p->data, *p->mem_encoder);
  } else if (!cfg.ablation.no_memory) {
    run.note("no query log configured: prompts built without memory");
  }
  p->prompts.emplace(p->data.catalog, p->tmpl, p->memory ? &*p->memory : nullptr,
                     p->mem_encoder.get(), cfg.memory);

  const MixupParams mix = effective_mixup(cfg);
  const bool zero_shot = cfg.setting == "zero-shot";
  if (!cfg.ablation.no_title_emb) {
    if (zero_shot) {
      const fs::path src = fs::path(cfg.zero_shot_source_artifacts) / "title" / "model.frte";
      p->title_model = TitleModel::load(src);
      run.note("zero-shot: title model from " + src.generic_string());
    } else {
      p->title_model = title_artifact(run, p->data);
    }
    p->title_encoder = std::make_unique<TitleTowerEncoder>(*p->title_model, Tower::Title);
    p->title_index = build_title_index(p->data.catalog, *p->title_encoder);
  }
  if (!cfg.ablation.no_id_emb && !zero_shot) {
    p->id_table = id_artifact(run, p->data, p->split);
    p->id_index = p->id_table->to_index();
  }
  p->generator = make_generator(cfg, truth_map(p->data.catalog, p->split.test));
  p->rec.prompts = &*p->prompts;
  p->rec.generator = p->generator.get();
  p->rec.gen_params = cfg.generator.params;
  p->rec.id_table = p->id_table ? &*p->id_table : nullptr;
  p->rec.id_index = p->id_index ? &*p->id_index : nullptr;
  p->rec.title_encoder = p->title_encoder.get();
  p->rec.title_index = p->title_index ? &*p->title_index : nullptr;
  p->rec.mix = mix;
  return p;
}

// --- stages -----------------------------------------------------------------

inline json event_list(const InteractionSequence& s) {
  json events = json::array();
  for (const auto& e : s.events) events.push_back(event_to_json(e));
  return events;
}

inline void stage_ingest(Run& run) {
  const auto& cfg = run.cfg();
  const Data d = load_data(cfg);
  const DatasetSplit split = make_split(cfg, d);
  for (const auto& w : split.warnings) run.note(w);
  const fs::path dir = run.art() / "split";
  write_interactions(dir / "train.jsonl", split.train);
  {
    auto out = open_output(dir / "test.jsonl");
    for (const auto& p : split.test)
      out << json{{"user_id", p.history.user_id}, {"truth", p.truth}, {"events", event_list(p.history)}}.dump()
          << '\n';
  }
  const json summary = {{"setting", cfg.setting},
                        {"items", d.catalog.size()},
                        {"sequences", d.sequences.size()},
                        {"querylog_records", d.querylog.size()},
                        {"train", split.train.size()},
                        {"test", split.test.size()},
                        {"dropped_no_purchase", split.dropped_no_purchase},
                        {"dropped_empty_history", split.dropped_empty_history}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  for (auto f : {"train.jsonl", "test.jsonl", "summary.json"}) run.output(dir / f);
  run.out() << summary.dump(2) << '\n';
}

inline void stage_build_memory(Run& run) {
  const Data d = load_data(run.cfg(), false);
  auto enc = memory_encoder(run.cfg());
  const auto mem = memory_artifact(run, d, *enc);
  run.out() << "memory: " << mem.size() << " queries\n";
}

inline void stage_make_prompts(Run& run) {
  const auto& cfg = run.cfg();
  const Data d = load_data(cfg);
  const DatasetSplit split = make_split(cfg, d);
  const PromptTemplate tmpl = make_template(cfg);
  std::unique_ptr<TextEncoder> enc;
  std::optional<QueryProductMemory> mem;
  if (!cfg.ablation.no_memory && d.has_querylog) {
    enc = memory_encoder(cfg);
    mem = memory_artifact(run, d, *enc);
  }
  PromptBuilder builder(d.catalog, tmpl, mem ? &*mem : nullptr, enc.get(), cfg.memory);

  // Training prompts: each training sequence's final purchase is the response.
  const DatasetSplit inner = leave_one_out_split(split.train);
  std::vector<Prompt> train, test;
  for (const auto& p : inner.test) train.push_back(builder.build(p.history, &d.catalog.at(p.truth)));
  for (const auto& p : split.test) test.push_back(builder.build(p.history));
  const fs::path dir = run.art() / "prompts";
  write_prompts(dir / "train.jsonl", train);
  write_prompts(dir / "test.jsonl", test);
  run.output(dir / "train.jsonl");
  run.output(dir / "test.jsonl");

  if (!train.empty()) {
    std::unique_ptr<PerplexityScorer> scorer;
    if (cfg.generator.kind == "remote") {
      scorer = std::make_unique<RemoteGenerator>(
          RemoteOptions{cfg.generator.endpoint, cfg.generator.timeout_s, cfg.generator.retries});
    } else {
      std::vector<std::string> responses;
      for (const auto& p : train) responses.push_back(*p.response);
      scorer = std::make_unique<UnigramPerplexity>(UnigramPerplexity::fit(responses));
      run.note("curriculum perplexity from a character unigram model of the training responses");
    }
    const auto schedule = build_curriculum(train, *scorer, cfg.curriculum_fraction,
                                           cfg.curriculum_high_epochs, cfg.curriculum_base_epochs);
    write_text(dir / "curriculum.json", schedule.to_json().dump(1) + "\n");
    run.output(dir / "curriculum.json");
  } else {
    run.note("no training prompts: curriculum not written");
  }
  run.out() << "prompts: " << train.size() << " training, " << test.size() << " test\n";
}

inline void stage_train_title(Run& run) {
  const Data d = load_data(run.cfg(), false);
  const auto model = title_artifact(run, d);
  run.out() << "title model: vocabulary " << model.vocab().size() << ", dim " << model.dim() << '\n';
}

inline void stage_train_id(Run& run) {
  const Data d = load_data(run.cfg());
  const auto split = make_split(run.cfg(), d);
  const auto table = id_artifact(run, d, split);
  run.out() << "id table: " << table.size() << " items, dim " << table.dim() << '\n';
}

inline std::vector<Recommendation> recommend_all(Run& run, const Pipeline& p) {
  std::vector<std::string> notes;
  effective_mixup(run.cfg(), &notes);
  for (auto& n : notes) run.note(n);
  auto recs = run_pipeline(p.rec, p.split.test, run.cfg().jobs);
  std::size_t failed = 0;
  for (const auto& r : recs) failed += r.fallback;
  if (failed) run.note(std::to_string(failed) + " generations failed to parse; title fallback used");
  write_run(run.art() / "run.jsonl", recs);
  run.output(run.art() / "run.jsonl");
  return recs;
}

inline void stage_recommend(Run& run) {
  const auto p = build_pipeline(run);
  const auto recs = recommend_all(run, *p);
  run.out() << "recommend: " << recs.size() << " test pairs -> "
            << (run.art() / "run.jsonl").generic_string() << '\n';
}

inline void stage_evaluate(Run& run, const std::string& run_file) {
  const auto& cfg = run.cfg();
  EvalReport rep;
  rep.setting = cfg.setting;
  rep.config_hash = config_hash(cfg);
  if (!run_file.empty()) {
    const auto records = load_run(run_file);
    const Catalog catalog = load_catalog(required(cfg.catalog, "paths.catalog"));
    rep.category = category_of(cfg, catalog);
    rep.result = evaluate_run(records, cfg.metric_n);
    run.note("evaluated existing run file " + run_file);
  } else {
    const auto p = build_pipeline(run);
    rep.category = category_of(cfg, p->data.catalog);
    if (cfg.setting == "zero-shot") {
      const auto src = cfg.zero_shot_source_category.empty() ? std::string("unknown")
                                                             : cfg.zero_shot_source_category;
      if (src == rep.category)
        run.note("warning: zero-shot source and target category are both '" + src +
                 "'; this is not a transfer setting");
    }
    const auto recs = recommend_all(run, *p);
    rep.result = evaluate_run(recs, cfg.metric_n, p->split.drop_count());
  }
  write_text(run.art() / "report.json", rep.to_json().dump(2) + "\n");
  run.output(run.art() / "report.json");
  run.out() << rep.table();
}

inline void stage_synth(std::ostream& out, const fs::path& dir, const SynthSpec& spec,
                        std::uint64_t seed) {
  const auto corpus = synth_corpus(spec, seed);
  write_synth(dir, corpus);
  const json cfg = {{"paths",
                     {{"catalog", "catalog.jsonl"},
                      {"interactions", "interactions.jsonl"},
                      {"querylog", "querylog.jsonl"},
                      {"artifacts", "artifacts"}}},
                    {"category", spec.category},
                    {"seed", seed}};
  write_text(dir / "config.json", cfg.dump(2) + "\n");
  out << "synth: " << corpus.catalog.size() << " items, " << corpus.sequences.size()
      << " users, " << corpus.querylog.size() << " query-log records -> " << dir.generic_string()
      << '\n';
}

}  // namespace cli_detail

inline int run_command(int argc, const char* const* argv, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"LLM-augmented sequential fashion recommendation pipeline", "fashrec"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Overrides o;
  std::string run_file;
  fs::path synth_out;
  SynthSpec spec;
  std::uint64_t synth_seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--catalog", o.catalog, "catalog JSONL (paths.catalog)");
    sub->add_option("--interactions", o.interactions, "interactions JSONL (paths.interactions)");
    sub->add_option("--querylog", o.querylog, "query log JSONL (paths.querylog)");
    sub->add_option("--artifacts", o.artifacts, "artifact directory (paths.artifacts)");
    sub->add_option("--setting", o.setting, "leave-one-out | cold-start | low-resource | zero-shot");
    sub->add_option("--ratio", o.ratio, "low-resource training fraction");
    sub->add_option("--generator", o.generator, "oracle | noisy | paraphrase | failing | remote");
    sub->add_option("--endpoint", o.endpoint, "remote generator base URL");
    sub->add_option("--seed", o.seed, "global seed");
    sub->add_option("--jobs", o.jobs, "parallel workers for recommend/evaluate");
    sub->add_option("--ablation", o.ablations, "no_attributes | no_memory | no_title_emb | no_id_emb");
    sub->add_option("--set", o.sets, "override any config key, e.g. --set mixup.n_head=0");
  };

  std::vector<std::pair<std::string, CLI::App*>> stages;
  for (auto [name, help] : std::initializer_list<std::pair<const char*, const char*>>{
           {"ingest", "validate inputs and write the split"},
           {"build-memory", "build the query-product memory"},
           {"make-prompts", "write training/test prompts and the curriculum"},
           {"train-title", "train the title embedding model"},
           {"train-id", "train the item embedding table"},
           {"recommend", "run the pipeline over the test split"},
           {"evaluate", "recommend and write the evaluation report"}}) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub);
    stages.emplace_back(name, sub);
  }
  stages.back().second->add_option("--run", run_file, "evaluate an existing run JSONL instead")
      ->check(CLI::ExistingFile);

  auto* synth = app.add_subcommand("synth", "write a synthetic corpus with planted structure");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--items", spec.num_items, "catalog size")->capture_default_str();
  synth->add_option("--users", spec.num_users, "number of users")->capture_default_str();
  synth->add_option("--family-size", spec.family_size, "titles per family")->capture_default_str();
  synth->add_option("--transition-prob", spec.transition_prob, "planted successor probability")
      ->capture_default_str();
  synth->add_option("--category", spec.category, "category label")->capture_default_str();
  synth->add_option("--id-prefix", spec.id_prefix, "item id prefix")->capture_default_str();
  synth->add_option("--family-offset", spec.family_offset, "first family word")->capture_default_str();
  synth->add_option("--seed", synth_seed, "seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      stage_synth(out, synth_out, spec, synth_seed);
      return 0;
    }
    for (auto& [name, sub] : stages) {
      if (!sub->parsed()) continue;
      std::vector<std::string> notes;
      RunConfig cfg = resolve_config(o, notes);
      Run run(name, std::move(cfg), std::move(notes), out, err);
      if (name == "ingest") stage_ingest(run);
      else if (name == "build-memory") stage_build_memory(run);
      else if (name == "make-prompts") stage_make_prompts(run);
      else if (name == "train-title") stage_train_title(run);
      else if (name == "train-id") stage_train_id(run);
      else if (name == "recommend") stage_recommend(run);
      else stage_evaluate(run, run_file);
      run.write_manifest();
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::Validation ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace fashrec
