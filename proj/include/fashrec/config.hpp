#pragma once

// Run configuration: one JSON document, every field optional, defaults below.
// Unknown keys are rejected so typos do not silently fall back to defaults.

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "fashrec/evalkit.hpp"
#include "fashrec/generator.hpp"
#include "fashrec/id_embedder.hpp"
#include "fashrec/io.hpp"
#include "fashrec/memory.hpp"
#include "fashrec/promptgen.hpp"
#include "fashrec/retrieval.hpp"
#include "fashrec/title_embedder.hpp"

namespace fashrec {

inline constexpr const char* kEndpointEnv = "FASHREC_GENERATOR_ENDPOINT";

struct AblationFlags {
  bool no_attributes = false;  // items rendered by title only
  bool no_memory = false;      // no query-product memory in prompts
  bool no_title_emb = false;   // ID retrieval only (mixup N = K)
  bool no_id_emb = false;      // title retrieval only (mixup N = 0)

  bool operator==(const AblationFlags&) const = default;
};

struct GeneratorConfig {
  std::string kind = "oracle";  // oracle | noisy | paraphrase | failing | remote
  std::string endpoint;
  double timeout_s = 60.0;
  int retries = 2;
  double noise = 0.3;      // noisy: probability of a corrupted id
  double keep_prob = 0.7;  // paraphrase: per-word keep probability
  GenerationParams params;
};

struct RunConfig {
  std::string catalog;
  std::string interactions;
  std::string querylog;
  std::string artifacts = "artifacts";
  std::string category;  // report label; defaults to the catalog's category

  std::string setting = "leave-one-out";  // | cold-start | low-resource | zero-shot
  double low_resource_ratio = 1.0;
  std::string zero_shot_source_artifacts;
  std::string zero_shot_source_category;

  std::string template_path;  // optional PromptTemplate JSON
  std::size_t max_tokens = 1024;

  MemoryLookupParams memory;
  int memory_encoder_dim = 256;
  bool memory_purchased_only = false;

  MixupParams mixup;
  std::size_t metric_n = 10;

  GeneratorConfig generator;

  double curriculum_fraction = 0.2;
  int curriculum_high_epochs = 3;
  int curriculum_base_epochs = 1;

  TitleTrainConfig title_training;  // seed field unused: derived from `seed`
  IdTrainConfig id_training;        // seed field unused: derived from `seed`

  AblationFlags ablation;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

inline json to_json(const RunConfig& c) {
  const auto& t = c.title_training;
  const auto& i = c.id_training;
  const auto& g = c.generator;
  return {
      {"paths",
       {{"catalog", c.catalog},
        {"interactions", c.interactions},
        {"querylog", c.querylog},
        {"artifacts", c.artifacts}}},
      {"category", c.category},
      {"setting", c.setting},
      {"low_resource_ratio", c.low_resource_ratio},
      {"zero_shot",
       {{"source_artifacts", c.zero_shot_source_artifacts},
        {"source_category", c.zero_shot_source_category}}},
      {"template", {{"path", c.template_path}, {"max_tokens", c.max_tokens}}},
      {"memory",
       {{"num_queries", c.memory.num_queries},
        {"num_products", c.memory.num_products},
        {"encoder_dim", c.memory_encoder_dim},
        {"purchased_only", c.memory_purchased_only}}},
      {"mixup", {{"n_head", c.mixup.n_head}, {"k_total", c.mixup.k_total}}},
      {"metric_n", c.metric_n},
      {"generator",
       {{"kind", g.kind},
        {"endpoint", g.endpoint},
        {"timeout_s", g.timeout_s},
        {"retries", g.retries},
        {"noise", g.noise},
        {"keep_prob", g.keep_prob},
        {"max_new_tokens", g.params.max_new_tokens},
        {"temperature", g.params.temperature},
        {"top_p", g.params.top_p}}},
      {"curriculum",
       {{"fraction", c.curriculum_fraction},
        {"high_epochs", c.curriculum_high_epochs},
        {"base_epochs", c.curriculum_base_epochs}}},
      {"title_training",
       {{"d_tok", t.d_tok},
        {"d_hidden", t.d_hidden},
        {"d_emb", t.d_emb},
        {"margin", t.margin},
        {"lr", t.lr},
        {"epochs", t.epochs},
        {"batch", t.batch},
        {"max_vocab", t.max_vocab}}},
      {"id_training",
       {{"d_id", i.d_id},
        {"temperature", i.temperature},
        {"lr", i.lr},
        {"epochs", i.epochs},
        {"batch", i.batch},
        {"context_window", i.context_window}}},
      {"ablation",
       {{"no_attributes", c.ablation.no_attributes},
        {"no_memory", c.ablation.no_memory},
        {"no_title_emb", c.ablation.no_title_emb},
        {"no_id_emb", c.ablation.no_id_emb}}},
      {"seed", c.seed},
      {"jobs", c.jobs}};
}

namespace config_detail {

inline void reject_unknown(const json& given, const json& known, const std::string& prefix) {
  require(given.is_object(), ErrorKind::Config,
          "config: '" + (prefix.empty() ? std::string("<root>") : prefix) + "' must be an object");
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    require(known.contains(key), ErrorKind::Config, "config: unknown key '" + path + "'");
    if (known.at(key).is_object()) reject_unknown(value, known.at(key), path);
  }
}

}  // namespace config_detail

inline RunConfig config_from_json(const json& given) {
  const json defaults = to_json(RunConfig{});
  config_detail::reject_unknown(given, defaults, "");
  json j = defaults;
  j.merge_patch(given);
  RunConfig c;
  std::string field;
  auto get = [&](const char* path, auto& out) {
    field = path;
    out = j.at(json::json_pointer(path)).get<std::remove_reference_t<decltype(out)>>();
  };
  try {
    get("/paths/catalog", c.catalog);
    get("/paths/interactions", c.interactions);
    get("/paths/querylog", c.querylog);
    get("/paths/artifacts", c.artifacts);
    get("/category", c.category);
    get("/setting", c.setting);
    get("/low_resource_ratio", c.low_resource_ratio);
    get("/zero_shot/source_artifacts", c.zero_shot_source_artifacts);
    get("/zero_shot/source_category", c.zero_shot_source_category);
    get("/template/path", c.template_path);
    get("/template/max_tokens", c.max_tokens);
    get("/memory/num_queries", c.memory.num_queries);
    get("/memory/num_products", c.memory.num_products);
    get("/memory/encoder_dim", c.memory_encoder_dim);
    get("/memory/purchased_only", c.memory_purchased_only);
    get("/mixup/n_head", c.mixup.n_head);
    get("/mixup/k_total", c.mixup.k_total);
    get("/metric_n", c.metric_n);
    get("/generator/kind", c.generator.kind);
    get("/generator/endpoint", c.generator.endpoint);
    get("/generator/timeout_s", c.generator.timeout_s);
    get("/generator/retries", c.generator.retries);
    get("/generator/noise", c.generator.noise);
    get("/generator/keep_prob", c.generator.keep_prob);
    get("/generator/max_new_tokens", c.generator.params.max_new_tokens);
    get("/generator/temperature", c.generator.params.temperature);
    get("/generator/top_p", c.generator.params.top_p);
    get("/curriculum/fraction", c.curriculum_fraction);
    get("/curriculum/high_epochs", c.curriculum_high_epochs);
    get("/curriculum/base_epochs", c.curriculum_base_epochs);
    get("/title_training/d_tok", c.title_training.d_tok);
    get("/title_training/d_hidden", c.title_training.d_hidden);
    get("/title_training/d_emb", c.title_training.d_emb);
    get("/title_training/margin", c.title_training.margin);
    get("/title_training/lr", c.title_training.lr);
    get("/title_training/epochs", c.title_training.epochs);
    get("/title_training/batch", c.title_training.batch);
    get("/title_training/max_vocab", c.title_training.max_vocab);
    get("/id_training/d_id", c.id_training.d_id);
    get("/id_training/temperature", c.id_training.temperature);
    get("/id_training/lr", c.id_training.lr);
    get("/id_training/epochs", c.id_training.epochs);
    get("/id_training/batch", c.id_training.batch);
    get("/id_training/context_window", c.id_training.context_window);
    get("/ablation/no_attributes", c.ablation.no_attributes);
    get("/ablation/no_memory", c.ablation.no_memory);
    get("/ablation/no_title_emb", c.ablation.no_title_emb);
    get("/ablation/no_id_emb", c.ablation.no_id_emb);
    get("/seed", c.seed);
    get("/jobs", c.jobs);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, "config: invalid value for '" + field.substr(1) + "': " + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// Hash of the canonical JSON form; changes whenever any field changes.
inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

inline const std::vector<std::string>& known_settings() {
  static const std::vector<std::string> s = {"leave-one-out", "cold-start", "low-resource",
                                             "zero-shot"};
  return s;
}

inline const std::vector<std::string>& known_generators() {
  static const std::vector<std::string> g = {"oracle", "noisy", "paraphrase", "failing", "remote"};
  return g;
}

// Structural checks that do not need the data files.
inline void validate(const RunConfig& c) {
  auto one_of = [](const std::string& v, const std::vector<std::string>& opts) {
    return std::find(opts.begin(), opts.end(), v) != opts.end();
  };
  require(one_of(c.setting, known_settings()), ErrorKind::Config,
          "config: 'setting' must be one of leave-one-out, cold-start, low-resource, zero-shot");
  require(one_of(c.generator.kind, known_generators()), ErrorKind::Config,
          "config: 'generator.kind' must be one of oracle, noisy, paraphrase, failing, remote");
  require(c.generator.kind != "remote" || !c.generator.endpoint.empty(), ErrorKind::Config,
          "config: 'generator.endpoint' is required for the remote generator (or set " +
              std::string(kEndpointEnv) + ")");
  require(!(c.ablation.no_title_emb && c.ablation.no_id_emb), ErrorKind::Config,
          "config: ablations no_title_emb and no_id_emb together leave no retrieval path");
  require(c.low_resource_ratio > 0 && c.low_resource_ratio <= 1, ErrorKind::Config,
          "config: 'low_resource_ratio' must be in (0, 1]");
  require(c.setting != "zero-shot" || !c.zero_shot_source_artifacts.empty(), ErrorKind::Config,
          "config: 'zero_shot.source_artifacts' is required for the zero-shot setting");
  require(c.metric_n >= 1 && c.jobs >= 1 && c.max_tokens >= 1 && c.memory_encoder_dim >= 8,
          ErrorKind::Config, "config: metric_n, jobs, max_tokens must be >= 1, encoder_dim >= 8");
  c.memory.validate();
  c.mixup.validate();
  c.generator.params.validate();
  c.title_training.validate();
  c.id_training.validate();
  require(c.curriculum_fraction > 0 && c.curriculum_fraction < 1 && c.curriculum_base_epochs >= 1 &&
              c.curriculum_high_epochs >= c.curriculum_base_epochs,
          ErrorKind::Config, "config: invalid curriculum settings");
}

// Mixup parameters after ablations; notes describe any forced change.
inline MixupParams effective_mixup(const RunConfig& c, std::vector<std::string>* notes = nullptr) {
  MixupParams m = c.mixup;
  auto force = [&](std::size_t n, const char* why) {
    if (m.n_head != n && notes)
      notes->push_back(std::string(why) + ": mixup N forced from " + std::to_string(m.n_head) +
                       " to " + std::to_string(n));
    m.n_head = n;
  };
  if (c.ablation.no_id_emb) force(0, "ablation no_id_emb");
  if (c.ablation.no_title_emb) force(m.k_total, "ablation no_title_emb");
  if (c.setting == "zero-shot") force(0, "zero-shot setting disables the ID path");
  return m;
}

}  // namespace fashrec
