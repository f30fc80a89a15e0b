#include <gtest/gtest.h>

#include <set>

#include "fashrec/config.hpp"
#include "test_util.hpp"

namespace fashrec {
namespace {

TEST(RunConfig, DefaultConstants) {
  const RunConfig c;
  EXPECT_EQ(c.mixup.n_head, 1u);
  EXPECT_EQ(c.mixup.k_total, 10u);
  EXPECT_EQ(c.metric_n, 10u);
  EXPECT_EQ(c.generator.params.max_new_tokens, 64u);
  EXPECT_EQ(c.generator.params.temperature, 0.05);
  EXPECT_EQ(c.generator.params.top_p, 0.95);
  EXPECT_EQ(c.max_tokens, 1024u);
  EXPECT_EQ(c.curriculum_fraction, 0.2);
  EXPECT_EQ(c.curriculum_high_epochs, 3);
  EXPECT_EQ(c.curriculum_base_epochs, 1);
  EXPECT_EQ(c.memory.num_queries, 3u);
  EXPECT_EQ(c.memory.num_products, 5u);
  EXPECT_NO_THROW(validate(c));
}

TEST(RunConfig, JsonRoundTrip) {
  RunConfig c;
  c.catalog = "c.jsonl";
  c.mixup.n_head = 3;
  c.generator.kind = "noisy";
  c.ablation.no_memory = true;
  c.seed = 42;
  c.title_training.epochs = 7;
  EXPECT_EQ(to_json(config_from_json(to_json(c))), to_json(c));
  EXPECT_EQ(config_hash(config_from_json(to_json(c))), config_hash(c));
}

void leaves(const json& j, const json::json_pointer& at, std::vector<json::json_pointer>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) leaves(v, at / k, out);
  } else {
    out.push_back(at);
  }
}

TEST(RunConfig, HashChangesWithEveryField) {
  const json base = to_json(RunConfig{});
  const std::string h0 = config_hash(RunConfig{});
  std::vector<json::json_pointer> paths;
  leaves(base, json::json_pointer(), paths);
  ASSERT_GT(paths.size(), 40u);
  std::set<std::string> seen = {h0};
  for (const auto& p : paths) {
    json j = base;
    json& v = j[p];
    if (v.is_boolean()) v = !v.get<bool>();
    else if (v.is_number_float()) v = v.get<double>() / 2;
    else if (v.is_number()) v = v.get<std::int64_t>() + 1;
    else v = v.get<std::string>() + "x";
    const auto h = config_hash(config_from_json(j));
    EXPECT_TRUE(seen.insert(h).second) << p.to_string();
  }
}

TEST(RunConfig, RejectsUnknownAndMistypedKeys) {
  try {
    config_from_json(json::parse(R"({"mixup": {"n_haed": 2}})"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
    EXPECT_NE(std::string(e.what()).find("mixup.n_haed"), std::string::npos);
  }
  try {
    config_from_json(json::parse(R"({"seed": "seven"})"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'seed'"), std::string::npos);
  }
  EXPECT_THROW(config_from_json(json::parse(R"({"mixup": 3})")), Error);
}

TEST(RunConfig, PartialDocumentKeepsOtherDefaults) {
  const auto c = config_from_json(json::parse(R"({"mixup": {"k_total": 20}, "jobs": 4})"));
  EXPECT_EQ(c.mixup.k_total, 20u);
  EXPECT_EQ(c.mixup.n_head, 1u);
  EXPECT_EQ(c.jobs, 4u);
  EXPECT_EQ(c.metric_n, 10u);
}

TEST(RunConfig, ValidationErrors) {
  auto bad = [](auto mutate) {
    RunConfig c;
    mutate(c);
    EXPECT_THROW(validate(c), Error);
  };
  bad([](RunConfig& c) { c.ablation.no_id_emb = c.ablation.no_title_emb = true; });
  bad([](RunConfig& c) { c.setting = "few-shot"; });
  bad([](RunConfig& c) { c.generator.kind = "remote"; });
  bad([](RunConfig& c) { c.setting = "zero-shot"; });
  bad([](RunConfig& c) { c.low_resource_ratio = 0; });
  bad([](RunConfig& c) { c.mixup.n_head = 11; });
  bad([](RunConfig& c) { c.curriculum_fraction = 1.0; });
  bad([](RunConfig& c) { c.generator.params.top_p = 0; });
}

TEST(EffectiveMixup, AblationsForceN) {
  RunConfig c;
  std::vector<std::string> notes;
  EXPECT_EQ(effective_mixup(c, &notes).n_head, 1u);
  EXPECT_TRUE(notes.empty());
  c.ablation.no_id_emb = true;
  EXPECT_EQ(effective_mixup(c, &notes).n_head, 0u);
  ASSERT_EQ(notes.size(), 1u);
  EXPECT_NE(notes[0].find("no_id_emb"), std::string::npos);
  c.ablation = {};
  c.ablation.no_title_emb = true;
  EXPECT_EQ(effective_mixup(c).n_head, 10u);
  c.ablation = {};
  c.setting = "zero-shot";
  EXPECT_EQ(effective_mixup(c).n_head, 0u);
}

TEST(LoadConfig, FileErrors) {
  testing::TempDir dir;
  EXPECT_THROW(load_config(dir / "missing.json"), Error);
  try {
    load_config(dir.write("bad.json", "{not json"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
  EXPECT_EQ(load_config(dir.write("ok.json", R"({"seed": 9})")).seed, 9u);
}

}  // namespace
}  // namespace fashrec
