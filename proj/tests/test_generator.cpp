#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <set>
#include <thread>

#include "fashrec/generator.hpp"
#include "fashrec/remote.hpp"

namespace fashrec {
namespace {

Item boot() { return {"B", {{"title", "brown suede chelsea boot"}}}; }

Prompt prompt(std::string id, std::optional<std::string> response = std::nullopt) {
  Prompt p;
  p.id = std::move(id);
  p.instruction = "Recommend the next product.";
  p.input = "[purchase] id=A | title=black leather ankle boot";
  p.response = std::move(response);
  return p;
}

TEST(GenerationParams, DefaultsAndValidation) {
  GenerationParams g;
  EXPECT_EQ(g.max_new_tokens, 64u);
  EXPECT_DOUBLE_EQ(g.temperature, 0.05);
  EXPECT_DOUBLE_EQ(g.top_p, 0.95);
  EXPECT_NO_THROW(g.validate());
  EXPECT_THROW((GenerationParams{0, 0.05, 0.95}.validate()), Error);
  EXPECT_THROW((GenerationParams{64, 0.0, 0.95}.validate()), Error);
  EXPECT_THROW((GenerationParams{64, 0.05, 1.5}.validate()), Error);
}

TEST(OracleMock, EmitsCanonicalLine) {
  OracleMock gen({{"p1", boot()}});
  EXPECT_EQ(gen.generate(prompt("p1"), {}), "ID: B | TITLE: brown suede chelsea boot");
  EXPECT_THROW(gen.generate(prompt("p2"), {}), Error);
}

TEST(NoisyMock, CorruptsIdKeepsTitle) {
  NoisyMock gen({{"p1", boot()}}, 1.0, 3);
  auto out = parse_generation(gen.generate(prompt("p1"), {}));
  EXPECT_EQ(out.parse_status, ParseStatus::Strict);
  EXPECT_NE(out.item_id, "B");
  EXPECT_EQ(out.item_id.rfind("NOSUCH-", 0), 0u);
  EXPECT_EQ(out.title, "brown suede chelsea boot");
  NoisyMock clean({{"p1", boot()}}, 0.0, 3);
  EXPECT_EQ(parse_generation(clean.generate(prompt("p1"), {})).item_id, "B");
}

TEST(NoisyMock, CorruptionRateFollowsProbability) {
  TruthMap truth;
  for (int i = 0; i < 2000; ++i) truth["p" + std::to_string(i)] = boot();
  NoisyMock gen(truth, 0.3, 1);
  int corrupted = 0;
  for (int i = 0; i < 2000; ++i)
    corrupted += parse_generation(gen.generate(prompt("p" + std::to_string(i)), {})).item_id != "B";
  EXPECT_NEAR(corrupted / 2000.0, 0.3, 0.05);
}

TEST(ParaphraseMock, KeepsSubsetOfTitleWords) {
  ParaphraseMock gen({{"p1", boot()}}, 0.5, 2);
  auto out = parse_generation(gen.generate(prompt("p1"), {}));
  EXPECT_EQ(out.parse_status, ParseStatus::Strict);
  EXPECT_FALSE(out.title.empty());
  std::istringstream ss(out.title);
  const std::set<std::string> truth_words = {"brown", "suede", "chelsea", "boot"};
  for (std::string w; ss >> w;) EXPECT_TRUE(truth_words.count(w)) << w;
  EXPECT_EQ(gen.generate(prompt("p1"), {}), gen.generate(prompt("p1"), {}));
  ParaphraseMock all({{"p1", boot()}}, 1.0, 2);
  EXPECT_EQ(parse_generation(all.generate(prompt("p1"), {})).title, boot().title());
}

TEST(FailingMock, CountsCalls) {
  FailingMock gen;
  EXPECT_EQ(parse_generation(gen.generate(prompt("x"), {})).parse_status, ParseStatus::Failed);
  EXPECT_EQ(gen.calls(), 1u);
}

TEST(Perplexity, UnigramCertaintyAndUniform) {
  UnigramPerplexity certain({{'a', 1.0}});
  EXPECT_DOUBLE_EQ(certain.perplexity(prompt("p", "aaaa")), 1.0);
  UnigramPerplexity uniform({{'a', 0.25}, {'b', 0.25}, {'c', 0.25}, {'d', 0.25}});
  EXPECT_NEAR(uniform.perplexity(prompt("p", "abcdcba")), 4.0, 1e-12);
  EXPECT_THROW(uniform.perplexity(prompt("p")), Error);
}

TEST(Perplexity, FittedUnigramPrefersFamiliarText) {
  std::vector<std::string> corpus = {"ID: A1 | TITLE: black boot", "ID: B2 | TITLE: red boot"};
  auto model = UnigramPerplexity::fit(corpus);
  EXPECT_LT(model.perplexity(prompt("p", "black boot")),
            model.perplexity(prompt("p", "qzxj wvkq")));
}

TEST(Perplexity, TableEcho) {
  TablePerplexity table({{"p1", 17.3}});
  EXPECT_DOUBLE_EQ(table.perplexity(prompt("p1", "x")), 17.3);
  EXPECT_THROW(table.perplexity(prompt("zz", "x")), Error);
}

std::vector<Prompt> prompts_with(const std::vector<double>& ppl, std::map<std::string, double>& t) {
  std::vector<Prompt> out;
  for (std::size_t i = 0; i < ppl.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "p%04zu", i);
    out.push_back(prompt(id, "r"));
    t[id] = ppl[i];
  }
  return out;
}

TEST(Curriculum, TopFractionGetsExtraEpochs) {
  std::map<std::string, double> table;
  auto prompts = prompts_with({5, 1, 3, 2, 4}, table);
  auto schedule = build_curriculum(prompts, TablePerplexity(table), 0.2, 3, 1);
  ASSERT_EQ(schedule.entries.size(), 5u);
  std::vector<int> epochs;
  for (const auto& e : schedule.entries) epochs.push_back(e.epochs);
  EXPECT_EQ(epochs, (std::vector<int>{3, 1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(schedule.threshold_fraction, 0.2);
}

TEST(Curriculum, TiesBrokenByPromptId) {
  std::map<std::string, double> table;
  auto prompts = prompts_with(std::vector<double>(10, 2.5), table);
  auto schedule = build_curriculum(prompts, TablePerplexity(table), 0.2);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(schedule.entries[i].epochs, i < 2 ? 3 : 1);
}

TEST(Curriculum, CeilingCount) {
  EXPECT_EQ(high_perplexity_count(0.2, 5), 1u);
  EXPECT_EQ(high_perplexity_count(0.2, 15), 3u);
  EXPECT_EQ(high_perplexity_count(0.2, 6), 2u);
  EXPECT_EQ(high_perplexity_count(0.2, 1), 1u);
  EXPECT_EQ(high_perplexity_count(0.2, 0), 0u);
}

TEST(Curriculum, MatchesBruteForceOnRandomInputs) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<double> ppl;
    for (std::size_t i = 0; i < n; ++i) ppl.push_back(1.0 + static_cast<double>(rng() % 20));
    std::map<std::string, double> table;
    auto prompts = prompts_with(ppl, table);
    auto schedule = build_curriculum(prompts, TablePerplexity(table), 0.2);
    // oracle: full sort, exact integer ceil(n / 5)
    std::vector<std::pair<double, std::string>> sorted;
    for (const auto& [id, v] : table) sorted.emplace_back(-v, id);
    std::sort(sorted.begin(), sorted.end());
    std::set<std::string> top;
    for (std::size_t i = 0; i < (2 * n + 9) / 10; ++i) top.insert(sorted[i].second);
    for (const auto& e : schedule.entries) EXPECT_EQ(e.epochs, top.count(e.prompt_id) ? 3 : 1);
  }
}

TEST(Curriculum, Validation) {
  std::map<std::string, double> table;
  auto prompts = prompts_with({1, 2}, table);
  TablePerplexity scorer(table);
  EXPECT_THROW(build_curriculum(prompts, scorer, 0.0), Error);
  EXPECT_THROW(build_curriculum(prompts, scorer, 1.0), Error);
  EXPECT_THROW(build_curriculum(prompts, scorer, 0.2, 1, 3), Error);
  table["p0000"] = -1;
  EXPECT_THROW(build_curriculum(prompts, TablePerplexity(table), 0.2), Error);
}

// ---------------------------------------------------------------------------
// Wire protocol against a local server that replays the golden fixtures.

json fixture(const std::string& name) {
  return json::parse(read_text(std::filesystem::path(FASHREC_FIXTURE_DIR) / "protocol" / name));
}

class FixtureServer {
 public:
  FixtureServer() {
    server_.Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
      ++generate_calls;
      auto body = json::parse(req.body);
      request_ids.push_back(body.value("request_id", ""));
      if (fail_first > 0) {
        --fail_first;
        res.status = 503;
        return;
      }
      auto expected = fixture("generate.json")["request"];
      for (auto key : {"prompt", "max_new_tokens", "temperature", "top_p"})
        if (body.at(key) != expected.at(key)) {
          res.status = 400;
          res.set_content(std::string("mismatch in ") + key, "text/plain");
          return;
        }
      res.set_content(fixture("generate.json")["response"].dump(), "application/json");
    });
    server_.Post("/perplexity", [](const httplib::Request& req, httplib::Response& res) {
      if (json::parse(req.body) != fixture("perplexity.json")["request"]) {
        res.status = 400;
        return;
      }
      res.set_content(fixture("perplexity.json")["response"].dump(), "application/json");
    });
    server_.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
      auto texts = json::parse(req.body).at("texts");
      json vectors = json::array();
      for (std::size_t i = 0; i < texts.size(); ++i)
        vectors.push_back(fixture("embed.json")["response"]["vectors"][0]);
      res.set_content(json{{"vectors", vectors}}.dump(), "application/json");
    });
    server_.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(fixture("health.json")["response"].dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FixtureServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<int> generate_calls{0};
  std::atomic<int> fail_first{0};
  std::vector<std::string> request_ids;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(RemoteGenerator, GenerateMatchesFixture) {
  FixtureServer server;
  RemoteGenerator gen({server.endpoint(), 5.0, 0});
  EXPECT_EQ(gen.generate(prompt("u1"), {}), fixture("generate.json")["response"]["text"]);
  ASSERT_EQ(server.request_ids.size(), 1u);
  EXPECT_EQ(server.request_ids[0].rfind("u1-", 0), 0u);
}

TEST(RemoteGenerator, RetriesWithSameRequestId) {
  FixtureServer server;
  server.fail_first = 2;
  RemoteGenerator gen({server.endpoint(), 5.0, 2});
  EXPECT_EQ(parse_generation(gen.generate(prompt("u1"), {})).item_id, "B");
  EXPECT_EQ(server.generate_calls.load(), 3);
  ASSERT_EQ(server.request_ids.size(), 3u);
  EXPECT_EQ(server.request_ids[0], server.request_ids[1]);
  EXPECT_EQ(server.request_ids[1], server.request_ids[2]);
}

TEST(RemoteGenerator, RetriesAreBounded) {
  FixtureServer server;
  server.fail_first = 10;
  RemoteGenerator gen({server.endpoint(), 5.0, 2});
  try {
    gen.generate(prompt("u1"), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Transport);
  }
  EXPECT_EQ(server.generate_calls.load(), 3);
}

TEST(RemoteGenerator, ClientErrorIsNotRetried) {
  FixtureServer server;
  RemoteGenerator gen({server.endpoint(), 5.0, 2});
  EXPECT_THROW(gen.generate(prompt("u1"), {128, 0.05, 0.95}), Error);
  EXPECT_EQ(server.generate_calls.load(), 1);
}

TEST(RemoteGenerator, PerplexityAndHealth) {
  FixtureServer server;
  RemoteGenerator gen({server.endpoint(), 5.0, 0});
  EXPECT_DOUBLE_EQ(gen.perplexity(prompt("u1", "ID: B | TITLE: brown suede chelsea boot")), 17.3);
  auto health = gen.health();
  EXPECT_EQ(health["status"], "ok");
  EXPECT_EQ(health["model"], "fixture-model");
}

TEST(RemoteGenerator, UnreachableEndpoint) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  RemoteGenerator gen({"http://127.0.0.1:" + std::to_string(port), 1.0, 1});
  try {
    gen.generate(prompt("u1"), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Transport);
  }
}

TEST(RemoteEncoder, EmbedEndpoint) {
  FixtureServer server;
  RemoteEncoder enc({server.endpoint(), 5.0, 0});
  EXPECT_EQ(enc.dim(), 4);
  auto v = enc.encode("red dress");
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[2], -0.8);
  EXPECT_NE(enc.id().find(server.endpoint()), std::string::npos);
}

TEST(RemoteGenerator, ConcurrentCalls) {
  FixtureServer server;
  RemoteGenerator gen({server.endpoint(), 5.0, 0});
  std::vector<std::thread> pool;
  std::atomic<int> ok{0};
  for (int t = 0; t < 4; ++t)
    pool.emplace_back([&] {
      for (int i = 0; i < 5; ++i) ok += gen.generate(prompt("u1"), {}).rfind("ID: B", 0) == 0;
    });
  for (auto& t : pool) t.join();
  EXPECT_EQ(ok.load(), 20);
}

}  // namespace
}  // namespace fashrec
