#include <gtest/gtest.h>

#include <random>

#include "fashrec/synth.hpp"
#include "fashrec/title_embedder.hpp"
#include "test_util.hpp"

namespace fashrec {
namespace {

Vocabulary small_vocab() { return Vocabulary::from_tokens({"red", "dress", "boot", "black"}); }

TEST(Tokenize, LowercasesAndSplits) {
  auto v = small_vocab();
  EXPECT_EQ(tokenize("Red DRESS", v), (std::vector<int>{v.index("red"), v.index("dress")}));
  EXPECT_EQ(tokenize("red-dress!", v), tokenize("red dress", v));
  EXPECT_EQ(tokenize("", v), std::vector<int>{Vocabulary::kUnk});
  EXPECT_EQ(tokenize("  ...  ", v), std::vector<int>{Vocabulary::kUnk});
  EXPECT_EQ(tokenize("zzzyx9q", v), std::vector<int>{Vocabulary::kUnk});
}

TEST(Vocabulary, FrequencyThenLexicographicOrder) {
  std::vector<std::string> texts = {"b a c", "c b", "c d"};
  auto v = Vocabulary::build(texts);
  ASSERT_EQ(v.size(), 5);
  EXPECT_EQ(v.token(0), "<unk>");
  EXPECT_EQ(v.token(1), "c");
  EXPECT_EQ(v.token(2), "b");
  EXPECT_EQ(v.token(3), "a");
  EXPECT_EQ(v.token(4), "d");
  auto capped = Vocabulary::build(texts, 3);
  EXPECT_EQ(capped.size(), 3);
  EXPECT_EQ(capped.index("a"), Vocabulary::kUnk);
  EXPECT_THROW(Vocabulary::from_tokens({"x", "x"}), Error);
}

TitleModel small_model(int d_tok = 6, int d_hidden = 5, int d_emb = 7, std::uint64_t seed = 3) {
  auto v = Vocabulary::from_tokens({"red", "dress", "boot", "black", "leather", "womens", "mens",
                                    "sandal", "canvas", "navy"});
  return TitleModel(v, EncoderParams::init(v.size(), d_tok, d_hidden, d_emb, seed));
}

TEST(TitleModel, EncodingIsUnitNormDeterministicAndCaseInsensitive) {
  auto m = small_model();
  auto a = m.encode_query("red dress");
  EXPECT_NEAR(a.norm(), 1.0, 1e-12);
  EXPECT_EQ(a, m.encode_query("red dress"));
  EXPECT_EQ(a, m.encode_query("RED Dress   "));
  EXPECT_NEAR(m.encode_title("").norm(), 1.0, 1e-12);
  EXPECT_NE(m.encode_title("red dress"), a);  // separate projections
}

TEST(TitleModel, RejectsNonFiniteWeights) {
  auto m = small_model();
  auto p = m.params();
  p.u_z(0, 0) = std::nan("");
  try {
    TitleModel bad(m.vocab(), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Numeric);
  }
}

Vector unit2(double angle) {
  Vector v(2);
  v << std::cos(angle), std::sin(angle);
  return v;
}

TEST(TripletLoss, Examples) {
  const Vector a = unit2(0.0);
  const Vector ortho = unit2(std::acos(0.0));  // d(a, ortho) = 2
  EXPECT_DOUBLE_EQ(triplet_loss(a, a, ortho, 0.5), 0.0);
  EXPECT_NEAR(triplet_loss(a, ortho, a, 0.5), 2.5, 1e-12);
  EXPECT_NEAR(triplet_loss(a, -a, a, 0.5), 4.5, 1e-12);
  // d = 2 - 2cos: d=0.4 <=> cos=0.8, d=0.6 <=> cos=0.7
  EXPECT_NEAR(triplet_loss(a, unit2(std::acos(0.8)), unit2(-std::acos(0.7)), 0.5), 0.3, 1e-12);
}

TEST(TripletLoss, NonNegativeAndZeroBeyondMargin) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int i = 0; i < 1000; ++i) {
    Vector a(4), p(4), n(4);
    for (int k = 0; k < 4; ++k) a[k] = g(rng), p[k] = g(rng), n[k] = g(rng);
    a.normalize(), p.normalize(), n.normalize();
    const double dp = 2 - 2 * a.dot(p), dn = 2 - 2 * a.dot(n);
    const double loss = triplet_loss(a, p, n, 0.5);
    EXPECT_GE(loss, 0.0);
    if (dn >= dp + 0.5 + 1e-12) EXPECT_EQ(loss, 0.0);
    else EXPECT_NEAR(loss, std::max(0.0, dp - dn + 0.5), 1e-12);
  }
}

TEST(MineHardNegatives, TwoDisjointPairs) {
  auto m = small_model();
  std::vector<QueryTitlePair> batch = {{"red dress", "navy dress"}, {"mens boot", "black boot"}};
  auto t = mine_hard_negatives(batch, m);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].hard_title, "black boot");
  EXPECT_EQ(t[0].hard_query, "mens boot");
  EXPECT_EQ(t[1].hard_title, "navy dress");
  EXPECT_EQ(t[1].hard_query, "red dress");
  EXPECT_THROW(mine_hard_negatives(std::span(batch).first(1), m), Error);
}

TEST(MineHardNegatives, DuplicatesExcludedAndSkippedWhenNoCandidate) {
  auto m = small_model();
  std::vector<QueryTitlePair> batch = {{"red dress", "navy dress"}, {"Red  DRESS", "navy dress"}};
  EXPECT_TRUE(mine_hard_negatives(batch, m).empty());
  batch.push_back({"boot", "black boot"});
  auto t = mine_hard_negatives(batch, m);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[0].hard_title, "black boot");
  EXPECT_EQ(t[1].hard_title, "black boot");
  EXPECT_EQ(t[2].hard_title, "navy dress");  // tie between equal titles -> first index
}

TEST(MineHardNegatives, MatchesBruteForceScan) {
  auto m = small_model(8, 6, 9, 11);
  const std::vector<std::string> words = {"red", "dress", "boot", "black", "leather",
                                          "womens", "mens", "sandal", "canvas", "navy"};
  std::mt19937_64 rng(23);
  auto phrase = [&] {
    std::string s;
    const int n = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < n; ++i) s += (i ? " " : "") + words[rng() % words.size()];
    return s;
  };
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng() % 63;
    std::vector<QueryTitlePair> batch;
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0 && rng() % 5 == 0) batch.push_back(batch[rng() % i]);
      else batch.push_back({phrase(), phrase()});
    }
    // Oracle: positives are the batch's own (query, title) pairs after
    // lowercasing/whitespace normalization; full cosine scan, first max wins.
    auto norm = [](const std::string& s) {
      std::string out;
      for (const auto& w : split_words(s)) out += w + " ";
      return out;
    };
    std::set<std::pair<std::string, std::string>> pos;
    for (const auto& p : batch) pos.emplace(norm(p.query), norm(p.title));
    std::vector<Triplet> expect;
    for (std::size_t i = 0; i < n; ++i) {
      int bt = -1, bq = -1;
      double st = 0, sq = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!pos.count({norm(batch[i].query), norm(batch[j].title)})) {
          const double s = cosine_similarity(m.encode_query(batch[i].query),
                                             m.encode_title(batch[j].title));
          if (bt < 0 || s > st) bt = static_cast<int>(j), st = s;
        }
        if (!pos.count({norm(batch[j].query), norm(batch[i].title)})) {
          const double s = cosine_similarity(m.encode_title(batch[i].title),
                                             m.encode_query(batch[j].query));
          if (bq < 0 || s > sq) bq = static_cast<int>(j), sq = s;
        }
      }
      if (bt >= 0 && bq >= 0)
        expect.push_back({batch[i].query, batch[i].title, batch[bt].title, batch[bq].query});
    }
    auto got = mine_hard_negatives(batch, m);
    ASSERT_EQ(got.size(), expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].hard_title, expect[i].hard_title);
      EXPECT_EQ(got[i].hard_query, expect[i].hard_query);
    }
  }
}

double matrix_entry(EncoderParams& p, std::size_t which, Eigen::Index r, Eigen::Index c,
                    std::optional<double> set = std::nullopt) {
  std::size_t i = 0;
  double out = 0;
  p.for_each([&](std::string_view, Eigen::MatrixXd& m) {
    if (i++ != which) return;
    if (set) m(r, c) = *set;
    out = m(r, c);
  });
  return out;
}

TEST(TripletBatchLoss, GradientMatchesFiniteDifferences) {
  auto model = small_model(6, 5, 7, 19);
  std::vector<QueryTitlePair> batch = {{"red dress", "navy canvas dress"},
                                       {"mens boot", "black leather boot"},
                                       {"womens sandal", "red canvas sandal"},
                                       {"black dress", "black leather dress"}};
  const auto triplets = mine_hard_negatives(batch, model);
  ASSERT_EQ(triplets.size(), 4u);
  const double margin = 4.0;  // every hinge active, loss smooth everywhere
  EncoderParams grad = model.params().zeros_like();
  triplet_batch_loss(model, triplets, margin, &grad);

  std::set<int> used;
  for (const auto& p : batch)
    for (auto s : {p.query, p.title})
      for (int t : tokenize(s, model.vocab())) used.insert(t);
  const std::vector<int> used_tokens(used.begin(), used.end());

  std::mt19937_64 rng(29);
  const double h = 1e-4;
  for (int k = 0; k < 20; ++k) {
    const std::size_t which = rng() % EncoderParams::kNames.size();
    EncoderParams p = model.params();
    Eigen::Index rows = 0, cols = 0;
    std::size_t i = 0;
    p.for_each([&](std::string_view, Eigen::MatrixXd& m) {
      if (i++ == which) rows = m.rows(), cols = m.cols();
    });
    const Eigen::Index r = which == 0 ? used_tokens[rng() % used_tokens.size()]
                                      : static_cast<Eigen::Index>(rng() % rows);
    const Eigen::Index c = static_cast<Eigen::Index>(rng() % cols);
    const double x0 = matrix_entry(p, which, r, c);
    matrix_entry(p, which, r, c, x0 + h);
    const double up = triplet_batch_loss(TitleModel(model.vocab(), p), triplets, margin);
    matrix_entry(p, which, r, c, x0 - h);
    const double down = triplet_batch_loss(TitleModel(model.vocab(), p), triplets, margin);
    const double numeric = (up - down) / (2 * h);
    const double analytic = matrix_entry(grad, which, r, c);
    const double rel = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    EXPECT_LE(rel, 1e-4) << EncoderParams::kNames[which] << "(" << r << "," << c
                         << ") analytic " << analytic << " numeric " << numeric;
  }
}

std::vector<QueryTitlePair> synth_pairs(std::size_t items = 60) {
  SynthSpec spec;
  spec.num_items = items;
  spec.num_users = 5;
  auto corpus = synth_corpus(spec, 7);
  return title_training_pairs(corpus.querylog, corpus.catalog);
}

TEST(TitleTraining, DeterministicFiniteAndImproving) {
  auto pairs = synth_pairs();
  TitleTrainConfig cfg;
  cfg.d_tok = 16, cfg.d_hidden = 16, cfg.d_emb = 32, cfg.epochs = 4;
  cfg.seed = 9;
  auto a = train_title_model(pairs, cfg);
  auto b = train_title_model(pairs, cfg);
  EXPECT_TRUE(a.model.params() == b.model.params());
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  ASSERT_EQ(a.loss_trace.size(), 4u);
  for (double l : a.loss_trace) EXPECT_TRUE(std::isfinite(l));
  EXPECT_LT(a.loss_trace.back(), a.loss_trace.front());
  cfg.seed = 10;
  EXPECT_FALSE(train_title_model(pairs, cfg).model.params() == a.model.params());
}

TEST(TitleTraining, Validation) {
  TitleTrainConfig cfg;
  std::vector<QueryTitlePair> one = {{"red dress", "navy dress"}, {"RED dress", "navy dress"}};
  EXPECT_THROW(train_title_model(one, cfg), Error);
  cfg.batch = 1;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(TitleTraining, PairsArePurchasedDistinctAndSorted) {
  Catalog c;
  c.add({"A1", {{"title", "red dress"}}});
  c.add({"B2", {{"title", "black boot"}}});
  std::vector<QueryLogRecord> log = {{"Boots", "B2", 1, true},
                                     {"boots ", "B2", 2, true},
                                     {"dress", "A1", 1, false},
                                     {"dress", "A1", 1, true}};
  auto pairs = title_training_pairs(log, c);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].query, "boots");
  EXPECT_EQ(pairs[0].title, "black boot");
  EXPECT_EQ(pairs[1].query, "dress");
  log.push_back({"x", "ZZ9", 1, true});
  EXPECT_THROW(title_training_pairs(log, c), Error);
}

TEST(TitleModel, SnapshotRoundTripIsExact) {
  testing::TempDir dir;
  auto pairs = synth_pairs(30);
  TitleTrainConfig cfg;
  cfg.d_tok = 8, cfg.d_hidden = 8, cfg.d_emb = 12, cfg.epochs = 1;
  auto trained = train_title_model(pairs, cfg);
  trained.model.save(dir / "title.frte");
  auto loaded = TitleModel::load(dir / "title.frte");
  EXPECT_TRUE(loaded.params() == trained.model.params());
  EXPECT_EQ(loaded.vocab().size(), trained.model.vocab().size());
  EXPECT_EQ(loaded.encode_title(pairs[0].title), trained.model.encode_title(pairs[0].title));
  EXPECT_EQ(loaded.fingerprint(), trained.model.fingerprint());
  TitleTowerEncoder q(loaded, Tower::Query), t(loaded, Tower::Title);
  EXPECT_NE(q.id(), t.id());
  EXPECT_EQ(q.dim(), 12);

  write_loss_csv(dir / "loss.csv", trained.loss_trace);
  EXPECT_EQ(read_text(dir / "loss.csv").rfind("epoch,loss\n1,", 0), 0u);

  dir.write("bad.frte", std::string("FRTE\x02\0\0\0", 8));
  EXPECT_THROW(TitleModel::load(dir / "bad.frte"), Error);
}

}  // namespace
}  // namespace fashrec
