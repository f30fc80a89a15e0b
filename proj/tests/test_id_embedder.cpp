#include <gtest/gtest.h>

#include <random>

#include "fashrec/id_embedder.hpp"
#include "fashrec/synth.hpp"
#include "test_util.hpp"

namespace fashrec {
namespace {

ItemEmbeddingTable table_of(std::vector<std::vector<double>> rows) {
  std::vector<std::string> ids;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ids.push_back(std::string(1, static_cast<char>('A' + i)));
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return ItemEmbeddingTable(ids, m);
}

ItemEmbeddingTable random_table(std::size_t n, int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> rows(n, std::vector<double>(static_cast<std::size_t>(d)));
  for (auto& r : rows)
    for (auto& x : r) x = g(rng);
  return table_of(rows);
}

TEST(SessionEncode, Examples) {
  auto t = table_of({{1, 0}, {0, 1}, {3, 4}});
  std::vector<std::string> a = {"A"}, aa = {"A", "A"}, ab = {"A", "B"}, ba = {"B", "A"};
  EXPECT_TRUE(session_encode(a, t).isApprox(Vector::Unit(2, 0)));
  EXPECT_EQ(session_encode(aa, t), session_encode(a, t));
  const auto s = session_encode(ab, t);
  EXPECT_NEAR(s[0], 0.7071, 1e-4);
  EXPECT_NEAR(s[1], 0.7071, 1e-4);
  EXPECT_EQ(session_encode(ba, t), s);
  std::vector<std::string> c = {"C"};
  EXPECT_NEAR(session_encode(c, t)[0], 0.6, 1e-12);
  EXPECT_THROW(session_encode(std::vector<std::string>{}, t), Error);
}

TEST(SessionEncode, UnknownIdsUseColdVector) {
  auto t = table_of({{1, 0}, {0, 1}});
  EXPECT_TRUE(t.cold_vector().isApprox(Vector::Constant(2, 0.5)));
  std::vector<std::string> unk = {"ZZZ"};
  EXPECT_TRUE(session_encode(unk, t).isApprox(Vector::Constant(2, std::sqrt(0.5))));
  EXPECT_EQ(t.lookup("nope"), t.cold_vector());
}

TEST(SessionEncode, PermutationInvariant) {
  std::mt19937_64 rng(4);
  auto t = random_table(8, 5, rng);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> ctx;
    for (int i = 0; i < 6; ++i) ctx.push_back(std::string(1, static_cast<char>('A' + rng() % 8)));
    const auto base = session_encode(ctx, t);
    std::shuffle(ctx.begin(), ctx.end(), rng);
    EXPECT_TRUE(session_encode(ctx, t).isApprox(base, 1e-14));
  }
}

// Direct softmax cross-entropy with explicit loops.
double reference_loss(const std::vector<SessionExample>& batch, const ItemEmbeddingTable& t,
                      double tau) {
  const auto& E = t.matrix();
  double total = 0;
  for (const auto& ex : batch) {
    std::vector<double> mean(static_cast<std::size_t>(E.cols()), 0.0);
    for (const auto& id : ex.context)
      for (Eigen::Index j = 0; j < E.cols(); ++j)
        mean[static_cast<std::size_t>(j)] += t.lookup(id)[j] / static_cast<double>(ex.context.size());
    std::vector<double> logits;
    for (Eigen::Index v = 0; v < E.rows(); ++v) {
      double dot = 0, nm = 0, ne = 0;
      for (Eigen::Index j = 0; j < E.cols(); ++j) {
        dot += mean[static_cast<std::size_t>(j)] * E(v, j);
        nm += mean[static_cast<std::size_t>(j)] * mean[static_cast<std::size_t>(j)];
        ne += E(v, j) * E(v, j);
      }
      logits.push_back(dot / std::sqrt(nm) / std::sqrt(ne) / tau);
    }
    double z = 0;
    for (double l : logits) z += std::exp(l);
    total += -std::log(std::exp(logits[static_cast<std::size_t>(*t.row(ex.target))]) / z);
  }
  return total / static_cast<double>(batch.size());
}

TEST(NextItemLoss, DegenerateCases) {
  auto one = table_of({{0.3, -1.0}});
  std::vector<SessionExample> b1 = {{{"A"}, "A"}};
  EXPECT_NEAR(next_item_loss(b1, one, 0.07), 0.0, 1e-15);

  auto two = table_of({{1, 0}, {0, 1}, {1, 1}});  // C equidistant to A and B
  std::vector<SessionExample> b2 = {{{"C"}, "A"}};
  auto ab = table_of({{1, 0}, {0, 1}});
  std::vector<SessionExample> b3 = {{{"A", "B"}, "A"}};
  EXPECT_NEAR(next_item_loss(b3, ab, 1e9), std::log(2.0), 1e-8);
  EXPECT_NEAR(next_item_loss(b3, ab, 1.0), std::log(2.0), 1e-12);  // cosines tie exactly
  EXPECT_THROW(next_item_loss(b3, ab, 0.0), Error);
  std::vector<SessionExample> bad = {{{"A"}, "Q"}};
  EXPECT_THROW(next_item_loss(bad, ab, 1.0), Error);
  EXPECT_GT(next_item_loss(b2, two, 1.0), 0.0);
}

TEST(NextItemLoss, MatchesBruteForceReference) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 10;
    auto t = random_table(n, 1 + static_cast<int>(rng() % 6), rng);
    std::vector<SessionExample> batch;
    const std::size_t sessions = 1 + rng() % 4;
    for (std::size_t s = 0; s < sessions; ++s) {
      SessionExample ex;
      for (std::size_t k = 0, len = 1 + rng() % 4; k < len; ++k)
        ex.context.push_back(t.ids()[rng() % n]);
      ex.target = t.ids()[rng() % n];
      batch.push_back(ex);
    }
    const double tau = 0.05 + static_cast<double>(rng() % 100) / 50.0;
    EXPECT_NEAR(next_item_loss(batch, t, tau), reference_loss(batch, t, tau), 1e-10);
  }
}

TEST(NextItemLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  auto t = random_table(6, 4, rng);
  std::vector<SessionExample> batch = {
      {{"A", "B"}, "C"}, {{"D"}, "E"}, {{"F", "A", "A"}, "B"}, {{"C", "E"}, "A"}};
  const double tau = 0.5;
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(6, 4);
  next_item_loss(batch, t, tau, &grad);
  const double h = 1e-4;
  for (int k = 0; k < 20; ++k) {
    const Eigen::Index r = static_cast<Eigen::Index>(rng() % 6), c = static_cast<Eigen::Index>(rng() % 4);
    Eigen::MatrixXd up = t.matrix(), down = t.matrix();
    up(r, c) += h;
    down(r, c) -= h;
    const double numeric = (next_item_loss(batch, ItemEmbeddingTable(t.ids(), up), tau) -
                            next_item_loss(batch, ItemEmbeddingTable(t.ids(), down), tau)) /
                           (2 * h);
    const double analytic = grad(r, c);
    const double rel = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    EXPECT_LE(rel, 1e-4) << "(" << r << "," << c << ") " << analytic << " vs " << numeric;
  }
}

TEST(SessionExamples, PurchasesWithPriorItemContext) {
  InteractionSequence s{"u", {InteractionEvent::purchase("A", 1), InteractionEvent::search("q", 2),
                              InteractionEvent::click("B", 3), InteractionEvent::purchase("C", 4),
                              InteractionEvent::click("D", 5), InteractionEvent::purchase("E", 6)}};
  std::vector<InteractionSequence> seqs = {s};
  auto ex = session_examples(seqs);
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_EQ(ex[0].context, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(ex[0].target, "C");
  EXPECT_EQ(ex[1].context, (std::vector<std::string>{"A", "B", "C", "D"}));
  auto windowed = session_examples(seqs, 1);
  EXPECT_EQ(windowed[1].context, std::vector<std::string>{"D"});
}

struct SmallCorpus {
  SynthCorpus corpus;
  DatasetSplit split;
};

SmallCorpus small_corpus() {
  SynthSpec spec;
  spec.num_items = 40;
  spec.num_users = 120;
  auto c = synth_corpus(spec, 3);
  auto split = leave_one_out_split(c.sequences);
  return {std::move(c), std::move(split)};
}

TEST(IdTraining, LossDropsAfterFirstEpochAndIsDeterministic) {
  auto sc = small_corpus();
  IdTrainConfig cfg;
  cfg.d_id = 16;
  cfg.epochs = 3;
  cfg.seed = 5;
  auto a = train_id_model(sc.split.train, sc.corpus.catalog, cfg);
  ASSERT_EQ(a.loss_trace.size(), 4u);
  EXPECT_LT(a.loss_trace[1], a.loss_trace[0]);
  auto b = train_id_model(sc.split.train, sc.corpus.catalog, cfg);
  EXPECT_EQ(a.table.matrix(), b.table.matrix());
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.table.size(), sc.corpus.catalog.size());
  for (const auto& item : sc.corpus.catalog.items()) EXPECT_TRUE(a.table.contains(item.item_id));
  const Vector centroid = a.table.matrix().colwise().mean().transpose();
  EXPECT_TRUE(a.table.cold_vector().isApprox(centroid, 1e-6));
}

TEST(IdTraining, RequiresExamples) {
  auto sc = small_corpus();
  std::vector<InteractionSequence> none = {
      {"u", {InteractionEvent::search("q", 1), InteractionEvent::purchase(sc.corpus.catalog.items()[0].item_id, 2)}}};
  EXPECT_THROW(train_id_model(none, sc.corpus.catalog, {}), Error);
  IdTrainConfig bad;
  bad.temperature = 0;
  EXPECT_THROW(train_id_model(sc.split.train, sc.corpus.catalog, bad), Error);
}

TEST(ItemEmbeddingTable, SnapshotRoundTripIsExact) {
  testing::TempDir dir;
  auto sc = small_corpus();
  IdTrainConfig cfg;
  cfg.d_id = 8;
  cfg.epochs = 1;
  auto r = train_id_model(sc.split.train, sc.corpus.catalog, cfg);
  r.table.save(dir / "id.frvi", dir / "id.json", cfg.temperature);
  auto [loaded, tau] = ItemEmbeddingTable::load(dir / "id.frvi", dir / "id.json");
  EXPECT_DOUBLE_EQ(tau, 0.07);
  EXPECT_EQ(loaded.ids(), r.table.ids());
  EXPECT_EQ(loaded.matrix(), r.table.matrix());
  EXPECT_EQ(loaded.cold_vector(), r.table.cold_vector());
}

}  // namespace
}  // namespace fashrec
