#pragma once

// Query/title embedding model trained with a triplet loss and in-batch hard
// negatives, so that titles purchased under the same query land close to it.
//
// Encoder: token embeddings -> single-layer GRU -> tower projection -> L2 norm.
// The embedding table and the GRU are shared; queries and titles have their
// own output projection. GRU step, with s = sigmoid:
//
//   z  = s(W_z x + U_z h + b_z)
//   r  = s(W_r x + U_r h + b_r)
//   n  = tanh(W_n x + U_n (r * h) + b_n)
//   h' = (1 - z) * n + z * h
//
// Distance between unit vectors is d(a, b) = |a - b|^2 = 2 - 2 cos(a, b).

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fashrec/corpus.hpp"
#include "fashrec/embedcore.hpp"
#include "fashrec/io.hpp"

namespace fashrec {

// Lowercased alphanumeric runs.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary() : tokens_{std::string(kUnkToken)} {}

  // Ordered by descending frequency, then lexicographically; index 0 is <unk>.
  static Vocabulary build(std::span<const std::string> texts, std::size_t max_size = 50000) {
    require(max_size >= 1, ErrorKind::Config, "vocabulary: max_size must be >= 1");
    std::map<std::string, std::size_t> freq;
    for (const auto& t : texts)
      for (auto& w : split_words(t)) ++freq[w];
    std::vector<std::pair<std::size_t, std::string>> ranked;
    for (auto& [w, n] : freq) ranked.emplace_back(n, w);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < ranked.size() && i + 1 < max_size; ++i)
      tokens.push_back(ranked[i].second);
    return from_tokens(std::move(tokens));
  }

  // `tokens` excludes <unk>.
  static Vocabulary from_tokens(std::vector<std::string> tokens) {
    Vocabulary v;
    for (auto& t : tokens) {
      require(!t.empty() && t != kUnkToken, ErrorKind::Validation, "vocabulary: invalid token");
      require(v.index_.emplace(t, static_cast<int>(v.tokens_.size())).second,
              ErrorKind::Validation, "vocabulary: duplicate token " + t);
      v.tokens_.push_back(std::move(t));
    }
    return v;
  }

  int size() const { return static_cast<int>(tokens_.size()); }
  int index(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }
  const std::string& token(int i) const { return tokens_.at(static_cast<std::size_t>(i)); }
  // Without <unk>.
  std::span<const std::string> known_tokens() const {
    return std::span<const std::string>(tokens_).subspan(1);
  }

 private:
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> tokens_;
};

// Empty or fully non-alphanumeric text maps to [<unk>].
inline std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.index(w));
  if (ids.empty()) ids.push_back(Vocabulary::kUnk);
  return ids;
}

enum class Tower { Query, Title };

struct EncoderParams {
  Eigen::MatrixXd embedding;            // vocab x d_tok
  Eigen::MatrixXd w_z, w_r, w_n;        // d_hidden x d_tok
  Eigen::MatrixXd u_z, u_r, u_n;        // d_hidden x d_hidden
  Eigen::MatrixXd b_z, b_r, b_n;        // d_hidden x 1
  Eigen::MatrixXd proj_query;           // d_emb x d_hidden
  Eigen::MatrixXd proj_title;           // d_emb x d_hidden

  static constexpr std::array<std::string_view, 12> kNames = {
      "embedding", "w_z", "w_r", "w_n", "u_z", "u_r", "u_n",
      "b_z",       "b_r", "b_n", "proj_query", "proj_title"};

  template <typename Fn>
  void for_each(Fn&& fn) {
    Eigen::MatrixXd* m[] = {&embedding, &w_z, &w_r, &w_n, &u_z, &u_r,
                            &u_n,       &b_z, &b_r, &b_n, &proj_query, &proj_title};
    for (std::size_t i = 0; i < kNames.size(); ++i) fn(kNames[i], *m[i]);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    const Eigen::MatrixXd* m[] = {&embedding, &w_z, &w_r, &w_n, &u_z, &u_r,
                                  &u_n,       &b_z, &b_r, &b_n, &proj_query, &proj_title};
    for (std::size_t i = 0; i < kNames.size(); ++i) fn(kNames[i], *m[i]);
  }

  int d_tok() const { return static_cast<int>(embedding.cols()); }
  int d_hidden() const { return static_cast<int>(u_z.rows()); }
  int d_emb() const { return static_cast<int>(proj_query.rows()); }

  static EncoderParams init(int vocab, int d_tok, int d_hidden, int d_emb, std::uint64_t seed) {
    require(vocab >= 1 && d_tok >= 1 && d_hidden >= 1 && d_emb >= 1, ErrorKind::Config,
            "title encoder: all dimensions must be >= 1");
    std::mt19937_64 rng(seed);
    auto normal = [&](int rows, int cols, double stddev) {
      std::normal_distribution<double> dist(0.0, stddev);
      Eigen::MatrixXd m(rows, cols);
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
      return m;
    };
    const double in_scale = 1.0 / std::sqrt(static_cast<double>(d_tok));
    const double h_scale = 1.0 / std::sqrt(static_cast<double>(d_hidden));
    EncoderParams p;
    p.embedding = normal(vocab, d_tok, 1.0);
    p.w_z = normal(d_hidden, d_tok, in_scale);
    p.w_r = normal(d_hidden, d_tok, in_scale);
    p.w_n = normal(d_hidden, d_tok, in_scale);
    p.u_z = normal(d_hidden, d_hidden, h_scale);
    p.u_r = normal(d_hidden, d_hidden, h_scale);
    p.u_n = normal(d_hidden, d_hidden, h_scale);
    p.b_z = Eigen::MatrixXd::Zero(d_hidden, 1);
    p.b_r = Eigen::MatrixXd::Zero(d_hidden, 1);
    p.b_n = Eigen::MatrixXd::Zero(d_hidden, 1);
    p.proj_query = normal(d_emb, d_hidden, h_scale);
    p.proj_title = normal(d_emb, d_hidden, h_scale);
    return p;
  }

  EncoderParams zeros_like() const {
    EncoderParams z = *this;
    z.for_each([](std::string_view, Eigen::MatrixXd& m) { m.setZero(); });
    return z;
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](std::string_view, const Eigen::MatrixXd& m) { ok = ok && m.allFinite(); });
    return ok;
  }

  bool operator==(const EncoderParams& o) const {
    bool eq = true;
    auto it = o.matrices();
    std::size_t i = 0;
    for_each([&](std::string_view, const Eigen::MatrixXd& m) {
      eq = eq && m.rows() == it[i]->rows() && m.cols() == it[i]->cols() && m == *it[i];
      ++i;
    });
    return eq;
  }

 private:
  std::array<const Eigen::MatrixXd*, 12> matrices() const {
    return {&embedding, &w_z, &w_r, &w_n, &u_z, &u_r, &u_n, &b_z, &b_r, &b_n, &proj_query,
            &proj_title};
  }
};

namespace title_detail {

inline Vector sigmoid(const Vector& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

struct Trace {
  std::vector<int> tokens;
  std::vector<Vector> h;  // h[0] = 0, h[t+1] after token t
  std::vector<Vector> z, r, n;
  Vector y;
  double norm = 0;
  Vector e;  // y / |y|
  Tower tower = Tower::Query;
};

inline Trace forward(const EncoderParams& p, std::vector<int> tokens, Tower tower) {
  Trace tr;
  tr.tokens = std::move(tokens);
  tr.tower = tower;
  tr.h.push_back(Vector::Zero(p.d_hidden()));
  for (int tok : tr.tokens) {
    const Vector x = p.embedding.row(tok).transpose();
    const Vector& h = tr.h.back();
    Vector z = sigmoid(p.w_z * x + p.u_z * h + p.b_z.col(0));
    Vector r = sigmoid(p.w_r * x + p.u_r * h + p.b_r.col(0));
    Vector n = (p.w_n * x + p.u_n * r.cwiseProduct(h) + p.b_n.col(0)).array().tanh().matrix();
    Vector next = (1.0 - z.array()).matrix().cwiseProduct(n) + z.cwiseProduct(h);
    tr.z.push_back(std::move(z));
    tr.r.push_back(std::move(r));
    tr.n.push_back(std::move(n));
    tr.h.push_back(std::move(next));
  }
  const auto& proj = tower == Tower::Query ? p.proj_query : p.proj_title;
  tr.y = proj * tr.h.back();
  tr.norm = tr.y.norm();
  require(tr.norm > 0.0 && std::isfinite(tr.norm), ErrorKind::Numeric,
          "title encoder: degenerate output vector");
  tr.e = tr.y / tr.norm;
  return tr;
}

// Accumulates d(loss)/d(params) into `g` given d(loss)/d(e).
inline void backward(const EncoderParams& p, const Trace& tr, const Vector& de,
                     EncoderParams& g) {
  const Vector dy = (de - tr.e * tr.e.dot(de)) / tr.norm;
  auto& proj = tr.tower == Tower::Query ? p.proj_query : p.proj_title;
  auto& gproj = tr.tower == Tower::Query ? g.proj_query : g.proj_title;
  gproj.noalias() += dy * tr.h.back().transpose();
  Vector dh = proj.transpose() * dy;
  for (std::size_t t = tr.tokens.size(); t-- > 0;) {
    const Vector& hp = tr.h[t];
    const Vector& z = tr.z[t];
    const Vector& r = tr.r[t];
    const Vector& n = tr.n[t];
    const Vector x = p.embedding.row(tr.tokens[t]).transpose();

    const Vector dn = dh.cwiseProduct((1.0 - z.array()).matrix());
    const Vector dz = dh.cwiseProduct(hp - n);
    Vector dhp = dh.cwiseProduct(z);

    const Vector da_n = dn.cwiseProduct((1.0 - n.array().square()).matrix());
    const Vector rh = r.cwiseProduct(hp);
    g.w_n.noalias() += da_n * x.transpose();
    g.u_n.noalias() += da_n * rh.transpose();
    g.b_n.col(0) += da_n;
    const Vector drh = p.u_n.transpose() * da_n;
    const Vector dr = drh.cwiseProduct(hp);
    dhp += drh.cwiseProduct(r);

    const Vector da_z = dz.cwiseProduct(z.cwiseProduct((1.0 - z.array()).matrix()));
    g.w_z.noalias() += da_z * x.transpose();
    g.u_z.noalias() += da_z * hp.transpose();
    g.b_z.col(0) += da_z;
    dhp += p.u_z.transpose() * da_z;

    const Vector da_r = dr.cwiseProduct(r.cwiseProduct((1.0 - r.array()).matrix()));
    g.w_r.noalias() += da_r * x.transpose();
    g.u_r.noalias() += da_r * hp.transpose();
    g.b_r.col(0) += da_r;
    dhp += p.u_r.transpose() * da_r;

    const Vector dx = p.w_z.transpose() * da_z + p.w_r.transpose() * da_r +
                      p.w_n.transpose() * da_n;
    g.embedding.row(tr.tokens[t]) += dx.transpose();
    dh = dhp;
  }
}

// Canonical form used to decide whether two texts are the same query/title.
inline std::string canonical(std::string_view text) {
  std::string out;
  for (const auto& w : split_words(text)) out += (out.empty() ? "" : " ") + w;
  return out;
}

}  // namespace title_detail

// Trained (or seed) model: vocabulary plus weights.
class TitleModel {
 public:
  TitleModel() = default;
  TitleModel(Vocabulary vocab, EncoderParams params)
      : vocab_(std::move(vocab)), params_(std::move(params)) {
    require(params_.embedding.rows() == vocab_.size(), ErrorKind::Validation,
            "title model: embedding rows do not match vocabulary size");
    require(params_.all_finite(), ErrorKind::Numeric, "title model: non-finite weights");
  }

  const Vocabulary& vocab() const { return vocab_; }
  const EncoderParams& params() const { return params_; }
  int dim() const { return params_.d_emb(); }

  Vector encode(std::string_view text, Tower tower) const {
    return title_detail::forward(params_, tokenize(text, vocab_), tower).e;
  }
  Vector encode_query(std::string_view text) const { return encode(text, Tower::Query); }
  Vector encode_title(std::string_view text) const { return encode(text, Tower::Title); }

  // Content hash of vocabulary and weights.
  std::string fingerprint() const {
    std::ostringstream out(std::ios::binary);
    write(out);
    return hex64(fnv1a64(out.str()));
  }

  // Layout (little-endian): "FRTE", u32 version=1, u32 vocab_size, then
  // vocab_size-1 tokens (u32 length + bytes; <unk> is implicit at index 0),
  // u32 matrix_count, then per matrix: u32 name length + name, u32 rows,
  // u32 cols, f32[rows*cols] row-major.
  void write(std::ostream& out) const {
    out.write("FRTE", 4);
    binio::put<std::uint32_t>(out, 1);
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(vocab_.size()));
    for (const auto& t : vocab_.known_tokens()) binio::put_string(out, t);
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(EncoderParams::kNames.size()));
    params_.for_each([&](std::string_view name, const Eigen::MatrixXd& m) {
      binio::put_string(out, name);
      binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
      binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
          binio::put<float>(out, static_cast<float>(m(i, j)));
    });
  }

  void save(const std::filesystem::path& path) const {
    auto out = open_output(path, std::ios::binary);
    write(out);
    require(static_cast<bool>(out), ErrorKind::Io, "write failed: " + path.string());
  }

  static TitleModel read(std::istream& in, const std::string& what) {
    binio::expect_magic(in, "FRTE");
    require(binio::get<std::uint32_t>(in) == 1, ErrorKind::Validation,
            what + ": unsupported title model version");
    const auto vocab_size = binio::get<std::uint32_t>(in);
    require(vocab_size >= 1, ErrorKind::Validation, what + ": empty vocabulary");
    std::vector<std::string> tokens;
    for (std::uint32_t i = 1; i < vocab_size; ++i) tokens.push_back(binio::get_string(in));
    const auto count = binio::get<std::uint32_t>(in);
    require(count == EncoderParams::kNames.size(), ErrorKind::Validation,
            what + ": unexpected matrix count");
    EncoderParams p;
    std::size_t i = 0;
    p.for_each([&](std::string_view name, Eigen::MatrixXd& m) {
      require(binio::get_string(in) == name, ErrorKind::Validation,
              what + ": expected matrix " + std::string(name));
      const auto rows = binio::get<std::uint32_t>(in);
      const auto cols = binio::get<std::uint32_t>(in);
      m.resize(rows, cols);
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = binio::get<float>(in);
      ++i;
    });
    const int h = static_cast<int>(p.u_z.rows()), d = static_cast<int>(p.embedding.cols());
    auto shape = [](const Eigen::MatrixXd& m, Eigen::Index r, Eigen::Index c) {
      return m.rows() == r && m.cols() == c;
    };
    require(shape(p.w_z, h, d) && shape(p.w_r, h, d) && shape(p.w_n, h, d) &&
                shape(p.u_z, h, h) && shape(p.u_r, h, h) && shape(p.u_n, h, h) &&
                shape(p.b_z, h, 1) && shape(p.b_r, h, 1) && shape(p.b_n, h, 1) &&
                p.proj_query.cols() == h && shape(p.proj_title, p.proj_query.rows(), h),
            ErrorKind::Validation, what + ": inconsistent matrix shapes");
    return TitleModel(Vocabulary::from_tokens(std::move(tokens)), std::move(p));
  }

  static TitleModel load(const std::filesystem::path& path) {
    auto in = open_input(path, std::ios::binary);
    return read(in, path.string());
  }

  void sgd_step(const EncoderParams& grad, double lr) {
    std::vector<const Eigen::MatrixXd*> g;
    grad.for_each([&](std::string_view, const Eigen::MatrixXd& m) { g.push_back(&m); });
    std::size_t i = 0;
    params_.for_each([&](std::string_view, Eigen::MatrixXd& m) { m -= lr * *g[i++]; });
  }

  // Rounds weights to float precision, so a saved-and-loaded model encodes
  // identically to the in-memory one.
  void round_to_float() {
    params_.for_each([](std::string_view, Eigen::MatrixXd& m) {
      m = m.cast<float>().cast<double>();
    });
  }

 private:
  Vocabulary vocab_;
  EncoderParams params_;
};

// One tower of a TitleModel as a TextEncoder (e.g. to key an index).
class TitleTowerEncoder final : public TextEncoder {
 public:
  TitleTowerEncoder(const TitleModel& model, Tower tower)
      : model_(model),
        tower_(tower),
        id_("title-gru/" + model.fingerprint() + (tower == Tower::Query ? "/query" : "/title")) {}
  std::string id() const override { return id_; }
  int dim() const override { return model_.dim(); }
  Vector encode(std::string_view text) const override { return model_.encode(text, tower_); }

 private:
  const TitleModel& model_;
  Tower tower_;
  std::string id_;
};

// ---------------------------------------------------------------------------
// Loss and mining

struct QueryTitlePair {
  std::string query;
  std::string title;
};

struct Triplet {
  std::string query;          // anchor
  std::string title;          // positive
  std::string hard_title;     // nearest non-positive title to the query
  std::string hard_query;     // nearest query the title is not a positive of
};

inline double triplet_loss(const Vector& anchor, const Vector& positive, const Vector& negative,
                           double margin) {
  const double dp = (anchor - positive).squaredNorm();
  const double dn = (anchor - negative).squaredNorm();
  return std::max(0.0, dp - dn + margin);
}

// Set of (query, title) positives, compared in canonical form.
class PositiveSet {
 public:
  PositiveSet() = default;
  explicit PositiveSet(std::span<const QueryTitlePair> pairs) {
    for (const auto& p : pairs) add(p.query, p.title);
  }
  void add(std::string_view query, std::string_view title) {
    keys_.insert(key(query, title));
  }
  bool contains(std::string_view query, std::string_view title) const {
    return keys_.count(key(query, title)) != 0;
  }

 private:
  static std::string key(std::string_view q, std::string_view t) {
    return title_detail::canonical(q) + '\x1f' + title_detail::canonical(t);
  }
  std::unordered_set<std::string> keys_;
};

namespace title_detail {

struct MinedIndex {
  std::size_t pair;
  std::size_t hard_title;  // batch index of the negative title
  std::size_t hard_query;  // batch index of the negative query
};

// Pairs that have no admissible negative on either side are skipped.
inline std::vector<MinedIndex> mine(std::span<const QueryTitlePair> batch,
                                    const std::vector<Vector>& eq,
                                    const std::vector<Vector>& et,
                                    const PositiveSet& positives) {
  std::vector<MinedIndex> out;
  const std::size_t n = batch.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<std::size_t> best_t, best_q;
    double st = -2, sq = -2;
    for (std::size_t j = 0; j < n; ++j) {
      if (!positives.contains(batch[i].query, batch[j].title)) {
        const double s = eq[i].dot(et[j]);
        if (!best_t || s > st) best_t = j, st = s;
      }
      if (!positives.contains(batch[j].query, batch[i].title)) {
        const double s = et[i].dot(eq[j]);
        if (!best_q || s > sq) best_q = j, sq = s;
      }
    }
    if (best_t && best_q) out.push_back({i, *best_t, *best_q});
  }
  return out;
}

}  // namespace title_detail

// In-batch hard negatives. A candidate is excluded when it is a positive
// match for the anchor, either within the batch or in `known` (the training
// corpus). Ties go to the lower batch index.
inline std::vector<Triplet> mine_hard_negatives(std::span<const QueryTitlePair> batch,
                                                const TitleModel& model,
                                                const PositiveSet* known = nullptr) {
  require(batch.size() >= 2, ErrorKind::Validation, "mine_hard_negatives: batch size must be >= 2");
  PositiveSet positives = known ? *known : PositiveSet{};
  for (const auto& p : batch) positives.add(p.query, p.title);
  std::vector<Vector> eq, et;
  for (const auto& p : batch) {
    eq.push_back(model.encode_query(p.query));
    et.push_back(model.encode_title(p.title));
  }
  std::vector<Triplet> out;
  for (const auto& m : title_detail::mine(batch, eq, et, positives))
    out.push_back({batch[m.pair].query, batch[m.pair].title, batch[m.hard_title].title,
                   batch[m.hard_query].query});
  return out;
}

// Summed loss of fixed triplets, each contributing a query-anchored and a
// title-anchored hinge. Gradients are accumulated into `grad` when given.
inline double triplet_batch_loss(const TitleModel& model, std::span<const Triplet> triplets,
                                 double margin, EncoderParams* grad = nullptr) {
  using title_detail::forward;
  const auto& p = model.params();
  const auto& vocab = model.vocab();
  double total = 0;
  for (const auto& t : triplets) {
    const auto q = forward(p, tokenize(t.query, vocab), Tower::Query);
    const auto ti = forward(p, tokenize(t.title, vocab), Tower::Title);
    const auto nt = forward(p, tokenize(t.hard_title, vocab), Tower::Title);
    const auto nq = forward(p, tokenize(t.hard_query, vocab), Tower::Query);
    // d(a,b) = 2 - 2 a.b, so the active hinge a.n - a.p has gradients
    // 2(n - p) for a, -2a for p, 2a for n.
    const double lq = triplet_loss(q.e, ti.e, nt.e, margin);
    const double lt = triplet_loss(ti.e, q.e, nq.e, margin);
    total += lq + lt;
    if (!grad) continue;
    Vector dq = Vector::Zero(q.e.size()), dt = dq, dnt = dq, dnq = dq;
    if (lq > 0) {
      dq += 2.0 * (nt.e - ti.e);
      dt += -2.0 * q.e;
      dnt += 2.0 * q.e;
    }
    if (lt > 0) {
      dt += 2.0 * (nq.e - q.e);
      dq += -2.0 * ti.e;
      dnq += 2.0 * ti.e;
    }
    if (lq > 0 || lt > 0) {
      title_detail::backward(p, q, dq, *grad);
      title_detail::backward(p, ti, dt, *grad);
      if (lq > 0) title_detail::backward(p, nt, dnt, *grad);
      if (lt > 0) title_detail::backward(p, nq, dnq, *grad);
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Training

struct TitleTrainConfig {
  int d_tok = 64;
  int d_hidden = 64;
  int d_emb = 256;
  double margin = 0.5;
  double lr = 1e-2;
  int epochs = 10;
  std::size_t batch = 32;
  std::size_t max_vocab = 50000;
  std::uint64_t seed = 0;

  void validate() const {
    require(d_tok >= 1 && d_hidden >= 1 && d_emb >= 1, ErrorKind::Config,
            "title training: dimensions must be >= 1");
    require(margin > 0 && lr > 0 && epochs >= 0 && batch >= 2 && max_vocab >= 1,
            ErrorKind::Config, "title training: invalid margin, lr, epochs, batch or max_vocab");
  }
};

struct TitleTrainResult {
  TitleModel model;
  std::vector<double> loss_trace;  // mean loss per triplet, one entry per epoch
};

// Distinct purchased (query, title) pairs, sorted.
inline std::vector<QueryTitlePair> title_training_pairs(std::span<const QueryLogRecord> log,
                                                        const Catalog& catalog,
                                                        bool purchased_only = true) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : log) {
    if (purchased_only && !r.purchased) continue;
    const auto* item = catalog.find(r.item_id);
    require(item != nullptr, ErrorKind::Validation, "training pairs: unknown item " + r.item_id);
    const auto q = title_detail::canonical(r.query);
    if (!q.empty()) seen.emplace(q, item->title());
  }
  std::vector<QueryTitlePair> out;
  for (auto& [q, t] : seen) out.push_back({q, t});
  return out;
}

inline TitleModel seed_title_model(std::span<const QueryTitlePair> pairs,
                                   const TitleTrainConfig& cfg) {
  cfg.validate();
  std::vector<std::string> texts;
  for (const auto& p : pairs) {
    texts.push_back(p.query);
    texts.push_back(p.title);
  }
  auto vocab = Vocabulary::build(texts, cfg.max_vocab);
  auto params = EncoderParams::init(vocab.size(), cfg.d_tok, cfg.d_hidden, cfg.d_emb, cfg.seed);
  return TitleModel(std::move(vocab), std::move(params));
}

// Plain mini-batch SGD, single-threaded and fully determined by cfg.seed.
inline TitleTrainResult train_title_model(std::span<const QueryTitlePair> pairs,
                                          const TitleTrainConfig& cfg) {
  cfg.validate();
  {
    std::set<std::pair<std::string, std::string>> uniq;
    for (const auto& p : pairs)
      uniq.emplace(title_detail::canonical(p.query), title_detail::canonical(p.title));
    require(uniq.size() >= 2, ErrorKind::Validation,
            "title training: need at least 2 distinct (query, title) pairs");
  }
  TitleModel model = seed_title_model(pairs, cfg);
  const PositiveSet known(pairs);
  std::vector<QueryTitlePair> order(pairs.begin(), pairs.end());
  std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x7469746c65ULL));
  TitleTrainResult result;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    std::size_t epoch_triplets = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      if (end - start < 2) continue;
      const std::span<const QueryTitlePair> batch(order.data() + start, end - start);
      const auto triplets = mine_hard_negatives(batch, model, &known);
      if (triplets.empty()) continue;
      EncoderParams grad = model.params().zeros_like();
      const double loss = triplet_batch_loss(model, triplets, cfg.margin, &grad);
      if (!std::isfinite(loss) || !grad.all_finite())
        fail(ErrorKind::Numeric, "title training diverged at epoch " + std::to_string(epoch) +
                                     ", batch starting at " + std::to_string(start) +
                                     " (loss " + std::to_string(loss) + "); lower the learning rate");
      model.sgd_step(grad, cfg.lr);
      epoch_loss += loss;
      epoch_triplets += triplets.size();
    }
    result.loss_trace.push_back(epoch_triplets ? epoch_loss / static_cast<double>(epoch_triplets)
                                               : 0.0);
  }
  model.round_to_float();
  result.model = std::move(model);
  return result;
}

inline void write_loss_csv(const std::filesystem::path& path, std::span<const double> trace) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out << i + 1 << ',' << trace[i] << '\n';
  write_text(path, out.str());
}

}  // namespace fashrec
