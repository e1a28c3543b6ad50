#include <doctest.h>

#include <set>

#include "savetag/edge_assignment.h"
#include "savetag/fixture.h"
#include "support/oracles.h"

using namespace savetag;

namespace {

std::vector<EdgeCandidate> random_candidates(Rng& rng, int synthetic, int targets) {
  std::vector<EdgeCandidate> c;
  for (int s = 0; s < synthetic; ++s) {
    for (int t = 0; t < targets; ++t) {
      // Coarse scores so ties are common.
      c.push_back({s, t, static_cast<double>(rng.index(9)) / 8.0 - 0.25});
    }
  }
  rng.shuffle(c);
  return c;
}

}  // namespace

TEST_CASE("global top-k matches a full sort") {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const int syn = 1 + static_cast<int>(rng.index(6));
    const int tgt = 1 + static_cast<int>(rng.index(10));
    const auto cands = random_candidates(rng, syn, tgt);
    EdgeAssignConfig cfg;
    cfg.factor = 1 + static_cast<int>(rng.index(4));
    cfg.threshold = rng.uniform() < 0.5 ? 0.0 : 0.3;
    const auto got = select_topk_global(cands, syn, cfg);
    const auto want = oracle::topk_global(cands, syn, cfg.factor, cfg.threshold);
    CHECK(got.edges == want.edges);
    CHECK(got.isolated == want.isolated);
    CHECK(got.edges.size() == std::min<size_t>(static_cast<size_t>(syn * cfg.factor), [&] {
            size_t above = 0;
            for (const auto& c : cands) above += c.score >= cfg.threshold;
            return above;
          }()));
  }
}

TEST_CASE("raising the threshold only grows the isolated set") {
  Rng rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const int syn = 2 + static_cast<int>(rng.index(5));
    const auto cands = random_candidates(rng, syn, 6);
    EdgeAssignConfig lo, hi;
    lo.factor = hi.factor = 2;
    lo.threshold = rng.uniform(-0.3, 0.5);
    hi.threshold = lo.threshold + rng.uniform(0.0, 0.5);
    const auto a = select_topk_global(cands, syn, lo);
    const auto b = select_topk_global(cands, syn, hi);
    const std::set<int> sa(a.isolated.begin(), a.isolated.end());
    for (int s : sa) CHECK(std::find(b.isolated.begin(), b.isolated.end(), s) != b.isolated.end());
  }
}

TEST_CASE("a larger budget never isolates more nodes") {
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    const int syn = 2 + static_cast<int>(rng.index(6));
    const auto cands = random_candidates(rng, syn, 8);
    size_t last = syn + 1;
    for (int factor : {1, 4, 16, 64}) {
      EdgeAssignConfig cfg;
      cfg.factor = factor;
      cfg.threshold = 0.2;
      const auto n = select_topk_global(cands, syn, cfg).isolated.size();
      CHECK(n <= last);
      last = n;
    }
  }
}

TEST_CASE("raising kappa of one target never lowers its rank") {
  Rng rng(34);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd syn(2, 3), orig(6, 3);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 3; ++j) syn(i, j) = rng.normal();
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 3; ++j) orig(i, j) = rng.normal();
    Eigen::VectorXd kappa(6);
    for (int i = 0; i < 6; ++i) kappa(i) = rng.uniform(0.25, 1.0);
    const int u = static_cast<int>(rng.index(6));
    auto rank_of = [&](const Eigen::VectorXd& k) {
      EdgeAssignConfig cfg;
      cfg.factor = 6;
      cfg.threshold = -2.0;
      const auto sel = select_topk_global(score_edges(syn, orig, k), 2, cfg);
      for (size_t r = 0; r < sel.edges.size(); ++r) {
        if (sel.edges[r].synthetic == 0 && sel.edges[r].target == u) return r;
      }
      return sel.edges.size();
    };
    Eigen::VectorXd raised = kappa;
    raised(u) = std::min(1.0, kappa(u) + 0.3);
    if (syn.row(0).dot(orig.row(u)) >= 0.0) CHECK(rank_of(raised) <= rank_of(kappa));
  }
}

TEST_CASE("score is kappa times cosine") {
  Eigen::MatrixXd syn(1, 2), orig(2, 2);
  syn << 1, 0;
  orig << 1, 1, 0, 1;
  Eigen::VectorXd kappa(2);
  kappa << 0.8, 0.9;
  const auto c = score_edges(syn, orig, kappa);
  REQUIRE(c.size() == 2);
  CHECK(c[0].score == doctest::Approx(0.8 * std::sqrt(0.5)));
  CHECK(c[1].score == 0.0);
  CHECK_THROWS_AS(score_edges(syn, orig, Eigen::VectorXd::Ones(3)), Error);
}

TEST_CASE("per-node selection") {
  std::vector<EdgeCandidate> c = {{0, 0, 0.9}, {0, 1, 0.8}, {0, 2, 0.7}, {1, 0, 0.1}};
  EdgeAssignConfig cfg;
  cfg.factor = 2;
  cfg.per_node = true;
  const auto sel = select_topk_global(c, 2, cfg);
  CHECK(sel.edges.size() == 3);
  CHECK(sel.isolated.empty());
  cfg.per_node = false;
  CHECK(select_topk_global(c, 2, cfg).edges.size() == 4);
  cfg.factor = 1;
  CHECK(select_topk_global(c, 2, cfg).isolated == std::vector<int>{1});
}

TEST_CASE("duplicate edges copy the anchor adjacency") {
  Rng rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.index(15));
    std::vector<std::pair<int, int>> edges;
    for (int e = 0; e < n; ++e) {
      const int u = static_cast<int>(rng.index(n)), v = static_cast<int>(rng.index(n));
      if (u != v) edges.emplace_back(u, v);
    }
    TextGraph g;
    g.texts.assign(n, "t");
    g.labels.assign(n, 0);
    g.class_names = {"a"};
    g.edges = canonical_edges(edges);
    const int anchor = static_cast<int>(rng.index(n));
    std::set<int> expected;
    for (const auto& [u, v] : g.edges) {
      if (u == anchor) expected.insert(v);
      if (v == anchor) expected.insert(u);
    }
    std::set<int> got;
    for (const auto& e : duplicate_edges(anchor, g)) got.insert(e.target);
    CHECK(got == expected);
  }
  TextGraph lone;
  lone.texts = {"a"};
  lone.labels = {0};
  lone.class_names = {"a"};
  CHECK(duplicate_edges(0, lone).empty());
  CHECK_THROWS_AS(duplicate_edges(1, lone), Error);
}

TEST_CASE("assign_edges on the fixture") {
  FixtureOptions opts;
  opts.class_sizes = {30, 30, 10};
  opts.class_names = {"A", "B", "C"};
  opts.tail_class_count = 1;
  const auto g = make_fixture(opts);
  const auto emb = encode_hashing(g.texts, 64);
  std::vector<int> train;
  for (int i = 0; i < static_cast<int>(g.node_count()); i += 2) train.push_back(i);
  TrainConfig cfg = TrainConfig::mlp_defaults();
  cfg.epochs = 100;
  const auto conf = train_confidence(emb, g.labels, train, 3, cfg);
  const auto k = conf.kappa(emb.rows);
  CHECK(k.minCoeff() >= 1.0 / 3.0 - 1e-12);
  CHECK(k.maxCoeff() <= 1.0);

  std::vector<SyntheticNode> syn(3);
  for (int s = 0; s < 3; ++s) {
    syn[s].label = 2;
    const Eigen::RowVectorXd row = emb.rows.row(60 + s);
    syn[s].embedding.assign(row.data(), row.data() + row.size());
  }
  // An adversarial node: zero embedding scores 0 everywhere.
  syn.push_back(SyntheticNode{});
  syn.back().label = 2;
  syn.back().embedding.assign(64, 0.0);

  EdgeAssignConfig ec;
  ec.factor = 4;
  ec.threshold = 0.01;
  EdgeAssignSummary summary;
  const auto out = assign_edges(syn, g, emb, conf, ec, &summary);
  CHECK(summary.k_edge == 16);
  CHECK(summary.edges_added == 16);
  CHECK(summary.isolated == 1);
  CHECK(out.back().isolated);
  CHECK(out.back().edges.empty());
  CHECK(summary.score_quantiles.size() == 5);
  for (const auto& node : out) {
    CHECK(std::is_sorted(node.edges.begin(), node.edges.end(),
                         [](const auto& a, const auto& b) { return a.target < b.target; }));
  }

  ec.allow_synthetic_targets = true;
  const auto chained = assign_edges(syn, g, emb, conf, ec);
  for (size_t s = 0; s < chained.size(); ++s) {
    for (const auto& e : chained[s].edges) {
      if (e.target >= static_cast<int>(g.node_count())) CHECK(e.target < static_cast<int>(g.node_count() + s));
    }
  }

  std::vector<int> one_class = {0, 2, 4};
  CHECK_THROWS_AS(train_confidence(emb, std::vector<int>(g.node_count(), 0), one_class, 3, cfg), TrainingError);
}
