#include <doctest.h>

#include "savetag/baselines.h"
#include "support/oracles.h"

using namespace savetag;

namespace {

struct Instance {
  EmbeddingMatrix emb;
  std::vector<int> labels;
  LongTailSplit split;
};

// Integer 2-D points; class 1 is the tail.
Instance integer_instance(Rng& rng, int n) {
  Instance in;
  in.emb.rows.resize(n, 2);
  in.labels.resize(n);
  in.split.tail_classes = {1};
  in.split.head_count = 8;
  for (int i = 0; i < n; ++i) {
    in.labels[i] = i % 3 == 0 ? 1 : 0;
    in.emb.rows(i, 0) = static_cast<double>(rng.index(2001)) - 1000.0;
    in.emb.rows(i, 1) = static_cast<double>(rng.index(2001)) - 1000.0;
    in.split.train_idx.push_back(i);
  }
  return in;
}

}  // namespace

TEST_CASE("SMOTE interpolation is collinear") {
  Rng rng(40);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd a(5), b(5);
    for (int j = 0; j < 5; ++j) {
      a(j) = rng.normal();
      b(j) = rng.normal();
    }
    const double lambda = rng.uniform();
    const auto x = smote_interpolate(a, b, lambda);
    CHECK((x - a - lambda * (b - a)).cwiseAbs().maxCoeff() <= 1e-9);
  }
  Eigen::VectorXd a = Eigen::VectorXd::Zero(2), b = Eigen::VectorXd::Ones(2);
  CHECK(smote_interpolate(a, b, 0.0) == a);
  CHECK(smote_interpolate(a, b, 1.0) == b);
  CHECK_THROWS_AS(smote_interpolate(a, b, 1.5), Error);
  CHECK_THROWS_AS(smote_interpolate(a, Eigen::VectorXd::Ones(3), 0.5), Error);
}

TEST_CASE("numeric SMOTE stays inside the class hull") {
  Rng rng(41);
  set_warning_sink([](const std::string&) {});
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = integer_instance(rng, 6 + static_cast<int>(rng.index(20)));
    const auto targets = std::map<int, int>{{1, 12}};
    const auto pairs = find_vicinal_twins(in.split, in.emb, in.labels, 3, targets);
    const auto syn = numeric_augment(in.emb, in.labels, pairs, NumericMode::Smote, 2, trial);
    std::vector<oracle::Point> pts;
    for (int i : in.split.train_idx) {
      if (in.labels[i] == 1) {
        pts.emplace_back(static_cast<int64_t>(in.emb.rows(i, 0)) << 20, static_cast<int64_t>(in.emb.rows(i, 1)) << 20);
      }
    }
    const auto h = oracle::hull(pts);
    for (Eigen::Index r = 0; r < syn.rows.rows(); ++r) {
      oracle::Point p;
      REQUIRE(oracle::to_fixed(syn.rows(r, 0), 20, p.first));
      REQUIRE(oracle::to_fixed(syn.rows(r, 1), 20, p.second));
      CHECK(oracle::in_hull(h, p));
      CHECK(syn.labels[r] == 1);
    }
  }
  set_warning_sink({});
}

TEST_CASE("hull oracle sanity") {
  const auto h = oracle::hull({{0, 0}, {4, 0}, {4, 4}, {0, 4}, {2, 2}, {2, 0}});
  CHECK(h.size() == 4);
  CHECK(oracle::in_hull(h, {2, 2}));
  CHECK(oracle::in_hull(h, {4, 1}));
  CHECK_FALSE(oracle::in_hull(h, {5, 1}));
  const auto line = oracle::hull({{0, 0}, {1, 1}, {3, 3}});
  CHECK(oracle::in_hull(line, {2, 2}));
  CHECK_FALSE(oracle::in_hull(line, {2, 1}));
  CHECK(oracle::in_hull(oracle::hull({{1, 1}}), {1, 1}));
}

TEST_CASE("oversampling copies rows exactly, round robin") {
  Rng rng(42);
  const auto in = integer_instance(rng, 9);
  const auto out = oversample(in.emb, in.labels, in.split, {{1, 7}});
  // class 1 training rows are 0, 3, 6
  CHECK(out.anchors == std::vector<int>{0, 3, 6, 0});
  for (size_t r = 0; r < out.anchors.size(); ++r) {
    CHECK(out.rows.row(static_cast<Eigen::Index>(r)) == in.emb.rows.row(out.anchors[r]));
  }
  CHECK_THROWS_AS(oversample(in.emb, in.labels, in.split, {{1, 2}}), Error);
  CHECK_THROWS_AS(oversample(in.emb, in.labels, in.split, {{2, 4}}), Error);
}

TEST_CASE("mixup mixes features and labels") {
  Eigen::VectorXd a(2), b(2);
  a << 1, 0;
  b << 0, 1;
  InterpolationParams p;
  p.lambda = 0.3;
  const auto m = mixup_interpolate(a, b, 0, 2, 3, p);
  CHECK(m.x(0) == doctest::Approx(0.3));
  CHECK(m.soft_label(0) == doctest::Approx(0.3));
  CHECK(m.soft_label(2) == doctest::Approx(0.7));
  CHECK(m.hard_label == 2);
  p.lambda = 0.5;
  CHECK(mixup_interpolate(a, b, 1, 0, 3, p).hard_label == 1);
  p.lambda = -1.0;
  p.seed = 4;
  const auto drawn = mixup_interpolate(a, b, 0, 1, 2, p);
  CHECK(drawn.lambda >= 0.0);
  CHECK(drawn.lambda <= 1.0);
  CHECK(drawn.soft_label.sum() == doctest::Approx(1.0));
  p.beta_alpha = 0.0;
  CHECK_THROWS_AS(mixup_interpolate(a, b, 0, 1, 2, p), Error);
  CHECK_THROWS_AS(mixup_interpolate(a, b, 0, 5, 2, InterpolationParams{}), Error);
}

TEST_CASE("numeric_augment modes") {
  Rng rng(43);
  const auto in = integer_instance(rng, 12);
  const std::vector<VicinalPair> pairs = {{0, 3, 1}, {3, 6, 1}, {6, 1, 1}};
  const auto over = numeric_augment(in.emb, in.labels, pairs, NumericMode::Oversample, 2, 0);
  CHECK(over.rows.row(1) == in.emb.rows.row(3));
  const auto smote = numeric_augment(in.emb, in.labels, pairs, NumericMode::Smote, 2, 0);
  CHECK(smote.rows == numeric_augment(in.emb, in.labels, pairs, NumericMode::Smote, 2, 0).rows);
  CHECK(smote.labels == std::vector<int>{1, 1, 1});
  const auto mix = numeric_augment(in.emb, in.labels, pairs, NumericMode::Mixup, 2, 0);
  // The cross-class pair takes the label with the larger share.
  CHECK(mix.labels[2] == (mix.lambdas[2] >= 0.5 ? 1 : 0));
  CHECK_THROWS_AS(numeric_augment(in.emb, in.labels, pairs, NumericMode::Mixup, 2, 0, 0.0), Error);
  CHECK(parse_numeric_mode("mixup") == NumericMode::Mixup);
  CHECK(std::string(to_string(NumericMode::Smote)) == "smote");
  CHECK_THROWS_AS(parse_numeric_mode("gan"), Error);
}
