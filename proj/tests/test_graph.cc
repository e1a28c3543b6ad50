#include <doctest.h>

#include <filesystem>
#include <set>

#include "savetag/fixture.h"
#include "savetag/graph.h"
#include "support/oracles.h"

using namespace savetag;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("savetag_graph_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path tiny_dataset(const std::string& name, const std::string& nodes, const std::string& edges,
                      const std::string& meta = R"({"class_names": ["a", "b"], "tail_class_count": 1})") {
  const auto dir = scratch(name);
  write_file(dir / "nodes.jsonl", nodes);
  write_file(dir / "edges.jsonl", edges);
  write_file(dir / "meta.json", meta);
  return dir;
}

std::string load_error(const fs::path& dir) {
  try {
    load_dataset(dir);
  } catch (const DatasetError& e) {
    return e.what();
  }
  return "";
}

const std::string kNodes =
    "{\"id\": 0, \"text\": \"alpha\", \"label\": 0}\n"
    "{\"id\": 1, \"text\": \"beta\", \"label\": 1}\n"
    "{\"id\": 2, \"text\": \"gamma\", \"label\": 0}\n";

}  // namespace

TEST_CASE("load_dataset reads and canonicalizes") {
  const auto dir = tiny_dataset("ok", kNodes, "{\"src\": 2, \"dst\": 0}\n{\"src\": 0, \"dst\": 2}\n{\"src\": 1, \"dst\": 0}\n");
  const auto g = load_dataset(dir);
  CHECK(g.node_count() == 3);
  CHECK(g.labels == std::vector<int>{0, 1, 0});
  CHECK(g.edges == std::vector<std::pair<int, int>>{{0, 1}, {0, 2}});
  CHECK(g.tail_class_count == 1);
  CHECK_NOTHROW(g.validate());
}

TEST_CASE("load_dataset errors name the file and line") {
  CHECK(load_error(tiny_dataset("gap", "{\"id\": 0, \"text\": \"x\", \"label\": 0}\n{\"id\": 2, \"text\": \"y\", \"label\": 0}\n", ""))
            .find("nodes.jsonl:2: non-contiguous") != std::string::npos);
  CHECK(load_error(tiny_dataset("dup", "{\"id\": 0, \"text\": \"x\", \"label\": 0}\n{\"id\": 0, \"text\": \"y\", \"label\": 0}\n", ""))
            .find("nodes.jsonl:2: duplicate node id 0") != std::string::npos);
  CHECK(load_error(tiny_dataset("label", "{\"id\": 0, \"text\": \"x\", \"label\": 2}\n", ""))
            .find("nodes.jsonl:1: label out of range") != std::string::npos);
  CHECK(load_error(tiny_dataset("endpoint", kNodes, "{\"src\": 0, \"dst\": 1}\n{\"src\": 0, \"dst\": 3}\n"))
            .find("edges.jsonl:2: edge endpoint out of range") != std::string::npos);
  CHECK(load_error(tiny_dataset("self", kNodes, "{\"src\": 1, \"dst\": 1}\n")).find("edges.jsonl:1: self-loop") !=
        std::string::npos);
  CHECK(load_error(tiny_dataset("bad_json", kNodes + "{oops\n", "")).find("nodes.jsonl:4") != std::string::npos);

  const auto missing = scratch("missing");
  write_file(missing / "meta.json", R"({"class_names": ["a"]})");
  CHECK(load_error(missing).find("missing file") != std::string::npos);
}

TEST_CASE("write and load round trip") {
  FixtureOptions opts;
  opts.class_sizes = {12, 12, 5};
  opts.class_names = {"One", "Two", "Three"};
  opts.tail_class_count = 1;
  const auto g = make_fixture(opts);
  const auto dir = scratch("roundtrip");
  write_dataset(g, dir);
  CHECK(load_dataset(dir) == g);
}

TEST_CASE("canonical_edges orders, dedups and rejects self-loops") {
  CHECK(canonical_edges({{3, 1}, {1, 3}, {0, 2}, {2, 0}, {1, 2}}) ==
        std::vector<std::pair<int, int>>{{0, 2}, {1, 2}, {1, 3}});
  CHECK_THROWS_AS(canonical_edges({{4, 4}}), DatasetError);
}

TEST_CASE("normalized adjacency matches the dense construction") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(12));
    std::vector<std::pair<int, int>> edges;
    for (int e = 0; e < 2 * n; ++e) {
      const int u = static_cast<int>(rng.index(n)), v = static_cast<int>(rng.index(n));
      if (u != v) edges.emplace_back(u, v);
    }
    edges = canonical_edges(edges);
    const Eigen::MatrixXd sparse = Eigen::MatrixXd(normalized_adjacency(n, edges).matrix);
    const Eigen::MatrixXd dense = oracle::dense_adjacency(n, edges);
    CHECK((sparse - dense).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((sparse - sparse.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("long-tail split") {
  FixtureOptions opts;
  const auto g = make_fixture(opts);
  SplitOptions so;
  so.tail_class_count = 2;
  so.seed = 3;
  const auto split = make_longtail_split(g, so);
  CHECK(split.tail_classes == std::vector<int>{2, 3});
  CHECK(split.tail_train_count() == 2);

  std::vector<int> per_class(4, 0);
  for (int i : split.train_idx) ++per_class[g.labels[i]];
  CHECK(per_class == std::vector<int>{20, 20, 2, 2});

  std::set<int> seen;
  for (const auto* part : {&split.train_idx, &split.val_idx, &split.test_idx}) {
    CHECK(std::is_sorted(part->begin(), part->end()));
    for (int i : *part) CHECK(seen.insert(i).second);
  }
  CHECK(seen.size() == g.node_count());
  CHECK(make_longtail_split(g, so) == split);
  so.seed = 4;
  CHECK_FALSE(make_longtail_split(g, so) == split);
}

TEST_CASE("split preconditions") {
  FixtureOptions opts;
  opts.class_sizes = {30, 30, 3};
  opts.class_names = {"a", "b", "c"};
  opts.tail_class_count = 1;
  const auto g = make_fixture(opts);
  SplitOptions so;
  so.tail_class_count = 1;
  so.imbalance_ratio = 0.5;  // 10 tail training nodes, only 3 exist
  CHECK_THROWS_AS(make_longtail_split(g, so), SplitError);
  so.imbalance_ratio = 0.0;
  CHECK_THROWS_AS(make_longtail_split(g, so), SplitError);
  so.imbalance_ratio = 0.05;
  so.tail_class_count = 3;
  CHECK_THROWS_AS(make_longtail_split(g, so), SplitError);
}

TEST_CASE("tail class selection rules") {
  TextGraph g;
  g.class_names = {"a", "b", "c", "d"};
  g.labels = {0, 0, 0, 0, 1, 1, 2, 3, 3, 3};
  g.texts.assign(g.labels.size(), "t");
  CHECK(select_tail_classes(g, 2, TailRule::LowestFrequency) == std::vector<int>{1, 2});
  CHECK(select_tail_classes(g, 0, TailRule::BelowMedian) == std::vector<int>{1, 2});
  CHECK(tail_train_count(20, 0.1) == 2);
  CHECK(tail_train_count(20, 0.01) == 1);
}

TEST_CASE("merge_augmented appends nodes and edges") {
  TextGraph g;
  g.class_names = {"a", "b"};
  g.texts = {"x", "y"};
  g.labels = {0, 1};
  g.edges = {{0, 1}};
  SyntheticNode s0{"s0", 1, {}, {}, {{0, 1.0}}, false};
  SyntheticNode s1{"s1", 0, {}, {}, {{2, 0.5}, {1, 0.5}}, false};
  const auto m = merge_augmented(g, {s0, s1});
  CHECK(m.node_count() == 4);
  CHECK(m.labels == std::vector<int>{0, 1, 1, 0});
  CHECK(m.edges == std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {1, 3}, {2, 3}});
  SyntheticNode bad{"b", 0, {}, {}, {{4, 1.0}}, false};
  CHECK_THROWS_AS(merge_augmented(g, {bad}), DatasetError);
}

TEST_CASE("utf8 length counts code points") {
  CHECK(utf8_length("abc") == 3);
  CHECK(utf8_length("caf\xc3\xa9") == 4);
  CHECK(utf8_length("\xe6\x97\xa5\xe6\x9c\xac") == 2);
}
