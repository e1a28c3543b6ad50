#include <doctest.h>

#include <atomic>
#include <filesystem>

#include "savetag/generation.h"

using namespace savetag;
namespace fs = std::filesystem;

namespace {

// Enumerates the expected schedule directly: cycle c, rank r, anchor a.
std::vector<VicinalPair> expected_schedule(const std::vector<int>& anchors,
                                           const std::vector<std::vector<int>>& partners, int cls, int target) {
  std::vector<VicinalPair> out;
  size_t max_rank = 0;
  for (const auto& p : partners) max_rank = std::max(max_rank, p.size());
  std::vector<VicinalPair> cycle;
  for (size_t r = 0; r < max_rank; ++r) {
    for (size_t a = 0; a < anchors.size(); ++a) {
      if (r < partners[a].size()) cycle.push_back({anchors[a], partners[a][r], cls});
    }
  }
  for (int i = 0; i < target; ++i) out.push_back(cycle[static_cast<size_t>(i) % cycle.size()]);
  return out;
}

class CountingGenerator : public TextGenerator {
 public:
  std::string generate(const GenerationRequest& r) override {
    ++calls;
    if (r.class_name == "fail") throw TransportError("stub failure");
    if (r.t1 == "unframed") return "no markers here";
    return "<START>gen " + r.t1 + "<END>";
  }
  std::string id() const override { return "counting"; }
  std::atomic<int> calls{0};
};

}  // namespace

TEST_CASE("default synthetic targets fill tail classes to head_count") {
  LongTailSplit split;
  split.head_count = 5;
  split.tail_classes = {1, 2};
  split.train_idx = {0, 1, 2, 3};
  const std::vector<int> labels = {0, 1, 1, 2};
  const auto t = default_synthetic_targets(split, labels);
  CHECK(t == std::map<int, int>{{1, 3}, {2, 4}});
}

TEST_CASE("vicinal twins follow the round-robin schedule") {
  Rng rng(4);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 6 + static_cast<int>(rng.index(20));
    EmbeddingMatrix emb;
    emb.rows.resize(n, 3);
    std::vector<int> labels(n);
    LongTailSplit split;
    split.tail_classes = {1};
    for (int i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng.index(2));
      for (int j = 0; j < 3; ++j) emb.rows(i, j) = rng.normal();
      if (rng.uniform() < 0.7) split.train_idx.push_back(i);
    }
    std::vector<int> anchors;
    for (int i : split.train_idx) {
      if (labels[i] == 1) anchors.push_back(i);
    }
    if (anchors.empty()) continue;
    const int k = 1 + static_cast<int>(rng.index(3));
    const int target = 1 + static_cast<int>(rng.index(15));
    std::vector<std::vector<int>> partners;
    for (int a : anchors) {
      auto p = knn_candidates(a, k, emb, anchors);
      if (p.empty()) p.push_back(a);
      partners.push_back(p);
    }
    set_warning_sink([](const std::string&) {});
    const auto pairs = find_vicinal_twins(split, emb, labels, k, {{1, target}});
    set_warning_sink({});
    CHECK(pairs == expected_schedule(anchors, partners, 1, target));
  }
}

TEST_CASE("mixed-class scope draws partners from every training node") {
  EmbeddingMatrix emb;
  emb.rows.resize(4, 2);
  emb.rows << 1, 0, 0.9, 0.1, 0, 1, 1, 0.05;
  LongTailSplit split;
  split.tail_classes = {1};
  split.train_idx = {0, 1, 2, 3};
  const std::vector<int> labels = {0, 1, 0, 0};
  const auto same = find_vicinal_twins(split, emb, labels, 1, {{1, 1}}, TwinScope::SameClass);
  CHECK(same.front().partner == 1);  // self-pair: no other class-1 node
  const auto any = find_vicinal_twins(split, emb, labels, 1, {{1, 1}}, TwinScope::AnyClass);
  CHECK(labels[any.front().partner] == 0);
  CHECK(twin_scope_for(Variant::M) == TwinScope::AnyClass);
  CHECK(twin_scope_for(Variant::S) == TwinScope::SameClass);
}

TEST_CASE("prompt shapes") {
  const auto spec = prompt_spec_for("Cora");
  const auto o = build_prompt(Variant::O, "t1", std::nullopt, "Genomics", "Genomics", spec);
  REQUIRE(o.size() == 4);
  CHECK(o[0].role == "system");
  CHECK(o[2] == ChatMessage{"assistant", "<START>t1<END>"});
  CHECK(o[3].role == "user");
  CHECK(o[3].content.find("Genomics") != std::string::npos);

  const auto s = build_prompt(Variant::S, "t1", std::string("t2"), "Genomics", "Genomics", spec);
  REQUIRE(s.size() == 6);
  const std::vector<std::string> roles = {"system", "user", "assistant", "user", "assistant", "user"};
  for (size_t i = 0; i < 6; ++i) CHECK(s[i].role == roles[i]);
  CHECK(s[4].content == "<START>t2<END>");
  CHECK(s[0].content.find("<START>[New Title] : [New Abstract]<END>") != std::string::npos);

  const auto m = build_prompt(Variant::M, "t1", std::string("t2"), "Genomics", "Astronomy", spec);
  CHECK(m[3].content.find("Astronomy") != std::string::npos);
  CHECK(m[5].content.find("Genomics") != std::string::npos);
  CHECK(m[5].content.find("Astronomy") == std::string::npos);

  CHECK_THROWS_AS(build_prompt(Variant::S, "t1", std::string("t2"), "A", "B", spec), GenerationError);
  CHECK_THROWS_AS(build_prompt(Variant::S, "t1", std::nullopt, "A", "A", spec), GenerationError);
  CHECK_THROWS_AS(prompt_spec_for("imagenet"), Error);
  CHECK(prompt_spec_for("photo").text_noun == "review");
}

TEST_CASE("parse_generation") {
  CHECK(parse_generation("noise <START> body text <END> tail") == "body text");
  CHECK(parse_generation("<START>a<END><START>b<END>") == "a");
  set_warning_sink([](const std::string&) {});
  CHECK(parse_generation("<START> open ended") == "open ended");
  CHECK(parse_generation("closed only <END>") == "closed only");
  CHECK(parse_generation("  bare  ") == "bare");
  CHECK_THROWS_AS(parse_generation("<START>   <END>"), GenerationError);
  set_warning_sink({});
  CHECK_THROWS_AS(parse_generation("bare", ParseMode::Strict), GenerationError);
}

TEST_CASE("mock generator") {
  const auto a = mock_generate("one two three four five", "six seven eight", "Graph Theory", 3);
  CHECK(a == mock_generate("one two three four five", "six seven eight", "Graph Theory", 3));
  CHECK(a.rfind("Graph_Theory ", 0) == 0);
  CHECK(mock_generate("one two", "", "X", 1) == "X one two");
  MockGenerator gen(1);
  GenerationRequest r;
  r.t1 = "a b";
  r.class_name = "C";
  CHECK(parse_generation(gen.generate(r)) == "C a b");
}

TEST_CASE("generation cache") {
  const auto dir = fs::temp_directory_path() / "savetag_gen_cache";
  fs::remove_all(dir);
  const auto cache = dir / "gen_cache.jsonl";
  const std::vector<std::string> texts = {"alpha one", "beta two", "gamma three", "unframed"};
  const std::vector<int> labels = {0, 0, 1, 0};
  const std::vector<std::string> names = {"Topic", "fail"};
  GenerationInputs in{&texts, &labels, &names};
  const std::vector<VicinalPair> pairs = {{0, 1, 0}, {1, 0, 0}, {0, 1, 0}, {2, 2, 1}, {3, 3, 0}};
  GeneratorConfig cfg;
  cfg.parse_mode = ParseMode::Strict;
  const auto spec = prompt_spec_for("cora");

  CountingGenerator first;
  const auto r1 = generate_interpolations(pairs, Variant::S, first, cfg, spec, in, cache);
  CHECK(first.calls == 5);
  CHECK(r1.generator_calls == 5);
  CHECK(r1.cache_hits == 0);
  CHECK(r1.nodes.size() == 3);
  CHECK(r1.pair_index == std::vector<size_t>{0, 1, 2});
  REQUIRE(r1.skipped.size() == 2);
  CHECK(r1.skipped[0].pair_index == 3);
  CHECK(r1.skipped[1].pair_index == 4);
  // The repeated pair is a second attempt and gets its own key.
  CHECK(r1.nodes[0].provenance.cache_key != r1.nodes[2].provenance.cache_key);
  CHECK(split_lines(read_file(cache)).size() == 3);

  CountingGenerator second;
  const auto r2 = generate_interpolations(pairs, Variant::S, second, cfg, spec, in, cache);
  CHECK(r2.cache_hits == 3);
  CHECK(second.calls == 2);  // only the failures are retried
  for (size_t i = 0; i < r2.nodes.size(); ++i) CHECK(r2.nodes[i].text == r1.nodes[i].text);
  CHECK(split_lines(read_file(cache)).size() == 3);

  // A corrupt line is skipped with a warning rather than aborting.
  write_file(cache, read_file(cache) + "{not json\n");
  std::vector<std::string> warnings;
  set_warning_sink([&](const std::string& w) { warnings.push_back(w); });
  CountingGenerator third;
  const auto r3 = generate_interpolations(pairs, Variant::S, third, cfg, spec, in, cache);
  set_warning_sink({});
  CHECK(r3.cache_hits == 3);
  CHECK(warnings.size() == 1);
}

TEST_CASE("parallel generation keeps input order") {
  std::vector<std::string> texts;
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) {
    texts.push_back("text " + std::to_string(i));
    labels.push_back(0);
  }
  const std::vector<std::string> names = {"Topic"};
  GenerationInputs in{&texts, &labels, &names};
  std::vector<VicinalPair> pairs;
  for (int i = 0; i < 40; ++i) pairs.push_back({i, (i + 1) % 40, 0});
  GeneratorConfig cfg;
  cfg.max_in_flight = 8;
  CountingGenerator gen;
  const auto r = generate_interpolations(pairs, Variant::S, gen, cfg, prompt_spec_for("cora"), in, {});
  REQUIRE(r.nodes.size() == 40);
  for (int i = 0; i < 40; ++i) CHECK(r.nodes[i].text == "gen text " + std::to_string(i));
}
