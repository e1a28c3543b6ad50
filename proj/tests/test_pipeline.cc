#include <doctest.h>

#include <filesystem>

#include "savetag/fixture.h"
#include "savetag/pipeline.h"

using namespace savetag;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path small_dataset(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  FixtureOptions opts;
  opts.class_sizes = {40, 40, 12, 12};
  write_dataset(make_fixture(opts), dir / "data");
  return dir;
}

RunConfig small_config(const fs::path& dir) {
  RunConfig cfg = run_config_from_json(json{{"seed", 3},
                                            {"head_count", 10},
                                            {"imbalance_ratio", 0.2},
                                            {"tail_class_count", 2},
                                            {"encoder", {{"kind", "hash"}, {"dim", 64}}},
                                            {"confidence", {{"epochs", 30}}},
                                            {"classifier", {{"epochs", 5}}},
                                            {"seeds", {0}}});
  cfg.dataset_dir = dir / "data";
  cfg.output_dir = dir / "out";
  return cfg;
}

}  // namespace

TEST_CASE("config parsing is strict") {
  CHECK_THROWS_AS(run_config_from_json(json::object()), Error);
  CHECK_THROWS_AS(run_config_from_json(json{{"seed", 1}, {"sede", 2}}), Error);
  CHECK_THROWS_AS(run_config_from_json(json{{"seed", 1}, {"encoder", {{"dims", 8}}}}), Error);
  CHECK_THROWS_AS(run_config_from_json(json{{"seed", 1}, {"tau_conf", 1.0}}), Error);
  CHECK_THROWS_AS(run_config_from_json(json{{"seed", 1}, {"numeric_mode", {{"S", "gan"}}}}), Error);
  CHECK_THROWS_AS(run_config_from_json(json{{"seed", 1}, {"classifier", {{"dropout", 1.0}}}}), Error);
  const auto c = run_config_from_json(json{{"seed", 1}, {"variant", "M"}, {"edge_strategy", "duplicate"}});
  CHECK(c.variant == Variant::M);
  CHECK(c.edge_strategy == EdgeStrategy::Duplicate);
  CHECK(c.resolved_numeric_mode() == NumericMode::Mixup);
}

TEST_CASE("config round trip and digest") {
  auto a = run_config_from_json(json{{"seed", 5}, {"tau_conf", 0.2}});
  const auto b = run_config_from_json(run_config_to_json(a));
  CHECK(a.digest() == b.digest());
  a.output_dir = "/somewhere/else";
  a.dataset_dir = "/data";
  CHECK(a.digest() == b.digest());
  a.tau_conf = 0.3;
  CHECK(a.digest() != b.digest());
}

TEST_CASE("edge strategy names") {
  CHECK(parse_edge_strategy("none") == EdgeStrategy::None);
  CHECK(std::string(to_string(EdgeStrategy::Confidence)) == "confidence");
  CHECK_THROWS_AS(parse_edge_strategy("random"), Error);
}

TEST_CASE("strip_timings removes nested timings") {
  const json r = {{"a", 1}, {"timings", {{"x", 2}}}, {"b", {{"timings", 3}, {"c", {1, {{"timings", 4}}}}}}};
  CHECK(strip_timings(r) == json{{"a", 1}, {"b", {{"c", {1, json::object()}}}}});
}

TEST_CASE("augment with no edges leaves synthetic nodes isolated") {
  const auto dir = small_dataset("savetag_pipeline_none");
  auto cfg = small_config(dir);
  cfg.edge_strategy = EdgeStrategy::None;
  const auto report = run_augment(cfg);
  const int generated = report["generation"]["generated"];
  CHECK(generated > 0);
  CHECK(report["augmented"]["nodes"] == 104 + generated);
  CHECK(report["augmented"]["edges"] == report["graph"]["edges"]);
  CHECK(report["config_digest"] == cfg.digest());
  const auto augmented = load_dataset(cfg.output_dir / "dataset");
  CHECK(augmented.node_count() == static_cast<size_t>(104 + generated));
  CHECK(fs::exists(cfg.output_dir / "gen_cache.jsonl"));

  const auto eval = run_train_eval(cfg, {"origin", "llm_C"});
  CHECK(eval["cells"]["origin"]["synthetic"] == 0);
  CHECK(eval["cells"]["llm_C"]["synthetic"] == generated);
  CHECK(fs::exists(cfg.output_dir / "report_train_eval_origin-llm_C.json"));
  CHECK_THROWS_AS(run_train_eval(cfg, {"bogus"}), Error);
}

TEST_CASE("stats") {
  const auto dir = small_dataset("savetag_pipeline_stats");
  const auto s = run_stats(small_config(dir));
  CHECK(s["nodes"] == 104);
  CHECK(s["classes"] == 4);
  CHECK(s["tail_classes"] == 2);
}
