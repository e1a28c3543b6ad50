#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "savetag/fixture.h"
#include "savetag/pipeline.h"

namespace {

using json = nlohmann::json;

struct CommonFlags {
  std::string config;
  std::optional<uint64_t> seed;
  std::string variant;
  std::string edge;
  std::string generator;
  std::string encoder;
  std::string out;
  std::string dataset;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "Run seed (overrides the config)");
  app->add_option("--variant", f.variant, "Prompt variant")->check(CLI::IsMember({"O", "S", "M"}));
  app->add_option("--edge", f.edge, "Edge strategy")->check(CLI::IsMember({"confidence", "duplicate", "none"}));
  app->add_option("--generator", f.generator, "Text generator")->check(CLI::IsMember({"mock", "remote"}));
  app->add_option("--encoder", f.encoder, "Text encoder")->check(CLI::IsMember({"hash", "remote"}));
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--dataset", f.dataset, "Dataset directory");
}

savetag::RunConfig resolve(const CommonFlags& f) {
  json j = json::object();
  if (!f.config.empty()) j = json::parse(savetag::read_file(f.config));
  if (f.seed) j["seed"] = *f.seed;
  if (!j.contains("seed")) throw savetag::Error("a seed is required (--seed or the config's 'seed')");
  if (!f.variant.empty()) j["variant"] = f.variant;
  if (!f.edge.empty()) j["edge_strategy"] = f.edge;
  if (!f.generator.empty()) j["generator"]["kind"] = f.generator;
  if (!f.encoder.empty()) j["encoder"]["kind"] = f.encoder;
  if (!f.out.empty()) j["output_dir"] = f.out;
  if (!f.dataset.empty()) j["dataset_dir"] = f.dataset;
  return savetag::run_config_from_json(j);
}

std::vector<std::string> split_cells(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-tailed text-attributed graph augmentation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", savetag::kToolVersion);

  CommonFlags augment_flags, train_flags, stats_flags;
  auto* augment = app.add_subcommand("augment", "Generate, connect and persist synthetic nodes");
  add_common(augment, augment_flags);

  auto* train = app.add_subcommand("train-eval", "Train and evaluate ablation cells");
  add_common(train, train_flags);
  std::string cells = "origin,num,num_C,llm,llm_C";
  train->add_option("--cells", cells, "Comma-separated subset of origin,num,num_C,llm,llm_C");

  auto* verify = app.add_subcommand("verify", "Run the theory checks");
  uint64_t verify_seed = 0;
  int trials = 1000;
  std::string verify_out;
  verify->add_option("--seed", verify_seed, "Seed for the constructed instances");
  verify->add_option("--trials", trials, "Randomized trials per check")->check(CLI::PositiveNumber);
  verify->add_option("--out", verify_out, "Write the report to this file");

  auto* stats = app.add_subcommand("stats", "Dataset and split statistics");
  add_common(stats, stats_flags);

  auto* fixture = app.add_subcommand("fixture", "Write the seeded demo dataset");
  savetag::FixtureOptions fixture_opts;
  std::string fixture_out;
  fixture->add_option("--seed", fixture_opts.seed, "Fixture seed");
  fixture->add_option("--class-sizes", fixture_opts.class_sizes, "Nodes per class, tail classes last");
  fixture->add_option("--class-vocab", fixture_opts.class_vocab, "Words per class vocabulary");
  fixture->add_option("--shared-vocab", fixture_opts.shared_vocab, "Words in the shared vocabulary");
  fixture->add_option("--tokens", fixture_opts.tokens_per_text, "Tokens per text");
  fixture->add_option("--class-share", fixture_opts.class_token_share, "Share of tokens from the own class");
  fixture->add_option("--foreign-share", fixture_opts.foreign_token_share, "Share of tokens from other classes");
  fixture->add_option("--topic-prob", fixture_opts.topic_token_prob, "Chance a text names its class");
  fixture->add_option("--edges-per-node", fixture_opts.edges_per_node, "Edges drawn per node");
  fixture->add_option("--intra", fixture_opts.intra_edge_prob, "Chance an edge stays within the class");
  fixture->add_option("--out", fixture_out, "Dataset directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (augment->parsed()) {
      const auto cfg = resolve(augment_flags);
      const auto report = savetag::run_augment(cfg);
      std::cout << "augmented graph: " << report["augmented"]["nodes"] << " nodes, " << report["augmented"]["edges"]
                << " edges; generated " << report["generation"]["generated"] << ", skipped "
                << report["generation"]["skipped"].size() << ", isolated " << report["edge_assignment"]["isolated"]
                << "\nreport: " << (cfg.output_dir / "report_augment.json").string() << "\n";
    } else if (train->parsed()) {
      const auto cfg = resolve(train_flags);
      const auto report = savetag::run_train_eval(cfg, split_cells(cells));
      for (const auto& [name, cell] : report["cells"].items()) {
        const auto& m = cell["metrics"];
        std::cout << name << ": F1 " << m["macro_f1"]["mean"] << " +- " << m["macro_f1"]["std"] << ", bAcc "
                  << m["bacc"]["mean"] << ", GMean " << m["gmean"]["mean"] << ", Acc " << m["acc"]["mean"] << "\n";
      }
    } else if (verify->parsed()) {
      const auto outcome = savetag::run_verify(verify_seed, trials);
      for (const auto& c : outcome.report["checks"]) {
        std::cout << (c["passed"].get<bool>() ? "PASS " : "FAIL ") << c["name"].get<std::string>() << " ("
                  << c["failures"] << "/" << c["trials"] << " failed, worst " << c["worst"] << ")\n";
      }
      if (!verify_out.empty()) savetag::write_file(verify_out, outcome.report.dump(2) + "\n");
      return outcome.passed ? 0 : 1;
    } else if (stats->parsed()) {
      std::cout << savetag::run_stats(resolve(stats_flags)).dump(2) << "\n";
    } else if (fixture->parsed()) {
      savetag::write_dataset(savetag::make_fixture(fixture_opts), fixture_out);
      std::cout << "wrote " << fixture_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
