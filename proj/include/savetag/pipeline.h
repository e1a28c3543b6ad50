#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "savetag/baselines.h"
#include "savetag/edge_assignment.h"
#include "savetag/embedding.h"
#include "savetag/generation.h"
#include "savetag/graph.h"
#include "savetag/neural.h"

namespace savetag {

inline constexpr const char* kToolVersion = "savetag 0.1.0";

enum class EdgeStrategy { Confidence, Duplicate, None };

const char* to_string(EdgeStrategy s);
EdgeStrategy parse_edge_strategy(const std::string& s);

struct RunConfig {
  std::filesystem::path dataset_dir;
  std::string dataset_name = "cora";  // selects the prompt parameters
  Variant variant = Variant::S;
  int knn_k = 3;
  int head_count = 20;
  double imbalance_ratio = 0.1;
  int tail_class_count = -1;  // < 0: take it from meta.json
  double val_fraction = 0.25;
  EdgeStrategy edge_strategy = EdgeStrategy::Confidence;
  int edge_factor = -1;  // < 0: 20 for small datasets, 40 for large ones
  double tau_conf = 0.0;
  EncoderConfig encoder;
  GeneratorConfig generator;
  TrainConfig classifier = TrainConfig::gcn_defaults();
  TrainConfig confidence = TrainConfig::mlp_defaults();
  uint64_t seed = 0;
  std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};
  std::filesystem::path output_dir;
  std::map<std::string, std::string> numeric_mode = {{"O", "smote"}, {"S", "smote"}, {"M", "mixup"}};
  double mixup_alpha = 1.0;

  int resolved_edge_factor() const;
  NumericMode resolved_numeric_mode() const;

  /// Digest over every field that affects results (paths excluded).
  std::string digest() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

inline const std::vector<std::string> kAllCells = {"origin", "num", "num_C", "llm", "llm_C"};

/// Runs load, split, encode, twins, generate, encode synthetic, confidence,
/// edge assignment, merge and persist. Writes under cfg.output_dir:
///   dataset/              augmented graph + provenance.jsonl
///   gen_cache.jsonl       generation cache
///   split.json, embeddings.json, cells/<cell>.json
///   report_augment.json
/// Returns the report.
nlohmann::json run_augment(const RunConfig& cfg);

/// Trains and evaluates a GCN per requested cell and seed from the
/// artifacts of run_augment; writes report_train_eval_<cells>.json.
nlohmann::json run_train_eval(const RunConfig& cfg, const std::vector<std::string>& cells);

struct VerifyOutcome {
  nlohmann::json report;
  bool passed = false;
};

/// Theory checks on self-contained constructions.
VerifyOutcome run_verify(uint64_t seed, int trials = 1000);

/// Graph and split statistics of cfg.dataset_dir.
nlohmann::json run_stats(const RunConfig& cfg);

/// Copy of a report with every "timings" member removed (recursively).
nlohmann::json strip_timings(const nlohmann::json& report);

}  // namespace savetag
