#include "savetag/pipeline.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include "savetag/metrics.h"
#include "savetag/theory.h"

namespace savetag {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* to_string(EdgeStrategy s) {
  switch (s) {
    case EdgeStrategy::Confidence: return "confidence";
    case EdgeStrategy::Duplicate: return "duplicate";
    case EdgeStrategy::None: return "none";
  }
  return "?";
}

EdgeStrategy parse_edge_strategy(const std::string& s) {
  if (s == "confidence") return EdgeStrategy::Confidence;
  if (s == "duplicate") return EdgeStrategy::Duplicate;
  if (s == "none") return EdgeStrategy::None;
  throw Error("unknown edge strategy '" + s + "' (expected confidence, duplicate or none)");
}

// ---------------------------------------------------------------------------
// Configuration

int RunConfig::resolved_edge_factor() const {
  if (edge_factor > 0) return edge_factor;
  std::string key = dataset_name;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  return (key == "photo" || key == "computer" || key == "children") ? 40 : 20;
}

NumericMode RunConfig::resolved_numeric_mode() const {
  auto it = numeric_mode.find(to_string(variant));
  return parse_numeric_mode(it == numeric_mode.end() ? "smote" : it->second);
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw Error(where + ": unknown field '" + key + "'");
  }
}

json http_to_json(const HttpOptions& h) {
  return {{"base_url", h.base_url},
          {"timeout_s", h.timeout_s},
          {"retries", h.retries},
          {"backoff_ms", h.backoff_ms},
          {"api_key_env", h.api_key_env}};
}

void http_from_json(const json& j, HttpOptions& h) {
  h.base_url = j.value("base_url", h.base_url);
  h.timeout_s = j.value("timeout_s", h.timeout_s);
  h.retries = j.value("retries", h.retries);
  h.backoff_ms = j.value("backoff_ms", h.backoff_ms);
  h.api_key_env = j.value("api_key_env", h.api_key_env);
}

const std::set<std::string> kHttpKeys = {"base_url", "timeout_s", "retries", "backoff_ms", "api_key_env"};

std::set<std::string> with_http(std::set<std::string> keys) {
  keys.insert(kHttpKeys.begin(), kHttpKeys.end());
  return keys;
}

json train_to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"learning_rate", t.learning_rate},
          {"dropout", t.dropout},
          {"hidden_dims", t.hidden_dims},
          {"weight_decay", t.weight_decay}};
}

TrainConfig train_from_json(const json& j, TrainConfig t, const std::string& where) {
  check_keys(j, {"epochs", "learning_rate", "dropout", "hidden_dims", "weight_decay"}, where);
  t.epochs = j.value("epochs", t.epochs);
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.dropout = j.value("dropout", t.dropout);
  t.hidden_dims = j.value("hidden_dims", t.hidden_dims);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  if (t.epochs < 1) throw Error(where + ".epochs must be at least 1");
  if (!(t.learning_rate > 0.0)) throw Error(where + ".learning_rate must be positive");
  if (t.dropout < 0.0 || t.dropout >= 1.0) throw Error(where + ".dropout must be in [0, 1)");
  return t;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  check_keys(j,
             {"dataset_dir", "dataset_name", "variant", "knn_k", "head_count", "imbalance_ratio", "tail_class_count",
              "val_fraction", "edge_strategy", "edge_factor", "tau_conf", "encoder", "generator", "classifier",
              "confidence", "seed", "seeds", "output_dir", "numeric_mode", "mixup_alpha"},
             "config");
  RunConfig c;
  if (!j.contains("seed")) throw Error("config: 'seed' is required");
  c.dataset_dir = j.value("dataset_dir", std::string());
  c.dataset_name = j.value("dataset_name", c.dataset_name);
  c.variant = parse_variant(j.value("variant", std::string(to_string(c.variant))));
  c.knn_k = j.value("knn_k", c.knn_k);
  c.head_count = j.value("head_count", c.head_count);
  c.imbalance_ratio = j.value("imbalance_ratio", c.imbalance_ratio);
  c.tail_class_count = j.value("tail_class_count", c.tail_class_count);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.edge_strategy = parse_edge_strategy(j.value("edge_strategy", std::string(to_string(c.edge_strategy))));
  c.edge_factor = j.value("edge_factor", c.edge_factor);
  c.tau_conf = j.value("tau_conf", c.tau_conf);
  c.seed = j.at("seed").get<uint64_t>();
  c.seeds = j.value("seeds", c.seeds);
  c.output_dir = j.value("output_dir", std::string());
  c.numeric_mode = j.value("numeric_mode", c.numeric_mode);
  c.mixup_alpha = j.value("mixup_alpha", c.mixup_alpha);

  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    check_keys(e, with_http({"kind", "dim", "model", "batch_size"}), "config.encoder");
    const std::string kind = e.value("kind", std::string("hash"));
    if (kind == "hash") {
      c.encoder.kind = EncoderKind::Hashing;
    } else if (kind == "remote") {
      c.encoder.kind = EncoderKind::Remote;
    } else {
      throw Error("config.encoder.kind must be hash or remote");
    }
    c.encoder.dim = e.value("dim", c.encoder.dim);
    c.encoder.model = e.value("model", c.encoder.model);
    c.encoder.batch_size = e.value("batch_size", c.encoder.batch_size);
    http_from_json(e, c.encoder.http);
  }
  if (j.contains("generator")) {
    const auto& g = j["generator"];
    check_keys(g, with_http({"kind", "temperature", "model", "max_tokens", "seed", "max_in_flight", "parse_mode"}),
               "config.generator");
    const std::string kind = g.value("kind", std::string("mock"));
    if (kind == "mock") {
      c.generator.kind = GeneratorKind::Mock;
    } else if (kind == "remote") {
      c.generator.kind = GeneratorKind::Remote;
    } else {
      throw Error("config.generator.kind must be mock or remote");
    }
    c.generator.temperature = g.value("temperature", c.generator.temperature);
    c.generator.model = g.value("model", c.generator.model);
    c.generator.max_tokens = g.value("max_tokens", c.generator.max_tokens);
    c.generator.seed = g.value("seed", c.generator.seed);
    c.generator.max_in_flight = g.value("max_in_flight", c.generator.max_in_flight);
    const std::string mode = g.value("parse_mode", std::string("lenient"));
    if (mode != "lenient" && mode != "strict") throw Error("config.generator.parse_mode must be lenient or strict");
    c.generator.parse_mode = mode == "strict" ? ParseMode::Strict : ParseMode::Lenient;
    http_from_json(g, c.generator.http);
  }
  if (j.contains("classifier")) c.classifier = train_from_json(j["classifier"], c.classifier, "config.classifier");
  if (j.contains("confidence")) c.confidence = train_from_json(j["confidence"], c.confidence, "config.confidence");

  if (c.knn_k < 1) throw Error("config.knn_k must be at least 1");
  if (c.head_count < 1) throw Error("config.head_count must be at least 1");
  if (!(c.imbalance_ratio > 0.0 && c.imbalance_ratio <= 1.0)) throw Error("config.imbalance_ratio must be in (0, 1]");
  if (!(c.tau_conf >= 0.0 && c.tau_conf < 1.0)) throw Error("config.tau_conf must be in [0, 1)");
  if (c.edge_factor == 0) throw Error("config.edge_factor must be at least 1");
  if (c.seeds.empty()) throw Error("config.seeds must not be empty");
  for (const auto& [v, mode] : c.numeric_mode) {
    parse_variant(v);
    parse_numeric_mode(mode);
  }
  return c;
}

json run_config_to_json(const RunConfig& c) {
  json enc = http_to_json(c.encoder.http);
  enc["kind"] = c.encoder.kind == EncoderKind::Hashing ? "hash" : "remote";
  enc["dim"] = c.encoder.dim;
  enc["model"] = c.encoder.model;
  enc["batch_size"] = c.encoder.batch_size;
  json gen = http_to_json(c.generator.http);
  gen["kind"] = c.generator.kind == GeneratorKind::Mock ? "mock" : "remote";
  gen["temperature"] = c.generator.temperature;
  gen["model"] = c.generator.model;
  gen["max_tokens"] = c.generator.max_tokens;
  gen["seed"] = c.generator.seed;
  gen["max_in_flight"] = c.generator.max_in_flight;
  gen["parse_mode"] = c.generator.parse_mode == ParseMode::Strict ? "strict" : "lenient";
  return {{"dataset_dir", c.dataset_dir.string()},
          {"dataset_name", c.dataset_name},
          {"variant", to_string(c.variant)},
          {"knn_k", c.knn_k},
          {"head_count", c.head_count},
          {"imbalance_ratio", c.imbalance_ratio},
          {"tail_class_count", c.tail_class_count},
          {"val_fraction", c.val_fraction},
          {"edge_strategy", to_string(c.edge_strategy)},
          {"edge_factor", c.edge_factor},
          {"tau_conf", c.tau_conf},
          {"encoder", enc},
          {"generator", gen},
          {"classifier", train_to_json(c.classifier)},
          {"confidence", train_to_json(c.confidence)},
          {"seed", c.seed},
          {"seeds", c.seeds},
          {"output_dir", c.output_dir.string()},
          {"numeric_mode", c.numeric_mode},
          {"mixup_alpha", c.mixup_alpha}};
}

std::string RunConfig::digest() const {
  json j = run_config_to_json(*this);
  j.erase("dataset_dir");
  j.erase("output_dir");
  j["encoder"].erase("api_key_env");
  j["generator"].erase("api_key_env");
  j["generator"].erase("max_in_flight");
  return sha256_hex(j.dump());
}

RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace {

class StageClock {
 public:
  template <typename F>
  auto run(const std::string& stage, F&& fn) {
    const auto start = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        record(stage, start);
      } else {
        auto out = fn();
        record(stage, start);
        return out;
      }
    } catch (const std::exception& e) {
      throw Error("stage " + stage + ": " + e.what());
    }
  }
  const json& timings() const { return timings_; }

 private:
  void record(const std::string& stage, std::chrono::steady_clock::time_point start) {
    timings_[stage + "_s"] =
        round_to(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 3);
  }
  json timings_ = json::object();
};

double r4(double x) { return round_to(x, 4); }

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != cols) throw Error("feature row has the wrong width");
    for (Eigen::Index j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), j) = rows[i][j].get<double>();
  }
  return m;
}

std::string dataset_digest(const fs::path& dir) {
  std::string all;
  for (const char* name : {"nodes.jsonl", "edges.jsonl", "meta.json"}) all += sha256_hex(read_file(dir / name));
  return sha256_hex(all);
}

json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw Error("missing artifact " + path.string());
  return json::parse(read_file(path));
}

struct Cell {
  std::string name;
  std::vector<SyntheticNode> nodes;  // edges filled
};

json quality_block(const Eigen::MatrixXd& rows, const std::vector<int>& labels, const ManifoldIndex& reference,
                   const ClassCentroids& centroids, const ClassifierModel& probe, int k) {
  if (rows.rows() == 0) return json{{"count", 0}};
  return {{"count", rows.rows()},
          {"bcr", r4(bcr(rows, labels, reference, k))},
          {"bps", r4(bps(rows, labels, centroids))},
          {"icr", r4(icr(rows, labels, probe))}};
}

Eigen::MatrixXd synthetic_rows(const std::vector<SyntheticNode>& nodes, Eigen::Index dim) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(nodes.size()), dim);
  for (size_t i = 0; i < nodes.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(nodes[i].embedding.data(), dim);
  }
  return m;
}

}  // namespace

json strip_timings(const json& report) {
  if (report.is_object()) {
    json out = json::object();
    for (const auto& [k, v] : report.items()) {
      if (k != "timings") out[k] = strip_timings(v);
    }
    return out;
  }
  if (report.is_array()) {
    json out = json::array();
    for (const auto& v : report) out.push_back(strip_timings(v));
    return out;
  }
  return report;
}

// ---------------------------------------------------------------------------
// augment

json run_augment(const RunConfig& cfg) {
  if (cfg.output_dir.empty()) throw Error("output_dir is required");
  StageClock clock;
  const fs::path out = cfg.output_dir;

  const TextGraph graph = clock.run("load", [&] { return load_dataset(cfg.dataset_dir); });
  const int n = static_cast<int>(graph.node_count());
  const int c = graph.class_count();

  const LongTailSplit split = clock.run("split", [&] {
    SplitOptions so;
    so.head_count = cfg.head_count;
    so.imbalance_ratio = cfg.imbalance_ratio;
    so.tail_class_count = cfg.tail_class_count >= 0 ? cfg.tail_class_count : std::max(1, graph.tail_class_count);
    so.val_fraction = cfg.val_fraction;
    so.seed = cfg.seed;
    return make_longtail_split(graph, so);
  });

  const EmbeddingMatrix emb = clock.run("encode", [&] { return encode(graph.texts, cfg.encoder); });

  const auto targets = default_synthetic_targets(split, graph.labels);
  const auto pairs = clock.run("twins", [&] {
    return find_vicinal_twins(split, emb, graph.labels, cfg.knn_k, targets, twin_scope_for(cfg.variant));
  });

  GeneratorConfig gen_cfg = cfg.generator;
  if (gen_cfg.kind == GeneratorKind::Mock && gen_cfg.seed == 0) gen_cfg.seed = cfg.seed;
  GenerationResult gen = clock.run("generate", [&] {
    GenerationInputs inputs{&graph.texts, &graph.labels, &graph.class_names};
    return generate_interpolations(pairs, cfg.variant, gen_cfg, prompt_spec_for(cfg.dataset_name), inputs,
                                   out / "gen_cache.jsonl");
  });

  clock.run("encode_synthetic", [&] {
    std::vector<std::string> texts;
    for (const auto& s : gen.nodes) texts.push_back(s.text);
    if (texts.empty()) return;
    const auto se = encode(texts, cfg.encoder);
    for (size_t i = 0; i < gen.nodes.size(); ++i) {
      const Eigen::RowVectorXd row = se.rows.row(static_cast<Eigen::Index>(i));
      gen.nodes[i].embedding.assign(row.data(), row.data() + row.size());
    }
  });

  TrainConfig conf_cfg = cfg.confidence;
  conf_cfg.seed = mix64(cfg.seed, 0x636f6e66ULL);
  const ConfidenceNet conf =
      clock.run("confidence", [&] { return train_confidence(emb, graph.labels, split.train_idx, c, conf_cfg); });

  // Numeric counterparts use the same pairs as the generated nodes.
  std::vector<VicinalPair> used_pairs;
  for (size_t i : gen.pair_index) used_pairs.push_back(pairs[i]);
  const NumericMode num_mode = cfg.resolved_numeric_mode();
  std::vector<SyntheticNode> numeric = clock.run("numeric", [&] {
    const auto ns = numeric_augment(emb, graph.labels, used_pairs, num_mode, c, cfg.seed, cfg.mixup_alpha);
    std::vector<SyntheticNode> nodes;
    for (size_t i = 0; i < used_pairs.size(); ++i) {
      SyntheticNode s;
      s.label = ns.labels[i];
      s.provenance = {std::string("num:") + to_string(num_mode), ns.anchors[i], ns.partners[i], "", ""};
      const Eigen::RowVectorXd row = ns.rows.row(static_cast<Eigen::Index>(i));
      s.embedding.assign(row.data(), row.data() + row.size());
      nodes.push_back(std::move(s));
    }
    return nodes;
  });

  EdgeAssignConfig edge_cfg;
  edge_cfg.factor = cfg.resolved_edge_factor();
  edge_cfg.threshold = cfg.tau_conf;
  const auto adjacency = graph.neighbors();
  auto with_duplicates = [&](std::vector<SyntheticNode> nodes) {
    for (auto& s : nodes) {
      s.edges = duplicate_edges(s.provenance.anchor, adjacency);
      s.isolated = s.edges.empty();
    }
    return nodes;
  };
  auto without_edges = [](std::vector<SyntheticNode> nodes) {
    for (auto& s : nodes) {
      s.edges.clear();
      s.isolated = true;
    }
    return nodes;
  };

  EdgeAssignSummary llm_summary, num_summary;
  std::vector<Cell> cells = clock.run("edges", [&] {
    std::vector<Cell> cs;
    cs.push_back({"origin", {}});
    cs.push_back({"num", with_duplicates(numeric)});
    cs.push_back({"num_C", assign_edges(numeric, graph, emb, conf, edge_cfg, &num_summary)});
    cs.push_back({"llm", with_duplicates(gen.nodes)});
    cs.push_back({"llm_C", assign_edges(gen.nodes, graph, emb, conf, edge_cfg, &llm_summary)});
    return cs;
  });

  std::vector<SyntheticNode> final_nodes;
  switch (cfg.edge_strategy) {
    case EdgeStrategy::Confidence: final_nodes = cells[4].nodes; break;
    case EdgeStrategy::Duplicate: final_nodes = cells[3].nodes; break;
    case EdgeStrategy::None: final_nodes = without_edges(gen.nodes); break;
  }
  const TextGraph augmented = merge_augmented(graph, final_nodes);

  json quality;
  clock.run("quality", [&] {
    std::vector<int> all(static_cast<size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    const auto reference = ManifoldIndex::build(emb.rows, graph.labels, all, c);
    const auto centroids = class_centroids(emb, graph.labels, all, c);
    TrainConfig probe_cfg = TrainConfig::mlp_defaults();
    probe_cfg.seed = mix64(cfg.seed, 0x70726f6265ULL);
    const auto probe = train_balanced_probe(emb.rows, graph.labels, all, c, probe_cfg);
    std::vector<int> llm_labels, num_labels;
    for (const auto& s : gen.nodes) llm_labels.push_back(s.label);
    for (const auto& s : numeric) num_labels.push_back(s.label);
    quality["llm"] = quality_block(synthetic_rows(gen.nodes, emb.dim()), llm_labels, reference, centroids, probe,
                                   cfg.knn_k);
    quality["num"] = quality_block(synthetic_rows(numeric, emb.dim()), num_labels, reference, centroids, probe,
                                   cfg.knn_k);
    quality["bps_direction"] = "d_in/d_out";
  });

  clock.run("persist", [&] {
    write_dataset(augmented, out / "dataset", final_nodes, graph.node_count());
    json sp = {{"train_idx", split.train_idx},
               {"val_idx", split.val_idx},
               {"test_idx", split.test_idx},
               {"tail_classes", split.tail_classes},
               {"head_count", split.head_count},
               {"imbalance_ratio", split.imbalance_ratio},
               {"class_count", c},
               {"labels", graph.labels}};
    write_file(out / "split.json", sp.dump() + "\n");
    json e = {{"encoder_id", emb.encoder_id}, {"dim", emb.dim()}, {"rows", matrix_to_json(emb.rows)}};
    write_file(out / "embeddings.json", e.dump() + "\n");
    for (const auto& cell : cells) {
      std::vector<int> labels;
      for (const auto& s : cell.nodes) labels.push_back(s.label);
      const TextGraph g = merge_augmented(graph, cell.nodes);
      json edges = json::array();
      for (const auto& [u, v] : g.edges) edges.push_back({u, v});
      json cj = {{"cell", cell.name},
                 {"synthetic_labels", labels},
                 {"synthetic_features", matrix_to_json(synthetic_rows(cell.nodes, emb.dim()))},
                 {"edges", edges}};
      write_file(out / "cells" / (cell.name + ".json"), cj.dump() + "\n");
    }
  });

  auto summary_json = [](const EdgeAssignSummary& s) {
    json q = json::array();
    for (double x : s.score_quantiles) q.push_back(r4(x));
    return json{{"k_edge", s.k_edge}, {"edges_added", s.edges_added}, {"isolated", s.isolated},
                {"score_quantiles", q}};
  };

  json skipped = json::array();
  for (const auto& s : gen.skipped) {
    skipped.push_back({{"pair", s.pair_index},
                       {"anchor", pairs[s.pair_index].anchor},
                       {"partner", pairs[s.pair_index].partner},
                       {"reason", s.reason}});
  }
  json target_json = json::object();
  for (const auto& [cls, count] : targets) target_json[std::to_string(cls)] = count;
  const auto stats = graph_stats(graph, split);

  json cell_json = json::object();
  for (const auto& cell : cells) {
    size_t edges = 0, isolated = 0;
    for (const auto& s : cell.nodes) {
      edges += s.edges.size();
      isolated += s.edges.empty();
    }
    cell_json[cell.name] = {{"synthetic", cell.nodes.size()}, {"edges_added", edges}, {"isolated", isolated}};
  }
  const Eigen::VectorXd kappa = conf.kappa(emb.rows);

  json config = run_config_to_json(cfg);
  config.erase("dataset_dir");
  config.erase("output_dir");
  json report = {
      {"tool_version", kToolVersion},
      {"config_digest", cfg.digest()},
      {"dataset_digest", dataset_digest(cfg.dataset_dir)},
      {"seed", cfg.seed},
      {"config", config},
      {"graph",
       {{"nodes", stats.node_count},
        {"edges", stats.edge_count},
        {"classes", stats.class_count},
        {"mean_text_length", r4(stats.mean_text_length)}}},
      {"split",
       {{"train", stats.train_count},
        {"val", stats.val_count},
        {"test", stats.test_count},
        {"tail_classes", split.tail_classes},
        {"tail_train_count", split.tail_train_count()}}},
      {"encoder_id", emb.encoder_id},
      {"generation",
       {{"generator", make_generator(gen_cfg)->id()},
        {"targets", target_json},
        {"pairs", pairs.size()},
        {"generated", gen.nodes.size()},
        {"skipped", skipped},
        {"cache_hits", gen.cache_hits},
        {"generator_calls", gen.generator_calls}}},
      {"confidence",
       {{"final_loss", r4(conf.model.loss_history.back())},
        {"mean_kappa", r4(kappa.mean())},
        {"config_digest", conf.model.config_digest}}},
      {"edge_assignment", summary_json(llm_summary)},
      {"numeric", {{"mode", to_string(num_mode)}, {"edge_assignment", summary_json(num_summary)}}},
      {"cells", cell_json},
      {"synthetic_quality", quality},
      {"augmented",
       {{"nodes", augmented.node_count()},
        {"edges", augmented.edges.size()},
        {"edge_strategy", to_string(cfg.edge_strategy)}}},
      {"timings", clock.timings()}};
  write_file(out / "report_augment.json", report.dump(2) + "\n");
  return report;
}

// ---------------------------------------------------------------------------
// train-eval

json run_train_eval(const RunConfig& cfg, const std::vector<std::string>& cells) {
  if (cfg.output_dir.empty()) throw Error("output_dir is required");
  if (cells.empty()) throw Error("no cells requested");
  for (const auto& cell : cells) {
    if (std::find(kAllCells.begin(), kAllCells.end(), cell) == kAllCells.end()) {
      throw Error("unknown cell '" + cell + "'");
    }
  }
  StageClock clock;
  const fs::path out = cfg.output_dir;
  const json sp = clock.run("load_split", [&] { return read_json(out / "split.json"); });
  const json ej = clock.run("load_embeddings", [&] { return read_json(out / "embeddings.json"); });
  const auto labels = sp.at("labels").get<std::vector<int>>();
  const auto train_idx = sp.at("train_idx").get<std::vector<int>>();
  const auto test_idx = sp.at("test_idx").get<std::vector<int>>();
  const auto tail_classes = sp.at("tail_classes").get<std::vector<int>>();
  const int c = sp.at("class_count").get<int>();
  const Eigen::Index dim = ej.at("dim").get<Eigen::Index>();
  const Eigen::MatrixXd original = matrix_from_json(ej.at("rows"), dim);
  const int n = static_cast<int>(original.rows());

  json cells_json = json::object();
  for (const auto& name : cells) {
    const json cj = clock.run("load_" + name, [&] { return read_json(out / "cells" / (name + ".json")); });
    const auto syn_labels = cj.at("synthetic_labels").get<std::vector<int>>();
    const Eigen::MatrixXd syn = matrix_from_json(cj.at("synthetic_features"), dim);
    const int m = static_cast<int>(syn_labels.size());

    Eigen::MatrixXd x(n + m, dim);
    x.topRows(n) = original;
    if (m > 0) x.bottomRows(m) = syn;
    std::vector<int> all_labels = labels;
    all_labels.insert(all_labels.end(), syn_labels.begin(), syn_labels.end());
    std::vector<int> train = train_idx;
    for (int i = 0; i < m; ++i) train.push_back(n + i);
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : cj.at("edges")) edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    const auto adj = normalized_adjacency(static_cast<size_t>(n + m), edges);

    std::map<std::string, std::vector<double>> values;
    std::vector<double> final_losses;
    std::vector<double> recall_sum(static_cast<size_t>(c), 0.0);
    clock.run("train_" + name, [&] {
      for (uint64_t seed : cfg.seeds) {
        TrainConfig tc = cfg.classifier;
        tc.seed = seed;
        const auto model = train_classifier(x, &adj.matrix, all_labels, train, c, tc);
        const auto pred = predict(model, x, &adj.matrix);
        const auto metrics = classification_metrics(confusion_matrix(all_labels, pred.labels, test_idx, c));
        values["acc"].push_back(metrics.acc);
        values["bacc"].push_back(metrics.bacc);
        values["macro_f1"].push_back(metrics.macro_f1);
        values["gmean"].push_back(metrics.gmean);
        values["head_tail_gap"].push_back(head_tail_gap(metrics, tail_classes));
        for (int k = 0; k < c; ++k) recall_sum[static_cast<size_t>(k)] += metrics.recall[k];
        final_losses.push_back(model.loss_history.back());
      }
    });
    json metrics = json::object();
    for (const auto& [key, v] : values) {
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      double var = 0.0;
      for (double x_i : v) var += (x_i - mean) * (x_i - mean);
      const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
      json rounded = json::array();
      for (double x_i : v) rounded.push_back(r4(x_i));
      metrics[key] = {{"mean", r4(mean)}, {"std", r4(sd)}, {"values", rounded}};
    }
    json recalls = json::array();
    for (double r : recall_sum) recalls.push_back(r4(r / static_cast<double>(cfg.seeds.size())));
    json losses = json::array();
    for (double l : final_losses) losses.push_back(r4(l));
    cells_json[name] = {{"nodes", n + m},
                        {"edges", edges.size()},
                        {"synthetic", m},
                        {"train_count", train.size()},
                        {"final_loss", losses},
                        {"per_class_recall", recalls},
                        {"metrics", metrics}};
  }

  std::string grid;
  for (const auto& cell : cells) grid += (grid.empty() ? "" : "-") + cell;
  json report = {{"tool_version", kToolVersion},
                 {"config_digest", cfg.digest()},
                 {"classifier_digest", cfg.classifier.digest()},
                 {"seeds", cfg.seeds},
                 {"grid", cells},
                 {"split",
                  {{"train", train_idx.size()},
                   {"val", sp.at("val_idx").size()},
                   {"test", test_idx.size()},
                   {"tail_classes", tail_classes}}},
                 {"cells", cells_json},
                 {"timings", clock.timings()}};
  write_file(out / ("report_train_eval_" + grid + ".json"), report.dump(2) + "\n");
  return report;
}

// ---------------------------------------------------------------------------
// verify

VerifyOutcome run_verify(uint64_t seed, int trials) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<CheckResult> checks;
  checks.push_back(check_gradients(false, 20, mix64(seed, 1)));
  checks.push_back(check_gradients(true, 20, mix64(seed, 2)));
  checks.push_back(check_isolation(trials / 10, mix64(seed, 3)));
  auto self_only = check_isolation(trials / 10, mix64(seed, 4), 1.0);
  self_only.name = "isolation_alpha1";
  checks.push_back(self_only);
  checks.push_back(check_gcn_isolation(trials / 10, mix64(seed, 5)));
  checks.push_back(check_contraction(trials, mix64(seed, 6)));
  checks.push_back(check_margin_corner(trials, mix64(seed, 7)));
  checks.push_back(check_margin_sets(trials, mix64(seed, 8), true));
  checks.push_back(check_margin_sets(trials, mix64(seed, 8), false));

  // Negative control: unnormalized beta far from the origin must be caught.
  const auto control = check_contraction(trials, mix64(seed, 9), {false, 100.0});

  VerifyOutcome outcome;
  outcome.passed = true;
  json list = json::array();
  for (const auto& c : checks) {
    outcome.passed = outcome.passed && c.passed;
    list.push_back({{"name", c.name},
                    {"passed", c.passed},
                    {"trials", c.trials},
                    {"failures", c.failures},
                    {"worst", c.worst},
                    {"detail", c.detail}});
  }
  const bool control_ok = !control.passed;
  outcome.passed = outcome.passed && control_ok;
  list.push_back({{"name", "contraction_negative_control"},
                  {"passed", control_ok},
                  {"trials", control.trials},
                  {"failures", control.failures},
                  {"worst", control.worst},
                  {"detail", "unnormalized neighbor weights must violate the inequality"}});
  outcome.report = {{"tool_version", kToolVersion},
                    {"seed", seed},
                    {"checks", list},
                    {"passed", outcome.passed},
                    {"timings",
                     {{"total_s", round_to(std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                                               .count(),
                                           3)}}}};
  return outcome;
}

// ---------------------------------------------------------------------------
// stats

json run_stats(const RunConfig& cfg) {
  const TextGraph graph = load_dataset(cfg.dataset_dir);
  SplitOptions so;
  so.head_count = cfg.head_count;
  so.imbalance_ratio = cfg.imbalance_ratio;
  so.tail_class_count = cfg.tail_class_count >= 0 ? cfg.tail_class_count : std::max(1, graph.tail_class_count);
  so.val_fraction = cfg.val_fraction;
  so.seed = cfg.seed;
  const auto split = make_longtail_split(graph, so);
  const auto st = graph_stats(graph, split);
  std::vector<int> counts(static_cast<size_t>(graph.class_count()), 0);
  for (int y : graph.labels) ++counts[y];
  json classes = json::array();
  for (int k = 0; k < graph.class_count(); ++k) {
    classes.push_back({{"id", k}, {"name", graph.class_names[k]}, {"count", counts[k]}, {"tail", split.is_tail(k)}});
  }
  return {{"nodes", st.node_count},
          {"edges", st.edge_count},
          {"classes", st.class_count},
          {"tail_classes", st.tail_count},
          {"mean_text_length", r4(st.mean_text_length)},
          {"train", st.train_count},
          {"val", st.val_count},
          {"test", st.test_count},
          {"class_counts", classes}};
}

}  // namespace savetag
