#include "savetag/graph.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace savetag {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail_at(const std::string& file, size_t line, const std::string& what) {
  throw DatasetError(file + ":" + std::to_string(line) + ": " + what);
}

std::string require_file(const fs::path& dir, const char* name) {
  const fs::path p = dir / name;
  if (!fs::exists(p)) throw DatasetError("missing file " + p.string());
  return read_file(p);
}

int json_int(const json& obj, const char* key, const std::string& file, size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number_integer()) {
    fail_at(file, line, std::string("field \"") + key + "\" missing or not an integer");
  }
  return it->get<int>();
}

}  // namespace

std::vector<std::vector<int>> TextGraph::neighbors() const {
  std::vector<std::vector<int>> adj(node_count());
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  return adj;
}

void TextGraph::validate() const {
  if (labels.size() != texts.size()) throw DatasetError("labels and texts differ in length");
  const int c = class_count();
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= c) {
      throw DatasetError("node " + std::to_string(i) + ": label out of range");
    }
  }
  const int n = static_cast<int>(node_count());
  for (size_t i = 0; i < edges.size(); ++i) {
    const auto [u, v] = edges[i];
    if (u < 0 || v >= n || u >= v) throw DatasetError("edge " + std::to_string(i) + " is not canonical");
    if (i > 0 && edges[i - 1] >= edges[i]) throw DatasetError("edge list not sorted and unique");
  }
}

std::vector<std::pair<int, int>> canonical_edges(std::vector<std::pair<int, int>> edges) {
  for (auto& [u, v] : edges) {
    if (u == v) throw DatasetError("self-loop on node " + std::to_string(u));
    if (u > v) std::swap(u, v);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

TextGraph load_dataset(const fs::path& dir) {
  TextGraph g;

  const std::string meta_text = require_file(dir, "meta.json");
  json meta;
  try {
    meta = json::parse(meta_text);
  } catch (const json::exception& e) {
    throw DatasetError("meta.json: " + std::string(e.what()));
  }
  if (!meta.contains("class_names") || !meta["class_names"].is_array()) {
    throw DatasetError("meta.json: class_names missing");
  }
  g.class_names = meta["class_names"].get<std::vector<std::string>>();
  g.tail_class_count = meta.value("tail_class_count", 0);
  const int c = g.class_count();

  const std::string nodes_text = require_file(dir, "nodes.jsonl");
  size_t line_no = 0;
  for (const auto& line : split_lines(nodes_text)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      fail_at("nodes.jsonl", line_no, e.what());
    }
    const int id = json_int(obj, "id", "nodes.jsonl", line_no);
    const int label = json_int(obj, "label", "nodes.jsonl", line_no);
    if (!obj.contains("text") || !obj["text"].is_string()) fail_at("nodes.jsonl", line_no, "text missing");
    const int expected = static_cast<int>(g.texts.size());
    if (id >= 0 && id < expected) fail_at("nodes.jsonl", line_no, "duplicate node id " + std::to_string(id));
    if (id != expected) {
      fail_at("nodes.jsonl", line_no,
              "non-contiguous ids: expected " + std::to_string(expected) + ", got " + std::to_string(id));
    }
    if (label < 0 || label >= c) fail_at("nodes.jsonl", line_no, "label out of range");
    g.texts.push_back(obj["text"].get<std::string>());
    g.labels.push_back(label);
  }

  const std::string edges_text = require_file(dir, "edges.jsonl");
  const int n = static_cast<int>(g.node_count());
  std::vector<std::pair<int, int>> raw;
  line_no = 0;
  for (const auto& line : split_lines(edges_text)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      fail_at("edges.jsonl", line_no, e.what());
    }
    const int src = json_int(obj, "src", "edges.jsonl", line_no);
    const int dst = json_int(obj, "dst", "edges.jsonl", line_no);
    if (src < 0 || src >= n || dst < 0 || dst >= n) fail_at("edges.jsonl", line_no, "edge endpoint out of range");
    if (src == dst) fail_at("edges.jsonl", line_no, "self-loop");
    raw.emplace_back(src, dst);
  }
  g.edges = canonical_edges(std::move(raw));
  return g;
}

void write_dataset(const TextGraph& graph, const fs::path& dir,
                   const std::vector<SyntheticNode>& synthetic, size_t original_count) {
  graph.validate();
  fs::create_directories(dir);
  std::string nodes;
  for (size_t i = 0; i < graph.node_count(); ++i) {
    json obj = {{"id", i}, {"text", graph.texts[i]}, {"label", graph.labels[i]}};
    nodes += obj.dump(-1, ' ', false) + "\n";
  }
  write_file(dir / "nodes.jsonl", nodes);

  std::string edges;
  for (const auto& [u, v] : graph.edges) edges += json{{"src", u}, {"dst", v}}.dump() + "\n";
  write_file(dir / "edges.jsonl", edges);

  json meta = {{"class_names", graph.class_names}, {"tail_class_count", graph.tail_class_count}};
  write_file(dir / "meta.json", meta.dump(2) + "\n");

  if (!synthetic.empty()) {
    std::string prov;
    for (size_t i = 0; i < synthetic.size(); ++i) {
      const auto& s = synthetic[i];
      json obj = {{"id", original_count + i},
                  {"label", s.label},
                  {"variant", s.provenance.variant},
                  {"anchor", s.provenance.anchor},
                  {"partner", s.provenance.partner},
                  {"generator", s.provenance.generator_id},
                  {"cache_key", s.provenance.cache_key},
                  {"edges", s.edges.size()},
                  {"isolated", s.isolated}};
      prov += obj.dump() + "\n";
    }
    write_file(dir / "provenance.jsonl", prov);
  }
}

int LongTailSplit::tail_train_count() const { return savetag::tail_train_count(head_count, imbalance_ratio); }

bool LongTailSplit::is_tail(int cls) const {
  return std::binary_search(tail_classes.begin(), tail_classes.end(), cls);
}

int tail_train_count(int head_count, double imbalance_ratio) {
  return std::max(1, static_cast<int>(std::lround(head_count * imbalance_ratio)));
}

std::vector<int> select_tail_classes(const TextGraph& graph, int tail_class_count, TailRule rule) {
  const int c = graph.class_count();
  std::vector<size_t> freq(c, 0);
  for (int y : graph.labels) ++freq[y];

  std::vector<int> tail;
  if (rule == TailRule::BelowMedian) {
    std::vector<size_t> sorted = freq;
    std::sort(sorted.begin(), sorted.end());
    const double median = c == 0 ? 0.0
                          : (c % 2 == 1) ? static_cast<double>(sorted[c / 2])
                                         : 0.5 * static_cast<double>(sorted[c / 2 - 1] + sorted[c / 2]);
    for (int k = 0; k < c; ++k) {
      if (static_cast<double>(freq[k]) < median) tail.push_back(k);
    }
    return tail;
  }

  if (tail_class_count < 0 || tail_class_count >= c) {
    throw SplitError("tail_class_count must be in [0, " + std::to_string(c) + "), got " +
                     std::to_string(tail_class_count));
  }
  std::vector<int> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return freq[a] < freq[b]; });
  tail.assign(order.begin(), order.begin() + tail_class_count);
  std::sort(tail.begin(), tail.end());
  return tail;
}

LongTailSplit make_longtail_split(const TextGraph& graph, const SplitOptions& options) {
  if (!(options.imbalance_ratio > 0.0 && options.imbalance_ratio <= 1.0)) {
    throw SplitError("imbalance_ratio must lie in (0, 1]");
  }
  if (options.head_count < 1) throw SplitError("head_count must be positive");
  if (!(options.val_fraction >= 0.0 && options.val_fraction <= 1.0)) {
    throw SplitError("val_fraction must lie in [0, 1]");
  }

  LongTailSplit split;
  split.head_count = options.head_count;
  split.imbalance_ratio = options.imbalance_ratio;
  split.tail_classes = select_tail_classes(graph, options.tail_class_count, options.tail_rule);

  const int c = graph.class_count();
  std::vector<std::vector<int>> members(c);
  for (size_t i = 0; i < graph.node_count(); ++i) members[graph.labels[i]].push_back(static_cast<int>(i));

  const int tail_count = split.tail_train_count();
  for (int k = 0; k < c; ++k) {
    const int need = split.is_tail(k) ? tail_count : options.head_count;
    auto& m = members[k];
    if (static_cast<int>(m.size()) < need + 2) {
      throw SplitError("class " + std::to_string(k) + " (" + graph.class_names[k] + ") has " +
                       std::to_string(m.size()) + " nodes; needs " + std::to_string(need) +
                       " training plus one validation and one test node");
    }
    Rng rng(mix64(options.seed, static_cast<uint64_t>(k)));
    rng.shuffle(m);
    const int rest = static_cast<int>(m.size()) - need;
    int val = static_cast<int>(std::lround(options.val_fraction * rest));
    val = std::clamp(val, 1, rest - 1);
    split.train_idx.insert(split.train_idx.end(), m.begin(), m.begin() + need);
    split.val_idx.insert(split.val_idx.end(), m.begin() + need, m.begin() + need + val);
    split.test_idx.insert(split.test_idx.end(), m.begin() + need + val, m.end());
  }
  std::sort(split.train_idx.begin(), split.train_idx.end());
  std::sort(split.val_idx.begin(), split.val_idx.end());
  std::sort(split.test_idx.begin(), split.test_idx.end());
  return split;
}

NormalizedAdjacency normalized_adjacency(size_t node_count, const std::vector<std::pair<int, int>>& edges) {
  const auto n = static_cast<Eigen::Index>(node_count);
  std::vector<double> degree(node_count, 1.0);
  for (const auto& [u, v] : edges) {
    degree[u] += 1.0;
    degree[v] += 1.0;
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(node_count + 2 * edges.size());
  for (size_t i = 0; i < node_count; ++i) {
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0 / degree[i]);
  }
  for (const auto& [u, v] : edges) {
    const double w = 1.0 / std::sqrt(degree[u] * degree[v]);
    triplets.emplace_back(u, v, w);
    triplets.emplace_back(v, u, w);
  }
  NormalizedAdjacency out;
  out.matrix.resize(n, n);
  out.matrix.setFromTriplets(triplets.begin(), triplets.end());
  out.matrix.makeCompressed();
  return out;
}

TextGraph merge_augmented(const TextGraph& graph, const std::vector<SyntheticNode>& synthetic) {
  TextGraph out = graph;
  const int n = static_cast<int>(graph.node_count());
  std::vector<std::pair<int, int>> edges = graph.edges;
  for (size_t i = 0; i < synthetic.size(); ++i) {
    const int id = n + static_cast<int>(i);
    const auto& s = synthetic[i];
    if (s.label < 0 || s.label >= graph.class_count()) {
      throw DatasetError("synthetic node " + std::to_string(i) + ": label out of range");
    }
    for (const auto& e : s.edges) {
      if (e.target < 0 || e.target >= id) {
        throw DatasetError("synthetic node " + std::to_string(i) + ": edge to unknown id " +
                           std::to_string(e.target));
      }
      edges.emplace_back(e.target, id);
    }
    out.texts.push_back(s.text);
    out.labels.push_back(s.label);
  }
  out.edges = canonical_edges(std::move(edges));
  return out;
}

size_t utf8_length(const std::string& s) {
  size_t count = 0;
  for (unsigned char ch : s) {
    if ((ch & 0xC0) != 0x80) ++count;
  }
  return count;
}

GraphStats graph_stats(const TextGraph& graph, const LongTailSplit& split) {
  GraphStats st;
  st.node_count = graph.node_count();
  st.edge_count = graph.edges.size();
  st.class_count = graph.class_count();
  st.tail_count = static_cast<int>(split.tail_classes.size());
  st.train_count = split.train_idx.size();
  st.val_count = split.val_idx.size();
  st.test_count = split.test_idx.size();
  if (st.node_count > 0) {
    size_t total = 0;
    for (const auto& t : graph.texts) total += utf8_length(t);
    st.mean_text_length = static_cast<double>(total) / static_cast<double>(st.node_count);
  }
  return st;
}

}  // namespace savetag
