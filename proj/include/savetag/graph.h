#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>

#include "savetag/synthetic.h"
#include "savetag/util.h"

namespace savetag {

class DatasetError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

/// Undirected simple graph whose nodes carry raw text and a class label.
/// Edges are stored once with u < v, sorted and unique.
struct TextGraph {
  std::vector<std::string> texts;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::pair<int, int>> edges;
  int tail_class_count = 0;  // dataset default from meta.json

  size_t node_count() const { return texts.size(); }
  int class_count() const { return static_cast<int>(class_names.size()); }

  /// Sorted adjacency lists.
  std::vector<std::vector<int>> neighbors() const;

  /// Throws DatasetError when any structural invariant is broken.
  void validate() const;

  bool operator==(const TextGraph&) const = default;
};

/// Canonicalizes an edge list: orders endpoints, sorts, removes duplicates.
/// Self-loops are rejected.
std::vector<std::pair<int, int>> canonical_edges(std::vector<std::pair<int, int>> edges);

TextGraph load_dataset(const std::filesystem::path& dir);

/// Writes nodes.jsonl, edges.jsonl and meta.json. When `synthetic` is
/// non-empty a provenance.jsonl sidecar describing the appended nodes is
/// written as well (`original_count` is the id of the first synthetic node).
void write_dataset(const TextGraph& graph, const std::filesystem::path& dir,
                   const std::vector<SyntheticNode>& synthetic = {}, size_t original_count = 0);

enum class TailRule {
  LowestFrequency,  // the tail_class_count least frequent classes
  BelowMedian,      // every class with frequency strictly below the median
};

struct SplitOptions {
  int head_count = 20;
  double imbalance_ratio = 0.1;
  int tail_class_count = 1;
  double val_fraction = 0.25;
  uint64_t seed = 0;
  TailRule tail_rule = TailRule::LowestFrequency;
};

struct LongTailSplit {
  std::vector<int> train_idx;
  std::vector<int> val_idx;
  std::vector<int> test_idx;
  std::vector<int> tail_classes;  // sorted
  int head_count = 20;
  double imbalance_ratio = 1.0;

  int tail_train_count() const;
  bool is_tail(int cls) const;
  bool operator==(const LongTailSplit&) const = default;
};

/// Training nodes per tail class: round(head_count * ratio), at least one.
int tail_train_count(int head_count, double imbalance_ratio);

std::vector<int> select_tail_classes(const TextGraph& graph, int tail_class_count, TailRule rule);

LongTailSplit make_longtail_split(const TextGraph& graph, const SplitOptions& options);

/// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct NormalizedAdjacency {
  SparseMatrix matrix;
};

NormalizedAdjacency normalized_adjacency(size_t node_count,
                                         const std::vector<std::pair<int, int>>& edges);
inline NormalizedAdjacency normalized_adjacency(const TextGraph& graph) {
  return normalized_adjacency(graph.node_count(), graph.edges);
}

/// Appends synthetic nodes (id = node_count + i) and their edges.
TextGraph merge_augmented(const TextGraph& graph, const std::vector<SyntheticNode>& synthetic);

struct GraphStats {
  size_t node_count = 0;
  size_t edge_count = 0;
  int class_count = 0;
  int tail_count = 0;
  double mean_text_length = 0.0;  // in Unicode code points
  size_t train_count = 0;
  size_t val_count = 0;
  size_t test_count = 0;
};

GraphStats graph_stats(const TextGraph& graph, const LongTailSplit& split);

/// Number of UTF-8 code points (continuation bytes are not counted).
size_t utf8_length(const std::string& s);

}  // namespace savetag
