#pragma once

#include <string>
#include <vector>

namespace savetag {

/// Interpolation prompt strategies: single seed (O), same-class pair (S),
/// mixed-class pair (M).
enum class Variant { O, S, M };

const char* to_string(Variant v);
Variant parse_variant(const std::string& s);

struct Provenance {
  std::string variant;  // "O", "S", "M", or "num:<mode>" for numeric rows
  int anchor = -1;
  int partner = -1;
  std::string generator_id;
  std::string cache_key;
};

struct SyntheticEdge {
  int target = -1;  // original node id, or node_count + j for synthetic node j
  double score = 0.0;
};

/// A generated node before it is merged into the graph. Its id in the
/// augmented graph is node_count + (position in the synthetic list).
struct SyntheticNode {
  std::string text;
  int label = -1;
  Provenance provenance;
  std::vector<double> embedding;
  std::vector<SyntheticEdge> edges;
  bool isolated = false;
};

}  // namespace savetag
