#pragma once

#include <vector>

#include "savetag/embedding.h"
#include "savetag/graph.h"
#include "savetag/neural.h"
#include "savetag/synthetic.h"

namespace savetag {

/// Embedding-space classifier whose max softmax probability is the
/// attachment confidence kappa(z) of a node.
struct ConfidenceNet {
  ClassifierModel model;

  /// kappa for every row of z, each in [1/C, 1].
  Eigen::VectorXd kappa(const Eigen::MatrixXd& z) const;
};

/// Trains on (z_v, y_v) for v in train_idx. Throws TrainingError when the
/// training rows cover fewer than two classes.
ConfidenceNet train_confidence(const EmbeddingMatrix& emb, const std::vector<int>& labels,
                               const std::vector<int>& train_idx, int class_count,
                               const TrainConfig& cfg = TrainConfig::mlp_defaults());

struct EdgeCandidate {
  int synthetic = -1;
  int target = -1;
  double score = 0.0;

  bool operator==(const EdgeCandidate&) const = default;
};

/// score(s, u) = kappa(z_u) * cos(z_s, z_u) for every synthetic row s and
/// original row u, in (s, u) order.
std::vector<EdgeCandidate> score_edges(const Eigen::MatrixXd& synthetic_emb, const EmbeddingMatrix& original_emb,
                                       const ConfidenceNet& conf);

/// Same scoring with kappa supplied directly (one value per original row).
std::vector<EdgeCandidate> score_edges(const Eigen::MatrixXd& synthetic_emb, const Eigen::MatrixXd& original_emb,
                                       const Eigen::VectorXd& kappa);

struct EdgeAssignConfig {
  int factor = 20;           // n; k_edge = synthetic_count * n
  double threshold = 0.0;    // tau_conf; candidates scoring below it are dropped
  bool per_node = false;     // top-n per synthetic node instead of one global budget
  bool allow_synthetic_targets = false;
};

struct EdgeSelection {
  std::vector<EdgeCandidate> edges;  // by descending score
  std::vector<int> isolated;         // ascending synthetic indices
};

/// Highest-scoring candidates first, ties to (lower synthetic, lower target).
EdgeSelection select_topk_global(std::vector<EdgeCandidate> candidates, int synthetic_count,
                                 const EdgeAssignConfig& cfg);

struct EdgeAssignSummary {
  long long k_edge = 0;
  size_t edges_added = 0;
  size_t isolated = 0;
  std::vector<double> score_quantiles;  // min, 25%, median, 75%, max of selected scores
};

/// Scores every synthetic node against the original nodes (and, when
/// allowed, against earlier synthetic nodes), selects edges and returns
/// updated copies with `edges` and `isolated` filled.
std::vector<SyntheticNode> assign_edges(const std::vector<SyntheticNode>& synthetic, const TextGraph& graph,
                                        const EmbeddingMatrix& emb, const ConfidenceNet& conf,
                                        const EdgeAssignConfig& cfg, EdgeAssignSummary* summary = nullptr);

/// Copies the anchor's adjacency: one edge per neighbor of `anchor`.
std::vector<SyntheticEdge> duplicate_edges(int anchor, const TextGraph& graph);
std::vector<SyntheticEdge> duplicate_edges(int anchor, const std::vector<std::vector<int>>& adjacency);

}  // namespace savetag
