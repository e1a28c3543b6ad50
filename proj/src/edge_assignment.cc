#include "savetag/edge_assignment.h"

#include <algorithm>
#include <cmath>
#include <set>

namespace savetag {

Eigen::VectorXd ConfidenceNet::kappa(const Eigen::MatrixXd& z) const {
  const Eigen::MatrixXd p = softmax_rows(forward(model, z, nullptr, false));
  return p.rowwise().maxCoeff();
}

ConfidenceNet train_confidence(const EmbeddingMatrix& emb, const std::vector<int>& labels,
                               const std::vector<int>& train_idx, int class_count, const TrainConfig& cfg) {
  std::set<int> seen;
  for (int i : train_idx) seen.insert(labels[i]);
  if (seen.size() < 2) throw TrainingError("confidence training needs at least two classes");
  ConfidenceNet net;
  net.model = train_classifier(emb.rows, nullptr, labels, train_idx, class_count, cfg);
  net.model.encoder_id = emb.encoder_id;
  return net;
}

std::vector<EdgeCandidate> score_edges(const Eigen::MatrixXd& synthetic_emb, const Eigen::MatrixXd& original_emb,
                                       const Eigen::VectorXd& kappa) {
  if (synthetic_emb.rows() > 0 && synthetic_emb.cols() != original_emb.cols()) {
    throw Error("score_edges: embedding dimensions differ");
  }
  if (kappa.size() != original_emb.rows()) throw Error("score_edges: one kappa per original row expected");
  std::vector<EdgeCandidate> out;
  out.reserve(static_cast<size_t>(synthetic_emb.rows() * original_emb.rows()));
  for (Eigen::Index s = 0; s < synthetic_emb.rows(); ++s) {
    for (Eigen::Index u = 0; u < original_emb.rows(); ++u) {
      const double cos = cosine_similarity(synthetic_emb.row(s).transpose(), original_emb.row(u).transpose());
      out.push_back({static_cast<int>(s), static_cast<int>(u), kappa(u) * cos});
    }
  }
  return out;
}

std::vector<EdgeCandidate> score_edges(const Eigen::MatrixXd& synthetic_emb, const EmbeddingMatrix& original_emb,
                                       const ConfidenceNet& conf) {
  if (synthetic_emb.rows() > 0 && synthetic_emb.cols() != original_emb.dim()) {
    throw Error("score_edges: embedding dimensions differ");
  }
  return score_edges(synthetic_emb, original_emb.rows, conf.kappa(original_emb.rows));
}

namespace {

bool ranks_before(const EdgeCandidate& a, const EdgeCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.synthetic != b.synthetic) return a.synthetic < b.synthetic;
  return a.target < b.target;
}

}  // namespace

EdgeSelection select_topk_global(std::vector<EdgeCandidate> candidates, int synthetic_count,
                                 const EdgeAssignConfig& cfg) {
  if (synthetic_count < 1) throw Error("select_topk_global: synthetic_count must be at least 1");
  if (cfg.factor < 1) throw Error("edge factor must be at least 1");
  std::erase_if(candidates, [&](const EdgeCandidate& c) { return !(c.score >= cfg.threshold); });

  EdgeSelection sel;
  if (cfg.per_node) {
    std::sort(candidates.begin(), candidates.end(), ranks_before);
    std::vector<int> taken(static_cast<size_t>(synthetic_count), 0);
    for (const auto& c : candidates) {
      if (taken[c.synthetic] < cfg.factor) {
        ++taken[c.synthetic];
        sel.edges.push_back(c);
      }
    }
  } else {
    const size_t k = std::min(candidates.size(),
                              static_cast<size_t>(synthetic_count) * static_cast<size_t>(cfg.factor));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                      ranks_before);
    sel.edges.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  }

  std::vector<bool> has_edge(static_cast<size_t>(synthetic_count), false);
  for (const auto& e : sel.edges) has_edge[e.synthetic] = true;
  for (int s = 0; s < synthetic_count; ++s) {
    if (!has_edge[s]) sel.isolated.push_back(s);
  }
  return sel;
}

std::vector<SyntheticNode> assign_edges(const std::vector<SyntheticNode>& synthetic, const TextGraph& graph,
                                        const EmbeddingMatrix& emb, const ConfidenceNet& conf,
                                        const EdgeAssignConfig& cfg, EdgeAssignSummary* summary) {
  std::vector<SyntheticNode> out = synthetic;
  const int n_orig = static_cast<int>(graph.node_count());
  if (emb.size() != n_orig) throw Error("assign_edges: embedding rows do not match the graph");
  if (out.empty()) {
    if (summary) *summary = {};
    return out;
  }
  const Eigen::Index dim = emb.dim();
  Eigen::MatrixXd syn(static_cast<Eigen::Index>(out.size()), dim);
  for (size_t s = 0; s < out.size(); ++s) {
    if (static_cast<Eigen::Index>(out[s].embedding.size()) != dim) {
      throw Error("assign_edges: synthetic node " + std::to_string(s) + " has no embedding of the right size");
    }
    syn.row(static_cast<Eigen::Index>(s)) = Eigen::Map<const Eigen::RowVectorXd>(out[s].embedding.data(), dim);
  }

  auto candidates = score_edges(syn, emb, conf);
  if (cfg.allow_synthetic_targets) {
    // Synthetic node s may attach to earlier synthetic nodes t < s.
    const Eigen::VectorXd ks = conf.kappa(syn);
    for (Eigen::Index s = 1; s < syn.rows(); ++s) {
      for (Eigen::Index t = 0; t < s; ++t) {
        const double cos = cosine_similarity(syn.row(s).transpose(), syn.row(t).transpose());
        candidates.push_back({static_cast<int>(s), n_orig + static_cast<int>(t), ks(t) * cos});
      }
    }
  }
  const auto sel = select_topk_global(std::move(candidates), static_cast<int>(out.size()), cfg);

  for (auto& node : out) {
    node.edges.clear();
    node.isolated = false;
  }
  for (const auto& e : sel.edges) out[e.synthetic].edges.push_back({e.target, e.score});
  for (auto& node : out) {
    std::sort(node.edges.begin(), node.edges.end(),
              [](const SyntheticEdge& a, const SyntheticEdge& b) { return a.target < b.target; });
  }
  for (int s : sel.isolated) out[s].isolated = true;

  if (summary) {
    summary->k_edge = static_cast<long long>(out.size()) * cfg.factor;
    summary->edges_added = sel.edges.size();
    summary->isolated = sel.isolated.size();
    summary->score_quantiles.clear();
    if (!sel.edges.empty()) {
      std::vector<double> scores;
      for (const auto& e : sel.edges) scores.push_back(e.score);
      std::sort(scores.begin(), scores.end());
      for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const size_t idx = static_cast<size_t>(std::lround(q * static_cast<double>(scores.size() - 1)));
        summary->score_quantiles.push_back(scores[idx]);
      }
    }
  }
  return out;
}

std::vector<SyntheticEdge> duplicate_edges(int anchor, const std::vector<std::vector<int>>& adjacency) {
  if (anchor < 0 || static_cast<size_t>(anchor) >= adjacency.size()) {
    throw Error("duplicate_edges: anchor " + std::to_string(anchor) + " does not exist");
  }
  std::vector<SyntheticEdge> out;
  for (int u : adjacency[anchor]) out.push_back({u, 1.0});
  return out;
}

std::vector<SyntheticEdge> duplicate_edges(int anchor, const TextGraph& graph) {
  return duplicate_edges(anchor, graph.neighbors());
}

}  // namespace savetag
