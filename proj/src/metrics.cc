#include "savetag/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace savetag {

long long ConfusionMatrix::total() const {
  long long t = 0;
  for (const auto& row : counts) t += std::accumulate(row.begin(), row.end(), 0LL);
  return t;
}

long long ConfusionMatrix::support(int c) const {
  const auto& row = counts.at(c);
  return std::accumulate(row.begin(), row.end(), 0LL);
}

ConfusionMatrix confusion_matrix(const std::vector<int>& truth, const std::vector<int>& predicted,
                                 const std::vector<int>& idx, int class_count) {
  ConfusionMatrix m(class_count);
  for (int i : idx) m.add(truth.at(i), predicted.at(i));
  return m;
}

ClassificationMetrics classification_metrics(const ConfusionMatrix& confusion) {
  const int c = confusion.class_count();
  ClassificationMetrics out;
  const long long total = confusion.total();
  if (total <= 0) throw Error("classification_metrics: empty confusion matrix");
  long long trace = 0;
  for (int k = 0; k < c; ++k) trace += confusion.counts[k][k];
  out.acc = static_cast<double>(trace) / static_cast<double>(total);

  out.recall.assign(c, 0.0);
  out.f1.assign(c, 0.0);
  double recall_sum = 0.0;
  double log_recall_sum = 0.0;
  bool zero_recall = false;
  int supported = 0;
  for (int k = 0; k < c; ++k) {
    const long long tp = confusion.counts[k][k];
    const long long support = confusion.support(k);
    long long predicted = 0;
    for (int r = 0; r < c; ++r) predicted += confusion.counts[r][k];
    if (support == 0) {
      out.zero_support.push_back(k);
      continue;
    }
    ++supported;
    const double rec = static_cast<double>(tp) / static_cast<double>(support);
    out.recall[k] = rec;
    recall_sum += rec;
    if (rec == 0.0) {
      zero_recall = true;
    } else {
      log_recall_sum += std::log(rec);
    }
    if (tp > 0) {
      const double prec = static_cast<double>(tp) / static_cast<double>(predicted);
      out.f1[k] = 2.0 * prec * rec / (prec + rec);
    }
  }
  out.bacc = recall_sum / supported;
  out.gmean = zero_recall ? 0.0 : std::exp(log_recall_sum / supported);
  out.macro_f1 = std::accumulate(out.f1.begin(), out.f1.end(), 0.0) / c;
  return out;
}

double head_tail_gap(const ClassificationMetrics& m, const std::vector<int>& tail_classes) {
  double head = 0.0, tail = 0.0;
  int nh = 0, nt = 0;
  for (int k = 0; k < static_cast<int>(m.recall.size()); ++k) {
    if (std::find(m.zero_support.begin(), m.zero_support.end(), k) != m.zero_support.end()) continue;
    if (std::find(tail_classes.begin(), tail_classes.end(), k) != tail_classes.end()) {
      tail += m.recall[k];
      ++nt;
    } else {
      head += m.recall[k];
      ++nh;
    }
  }
  if (nh == 0 || nt == 0) return 0.0;
  return head / nh - tail / nt;
}

ManifoldIndex ManifoldIndex::build(const Eigen::MatrixXd& emb, const std::vector<int>& labels,
                                   const std::vector<int>& subset_idx, int class_count) {
  ManifoldIndex idx;
  idx.class_count = class_count;
  idx.points.resize(static_cast<Eigen::Index>(subset_idx.size()), emb.cols());
  for (size_t r = 0; r < subset_idx.size(); ++r) {
    idx.points.row(static_cast<Eigen::Index>(r)) = emb.row(subset_idx[r]);
    idx.labels.push_back(labels.at(subset_idx[r]));
  }
  return idx;
}

double dist_to_manifold(const Eigen::Ref<const Eigen::VectorXd>& x, const ManifoldIndex& index, int c) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < index.points.rows(); ++r) {
    if (index.labels[static_cast<size_t>(r)] != c) continue;
    best = std::min(best, (index.points.row(r).transpose() - x).norm());
  }
  if (std::isinf(best)) throw Error("dist_to_manifold: class " + std::to_string(c) + " has no reference points");
  return best;
}

std::vector<bool> boundary_flags(const Eigen::MatrixXd& samples, const std::vector<int>& sample_labels,
                                 const ManifoldIndex& reference, int k) {
  if (k < 1) throw Error("bcr: k must be at least 1");
  const Eigen::Index n_ref = reference.points.rows();
  if (n_ref == 0) throw Error("bcr: empty reference set");
  const size_t kk = std::min<size_t>(static_cast<size_t>(k), static_cast<size_t>(n_ref));
  std::vector<bool> flags;
  std::vector<std::pair<double, int>> dist(static_cast<size_t>(n_ref));
  for (Eigen::Index s = 0; s < samples.rows(); ++s) {
    for (Eigen::Index r = 0; r < n_ref; ++r) {
      dist[static_cast<size_t>(r)] = {(reference.points.row(r) - samples.row(s)).squaredNorm(), static_cast<int>(r)};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
    std::map<int, int> votes;
    for (size_t j = 0; j < kk; ++j) ++votes[reference.labels[static_cast<size_t>(dist[j].second)]];
    int best_count = 0, best_label = -1, tied = 0;
    for (const auto& [label, count] : votes) {
      if (count > best_count) {
        best_count = count;
        best_label = label;
        tied = 1;
      } else if (count == best_count) {
        ++tied;
      }
    }
    flags.push_back(tied > 1 || best_label != sample_labels[static_cast<size_t>(s)]);
  }
  return flags;
}

double bcr(const Eigen::MatrixXd& samples, const std::vector<int>& sample_labels, const ManifoldIndex& reference,
           int k) {
  if (samples.rows() == 0) return 0.0;
  const auto flags = boundary_flags(samples, sample_labels, reference, k);
  return static_cast<double>(std::count(flags.begin(), flags.end(), true)) / static_cast<double>(flags.size());
}

std::vector<double> bps_scores(const Eigen::MatrixXd& samples, const std::vector<int>& sample_labels,
                               const ClassCentroids& centroids, double cap) {
  const int c = static_cast<int>(centroids.defined.size());
  std::vector<double> out;
  for (Eigen::Index s = 0; s < samples.rows(); ++s) {
    const int y = sample_labels[static_cast<size_t>(s)];
    if (y < 0 || y >= c || !centroids.defined[y]) {
      throw Error("bps: centroid of class " + std::to_string(y) + " is undefined");
    }
    const double d_in = (samples.row(s) - centroids.means.row(y)).norm();
    double d_out = std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) {
      if (j == y || !centroids.defined[j]) continue;
      d_out = std::min(d_out, (samples.row(s) - centroids.means.row(j)).norm());
    }
    if (std::isinf(d_out)) throw Error("bps: no other class centroid is defined");
    out.push_back(d_out == 0.0 ? cap : d_in / d_out);
  }
  return out;
}

double bps(const Eigen::MatrixXd& samples, const std::vector<int>& sample_labels, const ClassCentroids& centroids,
           double cap) {
  const auto s = bps_scores(samples, sample_labels, centroids, cap);
  if (s.empty()) return 0.0;
  return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

double icr(const Eigen::MatrixXd& samples, const std::vector<int>& intended_labels, const ClassifierModel& probe) {
  if (samples.rows() == 0) return 0.0;
  ClassifierModel mlp = probe;
  mlp.kind = ModelKind::Mlp;
  const auto pred = predict(mlp, samples);
  size_t hits = 0;
  for (size_t i = 0; i < pred.labels.size(); ++i) hits += pred.labels[i] == intended_labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.labels.size());
}

MarginStats margins(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
  MarginStats out;
  out.gamma_min = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels.at(static_cast<size_t>(i));
    if (y < 0 || y >= logits.cols()) throw Error("margins: label out of range");
    double other = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if (j != y) other = std::max(other, logits(i, j));
    }
    const double g = logits(i, y) - other;
    if (g == 0.0) out.ties.push_back(static_cast<int>(i));
    out.margins.push_back(g);
    out.gamma_min = std::min(out.gamma_min, g);
  }
  return out;
}

BoundCheck check_margin_bound(double gamma0, double delta, double bcr_value, double gamma_min_aug) {
  if (delta < gamma0) throw Error("check_margin_bound: delta must be at least gamma0");
  if (!(bcr_value >= 0.0 && bcr_value <= 1.0)) throw Error("check_margin_bound: bcr outside [0, 1]");
  BoundCheck r;
  r.bound = gamma0 - delta * (1.0 - bcr_value);
  r.slack = gamma_min_aug - r.bound;
  r.holds = r.slack >= 0.0;
  return r;
}

BoundCheck check_margin_floor(double gamma0, double delta, double bcr_value, double gamma_min_aug) {
  if (!(delta > 0.0)) throw Error("check_margin_floor: delta must be positive");
  if (!(bcr_value >= 0.0 && bcr_value <= 1.0)) throw Error("check_margin_floor: bcr outside [0, 1]");
  BoundCheck r;
  r.bound = bcr_value > 0.0 ? std::min(gamma0, -delta) : gamma0;
  r.slack = gamma_min_aug - r.bound;
  r.holds = r.slack >= 0.0;
  return r;
}

BoundCheck check_vicinal_risk_bound(double r_aug, double r_orig, double lipschitz, double gamma0, double bcr_value,
                                    double eta, double delta, double c_delta) {
  if (!(eta > 0.0)) throw Error("check_vicinal_risk_bound: eta must be positive");
  BoundCheck r;
  r.bound = r_orig - lipschitz * gamma0 * (bcr_value - eta) + c_delta * delta;
  r.slack = r.bound - r_aug;
  r.holds = r.slack >= 0.0;
  return r;
}

std::vector<double> per_sample_cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.push_back(lse - logits(i, labels.at(static_cast<size_t>(i))));
  }
  return out;
}

double vicinal_risk(const std::vector<double>& sample_losses, const std::vector<int>& anchor_of,
                    const std::vector<int>& anchors) {
  if (sample_losses.size() != anchor_of.size()) throw Error("vicinal_risk: one anchor per sample expected");
  std::map<int, std::pair<double, int>> groups;
  for (int a : anchors) groups[a];
  for (size_t i = 0; i < sample_losses.size(); ++i) {
    auto& g = groups[anchor_of[i]];
    g.first += sample_losses[i];
    ++g.second;
  }
  if (groups.empty()) throw Error("vicinal_risk: no samples");
  double total = 0.0;
  for (const auto& [anchor, g] : groups) {
    if (g.second == 0) throw Error("vicinal_risk: anchor " + std::to_string(anchor) + " has no samples");
    total += g.first / g.second;
  }
  return total / static_cast<double>(groups.size());
}

double vicinal_risk(const ClassifierModel& model, const Eigen::MatrixXd& samples, const std::vector<int>& labels,
                    const std::vector<int>& anchor_of) {
  Eigen::MatrixXd logits;
  if (model.kind == ModelKind::Gcn) {
    SparseMatrix eye(samples.rows(), samples.rows());
    eye.setIdentity();
    logits = forward(model, samples, &eye, false);
  } else {
    logits = forward(model, samples, nullptr, false);
  }
  return vicinal_risk(per_sample_cross_entropy(logits, labels), anchor_of);
}

}  // namespace savetag
