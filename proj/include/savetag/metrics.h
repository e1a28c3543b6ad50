#pragma once

#include <vector>

#include <Eigen/Dense>

#include "savetag/embedding.h"
#include "savetag/neural.h"

namespace savetag {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::vector<std::vector<long long>> counts;

  explicit ConfusionMatrix(int class_count = 0)
      : counts(static_cast<size_t>(class_count), std::vector<long long>(static_cast<size_t>(class_count), 0)) {}

  int class_count() const { return static_cast<int>(counts.size()); }
  void add(int truth, int predicted) { ++counts.at(truth).at(predicted); }
  long long total() const;
  long long support(int c) const;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& truth, const std::vector<int>& predicted,
                                 const std::vector<int>& idx, int class_count);

struct ClassificationMetrics {
  double acc = 0.0;
  double bacc = 0.0;      // mean recall over classes with support
  double macro_f1 = 0.0;  // mean F1 over all classes; zero-support classes count as 0
  double gmean = 0.0;     // geometric mean of recalls over classes with support
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<int> zero_support;  // flagged classes
};

ClassificationMetrics classification_metrics(const ConfusionMatrix& confusion);

/// Mean recall of head classes minus mean recall of tail classes.
double head_tail_gap(const ClassificationMetrics& m, const std::vector<int>& tail_classes);

/// Reference point sets per class; distances are Euclidean.
struct ManifoldIndex {
  Eigen::MatrixXd points;
  std::vector<int> labels;
  int class_count = 0;

  static ManifoldIndex build(const Eigen::MatrixXd& emb, const std::vector<int>& labels,
                             const std::vector<int>& subset_idx, int class_count);
};

/// min over the class-c reference points of |x - y|.
double dist_to_manifold(const Eigen::Ref<const Eigen::VectorXd>& x, const ManifoldIndex& index, int c);

/// Boundary flag per sample: the majority label of its k nearest reference
/// points (ties in distance to the lower row) differs from the sample's own
/// label, or several labels tie for the majority.
std::vector<bool> boundary_flags(const Eigen::MatrixXd& samples, const std::vector<int>& sample_labels,
                                 const ManifoldIndex& reference, int k);

/// Fraction of boundary samples; 0 for an empty sample set.
double bcr(const Eigen::MatrixXd& samples, const std::vector<int>& sample_labels, const ManifoldIndex& reference,
           int k);

/// Per-sample d_in / d_out against class centroids; `cap` when d_out = 0.
std::vector<double> bps_scores(const Eigen::MatrixXd& samples, const std::vector<int>& sample_labels,
                               const ClassCentroids& centroids, double cap = 1e6);
double bps(const Eigen::MatrixXd& samples, const std::vector<int>& sample_labels, const ClassCentroids& centroids,
           double cap = 1e6);

/// Fraction of samples the probe assigns to their intended label.
double icr(const Eigen::MatrixXd& samples, const std::vector<int>& intended_labels, const ClassifierModel& probe);

struct MarginStats {
  std::vector<double> margins;
  double gamma_min = 0.0;
  std::vector<int> ties;  // samples whose true logit ties the best other logit
};

/// gamma(x) = z_y - max_{j != y} z_j per row.
MarginStats margins(const Eigen::MatrixXd& logits, const std::vector<int>& labels);

struct BoundCheck {
  bool holds = false;
  double bound = 0.0;
  double slack = 0.0;  // observed minus bound
};

/// gamma_min_aug >= gamma0 - delta (1 - bcr). Requires delta >= gamma0 and
/// bcr in [0, 1].
BoundCheck check_margin_bound(double gamma0, double delta, double bcr, double gamma_min_aug);

/// gamma_min_aug >= min(gamma0, -delta) when bcr > 0, >= gamma0 when bcr = 0.
/// This is what monotone interior margins and |gamma| <= delta on boundary
/// samples actually guarantee.
BoundCheck check_margin_floor(double gamma0, double delta, double bcr, double gamma_min_aug);

/// r_aug <= r_orig - L gamma0 (bcr - eta) + c_delta * delta for a
/// user-supplied Lipschitz constant L and slack coefficient c_delta.
BoundCheck check_vicinal_risk_bound(double r_aug, double r_orig, double lipschitz, double gamma0, double bcr,
                                    double eta, double delta, double c_delta);

/// Softmax cross-entropy of each logits row against its label.
std::vector<double> per_sample_cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& labels);

/// Mean over anchors of the mean loss of that anchor's samples.
/// `anchor_of[i]` names the anchor of sample i. When `anchors` is given,
/// every listed anchor must own at least one sample.
double vicinal_risk(const std::vector<double>& sample_losses, const std::vector<int>& anchor_of,
                    const std::vector<int>& anchors = {});

/// Vicinal risk of a model over embedding-space samples. GCN models are
/// evaluated with every sample isolated (identity propagation).
double vicinal_risk(const ClassifierModel& model, const Eigen::MatrixXd& samples, const std::vector<int>& labels,
                    const std::vector<int>& anchor_of);

}  // namespace savetag
