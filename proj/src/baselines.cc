#include "savetag/baselines.h"

#include <algorithm>

namespace savetag {

NumericSynthetics oversample(const EmbeddingMatrix& emb, const std::vector<int>& labels, const LongTailSplit& split,
                             const std::map<int, int>& target_counts) {
  std::vector<int> sources;
  std::vector<int> out_labels;
  for (const auto& [cls, target] : target_counts) {
    std::vector<int> members;
    for (int i : split.train_idx) {
      if (labels[i] == cls) members.push_back(i);
    }
    if (members.empty()) throw Error("oversample: class " + std::to_string(cls) + " has no training rows");
    if (target < static_cast<int>(members.size())) {
      throw Error("oversample: target for class " + std::to_string(cls) + " is below its current count");
    }
    for (int j = 0; j < target - static_cast<int>(members.size()); ++j) {
      sources.push_back(members[static_cast<size_t>(j) % members.size()]);
      out_labels.push_back(cls);
    }
  }
  NumericSynthetics out;
  out.rows.resize(static_cast<Eigen::Index>(sources.size()), emb.dim());
  for (size_t r = 0; r < sources.size(); ++r) out.rows.row(static_cast<Eigen::Index>(r)) = emb.rows.row(sources[r]);
  out.labels = std::move(out_labels);
  out.anchors = sources;
  out.partners = sources;
  out.lambdas.assign(sources.size(), 0.0);
  return out;
}

Eigen::VectorXd smote_interpolate(const Eigen::Ref<const Eigen::VectorXd>& xi,
                                  const Eigen::Ref<const Eigen::VectorXd>& xk, double lambda) {
  if (xi.size() != xk.size()) throw Error("smote_interpolate: dimension mismatch");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("smote_interpolate: lambda outside [0, 1]");
  return xi + lambda * (xk - xi);
}

MixupResult mixup_interpolate(const Eigen::Ref<const Eigen::VectorXd>& xi, const Eigen::Ref<const Eigen::VectorXd>& xj,
                              int yi, int yj, int class_count, const InterpolationParams& params) {
  if (!(params.beta_alpha > 0.0)) throw Error("mixup_interpolate: alpha must be positive");
  if (xi.size() != xj.size()) throw Error("mixup_interpolate: dimension mismatch");
  if (yi < 0 || yi >= class_count || yj < 0 || yj >= class_count) throw Error("mixup_interpolate: label out of range");
  MixupResult r;
  if (params.lambda >= 0.0 && params.lambda <= 1.0) {
    r.lambda = params.lambda;
  } else {
    Rng rng(params.seed);
    r.lambda = rng.beta(params.beta_alpha, params.beta_alpha);
  }
  r.x = r.lambda * xi + (1.0 - r.lambda) * xj;
  r.soft_label = Eigen::VectorXd::Zero(class_count);
  r.soft_label(yi) += r.lambda;
  r.soft_label(yj) += 1.0 - r.lambda;
  r.hard_label = yi;
  for (int c = 0; c < class_count; ++c) {
    if (r.soft_label(c) > r.soft_label(r.hard_label)) r.hard_label = c;
  }
  return r;
}

const char* to_string(NumericMode m) {
  switch (m) {
    case NumericMode::Oversample: return "oversample";
    case NumericMode::Smote: return "smote";
    case NumericMode::Mixup: return "mixup";
  }
  return "?";
}

NumericMode parse_numeric_mode(const std::string& s) {
  if (s == "oversample") return NumericMode::Oversample;
  if (s == "smote") return NumericMode::Smote;
  if (s == "mixup") return NumericMode::Mixup;
  throw Error("unknown numeric mode '" + s + "' (expected oversample, smote or mixup)");
}

NumericSynthetics numeric_augment(const EmbeddingMatrix& emb, const std::vector<int>& labels,
                                  const std::vector<VicinalPair>& pairs, NumericMode mode, int class_count,
                                  uint64_t seed, double beta_alpha) {
  if (mode == NumericMode::Mixup && !(beta_alpha > 0.0)) throw Error("mixup: alpha must be positive");
  NumericSynthetics out;
  out.rows.resize(static_cast<Eigen::Index>(pairs.size()), emb.dim());
  Rng rng(mix64(seed, 0x6e756d6572696300ULL + static_cast<uint64_t>(mode)));
  constexpr uint64_t kGrid = 1ULL << 20;
  for (size_t p = 0; p < pairs.size(); ++p) {
    const auto& pr = pairs[p];
    const auto xi = emb.rows.row(pr.anchor).transpose();
    const auto xk = emb.rows.row(pr.partner).transpose();
    const auto r = static_cast<Eigen::Index>(p);
    double lambda = 0.0;
    int label = pr.label;
    switch (mode) {
      case NumericMode::Oversample:
        out.rows.row(r) = emb.rows.row(pr.anchor);
        break;
      case NumericMode::Smote:
        lambda = static_cast<double>(rng.index(kGrid + 1)) / static_cast<double>(kGrid);
        out.rows.row(r) = smote_interpolate(xi, xk, lambda).transpose();
        break;
      case NumericMode::Mixup: {
        InterpolationParams ip;
        ip.beta_alpha = beta_alpha;
        ip.lambda = rng.beta(beta_alpha, beta_alpha);
        const auto m = mixup_interpolate(xi, xk, labels[pr.anchor], labels[pr.partner], class_count, ip);
        out.rows.row(r) = m.x.transpose();
        lambda = m.lambda;
        label = m.hard_label;
        break;
      }
    }
    out.labels.push_back(label);
    out.anchors.push_back(pr.anchor);
    out.partners.push_back(pr.partner);
    out.lambdas.push_back(lambda);
  }
  return out;
}

}  // namespace savetag
