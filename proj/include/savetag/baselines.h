#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "savetag/embedding.h"
#include "savetag/generation.h"
#include "savetag/graph.h"

namespace savetag {

/// Synthetic embedding rows produced in embedding space.
struct NumericSynthetics {
  Eigen::MatrixXd rows;
  std::vector<int> labels;
  std::vector<int> anchors;   // source row (oversampling) or first pair endpoint
  std::vector<int> partners;  // second pair endpoint, equal to anchor for copies
  std::vector<double> lambdas;
};

/// Repeats each class's training rows round-robin until the class reaches
/// its target total. Rows are exact copies.
NumericSynthetics oversample(const EmbeddingMatrix& emb, const std::vector<int>& labels, const LongTailSplit& split,
                             const std::map<int, int>& target_counts);

/// x_i + lambda (x_k - x_i).
Eigen::VectorXd smote_interpolate(const Eigen::Ref<const Eigen::VectorXd>& xi,
                                  const Eigen::Ref<const Eigen::VectorXd>& xk, double lambda);

struct InterpolationParams {
  double lambda = -1.0;  // drawn from Beta(beta_alpha, beta_alpha) when outside [0, 1]
  double beta_alpha = 1.0;
  uint64_t seed = 0;
};

struct MixupResult {
  Eigen::VectorXd x;
  Eigen::VectorXd soft_label;
  int hard_label = -1;  // arg-max of soft_label, ties to y_i
  double lambda = 0.0;
};

/// lambda x_i + (1 - lambda) x_j with the matching label mixture.
MixupResult mixup_interpolate(const Eigen::Ref<const Eigen::VectorXd>& xi, const Eigen::Ref<const Eigen::VectorXd>& xj,
                              int yi, int yj, int class_count, const InterpolationParams& params);

enum class NumericMode { Oversample, Smote, Mixup };

const char* to_string(NumericMode m);
NumericMode parse_numeric_mode(const std::string& s);

/// One synthetic row per vicinal pair, in pair order. Smote draws lambda
/// uniformly on a 2^-20 grid of [0, 1]; Mixup draws from Beta(alpha, alpha);
/// Oversample copies the anchor.
NumericSynthetics numeric_augment(const EmbeddingMatrix& emb, const std::vector<int>& labels,
                                  const std::vector<VicinalPair>& pairs, NumericMode mode, int class_count,
                                  uint64_t seed, double beta_alpha = 1.0);

}  // namespace savetag
