#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "savetag/graph.h"
#include "savetag/util.h"

namespace savetag {

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Affine map x -> x W + b on row vectors; weight is in_dim x out_dim.
struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;

  Eigen::Index in_dim() const { return weight.rows(); }
  Eigen::Index out_dim() const { return weight.cols(); }
};

// ---------------------------------------------------------------------------
// Message-passing aggregator
//
//   h'_v = alpha * h_v W + (1 - alpha) * sum_u beta_vu * h_u W
//
// States are rows of `h`. A node without neighbors receives alpha * h_v W.

struct AggregatorParams {
  double alpha = 0.5;
  /// Per node: (neighbor, beta) pairs. Non-empty rows must sum to 1.
  std::vector<std::vector<std::pair<int, double>>> neighbor_weights;
  /// Off only for negative-control experiments.
  bool check_normalized = true;
};

/// beta_vu = 1 / deg(v) over the given adjacency lists.
std::vector<std::vector<std::pair<int, double>>> uniform_neighbor_weights(
    const std::vector<std::vector<int>>& adjacency);

Eigen::MatrixXd aggregate_layer(const Eigen::MatrixXd& h, const AggregatorParams& params,
                                const Eigen::MatrixXd& weight);

// ---------------------------------------------------------------------------
// Classifiers

enum class ModelKind { Gcn, Mlp };

struct ClassifierModel {
  ModelKind kind = ModelKind::Mlp;
  std::vector<DenseLayer> layers;
  double dropout = 0.0;
  int class_count = 0;
  std::vector<double> loss_history;
  std::string encoder_id;     // provenance of the input features
  std::string config_digest;  // provenance of the training configuration

  size_t parameter_count() const;
};

struct TrainConfig {
  int epochs = 1000;
  double learning_rate = 0.01;
  double dropout = 0.5;
  std::vector<int> hidden_dims = {64, 64};
  double weight_decay = 5e-4;
  uint64_t seed = 0;

  /// Node classifier: 2 hidden layers of 64, dropout 0.5, 1000 epochs, lr 0.01.
  static TrainConfig gcn_defaults();
  /// Embedding-space MLP: 1 hidden layer of 256, dropout 0, 1000 epochs, lr 0.001.
  static TrainConfig mlp_defaults();

  std::string digest() const;
};

/// Fan-in scaled uniform initialization, U(-1/sqrt(in), 1/sqrt(in)), zero bias.
ClassifierModel init_model(ModelKind kind, Eigen::Index input_dim, int class_count, const TrainConfig& cfg);

/// Forward pass. `adjacency` must be set for GCN models. Dropout is applied
/// to every layer input only when `train_mode` is true, with masks drawn
/// from a counter-based stream keyed on (seed, epoch, layer, element).
Eigen::MatrixXd forward(const ClassifierModel& model, const Eigen::MatrixXd& features,
                        const SparseMatrix* adjacency, bool train_mode = false, uint64_t seed = 0,
                        uint64_t epoch = 0);

/// logits = A relu(A drop(X) W1 + b1) ... W_L + b_L
Eigen::MatrixXd gcn_forward(const NormalizedAdjacency& adjacency, const Eigen::MatrixXd& features,
                            const ClassifierModel& model, bool train_mode, uint64_t seed);
Eigen::MatrixXd mlp_forward(const Eigen::MatrixXd& features, const ClassifierModel& model, bool train_mode,
                            uint64_t seed);

enum class LossKind { CrossEntropy, SquaredError };

struct Objective {
  const std::vector<int>* labels = nullptr;
  const std::vector<int>* mask = nullptr;  // rows contributing to the loss
  const std::vector<double>* class_weights = nullptr;
  LossKind loss = LossKind::CrossEntropy;
  double weight_decay = 0.0;
};

struct LossAndGradients {
  double loss = 0.0;
  std::vector<DenseLayer> gradients;  // same shapes as model.layers
};

LossAndGradients loss_and_gradients(const ClassifierModel& model, const Eigen::MatrixXd& features,
                                    const SparseMatrix* adjacency, const Objective& objective,
                                    bool train_mode = false, uint64_t seed = 0, uint64_t epoch = 0);

/// Full-batch training with Adam (0.9 / 0.999 / 1e-8). GCN when `adjacency`
/// is given, MLP otherwise. Throws TrainingError on a non-finite loss.
ClassifierModel train_classifier(const Eigen::MatrixXd& features, const SparseMatrix* adjacency,
                                 const std::vector<int>& labels, const std::vector<int>& train_idx,
                                 int class_count, const TrainConfig& cfg,
                                 const std::vector<double>* class_weights = nullptr);

/// Inverse-frequency weights over the training rows, mean-normalized to 1.
std::vector<double> inverse_frequency_weights(const std::vector<int>& labels, const std::vector<int>& train_idx,
                                              int class_count);

/// Compares analytic gradients against central differences
/// (f(t + eps) - f(t - eps)) / 2 eps on up to `max_checks` parameters
/// (all when 0) and returns the largest |a - n| / max(|a|, |n|, 1e-6).
double gradient_check(const ClassifierModel& model, const Eigen::MatrixXd& features, const SparseMatrix* adjacency,
                      const Objective& objective, double epsilon = 1e-5, size_t max_checks = 0,
                      uint64_t seed = 0);

struct Prediction {
  std::vector<int> labels;
  Eigen::MatrixXd probabilities;
  Eigen::MatrixXd logits;
};

/// Row-wise softmax, max-shifted.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

/// Arg-max with ties to the lowest index.
int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row);

Prediction predict(const ClassifierModel& model, const Eigen::MatrixXd& features,
                   const SparseMatrix* adjacency = nullptr);

/// MLP trained on a class-balanced subsample of `idx` (every class cut to
/// the smallest class count).
ClassifierModel train_balanced_probe(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                                     const std::vector<int>& idx, int class_count, const TrainConfig& cfg);

/// Text checkpoint: header, layer shapes and row-major weights at full
/// precision. Loading restores the parameters bit-exactly.
void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

}  // namespace savetag
