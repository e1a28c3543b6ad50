#include "savetag/neural.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

namespace savetag {

// ---------------------------------------------------------------------------
// Aggregator

std::vector<std::vector<std::pair<int, double>>> uniform_neighbor_weights(
    const std::vector<std::vector<int>>& adjacency) {
  std::vector<std::vector<std::pair<int, double>>> out(adjacency.size());
  for (size_t v = 0; v < adjacency.size(); ++v) {
    const double w = adjacency[v].empty() ? 0.0 : 1.0 / static_cast<double>(adjacency[v].size());
    for (int u : adjacency[v]) out[v].emplace_back(u, w);
  }
  return out;
}

Eigen::MatrixXd aggregate_layer(const Eigen::MatrixXd& h, const AggregatorParams& params,
                                const Eigen::MatrixXd& weight) {
  if (h.cols() != weight.rows()) throw Error("aggregate_layer: state and weight dimensions differ");
  if (params.neighbor_weights.size() != static_cast<size_t>(h.rows())) {
    throw Error("aggregate_layer: neighbor_weights has the wrong number of rows");
  }
  const double alpha = params.alpha;
  const Eigen::MatrixXd hw = h * weight;
  Eigen::MatrixXd out = alpha * hw;
  for (Eigen::Index v = 0; v < h.rows(); ++v) {
    const auto& row = params.neighbor_weights[static_cast<size_t>(v)];
    if (row.empty()) continue;
    double total = 0.0;
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(weight.cols());
    for (const auto& [u, beta] : row) {
      if (params.check_normalized && beta < 0.0) throw Error("aggregate_layer: negative neighbor weight");
      acc += beta * hw.row(u);
      total += beta;
    }
    if (params.check_normalized && std::abs(total - 1.0) > 1e-9) {
      throw Error("aggregate_layer: neighbor weights of node " + std::to_string(v) + " sum to " +
                  std::to_string(total));
    }
    out.row(v) += (1.0 - alpha) * acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Models

size_t ClassifierModel::parameter_count() const {
  size_t n = 0;
  for (const auto& l : layers) n += static_cast<size_t>(l.weight.size() + l.bias.size());
  return n;
}

TrainConfig TrainConfig::gcn_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::mlp_defaults() {
  TrainConfig cfg;
  cfg.epochs = 1000;
  cfg.learning_rate = 0.001;
  cfg.dropout = 0.0;
  cfg.hidden_dims = {256};
  cfg.weight_decay = 0.0;
  return cfg;
}

std::string TrainConfig::digest() const {
  nlohmann::json j = {{"epochs", epochs},       {"learning_rate", learning_rate}, {"dropout", dropout},
                      {"hidden_dims", hidden_dims}, {"weight_decay", weight_decay},   {"seed", seed}};
  return sha256_hex(j.dump());
}

ClassifierModel init_model(ModelKind kind, Eigen::Index input_dim, int class_count, const TrainConfig& cfg) {
  if (class_count < 1) throw TrainingError("class_count must be positive");
  ClassifierModel model;
  model.kind = kind;
  model.dropout = cfg.dropout;
  model.class_count = class_count;
  model.config_digest = cfg.digest();
  Rng rng(mix64(cfg.seed, 0x696e6974ULL));
  Eigen::Index in = input_dim;
  std::vector<int> dims = cfg.hidden_dims;
  dims.push_back(class_count);
  for (int out : dims) {
    if (out < 1) throw TrainingError("layer widths must be positive");
    DenseLayer layer;
    layer.weight.resize(in, out);
    const double limit = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(in, 1)));
    for (Eigen::Index r = 0; r < in; ++r) {
      for (Eigen::Index c = 0; c < out; ++c) layer.weight(r, c) = rng.uniform(-limit, limit);
    }
    layer.bias = Eigen::VectorXd::Zero(out);
    model.layers.push_back(std::move(layer));
    in = out;
  }
  return model;
}

namespace {

using SparseInput = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Hashed bag-of-words features are mostly zero; multiplying through a
// sparse view is much cheaper for such layer inputs.
bool mostly_zero(const Eigen::MatrixXd& h) {
  const Eigen::Index nonzero = (h.array() != 0.0).count();
  return nonzero * 5 <= h.size();
}

struct ForwardTrace {
  std::vector<Eigen::MatrixXd> inputs;  // layer inputs after dropout
  std::vector<SparseInput> sparse_inputs;  // sparse copy of inputs[l], or empty
  std::vector<Eigen::MatrixXd> masks;   // dropout scale per element (empty when off)
  std::vector<Eigen::MatrixXd> pre;     // pre-activations
};

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, uint64_t seed, uint64_t epoch,
                             uint64_t layer) {
  Eigen::MatrixXd mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  const uint64_t base = mix64(mix64(seed, epoch), layer + 0x64726f70ULL);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      const uint64_t counter = static_cast<uint64_t>(r) * static_cast<uint64_t>(cols) + static_cast<uint64_t>(c);
      mask(r, c) = to_unit(mix64(base, counter)) >= rate ? keep_scale : 0.0;
    }
  }
  return mask;
}

Eigen::MatrixXd run_forward(const ClassifierModel& model, const Eigen::MatrixXd& features,
                            const SparseMatrix* adjacency, bool train_mode, uint64_t seed, uint64_t epoch,
                            ForwardTrace* trace) {
  if (model.layers.empty()) throw Error("model has no layers");
  if (features.cols() != model.layers.front().in_dim()) throw Error("feature dimension does not match the model");
  if (model.kind == ModelKind::Gcn) {
    if (!adjacency) throw Error("GCN forward needs an adjacency matrix");
    if (adjacency->rows() != features.rows() || adjacency->cols() != features.rows()) {
      throw Error("adjacency size does not match the feature rows");
    }
  }
  const bool use_dropout = train_mode && model.dropout > 0.0;
  Eigen::MatrixXd h = features;
  for (size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    if (use_dropout) {
      Eigen::MatrixXd mask = dropout_mask(h.rows(), h.cols(), model.dropout, seed, epoch, l);
      h = h.cwiseProduct(mask);
      if (trace) trace->masks.push_back(std::move(mask));
    } else if (trace) {
      trace->masks.emplace_back();
    }
    Eigen::MatrixXd t;
    SparseInput hs;
    if (mostly_zero(h)) {
      hs = h.sparseView();
      t.noalias() = hs * layer.weight;
    } else {
      t.noalias() = h * layer.weight;
    }
    Eigen::MatrixXd z;
    if (model.kind == ModelKind::Gcn) {
      z.noalias() = (*adjacency) * t;
    } else {
      z = std::move(t);
    }
    z.rowwise() += layer.bias.transpose();
    if (trace) {
      trace->inputs.push_back(std::move(h));
      trace->sparse_inputs.push_back(std::move(hs));
      trace->pre.push_back(z);
    }
    h = (l + 1 < model.layers.size()) ? Eigen::MatrixXd(z.cwiseMax(0.0)) : std::move(z);
  }
  return h;
}

}  // namespace

Eigen::MatrixXd forward(const ClassifierModel& model, const Eigen::MatrixXd& features, const SparseMatrix* adjacency,
                        bool train_mode, uint64_t seed, uint64_t epoch) {
  return run_forward(model, features, adjacency, train_mode, seed, epoch, nullptr);
}

Eigen::MatrixXd gcn_forward(const NormalizedAdjacency& adjacency, const Eigen::MatrixXd& features,
                            const ClassifierModel& model, bool train_mode, uint64_t seed) {
  if (model.kind != ModelKind::Gcn) throw Error("gcn_forward needs a GCN model");
  return forward(model, features, &adjacency.matrix, train_mode, seed, 0);
}

Eigen::MatrixXd mlp_forward(const Eigen::MatrixXd& features, const ClassifierModel& model, bool train_mode,
                            uint64_t seed) {
  ClassifierModel as_mlp = model;
  as_mlp.kind = ModelKind::Mlp;
  return forward(as_mlp, features, nullptr, train_mode, seed, 0);
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j) {
    if (row(j) > row(best)) best = static_cast<int>(j);
  }
  return best;
}

LossAndGradients loss_and_gradients(const ClassifierModel& model, const Eigen::MatrixXd& features,
                                    const SparseMatrix* adjacency, const Objective& objective, bool train_mode,
                                    uint64_t seed, uint64_t epoch) {
  const auto& labels = *objective.labels;
  const auto& mask = *objective.mask;
  if (mask.empty()) throw TrainingError("training mask is empty");

  ForwardTrace trace;
  const Eigen::MatrixXd logits = run_forward(model, features, adjacency, train_mode, seed, epoch, &trace);
  const Eigen::Index c = logits.cols();

  LossAndGradients out;
  Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(logits.rows(), c);
  if (objective.loss == LossKind::CrossEntropy) {
    double total_weight = 0.0;
    for (int i : mask) total_weight += objective.class_weights ? (*objective.class_weights)[labels[i]] : 1.0;
    if (!(total_weight > 0.0)) throw TrainingError("class weights sum to zero over the training mask");
    for (int i : mask) {
      const double w = (objective.class_weights ? (*objective.class_weights)[labels[i]] : 1.0) / total_weight;
      const double m = logits.row(i).maxCoeff();
      const Eigen::RowVectorXd e = (logits.row(i).array() - m).exp().matrix();
      const double s = e.sum();
      out.loss += w * (std::log(s) + m - logits(i, labels[i]));
      dz.row(i) = w * (e / s);
      dz(i, labels[i]) -= w;
    }
  } else {
    const double scale = 1.0 / static_cast<double>(mask.size());
    for (int i : mask) {
      Eigen::RowVectorXd diff = logits.row(i);
      diff(labels[i]) -= 1.0;
      out.loss += 0.5 * scale * diff.squaredNorm();
      dz.row(i) = scale * diff;
    }
  }

  out.gradients.resize(model.layers.size());
  for (size_t li = model.layers.size(); li-- > 0;) {
    const auto& layer = model.layers[li];
    auto& grad = out.gradients[li];
    grad.bias = dz.colwise().sum().transpose();
    Eigen::MatrixXd dt;
    if (model.kind == ModelKind::Gcn) {
      dt.noalias() = adjacency->transpose() * dz;
    } else {
      dt = dz;
    }
    if (trace.sparse_inputs[li].nonZeros() > 0) {
      grad.weight.noalias() = trace.sparse_inputs[li].transpose() * dt;
    } else {
      grad.weight.noalias() = trace.inputs[li].transpose() * dt;
    }
    if (objective.weight_decay > 0.0) {
      grad.weight += objective.weight_decay * layer.weight;
      out.loss += 0.5 * objective.weight_decay * layer.weight.squaredNorm();
    }
    if (li == 0) break;
    Eigen::MatrixXd dh;
    dh.noalias() = dt * layer.weight.transpose();
    if (trace.masks[li].size() > 0) dh = dh.cwiseProduct(trace.masks[li]);
    const auto& prev = trace.pre[li - 1];
    dz = (prev.array() > 0.0).select(dh, 0.0);
  }
  return out;
}

namespace {

struct AdamState {
  std::vector<DenseLayer> m, v;
};

void adam_step(ClassifierModel& model, const std::vector<DenseLayer>& grads, AdamState& st, double lr, int t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    st.m[l].weight = b1 * st.m[l].weight + (1.0 - b1) * grads[l].weight;
    st.v[l].weight = b2 * st.v[l].weight + (1.0 - b2) * grads[l].weight.cwiseAbs2();
    st.m[l].bias = b1 * st.m[l].bias + (1.0 - b1) * grads[l].bias;
    st.v[l].bias = b2 * st.v[l].bias + (1.0 - b2) * grads[l].bias.cwiseAbs2();
    layer.weight.array() -= lr * (st.m[l].weight.array() / c1) / ((st.v[l].weight.array() / c2).sqrt() + eps);
    layer.bias.array() -= lr * (st.m[l].bias.array() / c1) / ((st.v[l].bias.array() / c2).sqrt() + eps);
  }
}

}  // namespace

namespace {
ClassifierModel train_loop(const Eigen::MatrixXd& features, const SparseMatrix* adjacency,
                           const std::vector<int>& labels, const std::vector<int>& train_idx, int class_count,
                           const TrainConfig& cfg, const std::vector<double>* class_weights);
}  // namespace

ClassifierModel train_classifier(const Eigen::MatrixXd& features, const SparseMatrix* adjacency,
                                 const std::vector<int>& labels, const std::vector<int>& train_idx, int class_count,
                                 const TrainConfig& cfg, const std::vector<double>* class_weights) {
  if (cfg.epochs < 1) throw TrainingError("epochs must be at least 1");
  if (cfg.learning_rate < 0.0) throw TrainingError("learning_rate must be non-negative");
  if (train_idx.empty()) throw TrainingError("training mask is empty");
  for (int i : train_idx) {
    if (labels[i] < 0 || labels[i] >= class_count) throw TrainingError("training label out of range");
  }
  if (!adjacency) {
    // Rows outside the mask never touch an MLP's loss, so train on the subset.
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(train_idx.size()), features.cols());
    std::vector<int> sub_labels;
    for (size_t r = 0; r < train_idx.size(); ++r) {
      rows.row(static_cast<Eigen::Index>(r)) = features.row(train_idx[r]);
      sub_labels.push_back(labels[train_idx[r]]);
    }
    std::vector<int> all(train_idx.size());
    for (size_t r = 0; r < all.size(); ++r) all[r] = static_cast<int>(r);
    return train_loop(rows, nullptr, sub_labels, all, class_count, cfg, class_weights);
  }
  return train_loop(features, adjacency, labels, train_idx, class_count, cfg, class_weights);
}

namespace {

ClassifierModel train_loop(const Eigen::MatrixXd& features, const SparseMatrix* adjacency,
                           const std::vector<int>& labels, const std::vector<int>& train_idx, int class_count,
                           const TrainConfig& cfg, const std::vector<double>* class_weights) {
  ClassifierModel model =
      init_model(adjacency ? ModelKind::Gcn : ModelKind::Mlp, features.cols(), class_count, cfg);

  AdamState st;
  for (const auto& l : model.layers) {
    st.m.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  }
  st.v = st.m;

  Objective obj;
  obj.labels = &labels;
  obj.mask = &train_idx;
  obj.class_weights = class_weights;
  obj.weight_decay = cfg.weight_decay;
  model.loss_history.reserve(static_cast<size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto lg = loss_and_gradients(model, features, adjacency, obj, true, cfg.seed, static_cast<uint64_t>(epoch));
    if (!std::isfinite(lg.loss)) {
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
    }
    model.loss_history.push_back(lg.loss);
    if (cfg.learning_rate > 0.0) adam_step(model, lg.gradients, st, cfg.learning_rate, epoch + 1);
  }
  return model;
}

}  // namespace

std::vector<double> inverse_frequency_weights(const std::vector<int>& labels, const std::vector<int>& train_idx,
                                              int class_count) {
  std::vector<double> counts(class_count, 0.0);
  for (int i : train_idx) counts[labels[i]] += 1.0;
  std::vector<double> w(class_count, 0.0);
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < class_count; ++c) {
    if (counts[c] > 0) {
      w[c] = 1.0 / counts[c];
      total += w[c];
      ++present;
    }
  }
  for (auto& x : w) x = present ? x * present / total : 0.0;
  return w;
}

double gradient_check(const ClassifierModel& model, const Eigen::MatrixXd& features, const SparseMatrix* adjacency,
                      const Objective& objective, double epsilon, size_t max_checks, uint64_t seed) {
  const auto analytic = loss_and_gradients(model, features, adjacency, objective).gradients;

  // (layer, is_bias, flat index)
  std::vector<std::tuple<size_t, bool, Eigen::Index>> params;
  for (size_t l = 0; l < model.layers.size(); ++l) {
    for (Eigen::Index k = 0; k < model.layers[l].weight.size(); ++k) params.emplace_back(l, false, k);
    for (Eigen::Index k = 0; k < model.layers[l].bias.size(); ++k) params.emplace_back(l, true, k);
  }
  if (max_checks > 0 && params.size() > max_checks) {
    Rng rng(seed);
    rng.shuffle(params);
    params.resize(max_checks);
  }

  ClassifierModel probe = model;
  double worst = 0.0;
  for (const auto& [l, is_bias, k] : params) {
    double& theta = is_bias ? probe.layers[l].bias.data()[k] : probe.layers[l].weight.data()[k];
    const double saved = theta;
    theta = saved + epsilon;
    const double up = loss_and_gradients(probe, features, adjacency, objective).loss;
    theta = saved - epsilon;
    const double down = loss_and_gradients(probe, features, adjacency, objective).loss;
    theta = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double exact = is_bias ? analytic[l].bias.data()[k] : analytic[l].weight.data()[k];
    const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(exact - numeric) / denom);
  }
  return worst;
}

Prediction predict(const ClassifierModel& model, const Eigen::MatrixXd& features, const SparseMatrix* adjacency) {
  Prediction p;
  p.logits = forward(model, features, adjacency, false);
  p.probabilities = softmax_rows(p.logits);
  p.labels.resize(static_cast<size_t>(p.logits.rows()));
  for (Eigen::Index i = 0; i < p.logits.rows(); ++i) p.labels[static_cast<size_t>(i)] = argmax(p.logits.row(i));
  return p;
}

ClassifierModel train_balanced_probe(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                                     const std::vector<int>& idx, int class_count, const TrainConfig& cfg) {
  std::vector<std::vector<int>> by_class(class_count);
  for (int i : idx) by_class[labels[i]].push_back(i);
  size_t per_class = std::numeric_limits<size_t>::max();
  for (const auto& m : by_class) {
    if (!m.empty()) per_class = std::min(per_class, m.size());
  }
  if (per_class == std::numeric_limits<size_t>::max()) throw TrainingError("probe has no training rows");
  std::vector<int> balanced;
  for (int c = 0; c < class_count; ++c) {
    auto m = by_class[c];
    Rng rng(mix64(cfg.seed, static_cast<uint64_t>(c) + 0x70726f6265ULL));
    rng.shuffle(m);
    m.resize(std::min(m.size(), per_class));
    balanced.insert(balanced.end(), m.begin(), m.end());
  }
  std::sort(balanced.begin(), balanced.end());
  return train_classifier(features, nullptr, labels, balanced, class_count, cfg);
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(17);
  out << "savetag-model 1\n";
  out << "kind " << (model.kind == ModelKind::Gcn ? "gcn" : "mlp") << "\n";
  out << "class_count " << model.class_count << "\n";
  out << "dropout " << model.dropout << "\n";
  out << "encoder_id " << (model.encoder_id.empty() ? "-" : model.encoder_id) << "\n";
  out << "config_digest " << (model.config_digest.empty() ? "-" : model.config_digest) << "\n";
  out << "layers " << model.layers.size() << "\n";
  for (const auto& l : model.layers) {
    out << "layer " << l.in_dim() << " " << l.out_dim() << "\n";
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out << (c ? " " : "") << l.weight(r, c);
      out << "\n";
    }
    for (Eigen::Index c = 0; c < l.bias.size(); ++c) out << (c ? " " : "") << l.bias(c);
    out << "\n";
  }
  write_file(path, out.str());
}

ClassifierModel load_model(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  auto expect = [&](const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word) throw Error(path.string() + ": expected '" + word + "'");
  };
  ClassifierModel model;
  int version = 0;
  expect("savetag-model");
  in >> version;
  if (version != 1) throw Error(path.string() + ": unsupported checkpoint version");
  std::string kind;
  expect("kind");
  in >> kind;
  model.kind = kind == "gcn" ? ModelKind::Gcn : ModelKind::Mlp;
  expect("class_count");
  in >> model.class_count;
  expect("dropout");
  in >> model.dropout;
  expect("encoder_id");
  in >> model.encoder_id;
  if (model.encoder_id == "-") model.encoder_id.clear();
  expect("config_digest");
  in >> model.config_digest;
  if (model.config_digest == "-") model.config_digest.clear();
  size_t count = 0;
  expect("layers");
  in >> count;
  for (size_t i = 0; i < count; ++i) {
    Eigen::Index rows = 0, cols = 0;
    expect("layer");
    in >> rows >> cols;
    DenseLayer l;
    l.weight.resize(rows, cols);
    l.bias.resize(cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) in >> l.weight(r, c);
    }
    for (Eigen::Index c = 0; c < cols; ++c) in >> l.bias(c);
    model.layers.push_back(std::move(l));
  }
  if (!in) throw Error(path.string() + ": truncated checkpoint");
  return model;
}

}  // namespace savetag
