#include "savetag/theory.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "savetag/graph.h"
#include "savetag/metrics.h"
#include "savetag/neural.h"

namespace savetag {

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(-scale, scale);
  }
  return m;
}

// Random simple graph on n nodes where `isolated` has no edges.
std::vector<std::pair<int, int>> random_edges(Rng& rng, int n, int isolated, double p) {
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (u == isolated || v == isolated) continue;
      if (rng.uniform() < p) edges.emplace_back(u, v);
    }
  }
  return edges;
}

std::vector<std::vector<std::pair<int, double>>> random_beta(Rng& rng, const std::vector<std::vector<int>>& adj,
                                                             double row_sum) {
  std::vector<std::vector<std::pair<int, double>>> out(adj.size());
  for (size_t v = 0; v < adj.size(); ++v) {
    double total = 0.0;
    for (int u : adj[v]) {
      const double w = rng.uniform(0.05, 1.0);
      out[v].emplace_back(u, w);
      total += w;
    }
    for (auto& [u, w] : out[v]) w *= row_sum / total;
  }
  return out;
}

CheckResult finish(CheckResult r) {
  r.passed = r.failures == 0;
  return r;
}

}  // namespace

CheckResult check_isolation(int trials, uint64_t seed, double alpha_fixed) {
  CheckResult r{"isolation", false, trials, 0, 0.0, ""};
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    const int n = 3 + static_cast<int>(rng.index(8));
    const int iso = static_cast<int>(rng.index(n));
    const int layers = 1 + static_cast<int>(rng.index(3));
    const double alpha = alpha_fixed >= 0.0 ? alpha_fixed : rng.uniform();
    std::vector<std::vector<int>> adj(n);
    for (const auto& [u, v] : random_edges(rng, n, iso, 0.5)) {
      adj[u].push_back(v);
      adj[v].push_back(u);
    }
    AggregatorParams params;
    params.alpha = alpha;
    params.neighbor_weights = random_beta(rng, adj, 1.0);

    std::vector<Eigen::MatrixXd> weights;
    Eigen::Index dim = 2 + static_cast<Eigen::Index>(rng.index(4));
    const Eigen::MatrixXd h0 = random_matrix(rng, n, dim);
    for (int l = 0; l < layers; ++l) {
      const Eigen::Index out = 2 + static_cast<Eigen::Index>(rng.index(4));
      weights.push_back(random_matrix(rng, dim, out));
      dim = out;
    }
    auto run = [&](const Eigen::MatrixXd& input) {
      Eigen::MatrixXd h = input;
      for (const auto& w : weights) h = aggregate_layer(h, params, w);
      return h;
    };
    const Eigen::MatrixXd h = run(h0);
    Eigen::RowVectorXd closed = h0.row(iso);
    for (const auto& w : weights) closed = closed * w;
    closed *= std::pow(alpha, layers);
    const double err = (h.row(iso) - closed).cwiseAbs().maxCoeff() / std::max(1.0, closed.cwiseAbs().maxCoeff());
    r.worst = std::max(r.worst, err);

    Eigen::MatrixXd perturbed = random_matrix(rng, n, h0.cols(), 10.0);
    perturbed.row(iso) = h0.row(iso);
    const Eigen::MatrixXd hp = run(perturbed);
    const bool same = (hp.row(iso).array() == h.row(iso).array()).all();
    if (err > 1e-12 || !same) ++r.failures;
  }
  return finish(r);
}

CheckResult check_gcn_isolation(int trials, uint64_t seed) {
  CheckResult r{"gcn_isolation", false, trials, 0, 0.0, ""};
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    const int n = 4 + static_cast<int>(rng.index(10));
    const int iso = static_cast<int>(rng.index(n));
    const auto adj = normalized_adjacency(static_cast<size_t>(n), random_edges(rng, n, iso, 0.4));
    TrainConfig cfg;
    cfg.hidden_dims = {3 + static_cast<int>(rng.index(4))};
    cfg.seed = rng.next();
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.index(5));
    const auto model = init_model(ModelKind::Gcn, d, 3, cfg);
    const Eigen::MatrixXd x = random_matrix(rng, n, d);
    const Eigen::MatrixXd z = forward(model, x, &adj.matrix);
    Eigen::MatrixXd xp = random_matrix(rng, n, d, 5.0);
    xp.row(iso) = x.row(iso);
    const Eigen::MatrixXd zp = forward(model, xp, &adj.matrix);
    if (!(z.row(iso).array() == zp.row(iso).array()).all()) {
      ++r.failures;
      r.worst = std::max(r.worst, (z.row(iso) - zp.row(iso)).cwiseAbs().maxCoeff());
    }
  }
  return finish(r);
}

CheckResult check_contraction(int trials, uint64_t seed, const ContractionOptions& options) {
  CheckResult r{options.normalized_beta ? "contraction" : "contraction_unnormalized", false, trials, 0, 0.0, ""};
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    const Eigen::Index p = 2 + static_cast<Eigen::Index>(rng.index(5));
    const int k = 1 + static_cast<int>(rng.index(6));
    const double alpha = rng.uniform(0.05, 0.95);
    const double lw = rng.uniform(0.1, 0.99);
    const double eps = rng.uniform(0.05, 1.0);

    Eigen::MatrixXd w = random_matrix(rng, p, p);
    const double sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(w).singularValues()(0);
    w *= lw / sigma;

    Eigen::RowVectorXd m = random_matrix(rng, 1, p, options.anchor_scale);
    auto at_radius = [&](double radius) {
      Eigen::RowVectorXd dir = random_matrix(rng, 1, p);
      while (dir.norm() < 1e-6) dir = random_matrix(rng, 1, p);
      return Eigen::RowVectorXd(m + radius * dir / dir.norm());
    };
    Eigen::MatrixXd h(k + 1, p);
    h.row(0) = at_radius(eps + rng.uniform(0.0, 3.0));
    for (int j = 1; j <= k; ++j) h.row(j) = at_radius(rng.uniform(0.0, eps));

    std::vector<std::vector<int>> adj(static_cast<size_t>(k + 1));
    for (int j = 1; j <= k; ++j) adj[0].push_back(j);
    AggregatorParams params;
    params.alpha = alpha;
    params.check_normalized = options.normalized_beta;
    params.neighbor_weights = random_beta(rng, adj, options.normalized_beta ? 1.0 : 3.0);

    const Eigen::MatrixXd out = aggregate_layer(h, params, w);
    const double d = (h.row(0) - m).norm();
    const double d_next = (out.row(0) - m * w).norm();
    const double bound = alpha * lw * d + (1.0 - alpha) * lw * eps;
    const double violation = d_next - bound;
    r.worst = std::max(r.worst, violation);
    if (violation > 1e-12 * std::max(1.0, bound)) ++r.failures;
  }
  return finish(r);
}

CheckResult check_margin_sets(int trials, uint64_t seed, bool stated) {
  CheckResult r{stated ? "margin_bound_stated" : "margin_floor", false, trials, 0, 0.0, ""};
  Rng rng(seed);
  int boundary_trials = 0;
  for (int t = 0; t < trials; ++t) {
    const double gamma0 = rng.uniform(0.1, 2.0);
    const double delta = gamma0 * rng.uniform(1.0, 3.0);
    const int interior = 1 + static_cast<int>(rng.index(40));
    const int boundary = static_cast<int>(rng.index(20));
    double gmin = gamma0 + rng.uniform(0.0, 1.0);  // original training set minimum stays >= gamma0
    for (int i = 0; i < interior; ++i) gmin = std::min(gmin, gamma0 + rng.uniform(0.0, 2.0));
    for (int i = 0; i < boundary; ++i) gmin = std::min(gmin, rng.uniform(-delta, delta));
    const double bcr = static_cast<double>(boundary) / static_cast<double>(interior + boundary);
    boundary_trials += boundary > 0;
    const auto check =
        stated ? check_margin_bound(gamma0, delta, bcr, gmin) : check_margin_floor(gamma0, delta, bcr, gmin);
    if (!check.holds) {
      ++r.failures;
      r.worst = std::max(r.worst, -check.slack);
    }
  }
  std::ostringstream msg;
  msg << boundary_trials << " of " << trials << " sets contain boundary samples";
  r.detail = msg.str();
  return finish(r);
}

CheckResult check_margin_corner(int trials, uint64_t seed) {
  CheckResult r{"margin_bound_bcr0", false, trials, 0, 0.0, ""};
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    const double gamma0 = rng.uniform(0.1, 2.0);
    const double delta = gamma0 * rng.uniform(1.0, 3.0);
    double gmin = gamma0 + rng.uniform(0.0, 1.0);
    const int interior = 1 + static_cast<int>(rng.index(40));
    for (int i = 0; i < interior; ++i) gmin = std::min(gmin, gamma0 + rng.uniform(0.0, 2.0));
    const auto check = check_margin_bound(gamma0, delta, 0.0, gmin);
    if (check.bound != gamma0 - delta || !check.holds) ++r.failures;
  }
  return finish(r);
}

CheckResult check_gradients(bool gcn, int trials, uint64_t seed, double tolerance) {
  CheckResult r{gcn ? "gradient_gcn" : "gradient_mlp", false, trials, 0, 0.0, ""};
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    constexpr int n = 6;
    const int classes = 2 + static_cast<int>(rng.index(3));
    const Eigen::Index d = 3 + static_cast<Eigen::Index>(rng.index(4));
    TrainConfig cfg;
    cfg.hidden_dims = {3 + static_cast<int>(rng.index(4))};
    if (rng.uniform() < 0.5) cfg.hidden_dims.push_back(3 + static_cast<int>(rng.index(3)));
    cfg.seed = rng.next();
    auto model = init_model(gcn ? ModelKind::Gcn : ModelKind::Mlp, d, classes, cfg);
    for (auto& l : model.layers) {
      l.weight = random_matrix(rng, l.weight.rows(), l.weight.cols());
      l.bias = random_matrix(rng, l.bias.size(), 1, 0.5);
    }
    const Eigen::MatrixXd x = random_matrix(rng, n, d);
    std::vector<int> labels(n);
    for (auto& y : labels) y = static_cast<int>(rng.index(classes));
    std::vector<int> mask;
    for (int i = 0; i < n; ++i) {
      if (rng.uniform() < 0.7 || mask.empty()) mask.push_back(i);
    }
    std::vector<double> weights(classes);
    for (auto& w : weights) w = rng.uniform(0.5, 2.0);
    Objective obj;
    obj.labels = &labels;
    obj.mask = &mask;
    obj.class_weights = rng.uniform() < 0.5 ? &weights : nullptr;
    obj.weight_decay = 5e-4;
    NormalizedAdjacency adj;
    if (gcn) adj = normalized_adjacency(n, random_edges(rng, n, -1, 0.4));
    const double err = gradient_check(model, x, gcn ? &adj.matrix : nullptr, obj, 1e-5);
    r.worst = std::max(r.worst, err);
    if (err > tolerance) ++r.failures;
  }
  return finish(r);
}

}  // namespace savetag
