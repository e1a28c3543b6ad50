#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace savetag {

// Randomized numerical checks of the aggregator, margin and gradient
// properties. Each check builds its own instances from `seed`.

struct CheckResult {
  std::string name;
  bool passed = false;
  int trials = 0;
  int failures = 0;
  double worst = 0.0;  // largest violation or error seen
  std::string detail;
};

/// Degree-0 node under L stacked aggregator layers: equals
/// alpha^L h W_1 ... W_L within 1e-12 and is bit-unchanged when every other
/// node's input is perturbed. `alpha` < 0 draws it per trial.
CheckResult check_isolation(int trials, uint64_t seed, double alpha = -1.0);

/// Same invariance through a trained-shape GCN forward pass on a graph
/// where one node has no edges.
CheckResult check_gcn_isolation(int trials, uint64_t seed);

struct ContractionOptions {
  bool normalized_beta = true;  // false: rows of beta sum to 3 (negative control)
  double anchor_scale = 1.0;    // magnitude of the reference point m
};

/// One aggregator step with |W|_2 = L_w < 1, neighbors within eps of m and
/// |h_v - m| >= eps: |h'_v - m W| <= alpha L_w |h_v - m| + (1 - alpha) L_w eps.
CheckResult check_contraction(int trials, uint64_t seed, const ContractionOptions& options = {});

/// Margin sets with interior margins >= gamma0, boundary margins uniform in
/// [-delta, delta], delta >= gamma0 > 0. `stated` evaluates
/// gamma_min >= gamma0 - delta (1 - BCR); otherwise the floor
/// min(gamma0, -delta) is evaluated.
CheckResult check_margin_sets(int trials, uint64_t seed, bool stated);

/// BCR = 0 corner: the bound equals gamma0 - delta exactly and holds.
CheckResult check_margin_corner(int trials, uint64_t seed);

/// Analytic versus central-difference gradients on random 6-node instances.
CheckResult check_gradients(bool gcn, int trials, uint64_t seed, double tolerance = 1e-4);

}  // namespace savetag
