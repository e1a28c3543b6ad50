#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "savetag/graph.h"

namespace savetag {

// Seeded synthetic text-attributed graph for demos and end-to-end tests.
// Each class draws its text from a private vocabulary mixed with a shared
// one; edges are homophilous with probability `intra_edge_prob`.
struct FixtureOptions {
  std::vector<int> class_sizes = {150, 150, 40, 40};
  std::vector<std::string> class_names = {"Graph Theory", "Optimization", "Genomics", "Astronomy"};
  int tail_class_count = 2;
  int class_vocab = 30;
  int shared_vocab = 120;
  int tokens_per_text = 20;
  double class_token_share = 0.4;
  double foreign_token_share = 0.2;  // tokens borrowed from another class's vocabulary
  double topic_token_prob = 0.5;     // chance a text names its own class
  int edges_per_node = 8;
  double intra_edge_prob = 0.6;
  uint64_t seed = 7;
};

TextGraph make_fixture(const FixtureOptions& options);

}  // namespace savetag
