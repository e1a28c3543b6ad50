#include "savetag/fixture.h"

#include <set>

#include "savetag/generation.h"

namespace savetag {
namespace {

constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pa",
                                      "qui", "dor", "fen", "gal", "hix", "jun", "bre", "cly", "wum", "yat"};
constexpr uint64_t kSyllableCount = sizeof(kSyllables) / sizeof(kSyllables[0]);

std::vector<std::string> make_vocab(Rng& rng, int count, std::set<std::string>& used) {
  std::vector<std::string> vocab;
  while (static_cast<int>(vocab.size()) < count) {
    std::string w;
    const int parts = 2 + static_cast<int>(rng.index(2));
    for (int p = 0; p < parts; ++p) w += kSyllables[rng.index(kSyllableCount)];
    if (used.insert(w).second) vocab.push_back(w);
  }
  return vocab;
}

}  // namespace

TextGraph make_fixture(const FixtureOptions& options) {
  if (options.class_sizes.size() != options.class_names.size()) {
    throw Error("fixture: class_sizes and class_names differ in length");
  }
  const int c = static_cast<int>(options.class_sizes.size());
  Rng rng(options.seed);
  std::set<std::string> used;
  const auto shared = make_vocab(rng, options.shared_vocab, used);
  std::vector<std::vector<std::string>> vocab;
  for (int k = 0; k < c; ++k) vocab.push_back(make_vocab(rng, options.class_vocab, used));

  TextGraph g;
  g.class_names = options.class_names;
  g.tail_class_count = options.tail_class_count;
  std::vector<std::vector<int>> members(c);
  for (int k = 0; k < c; ++k) {
    for (int i = 0; i < options.class_sizes[k]; ++i) {
      std::string text;
      if (rng.uniform() < options.topic_token_prob) text = class_token(options.class_names[k]);
      for (int t = 0; t < options.tokens_per_text; ++t) {
        const double u = rng.uniform();
        const std::string* word;
        if (u < options.class_token_share) {
          word = &vocab[k][rng.index(vocab[k].size())];
        } else if (u < options.class_token_share + options.foreign_token_share && c > 1) {
          int other = static_cast<int>(rng.index(c - 1));
          if (other >= k) ++other;
          word = &vocab[other][rng.index(vocab[other].size())];
        } else {
          word = &shared[rng.index(shared.size())];
        }
        if (!text.empty()) text += ' ';
        text += *word;
      }
      members[k].push_back(static_cast<int>(g.texts.size()));
      g.texts.push_back(std::move(text));
      g.labels.push_back(k);
    }
  }

  const int n = static_cast<int>(g.texts.size());
  std::vector<std::pair<int, int>> edges;
  for (int v = 0; v < n && n > 1; ++v) {
    const auto& own = members[g.labels[v]];
    for (int e = 0; e < options.edges_per_node; ++e) {
      int u;
      if (rng.uniform() < options.intra_edge_prob && own.size() > 1) {
        u = own[rng.index(own.size())];
      } else {
        u = static_cast<int>(rng.index(n));
      }
      if (u != v) edges.emplace_back(v, u);
    }
  }
  g.edges = canonical_edges(std::move(edges));
  return g;
}

}  // namespace savetag
