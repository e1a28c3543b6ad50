#include "savetag/generation.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

namespace savetag {
namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Variant v) {
  switch (v) {
    case Variant::O: return "O";
    case Variant::S: return "S";
    case Variant::M: return "M";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "O" || s == "o") return Variant::O;
  if (s == "S" || s == "s") return Variant::S;
  if (s == "M" || s == "m") return Variant::M;
  throw Error("unknown variant '" + s + "' (expected O, S or M)");
}

// ---------------------------------------------------------------------------
// Vicinal twins

std::map<int, int> default_synthetic_targets(const LongTailSplit& split, const std::vector<int>& labels) {
  std::map<int, int> counts;
  for (int c : split.tail_classes) counts[c] = 0;
  for (int i : split.train_idx) {
    if (split.is_tail(labels[i])) ++counts[labels[i]];
  }
  std::map<int, int> targets;
  for (const auto& [c, n] : counts) targets[c] = std::max(0, split.head_count - n);
  return targets;
}

TwinScope twin_scope_for(Variant v) { return v == Variant::M ? TwinScope::AnyClass : TwinScope::SameClass; }

std::vector<VicinalPair> find_vicinal_twins(const LongTailSplit& split, const EmbeddingMatrix& emb,
                                            const std::vector<int>& labels, int k,
                                            const std::map<int, int>& target_counts, TwinScope scope) {
  if (k < 1) throw GenerationError("knn k must be at least 1");
  std::vector<VicinalPair> pairs;
  for (const auto& [cls, target] : target_counts) {
    if (target <= 0) continue;
    std::vector<int> anchors;
    for (int i : split.train_idx) {
      if (labels[i] == cls) anchors.push_back(i);
    }
    if (anchors.empty()) throw GenerationError("class " + std::to_string(cls) + " has no training nodes");

    std::vector<std::vector<int>> partners(anchors.size());
    size_t max_rank = 0;
    for (size_t a = 0; a < anchors.size(); ++a) {
      partners[a] = scope == TwinScope::SameClass ? knn_candidates(anchors[a], k, emb, anchors)
                                                  : knn_candidates(anchors[a], k, emb, split.train_idx);
      if (partners[a].empty()) {
        warn("class " + std::to_string(cls) + ": anchor " + std::to_string(anchors[a]) +
             " has no vicinal twin; using a self-pair");
        partners[a].push_back(anchors[a]);
      }
      max_rank = std::max(max_rank, partners[a].size());
    }

    int emitted = 0;
    while (emitted < target) {
      for (size_t rank = 0; rank < max_rank && emitted < target; ++rank) {
        for (size_t a = 0; a < anchors.size() && emitted < target; ++a) {
          if (rank < partners[a].size()) {
            pairs.push_back({anchors[a], partners[a][rank], cls});
            ++emitted;
          }
        }
      }
    }
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Prompts

std::string PromptSpec::digest() const {
  json j = {{"task", dataset_task}, {"dataset", dataset_name}, {"text", text_noun}, {"format", format_template}};
  return sha256_hex(j.dump());
}

PromptSpec prompt_spec_for(const std::string& dataset) {
  std::string key = dataset;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  static const std::string kArticles = "new academic articles";
  static const std::string kReviews = "reviews of products from Amazon";
  if (key == "cora") return {kArticles, "Cora", "article", "[New Title] : [New Abstract]"};
  if (key == "pubmed") return {kArticles, "Pubmed", "article", "Title: [New Title]\n Abstract: [New Abstract]"};
  if (key == "citeseer") return {kArticles, "Citeseer", "article", "[New Title] : [New Abstract]"};
  if (key == "photo") return {kReviews, "Photo", "review", "Review: [New Review]"};
  if (key == "computer") return {kReviews, "Computer", "review", "Review: [New Review]"};
  if (key == "children") {
    return {"new book descriptions", "Children", "book description",
            "Title: [New Title]\n Book Description: [New Description]"};
  }
  throw Error("no built-in prompt parameters for dataset '" + dataset + "'");
}

namespace {

std::string framed(const std::string& s) { return "<START>" + s + "<END>"; }

const char* kOrdinals[] = {"first", "second", "third"};

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

}  // namespace

std::vector<ChatMessage> build_prompt(Variant variant, const std::string& t1, const std::optional<std::string>& t2,
                                      const std::string& class1, const std::string& class2,
                                      const PromptSpec& spec) {
  const std::string& ds = spec.dataset_name;
  if (variant == Variant::O) {
    const std::string& task = spec.dataset_task;
    return {
        {"system", "You are a helpful AI assistant for generating " + task + " from " + ds + ", where each " + task +
                       " follows the format " + framed(spec.format_template) + "."},
        {"user", "Give me the first " + task + " from " + ds + " with topic " + class1 + "."},
        {"assistant", framed(t1)},
        {"user", "Give me the second " + task + " from " + ds + " with topic " + class1 +
                     ". It should be more similar to the first " + task + "."},
    };
  }
  if (!t2) throw GenerationError(std::string("variant ") + to_string(variant) + " needs a second seed text");
  if (variant == Variant::S && class1 != class2) {
    throw GenerationError("variant S requires both seeds from the same class (got '" + class1 + "' and '" +
                          class2 + "')");
  }
  const std::string& text = spec.text_noun;
  std::vector<ChatMessage> msgs;
  msgs.push_back({"system", "You are a helpful AI assistant for generating " + spec.dataset_task + " from " + ds +
                                ", where each " + text + " follows the format " + framed(spec.format_template) +
                                "."});
  msgs.push_back({"user", std::string("Give me the ") + kOrdinals[0] + " " + text + " from " + ds + " with topic " +
                              class1 + "."});
  msgs.push_back({"assistant", framed(t1)});
  msgs.push_back({"user", std::string("Give me the ") + kOrdinals[1] + " " + text + " from " + ds + " with topic " +
                              class2 + "."});
  msgs.push_back({"assistant", framed(*t2)});
  msgs.push_back({"user", std::string("Give me the ") + kOrdinals[2] + " " + text + " from " + ds + " with topic " +
                              class1 + ". It should be more similar to the first " + text +
                              " and less similar to the second " + text + "."});
  return msgs;
}

std::string parse_generation(const std::string& raw, ParseMode mode) {
  static constexpr std::string_view kStart = "<START>";
  static constexpr std::string_view kEnd = "<END>";
  const size_t start = raw.find(kStart);
  const size_t body = start == std::string::npos ? 0 : start + kStart.size();
  const size_t end = raw.find(kEnd, body);

  std::string out;
  if (start != std::string::npos && end != std::string::npos) {
    out = trim(std::string_view(raw).substr(body, end - body));
  } else {
    if (mode == ParseMode::Strict) throw GenerationError("generation is missing a <START>/<END> marker");
    warn("generation is missing a <START>/<END> marker; using the unframed text");
    if (start != std::string::npos) {
      out = trim(std::string_view(raw).substr(body));
    } else if (end != std::string::npos) {
      out = trim(std::string_view(raw).substr(0, end));
    } else {
      out = trim(raw);
    }
  }
  if (out.empty()) throw GenerationError("empty generation");
  return out;
}

// ---------------------------------------------------------------------------
// Generators

std::string class_token(const std::string& class_name) {
  std::string tok;
  for (char ch : class_name) tok.push_back(std::isspace(static_cast<unsigned char>(ch)) ? '_' : ch);
  return tok;
}

std::string mock_generate(const std::string& t1, const std::string& t2, const std::string& class_name,
                          uint64_t seed) {
  const auto first = split_ws(t1);
  const auto second = split_ws(t2);
  std::vector<std::string> out{class_token(class_name)};
  if (second.empty()) {
    out.insert(out.end(), first.begin(), first.end());
  } else {
    Rng rng(seed);
    std::vector<std::string> keep1, keep2;
    for (const auto& t : first) {
      if (rng.uniform() < 0.7) keep1.push_back(t);
    }
    if (keep1.empty() && !first.empty()) keep1.push_back(first[rng.index(first.size())]);
    for (const auto& t : second) {
      if (rng.uniform() < 0.3) keep2.push_back(t);
    }
    size_t i = 0, j = 0;
    while (i < keep1.size() || j < keep2.size()) {
      const double rem1 = static_cast<double>(keep1.size() - i);
      const double rem2 = static_cast<double>(keep2.size() - j);
      if (rng.uniform() * (rem1 + rem2) < rem1) {
        out.push_back(keep1[i++]);
      } else {
        out.push_back(keep2[j++]);
      }
    }
  }
  std::string joined;
  for (const auto& t : out) {
    if (!joined.empty()) joined += ' ';
    joined += t;
  }
  return joined;
}

std::string MockGenerator::generate(const GenerationRequest& request) {
  return "<START>" + mock_generate(request.t1, request.t2, request.class_name, request.seed) + "<END>";
}

std::string MockGenerator::id() const { return "mock-v1:seed=" + std::to_string(seed_); }

std::string chat_completion(const HttpOptions& http, const std::string& model,
                            const std::vector<ChatMessage>& messages, double temperature, int max_tokens) {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  json body = {{"model", model}, {"messages", msgs}, {"temperature", temperature}, {"max_tokens", max_tokens}};
  std::string content;
  post_json(http, "/v1/chat/completions", body, [&](const json& res) {
    content = res.at("choices").at(0).at("message").at("content").get<std::string>();
  });
  return content;
}

std::string RemoteChatGenerator::generate(const GenerationRequest& request) {
  return chat_completion(cfg_.http, cfg_.model, request.messages, cfg_.temperature, cfg_.max_tokens);
}

std::unique_ptr<TextGenerator> make_generator(const GeneratorConfig& cfg) {
  if (cfg.kind == GeneratorKind::Mock) return std::make_unique<MockGenerator>(cfg.seed);
  return std::make_unique<RemoteChatGenerator>(cfg);
}

// ---------------------------------------------------------------------------
// Batch generation

namespace {

struct PreparedPair {
  GenerationRequest request;
  std::string key;
  std::string error;  // set when the pair cannot be prompted
};

std::unordered_map<std::string, std::string> load_cache(const fs::path& path) {
  std::unordered_map<std::string, std::string> cache;
  if (path.empty() || !fs::exists(path)) return cache;
  size_t line_no = 0;
  for (const auto& line : split_lines(read_file(path))) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto obj = json::parse(line);
      cache[obj.at("key").get<std::string>()] = obj.at("text").get<std::string>();
    } catch (const json::exception&) {
      warn(path.string() + ":" + std::to_string(line_no) + ": unreadable cache line ignored");
    }
  }
  return cache;
}

}  // namespace

GenerationResult generate_interpolations(const std::vector<VicinalPair>& pairs, Variant variant,
                                         const GeneratorConfig& cfg, const PromptSpec& spec,
                                         const GenerationInputs& inputs, const fs::path& cache_path) {
  auto generator = make_generator(cfg);
  return generate_interpolations(pairs, variant, *generator, cfg, spec, inputs, cache_path);
}

GenerationResult generate_interpolations(const std::vector<VicinalPair>& pairs, Variant variant,
                                         TextGenerator& generator, const GeneratorConfig& cfg,
                                         const PromptSpec& spec, const GenerationInputs& inputs,
                                         const fs::path& cache_path) {
  const auto& texts = *inputs.texts;
  const auto& labels = *inputs.labels;
  const auto& names = *inputs.class_names;
  const std::string gen_id = generator.id();
  const std::string spec_digest = spec.digest();

  std::map<std::pair<int, int>, int> attempts;
  std::vector<PreparedPair> prepared(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    auto& prep = prepared[i];
    const bool self = p.partner == p.anchor || variant == Variant::O;
    const Variant effective = self ? Variant::O : variant;
    const std::string& class1 = names[labels[p.anchor]];
    const std::string& class2 = self ? class1 : names[labels[p.partner]];
    const std::string& t1 = texts[p.anchor];
    const std::optional<std::string> t2 = self ? std::nullopt : std::optional<std::string>(texts[p.partner]);
    const int attempt = attempts[{p.anchor, p.partner}]++;
    try {
      prep.request.messages = build_prompt(effective, t1, t2, class1, class2, spec);
    } catch (const GenerationError& e) {
      prep.error = e.what();
      continue;
    }
    prep.request.t1 = t1;
    prep.request.t2 = t2 ? *t2 : t1;
    prep.request.class_name = class1;
    json key = {{"variant", to_string(variant)},
                {"anchor", p.anchor},
                {"partner", p.partner},
                {"model", gen_id},
                {"temperature", cfg.temperature},
                {"prompt", spec_digest},
                {"attempt", attempt},
                {"t1", sha256_hex(t1)},
                {"t2", t2 ? sha256_hex(*t2) : ""},
                {"class", class1}};
    prep.key = sha256_hex(key.dump());
    prep.request.seed = std::stoull(prep.key.substr(0, 16), nullptr, 16);
  }

  GenerationResult result;
  auto cache = load_cache(cache_path);
  std::vector<std::string> texts_out(pairs.size());
  std::vector<std::string> errors(pairs.size());
  std::vector<size_t> pending;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (!prepared[i].error.empty()) {
      errors[i] = prepared[i].error;
    } else if (auto it = cache.find(prepared[i].key); it != cache.end()) {
      texts_out[i] = it->second;
      ++result.cache_hits;
    } else {
      pending.push_back(i);
    }
  }

  std::vector<std::string> raw(pairs.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t slot = next++; slot < pending.size(); slot = next++) {
      const size_t i = pending[slot];
      try {
        raw[i] = generator.generate(prepared[i].request);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const size_t threads = std::min<size_t>(pending.size(), static_cast<size_t>(std::max(1, cfg.max_in_flight)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  result.generator_calls = pending.size();

  // Single writer, input order.
  std::ofstream cache_out;
  if (!cache_path.empty() && !pending.empty()) {
    if (cache_path.has_parent_path()) fs::create_directories(cache_path.parent_path());
    cache_out.open(cache_path, std::ios::app | std::ios::binary);
    if (!cache_out) throw Error("cannot append to cache " + cache_path.string());
  }
  for (size_t i : pending) {
    if (!errors[i].empty()) continue;
    try {
      texts_out[i] = parse_generation(raw[i], cfg.parse_mode);
    } catch (const GenerationError& e) {
      errors[i] = e.what();
      continue;
    }
    if (cache_out.is_open()) {
      json line = {{"key", prepared[i].key},   {"text", texts_out[i]},       {"model", gen_id},
                   {"variant", to_string(variant)}, {"anchor", pairs[i].anchor}, {"partner", pairs[i].partner}};
      cache_out << line.dump() << '\n';
    }
  }

  for (size_t i = 0; i < pairs.size(); ++i) {
    if (!errors[i].empty()) {
      result.skipped.push_back({i, errors[i]});
      continue;
    }
    SyntheticNode node;
    node.text = texts_out[i];
    node.label = labels[pairs[i].anchor];
    node.provenance = {to_string(variant), pairs[i].anchor, pairs[i].partner, gen_id, prepared[i].key};
    result.nodes.push_back(std::move(node));
    result.pair_index.push_back(i);
  }
  return result;
}

}  // namespace savetag
