#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "savetag/embedding.h"
#include "savetag/graph.h"
#include "savetag/http_client.h"
#include "savetag/synthetic.h"

namespace savetag {

class GenerationError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Vicinal twins

struct VicinalPair {
  int anchor = -1;
  int partner = -1;  // equals anchor for self-conditioned pairs
  int label = -1;    // the anchor's class

  bool operator==(const VicinalPair&) const = default;
};

enum class TwinScope {
  SameClass,  // partners share the anchor's class
  AnyClass,   // partners drawn from every training node (mixed-class prompts)
};

/// Synthetic nodes needed per tail class to bring its training count up to
/// head_count.
std::map<int, int> default_synthetic_targets(const LongTailSplit& split, const std::vector<int>& labels);

/// For every tail-class training node v, pairs (v, u) for u in the k nearest
/// training nodes of v (same class unless scope is AnyClass). Pairs are
/// emitted round-robin over anchors (ascending id), then by neighbor rank,
/// repeating the cycle until each class reaches its target count. An anchor
/// with no partner gets the self-pair (v, v).
std::vector<VicinalPair> find_vicinal_twins(const LongTailSplit& split, const EmbeddingMatrix& emb,
                                            const std::vector<int>& labels, int k,
                                            const std::map<int, int>& target_counts,
                                            TwinScope scope = TwinScope::SameClass);

/// The twin scope each prompt variant draws its partners from.
TwinScope twin_scope_for(Variant v);

// ---------------------------------------------------------------------------
// Prompts

/// Per-dataset slots of the interpolation prompt templates.
struct PromptSpec {
  std::string dataset_task;  // {Task}
  std::string dataset_name;  // {Dataset}
  std::string text_noun;     // {Text}
  std::string format_template;  // {Format}, framed by <START> ... <END> in the prompt

  std::string digest() const;
};

/// Built-in prompt parameters for cora, pubmed, citeseer, photo, computer,
/// children (case-insensitive). Throws for unknown names.
PromptSpec prompt_spec_for(const std::string& dataset);

struct ChatMessage {
  std::string role;  // "system", "user" or "assistant"
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

/// Chat transcript asking for a text between t1 and t2. Variant O takes
/// only t1 (4 messages); S and M take both seeds (6 messages). The final
/// request always names class1, the anchor's class.
std::vector<ChatMessage> build_prompt(Variant variant, const std::string& t1, const std::optional<std::string>& t2,
                                      const std::string& class1, const std::string& class2,
                                      const PromptSpec& spec);

enum class ParseMode { Lenient, Strict };

/// Content of the first <START> ... <END> block, trimmed.
std::string parse_generation(const std::string& raw, ParseMode mode = ParseMode::Lenient);

// ---------------------------------------------------------------------------
// Generators

/// Deterministic stand-in for the LLM: keeps ~70% of t1's tokens and ~30% of
/// t2's in their original order, interleaved by a seeded schedule, prefixed
/// with a token derived from the class name.
std::string mock_generate(const std::string& t1, const std::string& t2, const std::string& class_name,
                          uint64_t seed);

/// Whitespace-free token used by the mock generator for a class name.
std::string class_token(const std::string& class_name);

enum class GeneratorKind { Mock, Remote };

struct GeneratorConfig {
  GeneratorKind kind = GeneratorKind::Mock;
  double temperature = 0.7;
  std::string model = "meta-llama/Meta-Llama-3-8B-Instruct";
  HttpOptions http;
  int max_tokens = 512;
  uint64_t seed = 0;  // mock only
  int max_in_flight = 4;
  ParseMode parse_mode = ParseMode::Lenient;
};

struct GenerationRequest {
  std::vector<ChatMessage> messages;
  std::string t1;
  std::string t2;  // empty for self-conditioned requests
  std::string class_name;
  uint64_t seed = 0;
};

class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  /// Raw model output, markers included. Must be safe to call concurrently.
  virtual std::string generate(const GenerationRequest& request) = 0;
  virtual std::string id() const = 0;
};

class MockGenerator : public TextGenerator {
 public:
  explicit MockGenerator(uint64_t seed) : seed_(seed) {}
  std::string generate(const GenerationRequest& request) override;
  std::string id() const override;

 private:
  uint64_t seed_;
};

/// POST {base}/v1/chat/completions; returns choices[0].message.content.
std::string chat_completion(const HttpOptions& http, const std::string& model,
                            const std::vector<ChatMessage>& messages, double temperature, int max_tokens);

class RemoteChatGenerator : public TextGenerator {
 public:
  explicit RemoteChatGenerator(GeneratorConfig cfg) : cfg_(std::move(cfg)) {}
  std::string generate(const GenerationRequest& request) override;
  std::string id() const override { return "remote:" + cfg_.model; }

 private:
  GeneratorConfig cfg_;
};

std::unique_ptr<TextGenerator> make_generator(const GeneratorConfig& cfg);

// ---------------------------------------------------------------------------
// Batch generation with an append-only cache

struct SkippedPair {
  size_t pair_index = 0;
  std::string reason;
};

struct GenerationResult {
  std::vector<SyntheticNode> nodes;  // input order, skipped pairs removed
  std::vector<size_t> pair_index;    // source pair of each node
  std::vector<SkippedPair> skipped;
  size_t cache_hits = 0;
  size_t generator_calls = 0;
};

struct GenerationInputs {
  const std::vector<std::string>* texts = nullptr;
  const std::vector<int>* labels = nullptr;
  const std::vector<std::string>* class_names = nullptr;
};

/// Cache file is `cache_path` (gen_cache.jsonl); an empty path disables it.
GenerationResult generate_interpolations(const std::vector<VicinalPair>& pairs, Variant variant,
                                         const GeneratorConfig& cfg, const PromptSpec& spec,
                                         const GenerationInputs& inputs, const std::filesystem::path& cache_path);

/// Same, with an explicit generator (used for instrumentation in tests).
GenerationResult generate_interpolations(const std::vector<VicinalPair>& pairs, Variant variant,
                                         TextGenerator& generator, const GeneratorConfig& cfg,
                                         const PromptSpec& spec, const GenerationInputs& inputs,
                                         const std::filesystem::path& cache_path);

}  // namespace savetag
