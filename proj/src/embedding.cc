#include "savetag/embedding.h"

#include <algorithm>
#include <cmath>

namespace savetag {
namespace {

constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr uint64_t kFnvPrime = 0x100000001b3ULL;
constexpr uint64_t kHashSeed = 0x5341564554414731ULL;

bool is_token_byte(unsigned char ch) {
  return (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '_' ||
         ch >= 0x80;
}

void normalize_row(Eigen::MatrixXd& m, Eigen::Index r) {
  const double norm = m.row(r).norm();
  if (norm > 0.0) m.row(r) /= norm;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char ch : text) {
    if (is_token_byte(ch)) {
      cur.push_back((ch >= 'A' && ch <= 'Z') ? static_cast<char>(ch - 'A' + 'a') : static_cast<char>(ch));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

uint64_t token_hash(std::string_view token) {
  uint64_t h = kFnvOffset ^ kHashSeed;
  for (unsigned char ch : token) {
    h ^= ch;
    h *= kFnvPrime;
  }
  return mix64(h);
}

EmbeddingMatrix encode_hashing(const std::vector<std::string>& texts, int dim) {
  if (dim < 8) throw Error("hashing encoder needs dim >= 8");
  EmbeddingMatrix out;
  out.encoder_id = "hash-fnv1a-" + std::to_string(dim);
  out.rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(texts.size()), dim);
  for (size_t i = 0; i < texts.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (const auto& tok : tokenize(texts[i])) {
      const uint64_t h = token_hash(tok);
      const auto bucket = static_cast<Eigen::Index>(h % static_cast<uint64_t>(dim));
      out.rows(r, bucket) += (h >> 63) ? -1.0 : 1.0;
    }
    normalize_row(out.rows, r);
  }
  return out;
}

EmbeddingMatrix encode_remote(const std::vector<std::string>& texts, const EncoderConfig& cfg) {
  if (cfg.batch_size < 1) throw Error("encoder batch_size must be positive");
  EmbeddingMatrix out;
  out.encoder_id = "remote:" + cfg.model;
  Eigen::Index dim = -1;
  std::vector<std::vector<double>> rows(texts.size());

  const size_t batch = static_cast<size_t>(cfg.batch_size);
  for (size_t start = 0, b = 0; start < texts.size(); start += batch, ++b) {
    const size_t end = std::min(texts.size(), start + batch);
    const std::vector<std::string> inputs(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                          texts.begin() + static_cast<std::ptrdiff_t>(end));
    nlohmann::json body = {{"model", cfg.model}, {"input", inputs}};
    std::vector<std::vector<double>> batch_rows;
    auto validate = [&](const nlohmann::json& res) {
      const auto& data = res.at("data");
      if (!data.is_array() || data.size() != inputs.size()) throw Error("wrong number of embeddings");
      std::vector<std::vector<double>> got(inputs.size());
      size_t batch_dim = 0;
      for (const auto& item : data) {
        const size_t idx = item.at("index").get<size_t>();
        if (idx >= got.size() || !got[idx].empty()) throw Error("bad embedding index");
        got[idx] = item.at("embedding").get<std::vector<double>>();
        if (got[idx].empty()) throw Error("empty embedding");
        const auto d = static_cast<Eigen::Index>(got[idx].size());
        if (dim >= 0 && d != dim) throw Error("dimension mismatch across batches");
        if (batch_dim == 0) batch_dim = got[idx].size();
        if (got[idx].size() != batch_dim) throw Error("dimension mismatch within batch");
      }
      batch_rows = std::move(got);
    };
    try {
      post_json(cfg.http, "/v1/embeddings", body, validate);
    } catch (const TransportError& e) {
      throw TransportError("embedding batch " + std::to_string(b) + ": " + e.what());
    }
    dim = static_cast<Eigen::Index>(batch_rows.front().size());
    for (size_t i = 0; i < batch_rows.size(); ++i) rows[start + i] = std::move(batch_rows[i]);
  }

  out.rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(texts.size()), std::max<Eigen::Index>(dim, 0));
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < dim; ++j) out.rows(r, j) = rows[i][static_cast<size_t>(j)];
    normalize_row(out.rows, r);
  }
  return out;
}

EmbeddingMatrix encode(const std::vector<std::string>& texts, const EncoderConfig& cfg) {
  return cfg.kind == EncoderKind::Hashing ? encode_hashing(texts, cfg.dim) : encode_remote(texts, cfg);
}

double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) throw Error("cosine_similarity: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

std::vector<int> knn_candidates(int anchor, int k, const EmbeddingMatrix& emb, const std::vector<int>& candidate_idx) {
  if (k <= 0) return {};
  const Eigen::VectorXd z = emb.rows.row(anchor).transpose();
  std::vector<std::pair<double, int>> scored;
  scored.reserve(candidate_idx.size());
  for (int c : candidate_idx) {
    if (c == anchor) continue;
    scored.emplace_back(cosine_similarity(z, emb.rows.row(c).transpose()), c);
  }
  const auto take = std::min(scored.size(), static_cast<size_t>(k));
  auto better = [](const auto& x, const auto& y) { return x.first > y.first || (x.first == y.first && x.second < y.second); };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
  std::vector<int> out;
  out.reserve(take);
  for (size_t i = 0; i < take; ++i) out.push_back(scored[i].second);
  return out;
}

std::vector<int> knn_same_class(int anchor, int k, const EmbeddingMatrix& emb, const std::vector<int>& labels,
                                const std::vector<int>& candidate_idx) {
  std::vector<int> same;
  for (int c : candidate_idx) {
    if (labels[c] == labels[anchor]) same.push_back(c);
  }
  return knn_candidates(anchor, k, emb, same);
}

ClassCentroids class_centroids(const EmbeddingMatrix& emb, const std::vector<int>& labels,
                               const std::vector<int>& subset_idx, int class_count) {
  ClassCentroids out;
  out.means = Eigen::MatrixXd::Zero(class_count, emb.dim());
  std::vector<int> counts(class_count, 0);
  for (int i : subset_idx) {
    out.means.row(labels[i]) += emb.rows.row(i);
    ++counts[labels[i]];
  }
  out.defined.assign(class_count, false);
  for (int c = 0; c < class_count; ++c) {
    if (counts[c] > 0) {
      out.means.row(c) /= counts[c];
      out.defined[c] = true;
    }
  }
  return out;
}

}  // namespace savetag
