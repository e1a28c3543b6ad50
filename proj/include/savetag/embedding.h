#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "savetag/http_client.h"

namespace savetag {

/// One row per node (z_v). Hashing rows are unit length or all zero.
struct EmbeddingMatrix {
  Eigen::MatrixXd rows;
  std::string encoder_id;

  Eigen::Index size() const { return rows.rows(); }
  Eigen::Index dim() const { return rows.cols(); }
};

enum class EncoderKind { Hashing, Remote };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::Hashing;
  int dim = 256;  // hashing only
  // remote only
  HttpOptions http;
  std::string model = "all-MiniLM-L6-v2";
  int batch_size = 64;
};

/// Lowercased tokens split on anything that is not [A-Za-z0-9_] or a
/// non-ASCII byte.
std::vector<std::string> tokenize(std::string_view text);

/// Fixed seeded 64-bit token hash used by the hashing encoder.
uint64_t token_hash(std::string_view token);

EmbeddingMatrix encode_hashing(const std::vector<std::string>& texts, int dim);

/// Calls POST {base}/v1/embeddings in batches; rows are L2-normalized
/// locally. Throws TransportError naming the failing batch.
EmbeddingMatrix encode_remote(const std::vector<std::string>& texts, const EncoderConfig& cfg);

EmbeddingMatrix encode(const std::vector<std::string>& texts, const EncoderConfig& cfg);

/// dot(a, b) / (|a| |b|), or 0 when either norm is 0.
double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b);

/// Up to k candidates other than `anchor`, by descending cosine to the
/// anchor, ties to the lower id.
std::vector<int> knn_candidates(int anchor, int k, const EmbeddingMatrix& emb,
                                const std::vector<int>& candidate_idx);

/// knn_candidates restricted to candidates sharing the anchor's label.
std::vector<int> knn_same_class(int anchor, int k, const EmbeddingMatrix& emb,
                                const std::vector<int>& labels, const std::vector<int>& candidate_idx);

struct ClassCentroids {
  Eigen::MatrixXd means;      // class_count x dim
  std::vector<bool> defined;  // false when the class had no member in the subset
};

ClassCentroids class_centroids(const EmbeddingMatrix& emb, const std::vector<int>& labels,
                               const std::vector<int>& subset_idx, int class_count);

}  // namespace savetag
