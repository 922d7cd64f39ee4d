#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dprm/kg_store.h"
#include "dprm/lm_interface.h"

namespace dprm {

// Signed feature hashing of lowercase word tokens into `dim` buckets,
// L2-normalized. Texts without tokens map to the first basis vector. Bucket
// counts are optionally scaled by inverse document frequency.
class HashingEmbedder final : public Embedder {
 public:
  static constexpr std::size_t kDefaultDim = 4096;

  explicit HashingEmbedder(std::size_t dim = kDefaultDim);

  // IDF weights from `corpus`: log((1 + n) / (1 + df)) + 1 per bucket.
  static HashingEmbedder fit(std::span<const std::string> corpus,
                             std::size_t dim = kDefaultDim);

  Eigen::MatrixXd embed(std::span<const std::string> texts) const override;
  Eigen::VectorXd embed_one(const std::string& text) const;
  std::size_t dim() const { return dim_; }
  const Eigen::VectorXd& weights() const { return weights_; }

 private:
  std::size_t dim_;
  Eigen::VectorXd weights_;
};

// Word tokens used by the hashing embedder.
std::vector<std::string> embedding_tokens(const std::string& text);

// L2-normalizes each row in place; zero rows become e_0. Returns the number of
// rows that needed the zero guard.
std::size_t normalize_rows(Eigen::MatrixXd& rows);

// "head | relation | tail" in stored orientation; an inverted triple keeps the
// "~" marker on its relation.
std::string render_for_embedding(const Triple& triple);

// Renderings of every graph triple, in load order.
std::vector<std::string> graph_renderings(const Graph& graph);

struct ScoredIndex {
  std::size_t index;
  double similarity;
};

class EmbeddingIndex {
 public:
  EmbeddingIndex(Eigen::MatrixXd vectors, std::vector<std::string> renderings);

  static EmbeddingIndex build(const Graph& graph, const Embedder& embedder);

  std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }
  std::size_t rows() const { return static_cast<std::size_t>(vectors_.rows()); }
  const Eigen::MatrixXd& vectors() const { return vectors_; }
  const std::vector<std::string>& renderings() const { return renderings_; }

 private:
  Eigen::MatrixXd vectors_;
  std::vector<std::string> renderings_;
};

// Exact cosine top-m: descending similarity, ties by ascending row index.
std::vector<ScoredIndex> top_m(const Eigen::VectorXd& query,
                               const EmbeddingIndex& index, std::size_t m);

}  // namespace dprm
