#include "dprm/retrieval.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>
#include <numeric>

#include "dprm/error.h"
#include "dprm/text.h"

namespace dprm {

std::vector<std::string> embedding_tokens(const std::string& text) {
  static constexpr std::string_view kBreakers = ",;:|?!()\"'[]{}";
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && cur.back() == '.') cur.pop_back();
    if (!cur.empty()) out.push_back(to_lower(cur));
    cur.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)) ||
        kBreakers.find(c) != std::string_view::npos) {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

std::size_t normalize_rows(Eigen::MatrixXd& rows) {
  std::size_t guarded = 0;
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const double norm = rows.row(r).norm();
    if (norm == 0.0 || !std::isfinite(norm)) {
      rows.row(r).setZero();
      rows(r, 0) = 1.0;
      ++guarded;
    } else {
      rows.row(r) /= norm;
    }
  }
  return guarded;
}

namespace {

Eigen::Index bucket_of(std::uint64_t h, std::size_t dim) {
  return static_cast<Eigen::Index>(h % dim);
}

}  // namespace

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw Error(ErrorCode::kContract, "embedding dim must be >= 1");
  weights_ = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dim_));
}

HashingEmbedder HashingEmbedder::fit(std::span<const std::string> corpus,
                                     std::size_t dim) {
  HashingEmbedder e(dim);
  Eigen::VectorXd df = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  for (const auto& doc : corpus) {
    std::vector<bool> seen(dim, false);
    for (const auto& tok : embedding_tokens(doc)) {
      const auto b = bucket_of(fnv1a64(tok), dim);
      if (!seen[static_cast<std::size_t>(b)]) {
        seen[static_cast<std::size_t>(b)] = true;
        df[b] += 1.0;
      }
    }
  }
  const double n = static_cast<double>(corpus.size());
  for (Eigen::Index b = 0; b < df.size(); ++b) {
    e.weights_[b] = std::log((1.0 + n) / (1.0 + df[b])) + 1.0;
  }
  return e;
}

Eigen::VectorXd HashingEmbedder::embed_one(const std::string& text) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
  for (const auto& tok : embedding_tokens(text)) {
    const std::uint64_t h = fnv1a64(tok);
    v[bucket_of(h, dim_)] += (h >> 63) != 0 ? -1.0 : 1.0;
  }
  return v.cwiseProduct(weights_);
}

Eigen::MatrixXd HashingEmbedder::embed(std::span<const std::string> texts) const {
  if (texts.empty()) throw Error(ErrorCode::kContract, "nothing to embed");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(texts.size()),
                      static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = embed_one(texts[i]).transpose();
  }
  if (auto guarded = normalize_rows(out); guarded > 0) {
    std::clog << "warning: " << guarded
              << " text(s) had no tokens; embedded as the zero-guard vector\n";
  }
  return out;
}

std::string render_for_embedding(const Triple& triple) {
  const Triple s = triple.stored();
  return s.head + " | " + (triple.inverted ? "~" : "") + s.relation + " | " + s.tail;
}

EmbeddingIndex::EmbeddingIndex(Eigen::MatrixXd vectors,
                               std::vector<std::string> renderings)
    : vectors_(std::move(vectors)), renderings_(std::move(renderings)) {
  if (static_cast<std::size_t>(vectors_.rows()) != renderings_.size()) {
    throw Error(ErrorCode::kContract, "row count differs from rendering count");
  }
  normalize_rows(vectors_);
}

std::vector<std::string> graph_renderings(const Graph& graph) {
  std::vector<std::string> out;
  out.reserve(graph.size());
  for (const auto& t : graph.triples()) out.push_back(render_for_embedding(t));
  return out;
}

EmbeddingIndex EmbeddingIndex::build(const Graph& graph, const Embedder& embedder) {
  if (graph.empty()) throw Error(ErrorCode::kEmptyGraph, "cannot index an empty graph");
  std::vector<std::string> renderings = graph_renderings(graph);
  Eigen::MatrixXd vectors = embedder.embed(renderings);
  return EmbeddingIndex(std::move(vectors), std::move(renderings));
}

std::vector<ScoredIndex> top_m(const Eigen::VectorXd& query,
                               const EmbeddingIndex& index, std::size_t m) {
  if (static_cast<std::size_t>(query.size()) != index.dim()) {
    throw Error(ErrorCode::kContract, "query dim " + std::to_string(query.size()) +
                                          " != index dim " + std::to_string(index.dim()));
  }
  Eigen::VectorXd q = query;
  const double norm = q.norm();
  if (norm > 0.0) q /= norm;
  const Eigen::VectorXd sims = index.vectors() * q;

  std::vector<std::size_t> order(index.rows());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t k = std::min(m, order.size());
  auto better = [&](std::size_t a, std::size_t b) {
    const double sa = sims[static_cast<Eigen::Index>(a)];
    const double sb = sims[static_cast<Eigen::Index>(b)];
    return sa > sb || (sa == sb && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), better);
  std::vector<ScoredIndex> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back({order[i], sims[static_cast<Eigen::Index>(order[i])]});
  }
  return out;
}

}  // namespace dprm
