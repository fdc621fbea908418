#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "evfilter/dataset.hpp"
#include "evfilter/error.hpp"

namespace evf {

enum class FusionMode { text_only, image_only, concat, add };

std::string_view to_string(FusionMode m);
FusionMode parse_fusion(std::string_view s);

/// Unit-length copy of v. Throws DataError for the zero vector.
template <std::floating_point T>
std::vector<double> l2_normalize(std::span<const T> v) {
  double sq = 0.0;
  for (T x : v) sq += static_cast<double>(x) * static_cast<double>(x);
  if (!(sq > 0.0)) throw DataError("cannot normalize a zero vector");
  const double inv = 1.0 / std::sqrt(sq);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(v[i]) * inv;
  return out;
}

template <std::floating_point T>
double cosine_similarity(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) throw DataError("cosine_similarity: length mismatch");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i], b = v[i];
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (!(uu > 0.0) || !(vv > 0.0)) throw DataError("cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

/// Dense symmetric n x n similarity matrix in double precision.
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  explicit SimilarityMatrix(std::size_t n) : n_(n), values_(n * n, 0.0) {}

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return values_[i * n_ + j]; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return values_[i * n_ + j]; }

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
};

/// Combines per-tweet text and image embeddings. Output rows follow the text
/// matrix order. Each modality row is L2-normalized first; tweets without an
/// image row get a zero image block under concat and the text row alone under add.
EmbeddingMatrix fuse(const EmbeddingMatrix& text, const EmbeddingMatrix& image, FusionMode mode);

// Pairwise cosine similarities; computes the upper triangle and mirrors it.
SimilarityMatrix similarity_matrix(const EmbeddingMatrix& m);
SimilarityMatrix similarity_matrix(const EmbeddingMatrix& m, std::span<const std::size_t> rows);

}  // namespace evf
