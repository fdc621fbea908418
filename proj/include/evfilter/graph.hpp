#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "evfilter/dataset.hpp"
#include "evfilter/fusion.hpp"
#include "evfilter/matrix.hpp"

namespace evf {

struct Neighbor {
  std::size_t node;
  double weight;
  bool operator==(const Neighbor&) const = default;
};

struct Edge {
  std::size_t u;
  std::size_t v;
  double weight;
};

/// Undirected weighted graph with index-sorted adjacency lists.
///
/// Invariants: no self-loops, (i,j) present iff (j,i) present with the same
/// weight, weights finite and positive.
class SimilarityGraph {
 public:
  SimilarityGraph() = default;
  explicit SimilarityGraph(std::size_t n) : adjacency_(n) {}

  // Builds from an undirected edge list. Repeated edges must agree on weight
  // and are merged. Throws std::invalid_argument on self-loops, bad indices or
  // non-positive weights.
  static SimilarityGraph from_edges(std::size_t n, std::span<const Edge> edges);

  std::size_t size() const noexcept { return adjacency_.size(); }
  std::size_t edge_count() const noexcept { return edge_count_; }
  std::span<const Neighbor> neighbors(std::size_t i) const { return adjacency_[i]; }
  std::size_t degree(std::size_t i) const { return adjacency_[i].size(); }
  double strength(std::size_t i) const;
  double total_weight() const;  // sum over undirected edges
  std::vector<Edge> edges() const;  // u < v, lexicographic

  // Subgraph induced by `nodes`; node a of the result is nodes[a].
  SimilarityGraph induced_subgraph(std::span<const std::size_t> nodes) const;

  bool operator==(const SimilarityGraph&) const = default;

 private:
  std::vector<std::vector<Neighbor>> adjacency_;
  std::size_t edge_count_ = 0;
};

struct GraphBuildConfig {
  double epsilon = 0.85;
  std::size_t k = 10;
  bool weighted = true;
};

SimilarityGraph build_epsilon_graph(const SimilarityMatrix& s, double epsilon);

/// Symmetrized k-nearest-neighbour graph under cosine similarity over the given
/// rows of m (all rows when `rows` is empty). Ties go to the lower index.
SimilarityGraph build_knn_graph(const EmbeddingMatrix& m, std::size_t k, std::span<const std::size_t> rows = {});

/// Sparse square operator in compressed-row form.
class SparseOperator {
 public:
  SparseOperator() = default;
  explicit SparseOperator(std::size_t n) : n_(n), row_start_(n + 1, 0) {}

  std::size_t size() const noexcept { return n_; }
  std::size_t nonzeros() const noexcept { return cols_.size(); }

  // Rows must be appended in order 0..n-1.
  void append_row(std::span<const Neighbor> entries);

  std::span<const std::size_t> row_cols(std::size_t i) const {
    return {cols_.data() + row_start_[i], row_start_[i + 1] - row_start_[i]};
  }
  std::span<const double> row_values(std::size_t i) const {
    return {values_.data() + row_start_[i], row_start_[i + 1] - row_start_[i]};
  }

  double at(std::size_t i, std::size_t j) const;
  Matrix<double> to_dense() const;

  template <typename T>
  Matrix<T> apply(const Matrix<T>& x) const {
    detail::check_shape(x.rows() == n_, "SparseOperator::apply");
    Matrix<T> out(n_, x.cols());
    for (std::size_t i = 0; i < n_; ++i) {
      auto dst = out.row(i);
      for (std::size_t e = row_start_[i]; e < row_start_[i + 1]; ++e) {
        const T w = static_cast<T>(values_[e]);
        const auto src = x.row(cols_[e]);
        for (std::size_t c = 0; c < x.cols(); ++c) dst[c] += w * src[c];
      }
    }
    return out;
  }

 private:
  std::size_t n_ = 0;
  std::size_t filled_ = 0;
  std::vector<std::size_t> row_start_;
  std::vector<std::size_t> cols_;
  std::vector<double> values_;
};

/// D^-1/2 (A + I) D^-1/2 with unit edge weights and unit self-loops.
SparseOperator normalized_adjacency(const SimilarityGraph& g);

/// D^-1/2 W D^-1/2 with similarity weights and no self-loops; isolated rows are zero.
SparseOperator lgc_smoothing_operator(const SimilarityGraph& g);

// Edge list export: header "n m", then one "i j weight" line per edge with i < j.
void write_edge_list(std::ostream& out, const SimilarityGraph& g);
void write_edge_list(const std::filesystem::path& path, const SimilarityGraph& g);
SimilarityGraph read_edge_list(std::istream& in, const std::string& source = "<stream>");
SimilarityGraph read_edge_list(const std::filesystem::path& path);

}  // namespace evf
