#include "evfilter/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "evfilter/error.hpp"

namespace evf {

SimilarityGraph SimilarityGraph::from_edges(std::size_t n, std::span<const Edge> edges) {
  SimilarityGraph g(n);
  for (const auto& e : edges) {
    if (e.u >= n || e.v >= n) throw std::invalid_argument("edge endpoint out of range");
    if (e.u == e.v) throw std::invalid_argument("self-loop on node " + std::to_string(e.u));
    if (!std::isfinite(e.weight) || !(e.weight > 0.0))
      throw std::invalid_argument("edge weight must be finite and positive");
    g.adjacency_[e.u].push_back({e.v, e.weight});
    g.adjacency_[e.v].push_back({e.u, e.weight});
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto& adj = g.adjacency_[i];
    std::sort(adj.begin(), adj.end(), [](const Neighbor& a, const Neighbor& b) { return a.node < b.node; });
    std::size_t out = 0;
    for (std::size_t k = 0; k < adj.size(); ++k) {
      if (out > 0 && adj[out - 1].node == adj[k].node) {
        if (adj[out - 1].weight != adj[k].weight)
          throw std::invalid_argument("conflicting weights for edge " + std::to_string(i) + "-" +
                                      std::to_string(adj[k].node));
        continue;
      }
      adj[out++] = adj[k];
    }
    adj.resize(out);
    g.edge_count_ += out;
  }
  g.edge_count_ /= 2;
  return g;
}

double SimilarityGraph::strength(std::size_t i) const {
  double s = 0.0;
  for (const auto& nb : adjacency_[i]) s += nb.weight;
  return s;
}

double SimilarityGraph::total_weight() const {
  double s = 0.0;
  for (std::size_t i = 0; i < size(); ++i)
    for (const auto& nb : adjacency_[i])
      if (nb.node > i) s += nb.weight;
  return s;
}

std::vector<Edge> SimilarityGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(edge_count_);
  for (std::size_t i = 0; i < size(); ++i)
    for (const auto& nb : adjacency_[i])
      if (nb.node > i) out.push_back({i, nb.node, nb.weight});
  return out;
}

SimilarityGraph SimilarityGraph::induced_subgraph(std::span<const std::size_t> nodes) const {
  std::vector<std::size_t> local(size(), std::numeric_limits<std::size_t>::max());
  for (std::size_t a = 0; a < nodes.size(); ++a) local[nodes[a]] = a;
  std::vector<Edge> sub;
  for (std::size_t a = 0; a < nodes.size(); ++a)
    for (const auto& nb : adjacency_[nodes[a]]) {
      const std::size_t b = local[nb.node];
      if (b != std::numeric_limits<std::size_t>::max() && b > a) sub.push_back({a, b, nb.weight});
    }
  return from_edges(nodes.size(), sub);
}

SimilarityGraph build_epsilon_graph(const SimilarityMatrix& s, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw UsageError("epsilon must lie in (0, 1]");
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = i + 1; j < s.size(); ++j)
      if (s(i, j) >= epsilon) edges.push_back({i, j, s(i, j)});
  return SimilarityGraph::from_edges(s.size(), edges);
}

SimilarityGraph build_knn_graph(const EmbeddingMatrix& m, std::size_t k, std::span<const std::size_t> rows) {
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(m.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    rows = all;
  }
  const std::size_t n = rows.size();
  if (k < 1 || k >= n)
    throw UsageError("knn: k=" + std::to_string(k) + " out of range for " + std::to_string(n) + " nodes");

  std::vector<std::vector<double>> unit(n);
  for (std::size_t a = 0; a < n; ++a) {
    try {
      unit[a] = l2_normalize(m.row(rows[a]));
    } catch (const DataError&) {
      throw DataError("knn: zero embedding row " + std::to_string(rows[a]));
    }
  }
  constexpr double kMinWeight = 1e-9;
  std::vector<Edge> edges;
  edges.reserve(n * k);
  std::vector<double> sim(n);
  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < m.dim; ++c) dot += unit[i][c] * unit[j][c];
      sim[j] = std::clamp(dot, -1.0, 1.0);
    }
    order.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return sim[a] > sim[b] || (sim[a] == sim[b] && a < b); });
    for (std::size_t t = 0; t < k; ++t) edges.push_back({i, order[t], std::max(sim[order[t]], kMinWeight)});
  }
  return SimilarityGraph::from_edges(n, edges);
}

void SparseOperator::append_row(std::span<const Neighbor> entries) {
  if (filled_ >= n_) throw std::logic_error("SparseOperator: too many rows");
  for (const auto& e : entries) {
    cols_.push_back(e.node);
    values_.push_back(e.weight);
  }
  row_start_[++filled_] = cols_.size();
}

double SparseOperator::at(std::size_t i, std::size_t j) const {
  const auto c = row_cols(i);
  const auto it = std::lower_bound(c.begin(), c.end(), j);
  if (it == c.end() || *it != j) return 0.0;
  return row_values(i)[static_cast<std::size_t>(it - c.begin())];
}

Matrix<double> SparseOperator::to_dense() const {
  Matrix<double> out(n_, n_);
  for (std::size_t i = 0; i < n_; ++i) {
    const auto c = row_cols(i);
    const auto v = row_values(i);
    for (std::size_t e = 0; e < c.size(); ++e) out(i, c[e]) = v[e];
  }
  return out;
}

SparseOperator normalized_adjacency(const SimilarityGraph& g) {
  const std::size_t n = g.size();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i) + 1));
  SparseOperator op(n);
  std::vector<Neighbor> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    bool self_done = false;
    for (const auto& nb : g.neighbors(i)) {
      if (!self_done && nb.node > i) {
        row.push_back({i, inv_sqrt[i] * inv_sqrt[i]});
        self_done = true;
      }
      row.push_back({nb.node, inv_sqrt[i] * inv_sqrt[nb.node]});
    }
    if (!self_done) row.push_back({i, inv_sqrt[i] * inv_sqrt[i]});
    op.append_row(row);
  }
  return op;
}

SparseOperator lgc_smoothing_operator(const SimilarityGraph& g) {
  const std::size_t n = g.size();
  std::vector<double> inv_sqrt(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = g.strength(i);
    if (d > 0.0) inv_sqrt[i] = 1.0 / std::sqrt(d);
  }
  SparseOperator op(n);
  std::vector<Neighbor> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (const auto& nb : g.neighbors(i)) row.push_back({nb.node, inv_sqrt[i] * nb.weight * inv_sqrt[nb.node]});
    op.append_row(row);
  }
  return op;
}

void write_edge_list(std::ostream& out, const SimilarityGraph& g) {
  out << g.size() << ' ' << g.edge_count() << '\n';
  out << std::setprecision(17);
  for (const auto& e : g.edges()) out << e.u << ' ' << e.v << ' ' << e.weight << '\n';
}

void write_edge_list(const std::filesystem::path& path, const SimilarityGraph& g) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write graph " + path.string());
  write_edge_list(out, g);
}

SimilarityGraph read_edge_list(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty graph file");
  std::size_t n = 0, m = 0;
  {
    std::istringstream hs(line);
    if (!(hs >> n >> m)) throw DataError(source + ": bad header, expected 'n m'");
  }
  std::vector<Edge> edges;
  edges.reserve(m);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Edge e{};
    if (!(ls >> e.u >> e.v >> e.weight)) throw DataError(source + ": line " + std::to_string(lineno) + ": bad edge");
    edges.push_back(e);
  }
  if (edges.size() != m)
    throw DataError(source + ": header declares " + std::to_string(m) + " edges, found " + std::to_string(edges.size()));
  try {
    return SimilarityGraph::from_edges(n, edges);
  } catch (const std::invalid_argument& e) {
    throw DataError(source + ": " + e.what());
  }
}

SimilarityGraph read_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open graph " + path.string());
  return read_edge_list(in, path.string());
}

}  // namespace evf
