#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <queue>
#include <string>
#include <unistd.h>
#include <vector>

#include "evfilter/dataset.hpp"
#include "evfilter/graph.hpp"
#include "evfilter/rng.hpp"

namespace evf::test {

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("evf_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  static std::size_t& counter() {
    static std::size_t c = 0;
    return c;
  }
  std::filesystem::path path_;
};

inline SimilarityGraph random_graph(std::size_t n, double p, Rng& rng, bool unit_weights = true) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform01() < p) edges.push_back({i, j, unit_weights ? 1.0 : rng.uniform(0.1, 1.0)});
  return SimilarityGraph::from_edges(n, edges);
}

inline SimilarityGraph graph_from(std::size_t n, std::initializer_list<std::pair<std::size_t, std::size_t>> pairs) {
  std::vector<Edge> edges;
  for (auto [u, v] : pairs) edges.push_back({u, v, 1.0});
  return SimilarityGraph::from_edges(n, edges);
}

// Disjoint cliques of the given sizes, consecutive node ids.
inline SimilarityGraph cliques(const std::vector<std::size_t>& sizes) {
  std::vector<Edge> edges;
  std::size_t base = 0;
  for (auto s : sizes) {
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = i + 1; j < s; ++j) edges.push_back({base + i, base + j, 1.0});
    base += s;
  }
  return SimilarityGraph::from_edges(base, edges);
}

/// Betweenness by listing every shortest path explicitly: for each unordered
/// pair (s, t) the shortest paths are enumerated by depth-first search along
/// the BFS distance layers, and each inner vertex earns 1 / (number of paths).
inline std::vector<double> brute_force_betweenness(const SimilarityGraph& g) {
  const std::size_t n = g.size();
  std::vector<std::vector<std::size_t>> dist(n, std::vector<std::size_t>(n, SIZE_MAX));
  for (std::size_t s = 0; s < n; ++s) {
    std::queue<std::size_t> q;
    dist[s][s] = 0;
    q.push(s);
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      for (const auto& nb : g.neighbors(u))
        if (dist[s][nb.node] == SIZE_MAX) {
          dist[s][nb.node] = dist[s][u] + 1;
          q.push(nb.node);
        }
    }
  }
  std::vector<double> score(n, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = s + 1; t < n; ++t) {
      if (dist[s][t] == SIZE_MAX) continue;
      std::vector<std::vector<std::size_t>> paths;
      std::vector<std::size_t> path{s};
      std::function<void(std::size_t)> walk = [&](std::size_t u) {
        if (u == t) {
          paths.push_back(path);
          return;
        }
        for (const auto& nb : g.neighbors(u))
          if (dist[s][nb.node] == dist[s][u] + 1 && dist[nb.node][t] + dist[s][nb.node] == dist[s][t]) {
            path.push_back(nb.node);
            walk(nb.node);
            path.pop_back();
          }
      };
      walk(s);
      for (const auto& p : paths)
        for (std::size_t i = 1; i + 1 < p.size(); ++i) score[p[i]] += 1.0 / static_cast<double>(paths.size());
    }
  return score;
}

// Every set partition of {0..n-1} as restricted growth strings.
inline void for_each_partition(std::size_t n, const std::function<void(const std::vector<std::size_t>&)>& visit) {
  std::vector<std::size_t> a(n, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t used) {
    if (i == n) {
      visit(a);
      return;
    }
    for (std::size_t c = 0; c <= used && c < n; ++c) {
      a[i] = c;
      rec(i + 1, c == used ? used + 1 : used);
    }
  };
  if (n == 0) visit(a);
  else rec(0, 0);
}

// Class-weighted logistic regression by full-batch gradient descent on the
// train split; returns balanced accuracy on the test split.
inline double logistic_oracle(const AlignedDataset& d, std::size_t iterations = 2000, double lr = 0.5) {
  const std::size_t dim = d.embeddings.dim;
  const auto train = d.rows_in_split(Split::train);
  const auto test = d.rows_in_split(Split::test);
  const auto labels = d.tweet_labels();
  std::vector<double> mean(dim, 0.0), scale(dim, 0.0);
  for (auto r : train)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += d.embeddings.row(r)[j] / static_cast<double>(train.size());
  for (auto r : train)
    for (std::size_t j = 0; j < dim; ++j) scale[j] += std::pow(d.embeddings.row(r)[j] - mean[j], 2) / static_cast<double>(train.size());
  for (auto& s : scale) s = s > 0 ? 1.0 / std::sqrt(s) : 1.0;
  auto feature = [&](std::size_t r, std::size_t j) { return (d.embeddings.row(r)[j] - mean[j]) * scale[j]; };

  double count[2] = {0, 0};
  for (auto r : train) count[class_index(labels[r])] += 1;
  std::vector<double> w(dim + 1, 0.0);
  for (std::size_t it = 0; it < iterations; ++it) {
    std::vector<double> grad(dim + 1, 0.0);
    for (auto r : train) {
      const int c = class_index(labels[r]);
      double z = w[dim];
      for (std::size_t j = 0; j < dim; ++j) z += w[j] * feature(r, j);
      const double y = c == 0 ? 1.0 : 0.0;
      const double g = (1.0 / (1.0 + std::exp(-z)) - y) / (2.0 * count[c]);
      for (std::size_t j = 0; j < dim; ++j) grad[j] += g * feature(r, j);
      grad[dim] += g;
    }
    for (std::size_t j = 0; j <= dim; ++j) w[j] -= lr * grad[j];
  }
  double hit[2] = {0, 0}, total[2] = {0, 0};
  for (auto r : test) {
    const int c = class_index(labels[r]);
    double z = w[dim];
    for (std::size_t j = 0; j < dim; ++j) z += w[j] * feature(r, j);
    total[c] += 1;
    hit[c] += (z > 0) == (c == 0);
  }
  return 0.5 * (hit[0] / total[0] + hit[1] / total[1]);
}

}  // namespace evf::test
