#include "evfilter/centrality.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "evfilter/error.hpp"

namespace evf {

namespace {

constexpr std::array<std::pair<std::string_view, CentralityMeasure>, 7> kMeasures{
    {{"degree", CentralityMeasure::degree},
     {"betweenness", CentralityMeasure::betweenness},
     {"closeness", CentralityMeasure::closeness},
     {"pagerank", CentralityMeasure::pagerank},
     {"eigenvector", CentralityMeasure::eigenvector},
     {"structural_holes", CentralityMeasure::structural_holes},
     {"mci", CentralityMeasure::mci}}};

constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();

// Breadth-first distances from source.
void bfs(const SimilarityGraph& g, std::size_t source, std::vector<std::size_t>& dist, std::vector<std::size_t>& queue) {
  std::fill(dist.begin(), dist.end(), kUnreached);
  queue.clear();
  dist[source] = 0;
  queue.push_back(source);
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t v = queue[head];
    for (const auto& nb : g.neighbors(v)) {
      if (dist[nb.node] == kUnreached) {
        dist[nb.node] = dist[v] + 1;
        queue.push_back(nb.node);
      }
    }
  }
}

}  // namespace

std::string_view to_string(CentralityMeasure m) {
  for (const auto& [name, value] : kMeasures)
    if (value == m) return name;
  return "degree";
}

CentralityMeasure parse_centrality(std::string_view s) {
  for (const auto& [name, value] : kMeasures)
    if (name == s) return value;
  throw UsageError("unknown centrality measure '" + std::string(s) + "'");
}

CentralityScores betweenness_centrality(const SimilarityGraph& g) {
  const std::size_t n = g.size();
  CentralityScores out{CentralityMeasure::betweenness, std::vector<double>(n, 0.0), true};
  std::vector<std::size_t> order, dist(n);
  std::vector<double> sigma(n), delta(n);
  order.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(delta.begin(), delta.end(), 0.0);
    std::fill(dist.begin(), dist.end(), kUnreached);
    order.clear();
    sigma[s] = 1.0;
    dist[s] = 0;
    order.push_back(s);
    for (std::size_t head = 0; head < order.size(); ++head) {
      const std::size_t v = order[head];
      for (const auto& nb : g.neighbors(v)) {
        const std::size_t w = nb.node;
        if (dist[w] == kUnreached) {
          dist[w] = dist[v] + 1;
          order.push_back(w);
        }
        if (dist[w] == dist[v] + 1) sigma[w] += sigma[v];
      }
    }
    // Predecessors of w are the neighbours one level closer to s.
    for (std::size_t idx = order.size(); idx-- > 1;) {
      const std::size_t w = order[idx];
      for (const auto& nb : g.neighbors(w)) {
        const std::size_t v = nb.node;
        if (dist[v] + 1 == dist[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      }
      out.scores[w] += delta[w];
    }
  }
  for (auto& x : out.scores) x /= 2.0;
  return out;
}

CentralityScores pagerank_centrality(const SimilarityGraph& g, const PageRankConfig& config) {
  const std::size_t n = g.size();
  CentralityScores out{CentralityMeasure::pagerank, {}, true};
  if (n == 0) return out;
  const double d = config.damping;
  std::vector<double> rank(n, 1.0 / static_cast<double>(n)), next(n);
  double residual = 0.0;
  for (std::size_t iter = 0; iter < config.max_iter; ++iter) {
    double dangling = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (g.degree(i) == 0) dangling += rank[i];
    const double base = (1.0 - d) / static_cast<double>(n) + d * dangling / static_cast<double>(n);
    std::fill(next.begin(), next.end(), base);
    for (std::size_t i = 0; i < n; ++i) {
      if (g.degree(i) == 0) continue;
      const double share = d * rank[i] / static_cast<double>(g.degree(i));
      for (const auto& nb : g.neighbors(i)) next[nb.node] += share;
    }
    residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) residual = std::max(residual, std::abs(next[i] - rank[i]));
    rank.swap(next);
    if (residual < config.tol) {
      const double sum = std::accumulate(rank.begin(), rank.end(), 0.0);
      for (auto& r : rank) r /= sum;
      out.scores = std::move(rank);
      return out;
    }
  }
  throw ConvergenceError("pagerank did not converge in " + std::to_string(config.max_iter) + " iterations", residual);
}

CentralityScores eigenvector_centrality(const SimilarityGraph& g, const EigenvectorConfig& config) {
  const std::size_t n = g.size();
  CentralityScores out{CentralityMeasure::eigenvector, {}, true};
  if (n == 0) return out;
  std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n))), next(n);
  double residual = 0.0;
  for (std::size_t iter = 0; iter < config.max_iter; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = v[i];
      for (const auto& nb : g.neighbors(i)) acc += v[nb.node];
      next[i] = acc;
    }
    double norm = 0.0;
    for (double x : next) norm += x * x;
    norm = std::sqrt(norm);
    residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] /= norm;
      residual = std::max(residual, std::abs(next[i] - v[i]));
    }
    v.swap(next);
    if (residual < config.tol) {
      out.scores = std::move(v);
      return out;
    }
  }
  throw ConvergenceError("eigenvector centrality did not converge in " + std::to_string(config.max_iter) +
                             " iterations",
                         residual);
}

CentralityScores degree_centrality(const SimilarityGraph& g) {
  CentralityScores out{CentralityMeasure::degree, std::vector<double>(g.size()), true};
  for (std::size_t i = 0; i < g.size(); ++i) out.scores[i] = static_cast<double>(g.degree(i));
  return out;
}

CentralityScores closeness_centrality(const SimilarityGraph& g) {
  const std::size_t n = g.size();
  CentralityScores out{CentralityMeasure::closeness, std::vector<double>(n, 0.0), true};
  std::vector<std::size_t> dist(n), queue;
  queue.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    bfs(g, s, dist, queue);
    double acc = 0.0;
    for (std::size_t t : queue)
      if (t != s) acc += 1.0 / static_cast<double>(dist[t]);
    out.scores[s] = acc;
  }
  return out;
}

CentralityScores structural_holes_centrality(const SimilarityGraph& g) {
  const std::size_t n = g.size();
  CentralityScores out{CentralityMeasure::structural_holes, std::vector<double>(n, 0.0), true};
  std::vector<char> is_neighbor(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (g.degree(i) == 0) continue;
    const double p_i = 1.0 / static_cast<double>(g.degree(i));
    for (const auto& nb : g.neighbors(i)) is_neighbor[nb.node] = 1;
    double constraint = 0.0;
    for (const auto& j : g.neighbors(i)) {
      // Indirect share through common neighbours q of i and j.
      double indirect = 0.0;
      for (const auto& q : g.neighbors(j.node))
        if (q.node != i && is_neighbor[q.node]) indirect += p_i / static_cast<double>(g.degree(q.node));
      const double term = p_i + indirect;
      constraint += term * term;
    }
    for (const auto& nb : g.neighbors(i)) is_neighbor[nb.node] = 0;
    out.scores[i] = 1.0 / constraint;
  }
  return out;
}

CentralityScores compute_centrality(const SimilarityGraph& g, CentralityMeasure measure) {
  switch (measure) {
    case CentralityMeasure::degree:
      return degree_centrality(g);
    case CentralityMeasure::betweenness:
      return betweenness_centrality(g);
    case CentralityMeasure::closeness:
      return closeness_centrality(g);
    case CentralityMeasure::pagerank:
      return pagerank_centrality(g);
    case CentralityMeasure::eigenvector:
      return eigenvector_centrality(g);
    case CentralityMeasure::structural_holes:
      return structural_holes_centrality(g);
    case CentralityMeasure::mci: {
      const std::array<CentralityScores, 6> parts{degree_centrality(g),  pagerank_centrality(g),
                                                  betweenness_centrality(g), closeness_centrality(g),
                                                  eigenvector_centrality(g), structural_holes_centrality(g)};
      return mci_scores(parts);
    }
  }
  throw std::logic_error("unhandled centrality measure");
}

std::vector<double> descending_ranks(std::span<const double> scores) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<double> ranks(n);
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && scores[order[end]] == scores[order[start]]) ++end;
    const double avg = (static_cast<double>(start + 1) + static_cast<double>(end)) / 2.0;
    for (std::size_t k = start; k < end; ++k) ranks[order[k]] = avg;
    start = end;
  }
  return ranks;
}

CentralityScores mci_scores(std::span<const CentralityScores> per_measure) {
  if (per_measure.empty()) throw std::invalid_argument("mci_scores: no input measures");
  const std::size_t n = per_measure.front().scores.size();
  CentralityScores out{CentralityMeasure::mci, std::vector<double>(n, 0.0), true};
  for (const auto& m : per_measure) {
    if (m.scores.size() != n) throw std::invalid_argument("mci_scores: measures cover different node sets");
    std::vector<double> oriented(m.scores);
    if (!m.higher_is_better)
      for (auto& x : oriented) x = -x;
    const auto ranks = descending_ranks(oriented);
    for (std::size_t i = 0; i < n; ++i) out.scores[i] += ranks[i];
  }
  for (auto& x : out.scores) x = -x / static_cast<double>(per_measure.size());
  return out;
}

void write_scores(const std::filesystem::path& path, const CentralityScores& s, std::span<const std::string> node_ids) {
  if (node_ids.size() != s.scores.size()) throw std::invalid_argument("write_scores: id count mismatch");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write scores " + path.string());
  out << "# " << to_string(s.measure) << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < node_ids.size(); ++i) out << node_ids[i] << ' ' << s.scores[i] << '\n';
}

}  // namespace evf
