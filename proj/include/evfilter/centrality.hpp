#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evfilter/graph.hpp"

namespace evf {

enum class CentralityMeasure { degree, betweenness, closeness, pagerank, eigenvector, structural_holes, mci };

std::string_view to_string(CentralityMeasure m);
CentralityMeasure parse_centrality(std::string_view s);

struct CentralityScores {
  CentralityMeasure measure = CentralityMeasure::degree;
  std::vector<double> scores;
  bool higher_is_better = true;
};

struct PageRankConfig {
  double damping = 0.85;
  double tol = 1e-9;
  std::size_t max_iter = 200;
};

struct EigenvectorConfig {
  double tol = 1e-9;
  std::size_t max_iter = 10000;
};

// All measures treat the graph as unweighted.

/// Brandes accumulation over breadth-first shortest-path DAGs; each unordered
/// pair counted once, no normalization.
CentralityScores betweenness_centrality(const SimilarityGraph& g);

/// Power iteration with uniform teleport; isolated-node mass is spread
/// uniformly. Throws ConvergenceError after max_iter.
CentralityScores pagerank_centrality(const SimilarityGraph& g, const PageRankConfig& config = {});

/// Dominant eigenvector of the adjacency matrix, unit L2 norm, non-negative.
/// Iterates on A + I so bipartite components do not oscillate.
CentralityScores eigenvector_centrality(const SimilarityGraph& g, const EigenvectorConfig& config = {});

CentralityScores degree_centrality(const SimilarityGraph& g);
// Harmonic closeness: sum of 1/dist over reachable nodes.
CentralityScores closeness_centrality(const SimilarityGraph& g);
// 1 / Burt constraint; isolated nodes score 0.
CentralityScores structural_holes_centrality(const SimilarityGraph& g);

// Any measure, including mci over the six base measures.
CentralityScores compute_centrality(const SimilarityGraph& g, CentralityMeasure measure);

// 1-based descending ranks; tied scores share their average rank.
std::vector<double> descending_ranks(std::span<const double> scores);

/// Combined index: negative mean of per-measure descending ranks.
CentralityScores mci_scores(std::span<const CentralityScores> per_measure);

// Scores export: "# <measure>" header, then "node_id score" lines.
void write_scores(const std::filesystem::path& path, const CentralityScores& s, std::span<const std::string> node_ids);

}  // namespace evf
