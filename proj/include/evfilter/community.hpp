#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "evfilter/graph.hpp"

namespace evf {

struct Partition {
  std::vector<std::size_t> assignment;  // node -> community, contiguous from 0
  std::size_t community_count = 0;
  double modularity = 0.0;
  std::vector<double> pass_modularity;  // flat-partition quality after each local-move pass

  std::vector<std::vector<std::size_t>> communities() const;
  std::vector<std::size_t> sizes() const;
};

struct LeidenConfig {
  double resolution = 1.0;
  std::uint64_t seed = 0;
  std::size_t max_passes = 10;
  double min_modularity_gain = 1e-9;
  double randomness = 0.01;  // temperature of the refinement merge distribution
};

// Weighted modularity with resolution; 0 for an edgeless graph.
double modularity(const SimilarityGraph& g, std::span<const std::size_t> assignment, double resolution = 1.0);

/// Leiden community detection with modularity as quality function.
///
/// Each pass runs queue-driven local moving over a seeded random node order,
/// refines every community by randomized merges of well-connected singletons,
/// and aggregates the graph on the refined partition while keeping the
/// unrefined partition as the starting point of the next pass. Stops when a
/// pass gains less than `min_modularity_gain`, when no aggregation is possible,
/// or after `max_passes`. Communities of the result are connected.
Partition leiden(const SimilarityGraph& g, const LeidenConfig& config = {});

// Relabels communities 0..k-1 in order of first appearance.
std::size_t canonicalize(std::vector<std::size_t>& assignment);

// Partition export: one "node_id community_id" line per node.
void write_partition(std::ostream& out, const Partition& p, std::span<const std::string> node_ids);
void write_partition(const std::filesystem::path& path, const Partition& p, std::span<const std::string> node_ids);
/// Reads a partition for the given node ids (order defines node indices).
Partition read_partition(const std::filesystem::path& path, std::span<const std::string> node_ids);

}  // namespace evf
