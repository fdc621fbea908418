#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evfilter/centrality.hpp"
#include "evfilter/community.hpp"
#include "evfilter/dataset.hpp"
#include "evfilter/graph.hpp"

namespace evf {

enum class SelectionMethod { random, betweenness, pagerank, mci };
enum class CentralityScope { community_subgraph, global };

std::string_view to_string(SelectionMethod m);
SelectionMethod parse_selection(std::string_view s);
std::string_view to_string(CentralityScope s);
CentralityScope parse_scope(std::string_view s);
CentralityMeasure measure_for(SelectionMethod m);

struct SelectionConfig {
  std::size_t budget = 60;
  SelectionMethod method = SelectionMethod::betweenness;
  std::uint64_t seed = 0;
  CentralityScope scope = CentralityScope::community_subgraph;
};

struct SelectedSample {
  std::size_t node;     // graph node index
  std::size_t cluster;  // community id
  std::size_t rank;     // 1-based position within its cluster
};

struct SelectionResult {
  std::vector<SelectedSample> selected;  // ordered by (cluster, rank)
  std::vector<std::size_t> allocation;   // per-community counts
  SelectionMethod method = SelectionMethod::random;
  std::uint64_t seed = 0;

  std::vector<std::size_t> nodes() const;
};

/// Largest-remainder apportionment of `budget` proportional to cluster size.
/// Remainder ties go to the larger cluster, then the lower cluster id.
std::vector<std::size_t> allocate_budget(std::span<const std::size_t> cluster_sizes, std::size_t budget);

/// Picks min(budget, n) nodes. Random draws uniformly from all nodes;
/// the centrality methods take the top-ranked nodes of every community
/// according to its allocation (ties toward the lower node index).
SelectionResult select_representatives(const SimilarityGraph& g, const Partition& p, const SelectionConfig& config);

struct TrainValSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<LabelValue> absent_classes;  // classes with no selected sample
};

/// Stratified half split of labeled items (labels parallel to items). Odd class
/// counts put the extra item on the training side; if that leaves validation
/// empty, one item of the largest class moves over. Unknown labels are dropped.
TrainValSplit split_train_val(std::span<const std::size_t> items, std::span<const LabelValue> labels, std::uint64_t seed);

// Export: header "id cluster rank", then one line per selected node.
void write_selection(const std::filesystem::path& path, const SelectionResult& r, std::span<const std::string> node_ids);
SelectionResult read_selection(const std::filesystem::path& path, std::span<const std::string> node_ids);

}  // namespace evf
