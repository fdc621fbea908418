#include "evfilter/selection.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "evfilter/error.hpp"
#include "evfilter/rng.hpp"

namespace evf {

namespace {
constexpr std::array<std::pair<std::string_view, SelectionMethod>, 4> kMethods{{{"random", SelectionMethod::random},
                                                                               {"betweenness", SelectionMethod::betweenness},
                                                                               {"pagerank", SelectionMethod::pagerank},
                                                                               {"mci", SelectionMethod::mci}}};
constexpr std::array<std::pair<std::string_view, CentralityScope>, 2> kScopes{
    {{"community_subgraph", CentralityScope::community_subgraph}, {"global", CentralityScope::global}}};

// Node indices sorted by descending score, ties toward the lower index.
std::vector<std::size_t> rank_nodes(std::span<const std::size_t> nodes, std::span<const double> scores) {
  std::vector<std::size_t> order(nodes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return nodes[a] < nodes[b];
  });
  return order;
}
}  // namespace

std::string_view to_string(SelectionMethod m) {
  for (const auto& [name, value] : kMethods)
    if (value == m) return name;
  return "random";
}
SelectionMethod parse_selection(std::string_view s) {
  for (const auto& [name, value] : kMethods)
    if (name == s) return value;
  throw UsageError("unknown selection method '" + std::string(s) + "'");
}
std::string_view to_string(CentralityScope s) {
  for (const auto& [name, value] : kScopes)
    if (value == s) return name;
  return "community_subgraph";
}
CentralityScope parse_scope(std::string_view s) {
  for (const auto& [name, value] : kScopes)
    if (name == s) return value;
  throw UsageError("unknown centrality scope '" + std::string(s) + "'");
}

CentralityMeasure measure_for(SelectionMethod m) {
  switch (m) {
    case SelectionMethod::betweenness:
      return CentralityMeasure::betweenness;
    case SelectionMethod::pagerank:
      return CentralityMeasure::pagerank;
    case SelectionMethod::mci:
      return CentralityMeasure::mci;
    case SelectionMethod::random:
      break;
  }
  throw std::invalid_argument("random selection has no centrality measure");
}

std::vector<std::size_t> SelectionResult::nodes() const {
  std::vector<std::size_t> out;
  out.reserve(selected.size());
  for (const auto& s : selected) out.push_back(s.node);
  return out;
}

std::vector<std::size_t> allocate_budget(std::span<const std::size_t> cluster_sizes, std::size_t budget) {
  const std::size_t total = std::accumulate(cluster_sizes.begin(), cluster_sizes.end(), std::size_t{0});
  if (budget > total)
    throw DataError("budget " + std::to_string(budget) + " exceeds the " + std::to_string(total) + " available samples");
  const std::size_t k = cluster_sizes.size();
  std::vector<std::size_t> counts(k), remainder(k);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < k; ++c) {
    // Exact integer quota: size * budget / total.
    counts[c] = cluster_sizes[c] * budget / total;
    remainder[c] = cluster_sizes[c] * budget % total;
    assigned += counts[c];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
    if (cluster_sizes[a] != cluster_sizes[b]) return cluster_sizes[a] > cluster_sizes[b];
    return a < b;
  });
  for (std::size_t i = 0; assigned < budget; ++i) {
    ++counts[order[i]];
    ++assigned;
  }
  return counts;
}

SelectionResult select_representatives(const SimilarityGraph& g, const Partition& p, const SelectionConfig& config) {
  if (config.budget < 2) throw UsageError("budget must be at least 2");
  if (p.assignment.size() != g.size()) throw DataError("partition does not cover the graph");
  const std::size_t n = g.size();
  const std::size_t budget = std::min(config.budget, n);

  SelectionResult result;
  result.method = config.method;
  result.seed = config.seed;
  const auto communities = p.communities();
  result.allocation.assign(communities.size(), 0);

  if (config.method == SelectionMethod::random) {
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    Rng rng(config.seed);
    // Partial Fisher-Yates: the first `budget` slots form the sample.
    for (std::size_t i = 0; i < budget; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
      std::swap(pool[i], pool[j]);
    }
    std::vector<std::size_t> picked(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(budget));
    std::vector<std::size_t> draw_order(n);
    for (std::size_t i = 0; i < budget; ++i) draw_order[picked[i]] = i;
    std::sort(picked.begin(), picked.end(), [&](std::size_t a, std::size_t b) {
      if (p.assignment[a] != p.assignment[b]) return p.assignment[a] < p.assignment[b];
      return draw_order[a] < draw_order[b];
    });
    for (const auto v : picked) {
      const std::size_t c = p.assignment[v];
      result.selected.push_back({v, c, ++result.allocation[c]});
    }
    return result;
  }

  std::vector<std::size_t> sizes;
  sizes.reserve(communities.size());
  for (const auto& c : communities) sizes.push_back(c.size());
  result.allocation = allocate_budget(sizes, budget);

  const CentralityMeasure measure = measure_for(config.method);
  CentralityScores global;
  if (config.scope == CentralityScope::global) global = compute_centrality(g, measure);

  for (std::size_t c = 0; c < communities.size(); ++c) {
    if (result.allocation[c] == 0) continue;
    const auto& members = communities[c];
    std::vector<double> scores;
    if (config.scope == CentralityScope::community_subgraph) {
      scores = compute_centrality(g.induced_subgraph(members), measure).scores;
    } else {
      for (const auto v : members) scores.push_back(global.scores[v]);
    }
    const auto order = rank_nodes(members, scores);
    for (std::size_t r = 0; r < result.allocation[c]; ++r) result.selected.push_back({members[order[r]], c, r + 1});
  }
  return result;
}

TrainValSplit split_train_val(std::span<const std::size_t> items, std::span<const LabelValue> labels,
                              std::uint64_t seed) {
  if (items.size() != labels.size()) throw std::invalid_argument("split_train_val: items and labels differ in length");
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const int c = class_index(labels[i]);
    if (c >= 0) by_class[static_cast<std::size_t>(c)].push_back(items[i]);
  }
  if (by_class[0].size() + by_class[1].size() < 2)
    throw DataError("split_train_val: need at least 2 labeled samples");

  TrainValSplit out;
  Rng rng(seed);
  std::array<std::size_t, 2> train_take{};
  for (std::size_t c = 0; c < 2; ++c) {
    auto& members = by_class[c];
    if (members.empty()) out.absent_classes.push_back(class_label(static_cast<int>(c)));
    rng.shuffle(std::span<std::size_t>(members));
    train_take[c] = (members.size() + 1) / 2;
  }
  if (train_take[0] == by_class[0].size() && train_take[1] == by_class[1].size()) {
    const std::size_t c = by_class[0].size() >= by_class[1].size() ? 0 : 1;
    --train_take[c];
  }
  for (std::size_t c = 0; c < 2; ++c) {
    const auto& members = by_class[c];
    out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(train_take[c]));
    out.validation.insert(out.validation.end(), members.begin() + static_cast<std::ptrdiff_t>(train_take[c]),
                          members.end());
  }
  return out;
}

void write_selection(const std::filesystem::path& path, const SelectionResult& r, std::span<const std::string> node_ids) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write selection " + path.string());
  out << "id cluster rank\n";
  for (const auto& s : r.selected) out << node_ids[s.node] << ' ' << s.cluster << ' ' << s.rank << '\n';
}

SelectionResult read_selection(const std::filesystem::path& path, std::span<const std::string> node_ids) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open selection " + path.string());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < node_ids.size(); ++i) index.emplace(node_ids[i], i);
  SelectionResult r;
  std::string line;
  std::getline(in, line);
  if (line.rfind("id cluster rank", 0) != 0) throw DataError(path.string() + ": missing 'id cluster rank' header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string id;
    SelectedSample s{};
    if (!(ls >> id >> s.cluster >> s.rank)) throw DataError(path.string() + ": line " + std::to_string(lineno) + ": bad record");
    const auto it = index.find(id);
    if (it == index.end()) throw DataError(path.string() + ": unknown id '" + id + "'");
    s.node = it->second;
    if (r.allocation.size() <= s.cluster) r.allocation.resize(s.cluster + 1, 0);
    ++r.allocation[s.cluster];
    r.selected.push_back(s);
  }
  return r;
}

}  // namespace evf
