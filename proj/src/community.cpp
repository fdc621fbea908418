#include "evfilter/community.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "evfilter/error.hpp"
#include "evfilter/rng.hpp"

namespace evf {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
constexpr double kGainTolerance = 1e-12;

// Graph of the current aggregation level. Self-loop weight is irrelevant to
// move decisions, so only strengths and inter-node edges are kept.
struct WorkGraph {
  std::vector<std::vector<Neighbor>> adj;
  std::vector<double> strength;
  double two_m = 0.0;

  std::size_t size() const { return adj.size(); }
};

WorkGraph make_work_graph(const SimilarityGraph& g) {
  WorkGraph wg;
  wg.adj.resize(g.size());
  wg.strength.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto nb = g.neighbors(i);
    wg.adj[i].assign(nb.begin(), nb.end());
    wg.strength[i] = g.strength(i);
    wg.two_m += wg.strength[i];
  }
  return wg;
}

// Scratch accumulator of edge weight from one node to each adjacent community.
class CommunityWeights {
 public:
  explicit CommunityWeights(std::size_t n) : weight_(n, 0.0), seen_(n, 0) {}

  void add(std::size_t c, double w) {
    if (!seen_[c]) {
      seen_[c] = 1;
      touched_.push_back(c);
    }
    weight_[c] += w;
  }
  double operator[](std::size_t c) const { return weight_[c]; }
  const std::vector<std::size_t>& touched() const { return touched_; }
  void clear() {
    for (auto c : touched_) {
      weight_[c] = 0.0;
      seen_[c] = 0;
    }
    touched_.clear();
  }

 private:
  std::vector<double> weight_;
  std::vector<char> seen_;
  std::vector<std::size_t> touched_;
};

void move_nodes_fast(const WorkGraph& wg, std::vector<std::size_t>& comm, double gamma, Rng& rng) {
  const std::size_t n = wg.size();
  std::vector<double> total(n, 0.0);
  std::vector<std::size_t> members(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    total[comm[v]] += wg.strength[v];
    ++members[comm[v]];
  }
  std::vector<std::size_t> empty;
  for (std::size_t c = n; c-- > 0;)
    if (members[c] == 0) empty.push_back(c);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::deque<std::size_t> queue(order.begin(), order.end());
  std::vector<char> queued(n, 1);
  CommunityWeights w(n);

  while (!queue.empty()) {
    const std::size_t v = queue.front();
    queue.pop_front();
    queued[v] = 0;

    const std::size_t old = comm[v];
    const double kv = wg.strength[v];
    for (const auto& nb : wg.adj[v]) w.add(comm[nb.node], nb.weight);
    total[old] -= kv;
    --members[old];

    std::size_t best = old;
    double best_gain = w[old] - gamma * kv * total[old] / wg.two_m;
    for (const auto c : w.touched()) {
      if (c == old) continue;
      const double gain = w[c] - gamma * kv * total[c] / wg.two_m;
      if (gain > best_gain + kGainTolerance) {
        best = c;
        best_gain = gain;
      }
    }
    if (members[old] > 0 && 0.0 > best_gain + kGainTolerance) best = empty.back();
    w.clear();

    if (best != old) {
      if (!empty.empty() && best == empty.back()) empty.pop_back();
      if (members[old] == 0) empty.push_back(old);
    }
    total[best] += kv;
    ++members[best];
    comm[v] = best;

    if (best != old) {
      for (const auto& nb : wg.adj[v]) {
        if (!queued[nb.node] && comm[nb.node] != best) {
          queued[nb.node] = 1;
          queue.push_back(nb.node);
        }
      }
    }
  }
}

// Refined partition: within every community, singletons merge only into
// well-connected sub-communities, with a Boltzmann choice over non-negative gains.
std::vector<std::size_t> refine_partition(const WorkGraph& wg, const std::vector<std::size_t>& comm, double gamma,
                                          double theta, Rng& rng) {
  const std::size_t n = wg.size();
  std::vector<std::size_t> refined(n);
  std::iota(refined.begin(), refined.end(), std::size_t{0});
  std::vector<double> total(wg.strength);
  std::vector<std::size_t> members(n, 1);
  std::vector<double> external(n, 0.0);  // weight from a refined community to the rest of its subset

  std::vector<std::vector<std::size_t>> subsets(n);
  for (std::size_t v = 0; v < n; ++v) subsets[comm[v]].push_back(v);

  CommunityWeights w(n);
  std::vector<std::size_t> candidates;
  std::vector<double> gains;
  for (auto& subset : subsets) {
    if (subset.size() < 2) continue;
    const std::size_t s_id = comm[subset.front()];
    double subset_total = 0.0;
    for (const auto v : subset) {
      subset_total += wg.strength[v];
      for (const auto& nb : wg.adj[v])
        if (comm[nb.node] == s_id) external[v] += nb.weight;
    }

    rng.shuffle(std::span<std::size_t>(subset));
    for (const auto v : subset) {
      const std::size_t own = refined[v];
      if (members[own] != 1) continue;
      const double kv = wg.strength[v];
      if (external[own] < gamma * kv * (subset_total - kv) / wg.two_m) continue;

      for (const auto& nb : wg.adj[v])
        if (comm[nb.node] == s_id) w.add(refined[nb.node], nb.weight);

      candidates.assign(1, own);
      gains.assign(1, 0.0);
      for (const auto c : w.touched()) {
        if (c == own) continue;
        if (external[c] < gamma * total[c] * (subset_total - total[c]) / wg.two_m) continue;
        const double gain = w[c] - gamma * kv * total[c] / wg.two_m;
        if (gain < 0.0) continue;
        candidates.push_back(c);
        gains.push_back(gain);
      }

      std::size_t chosen = own;
      if (candidates.size() > 1) {
        const double top = *std::max_element(gains.begin(), gains.end());
        std::vector<double> cumulative(gains.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < gains.size(); ++i) {
          acc += std::exp((gains[i] - top) / theta);
          cumulative[i] = acc;
        }
        const double draw = rng.uniform01() * acc;
        const auto pick = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), draw) -
                                                   cumulative.begin());
        chosen = candidates[std::min(pick, candidates.size() - 1)];
      }

      if (chosen != own) {
        external[chosen] = external[chosen] + external[own] - 2.0 * w[chosen];
        total[chosen] += kv;
        ++members[chosen];
        members[own] = 0;
        total[own] = 0.0;
        refined[v] = chosen;
      }
      w.clear();
    }
  }
  return refined;
}

// Collapses refined communities into nodes. `comm` is carried over to the new
// nodes; `level_of` maps original nodes to current-level nodes and is updated.
WorkGraph aggregate(const WorkGraph& wg, std::vector<std::size_t> refined, std::vector<std::size_t>& comm,
                    std::vector<std::size_t>& level_of) {
  const std::size_t count = canonicalize(refined);
  WorkGraph out;
  out.adj.resize(count);
  out.strength.assign(count, 0.0);
  out.two_m = wg.two_m;
  std::vector<std::vector<std::size_t>> groups(count);
  for (std::size_t v = 0; v < wg.size(); ++v) {
    groups[refined[v]].push_back(v);
    out.strength[refined[v]] += wg.strength[v];
  }
  CommunityWeights w(count);
  std::vector<std::size_t> next_comm(count);
  for (std::size_t a = 0; a < count; ++a) {
    next_comm[a] = comm[groups[a].front()];
    for (const auto v : groups[a])
      for (const auto& nb : wg.adj[v]) {
        const std::size_t b = refined[nb.node];
        if (b != a) w.add(b, nb.weight);
      }
    auto touched = w.touched();
    std::sort(touched.begin(), touched.end());
    for (const auto b : touched) out.adj[a].push_back({b, w[b]});
    w.clear();
  }
  for (auto& node : level_of) node = refined[node];
  canonicalize(next_comm);
  comm = std::move(next_comm);
  return out;
}

std::vector<std::size_t> flatten(const std::vector<std::size_t>& level_of, const std::vector<std::size_t>& comm) {
  std::vector<std::size_t> flat(level_of.size());
  for (std::size_t v = 0; v < level_of.size(); ++v) flat[v] = comm[level_of[v]];
  return flat;
}

// Splits every community into its connected components.
void split_disconnected(const SimilarityGraph& g, std::vector<std::size_t>& assignment) {
  const std::size_t n = g.size();
  std::vector<std::size_t> out(n, kNone);
  std::size_t next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (out[s] != kNone) continue;
    out[s] = next;
    stack.assign(1, s);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      for (const auto& nb : g.neighbors(v)) {
        if (out[nb.node] == kNone && assignment[nb.node] == assignment[s]) {
          out[nb.node] = next;
          stack.push_back(nb.node);
        }
      }
    }
    ++next;
  }
  assignment = std::move(out);
}

}  // namespace

std::vector<std::vector<std::size_t>> Partition::communities() const {
  std::vector<std::vector<std::size_t>> out(community_count);
  for (std::size_t v = 0; v < assignment.size(); ++v) out[assignment[v]].push_back(v);
  return out;
}

std::vector<std::size_t> Partition::sizes() const {
  std::vector<std::size_t> out(community_count, 0);
  for (auto c : assignment) ++out[c];
  return out;
}

std::size_t canonicalize(std::vector<std::size_t>& assignment) {
  std::unordered_map<std::size_t, std::size_t> relabel;
  for (auto& c : assignment) {
    const auto [it, inserted] = relabel.emplace(c, relabel.size());
    c = it->second;
  }
  return relabel.size();
}

double modularity(const SimilarityGraph& g, std::span<const std::size_t> assignment, double resolution) {
  if (assignment.size() != g.size()) throw std::invalid_argument("modularity: assignment size mismatch");
  const double m = g.total_weight();
  if (!(m > 0.0)) return 0.0;
  std::size_t k = 0;
  for (auto c : assignment) k = std::max(k, c + 1);
  std::vector<double> internal(k, 0.0), total(k, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (const auto& nb : g.neighbors(i)) {
      total[assignment[i]] += nb.weight;
      if (assignment[nb.node] == assignment[i]) internal[assignment[i]] += nb.weight;  // counted from both ends
    }
  }
  const double two_m = 2.0 * m;
  double q = 0.0;
  for (std::size_t c = 0; c < k; ++c) q += internal[c] / two_m - resolution * (total[c] / two_m) * (total[c] / two_m);
  return q;
}

Partition leiden(const SimilarityGraph& g, const LeidenConfig& config) {
  if (!(config.resolution > 0.0)) throw UsageError("leiden: resolution must be positive");
  if (config.max_passes < 1) throw UsageError("leiden: max_passes must be at least 1");
  if (!(config.randomness > 0.0)) throw UsageError("leiden: randomness must be positive");

  const std::size_t n = g.size();
  Partition p;
  p.assignment.resize(n);
  std::iota(p.assignment.begin(), p.assignment.end(), std::size_t{0});
  p.community_count = n;
  if (n == 0 || g.edge_count() == 0) {
    p.modularity = modularity(g, p.assignment, config.resolution);
    return p;
  }

  Rng rng(config.seed);
  WorkGraph wg = make_work_graph(g);
  std::vector<std::size_t> comm(n), level_of(n);
  std::iota(comm.begin(), comm.end(), std::size_t{0});
  std::iota(level_of.begin(), level_of.end(), std::size_t{0});
  double previous = modularity(g, p.assignment, config.resolution);

  for (std::size_t pass = 0; pass < config.max_passes; ++pass) {
    move_nodes_fast(wg, comm, config.resolution, rng);
    const auto flat = flatten(level_of, comm);
    const double q = modularity(g, flat, config.resolution);
    if (q < previous - 1e-10)
      throw std::logic_error("leiden: modularity decreased in pass " + std::to_string(pass + 1));
    p.pass_modularity.push_back(q);
    const double gain = q - previous;
    previous = q;
    if (gain < config.min_modularity_gain) break;

    auto distinct = comm;
    if (canonicalize(distinct) == wg.size()) break;
    auto refined = refine_partition(wg, comm, config.resolution, config.randomness, rng);
    wg = aggregate(wg, std::move(refined), comm, level_of);
  }

  p.assignment = flatten(level_of, comm);
  split_disconnected(g, p.assignment);
  p.community_count = canonicalize(p.assignment);
  p.modularity = modularity(g, p.assignment, config.resolution);
  return p;
}

void write_partition(std::ostream& out, const Partition& p, std::span<const std::string> node_ids) {
  if (node_ids.size() != p.assignment.size()) throw std::invalid_argument("write_partition: id count mismatch");
  for (std::size_t v = 0; v < node_ids.size(); ++v) out << node_ids[v] << ' ' << p.assignment[v] << '\n';
}

void write_partition(const std::filesystem::path& path, const Partition& p, std::span<const std::string> node_ids) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write partition " + path.string());
  write_partition(out, p, node_ids);
}

Partition read_partition(const std::filesystem::path& path, std::span<const std::string> node_ids) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open partition " + path.string());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < node_ids.size(); ++i) index.emplace(node_ids[i], i);
  Partition p;
  p.assignment.assign(node_ids.size(), kNone);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string id;
    std::size_t c = 0;
    if (!(ls >> id >> c)) throw DataError(path.string() + ": line " + std::to_string(lineno) + ": bad record");
    const auto it = index.find(id);
    if (it == index.end()) throw DataError(path.string() + ": unknown node '" + id + "'");
    p.assignment[it->second] = c;
  }
  for (std::size_t v = 0; v < p.assignment.size(); ++v)
    if (p.assignment[v] == kNone) throw DataError(path.string() + ": node '" + node_ids[v] + "' has no community");
  std::size_t k = 0;
  for (auto c : p.assignment) k = std::max(k, c + 1);
  std::vector<char> used(k, 0);
  for (auto c : p.assignment) used[c] = 1;
  if (std::find(used.begin(), used.end(), 0) != used.end())
    throw DataError(path.string() + ": community ids are not contiguous");
  p.community_count = k;
  return p;
}

}  // namespace evf
