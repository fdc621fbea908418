#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "evfilter/error.hpp"
#include "evfilter/selection.hpp"
#include "support.hpp"

using namespace evf;

namespace {

using Sizes = std::vector<std::size_t>;

Partition partition_of(std::vector<std::size_t> assignment) {
  Partition p;
  p.assignment = std::move(assignment);
  p.community_count = *std::max_element(p.assignment.begin(), p.assignment.end()) + 1;
  return p;
}

}  // namespace

TEST_CASE("largest remainder allocation") {
  CHECK(allocate_budget(Sizes{50, 30, 20}, 10) == Sizes{5, 3, 2});
  CHECK(allocate_budget(Sizes{3, 3}, 4) == Sizes{2, 2});
  CHECK(allocate_budget(Sizes{10, 5, 1}, 2) == Sizes{1, 1, 0});
  // equal remainders: the larger cluster wins, then the lower id
  CHECK(allocate_budget(Sizes{2, 6, 2}, 5) == Sizes{1, 3, 1});
  CHECK(allocate_budget(Sizes{1, 1, 1}, 1) == Sizes{1, 0, 0});
  CHECK_THROWS_AS(allocate_budget(Sizes{2, 2}, 5), DataError);
}

TEST_CASE("allocation properties on random instances") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    Sizes sizes(1 + rng.uniform_index(12));
    for (auto& s : sizes) s = 1 + rng.uniform_index(40);
    const auto total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    const auto budget = 1 + rng.uniform_index(total);
    const auto counts = allocate_budget(sizes, budget);
    REQUIRE(counts.size() == sizes.size());
    CHECK(std::accumulate(counts.begin(), counts.end(), std::size_t{0}) == budget);
    for (std::size_t c = 0; c < sizes.size(); ++c) {
      CHECK(counts[c] <= sizes[c]);
      const double quota = static_cast<double>(budget) * static_cast<double>(sizes[c]) / static_cast<double>(total);
      CHECK(static_cast<double>(counts[c]) <= std::ceil(quota) + 1e-9);
    }
  }
}

TEST_CASE("betweenness picks the centre of each community subgraph") {
  // two paths of four nodes: 0-1-2-3 and 4-5-6-7; subgraph betweenness peaks at 1 (tie with 2) and 5
  const auto g = test::graph_from(8, {{0, 1}, {1, 2}, {2, 3}, {4, 5}, {5, 6}, {6, 7}, {3, 4}});
  const auto p = partition_of({0, 0, 0, 0, 1, 1, 1, 1});
  SelectionConfig cfg;
  cfg.budget = 2;
  cfg.method = SelectionMethod::betweenness;
  const auto r = select_representatives(g, p, cfg);
  REQUIRE(r.selected.size() == 2);
  CHECK(r.selected[0].node == 1);
  CHECK(r.selected[0].cluster == 0);
  CHECK(r.selected[0].rank == 1);
  CHECK(r.selected[1].node == 5);
  CHECK(r.allocation == Sizes{1, 1});

  // globally node 3 and 4 carry the bridge traffic
  cfg.scope = CentralityScope::global;
  const auto global = select_representatives(g, p, cfg);
  CHECK(global.selected[0].node == 3);
  CHECK(global.selected[1].node == 4);
}

TEST_CASE("selection contracts") {
  Rng rng(4);
  const auto g = test::random_graph(60, 0.08, rng);
  std::vector<std::size_t> assignment(60);
  for (std::size_t i = 0; i < 60; ++i) assignment[i] = i % 5;
  const auto p = partition_of(assignment);

  for (auto method : {SelectionMethod::random, SelectionMethod::betweenness, SelectionMethod::pagerank,
                      SelectionMethod::mci}) {
    for (std::size_t budget : {2, 7, 30, 60}) {
      SelectionConfig cfg;
      cfg.method = method;
      cfg.budget = budget;
      cfg.seed = 9;
      const auto r = select_representatives(g, p, cfg);
      CHECK(r.selected.size() == budget);
      const auto nodes = r.nodes();
      CHECK(std::set<std::size_t>(nodes.begin(), nodes.end()).size() == budget);
      CHECK(select_representatives(g, p, cfg).nodes() == nodes);
      for (std::size_t i = 1; i < r.selected.size(); ++i) {
        const auto& a = r.selected[i - 1];
        const auto& b = r.selected[i];
        CHECK((a.cluster < b.cluster || (a.cluster == b.cluster && a.rank < b.rank)));
      }
      for (const auto& s : r.selected) CHECK(s.cluster == p.assignment[s.node]);
      if (method != SelectionMethod::random) {
        Sizes per(5, 0);
        for (const auto& s : r.selected) ++per[s.cluster];
        CHECK(per == r.allocation);
      }
    }
  }

  SelectionConfig everything;
  everything.method = SelectionMethod::random;
  everything.budget = 60;
  auto all = select_representatives(g, p, everything).nodes();
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 60; ++i) CHECK(all[i] == i);

  SelectionConfig too_many;
  too_many.budget = 61;
  CHECK(select_representatives(g, p, too_many).selected.size() == 60);
  SelectionConfig too_few;
  too_few.budget = 1;
  CHECK_THROWS_AS(select_representatives(g, p, too_few), UsageError);
}

TEST_CASE("stratified train/validation split") {
  auto split = [](std::size_t relevant, std::size_t irrelevant, std::uint64_t seed = 0) {
    std::vector<std::size_t> items;
    std::vector<LabelValue> labels;
    for (std::size_t i = 0; i < relevant + irrelevant; ++i) {
      items.push_back(100 + i);
      labels.push_back(i < relevant ? LabelValue::relevant : LabelValue::irrelevant);
    }
    return split_train_val(items, labels, seed);
  };
  auto count = [](const std::vector<std::size_t>& side, std::size_t relevant) {
    std::size_t r = 0;
    for (auto x : side) r += x < 100 + relevant;
    return std::pair{r, side.size() - r};
  };

  auto s = split(40, 20);
  CHECK(count(s.train, 40) == std::pair<std::size_t, std::size_t>{20, 10});
  CHECK(count(s.validation, 40) == std::pair<std::size_t, std::size_t>{20, 10});

  s = split(1, 1);
  REQUIRE(s.train.size() == 1);
  REQUIRE(s.validation.size() == 1);
  CHECK(s.train[0] != s.validation[0]);

  s = split(3, 2);
  CHECK(count(s.train, 3) == std::pair<std::size_t, std::size_t>{2, 1});
  CHECK(count(s.validation, 3) == std::pair<std::size_t, std::size_t>{1, 1});

  s = split(5, 0);
  CHECK(s.absent_classes == std::vector<LabelValue>{LabelValue::irrelevant});
  CHECK_FALSE(s.validation.empty());

  CHECK_THROWS_AS(split(1, 0), DataError);

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t r = 2 + seed % 9, i = 2 + seed % 5;
    s = split(r, i, seed);
    const auto [tr, ti] = count(s.train, r);
    const auto [vr, vi] = count(s.validation, r);
    CHECK(tr + vr == r);
    CHECK(ti + vi == i);
    CHECK(tr >= vr);
    CHECK(tr - vr <= 1);
    CHECK(ti - vi <= 1);
    CHECK(vr >= 1);
    CHECK(vi >= 1);
  }
}

TEST_CASE("unknown labels are dropped from the split") {
  const std::vector<std::size_t> items{1, 2, 3, 4};
  const std::vector<LabelValue> labels{LabelValue::relevant, LabelValue::unknown, LabelValue::irrelevant,
                                       LabelValue::relevant};
  const auto s = split_train_val(items, labels, 0);
  CHECK(s.train.size() + s.validation.size() == 3);
  for (auto x : s.train) CHECK(x != 2);
  for (auto x : s.validation) CHECK(x != 2);
}

TEST_CASE("selection export round trip") {
  const auto g = test::graph_from(4, {{0, 1}, {2, 3}});
  const auto p = partition_of({0, 0, 1, 1});
  SelectionConfig cfg;
  cfg.budget = 3;
  const auto r = select_representatives(g, p, cfg);
  const std::vector<std::string> ids{"a", "b", "c", "d"};
  test::TempDir dir("selection");
  write_selection(dir / "s.txt", r, ids);
  const auto back = read_selection(dir / "s.txt", ids);
  CHECK(back.nodes() == r.nodes());
  for (std::size_t i = 0; i < r.selected.size(); ++i) {
    CHECK(back.selected[i].cluster == r.selected[i].cluster);
    CHECK(back.selected[i].rank == r.selected[i].rank);
  }
  const std::vector<std::string> other{"x", "y", "z", "w"};
  CHECK_THROWS_AS(read_selection(dir / "s.txt", other), DataError);
}
