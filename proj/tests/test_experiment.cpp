#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "evfilter/error.hpp"
#include "evfilter/experiment.hpp"
#include "support.hpp"

using namespace evf;

namespace {

ExperimentData small_data(double separation = 6.0) {
  SyntheticSpec spec;
  spec.n = 400;
  spec.dim = 16;
  spec.separation = separation;
  spec.seed = 5;
  return synthetic_experiment_data(spec);
}

ExperimentConfig lgc_grid() {
  ExperimentConfig c;
  c.models = {Classifier::lgc};
  c.selections = {SelectionMethod::betweenness};
  c.budgets = {60};
  c.repeats = 10;
  c.full_train_reference = false;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("one cell with ten repeats") {
  const auto data = small_data();
  const auto report = run_experiment(data, lgc_grid());
  REQUIRE(report.runs.size() == 10);
  REQUIRE(report.aggregate.size() == 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(report.runs[i].seed == i);
    CHECK(report.runs[i].error.empty());
    CHECK(report.runs[i].elapsed_ms == 0.0);
    CHECK(report.runs[i].balanced_accuracy >= 0.8);
    sum += report.runs[i].balanced_accuracy;
  }
  CHECK(std::abs(report.aggregate[0].mean - sum / 10) < 1e-12);
  CHECK(report.aggregate[0].count == 10);
  CHECK(report.failures() == 0);
}

TEST_CASE("grid shape and nesting order") {
  const auto data = small_data();
  auto c = lgc_grid();
  c.fusions = {FusionMode::concat, FusionMode::add};
  c.models = {Classifier::lgc, Classifier::mlpc};
  c.classifier.hidden = {16};
  c.classifier.train.epochs = 30;
  c.selections = {SelectionMethod::random, SelectionMethod::pagerank};
  c.budgets = {30, 60};
  c.repeats = 2;
  c.full_train_reference = true;
  c.base_seed = 100;
  const auto report = run_experiment(data, c);
  REQUIRE(report.runs.size() == 2 * 2 * (2 * 2 * 2 + 1));
  const auto& r = report.runs;
  CHECK(r[0].fusion == FusionMode::concat);
  CHECK(r[0].model == Classifier::lgc);
  CHECK(r[0].selection == "random");
  CHECK(r[0].budget == "30");
  CHECK(r[0].seed == 100);
  CHECK(r[1].seed == 101);
  CHECK(r[2].budget == "60");
  CHECK(r[4].selection == "pagerank");
  CHECK(r[8].selection == "full");
  CHECK(r[8].budget == "ALL");
  CHECK(r[9].model == Classifier::mlpc);
  CHECK(r[18].fusion == FusionMode::add);
  CHECK(report.aggregate.size() == 2 * 2 * 5);
  CHECK(report.failures() == 0);
}

TEST_CASE("default protocol beats chance by 0.3 at budget 60") {
  const auto data = small_data();
  auto c = lgc_grid();
  c.models = {Classifier::lgc, Classifier::mlpc, Classifier::ngcn_lin, Classifier::nsage_lin};
  c.selections = {SelectionMethod::random, SelectionMethod::betweenness, SelectionMethod::pagerank, SelectionMethod::mci};
  c.repeats = 1;
  const auto report = run_experiment(data, c);
  CHECK(report.failures() == 0);
  for (const auto& a : report.aggregate) {
    CAPTURE(to_string(a.model));
    CAPTURE(a.selection);
    CHECK(a.mean - 0.5 >= 0.3);
  }
}

TEST_CASE("single repeat has zero spread") {
  auto c = lgc_grid();
  c.repeats = 1;
  const auto report = run_experiment(small_data(), c);
  REQUIRE(report.aggregate.size() == 1);
  CHECK(report.aggregate[0].std == 0.0);
}

TEST_CASE("a failing cell does not stop the grid") {
  auto c = lgc_grid();
  c.budgets = {30, 100000};
  c.repeats = 2;
  const auto report = run_experiment(small_data(), c);
  REQUIRE(report.runs.size() == 4);
  CHECK(report.failures() == 2);
  CHECK(report.runs[0].error.empty());
  CHECK(std::isnan(report.runs[2].balanced_accuracy));
  CHECK(report.runs[2].error.find("exceeds") != std::string::npos);
  CHECK(std::isnan(report.aggregate[1].mean));
  CHECK(report.aggregate[1].count == 0);

  test::TempDir dir("experiment");
  write_report(dir / "r.csv", report.runs);
  write_errors(dir / "e.csv", report.runs);
  const auto text = slurp(dir / "r.csv");
  CHECK(text.rfind("fusion,model,selection,budget,seed,balanced_accuracy,elapsed_ms\n", 0) == 0);
  CHECK(text.find(",100000,0,nan,0\n") != std::string::npos);
  const auto errors = slurp(dir / "e.csv");
  CHECK(errors.rfind("fusion,model,selection,budget,seed,error\n", 0) == 0);
  CHECK(std::count(errors.begin(), errors.end(), '\n') == 3);
}

TEST_CASE("missing image view fails only the fusions that need it") {
  auto data = small_data();
  data.image.reset();
  auto c = lgc_grid();
  c.fusions = {FusionMode::text_only, FusionMode::concat};
  c.repeats = 1;
  const auto report = run_experiment(data, c);
  REQUIRE(report.runs.size() == 2);
  CHECK(report.runs[0].error.empty());
  CHECK_FALSE(report.runs[1].error.empty());
}

TEST_CASE("reports are byte-identical across runs") {
  auto c = lgc_grid();
  c.selections = {SelectionMethod::random, SelectionMethod::betweenness, SelectionMethod::mci};
  c.budgets = {30, 60};
  c.repeats = 2;
  c.full_train_reference = true;
  const auto data = small_data(3.0);
  test::TempDir dir("experiment");
  for (int round = 0; round < 2; ++round) {
    const auto report = run_experiment(data, c);
    write_report(dir / ("r" + std::to_string(round)), report.runs);
    write_aggregate(dir / ("a" + std::to_string(round)), report.aggregate);
  }
  CHECK(slurp(dir / "r0") == slurp(dir / "r1"));
  CHECK(slurp(dir / "a0") == slurp(dir / "a1"));
  CHECK(slurp(dir / "a0").rfind("fusion,model,selection,budget,mean,std\n", 0) == 0);
}

TEST_CASE("full-train reference on separable data") {
  auto c = lgc_grid();
  const auto r = full_train_reference(small_data(), FusionMode::concat, Classifier::lgc, c);
  CHECK(r.selection == "full");
  CHECK(r.budget == "ALL");
  CHECK(r.balanced_accuracy >= 0.99);
}

TEST_CASE("config validation and number formatting") {
  auto c = lgc_grid();
  c.budgets = {60, 30};
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = lgc_grid();
  c.repeats = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = lgc_grid();
  c.models.clear();
  CHECK_THROWS_AS(c.validate(), UsageError);
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(0.875) == "0.875");
  CHECK(format_number(std::nan("")) == "nan");
}
