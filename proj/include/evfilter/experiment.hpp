#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "evfilter/community.hpp"
#include "evfilter/dataset.hpp"
#include "evfilter/fewshot.hpp"
#include "evfilter/fusion.hpp"
#include "evfilter/selection.hpp"
#include "evfilter/synthetic.hpp"

namespace evf {

/// Raw inputs of an experiment: the manifest plus per-modality embeddings.
struct ExperimentData {
  std::vector<SampleRecord> records;
  EmbeddingMatrix text;
  std::optional<EmbeddingMatrix> image;
};

// Synthetic blobs presented as a text view and an image view.
ExperimentData synthetic_experiment_data(const SyntheticSpec& spec);
ExperimentData load_experiment_data(const std::filesystem::path& manifest, const std::filesystem::path& text,
                                    const std::optional<std::filesystem::path>& image);

struct ExperimentConfig {
  std::vector<FusionMode> fusions{FusionMode::concat};
  std::vector<Classifier> models{Classifier::nsage_lin};
  std::vector<SelectionMethod> selections{SelectionMethod::random, SelectionMethod::betweenness,
                                          SelectionMethod::pagerank, SelectionMethod::mci};
  std::vector<std::size_t> budgets{30, 60, 90, 120, 210};
  std::size_t repeats = 10;
  std::uint64_t base_seed = 0;
  bool full_train_reference = true;  // adds one budget=ALL row per fusion and model
  bool record_timing = false;        // elapsed_ms is 0 unless set, keeping reports byte-stable

  double epsilon = 0.85;
  LeidenConfig leiden;  // seed is replaced by the cell seed
  CentralityScope scope = CentralityScope::community_subgraph;
  ClassifierConfig classifier;  // kind is replaced by each grid model

  void validate() const;  // throws UsageError
};

struct RunResult {
  FusionMode fusion = FusionMode::concat;
  Classifier model = Classifier::nsage_lin;
  std::string selection;  // method name, or "full" for the reference row
  std::string budget;     // count, or "ALL"
  std::uint64_t seed = 0;
  double balanced_accuracy = 0.0;  // NaN when the cell failed
  double elapsed_ms = 0.0;
  std::string error;
};

struct AggregateRow {
  FusionMode fusion = FusionMode::concat;
  Classifier model = Classifier::nsage_lin;
  std::string selection;
  std::string budget;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
  std::size_t count = 0;  // successful runs
};

struct ExperimentReport {
  std::vector<RunResult> runs;
  std::vector<AggregateRow> aggregate;
  std::size_t failures() const;
};

/// Runs fusion x model x selection x budget x repeat in that nesting order with
/// seed = base_seed + repeat. A failing cell is recorded with its error and
/// the grid continues.
ExperimentReport run_experiment(const ExperimentData& data, const ExperimentConfig& config);

/// Trains on every labelled training row and scores the test rows.
RunResult full_train_reference(const ExperimentData& data, FusionMode fusion, Classifier model,
                               const ExperimentConfig& config);

std::vector<AggregateRow> aggregate_runs(const std::vector<RunResult>& runs);

// Reports: header "fusion,model,selection,budget,seed,balanced_accuracy,elapsed_ms";
// aggregate "fusion,model,selection,budget,mean,std"; failed cells appear as
// "nan" and in an errors table "fusion,model,selection,budget,seed,error".
void write_report(const std::filesystem::path& path, const std::vector<RunResult>& runs);
void write_aggregate(const std::filesystem::path& path, const std::vector<AggregateRow>& rows);
void write_errors(const std::filesystem::path& path, const std::vector<RunResult>& runs);
std::string format_number(double v);

}  // namespace evf
