#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "evfilter/centrality.hpp"
#include "evfilter/community.hpp"
#include "evfilter/dataset.hpp"
#include "evfilter/fewshot.hpp"
#include "evfilter/fusion.hpp"
#include "evfilter/selection.hpp"

namespace evf {

/// File layout of one pipeline run. Every stage reads its inputs from and
/// writes its outputs to these paths; inputs may be redirected individually.
struct ArtifactPaths {
  std::filesystem::path root;
  std::filesystem::path manifest;
  std::filesystem::path text;
  std::filesystem::path image;
  std::filesystem::path fused;
  std::filesystem::path graph;
  std::filesystem::path graph_nodes;
  std::filesystem::path partition;
  std::filesystem::path scores;
  std::filesystem::path selection;
  std::filesystem::path model;
  std::filesystem::path predictions;
  std::filesystem::path labels;
  std::filesystem::path filtered;
  std::filesystem::path metrics;

  explicit ArtifactPaths(const std::filesystem::path& root = ".");
};

// Throws DataError naming the artifact and the stage that produces it.
void require_artifact(const std::filesystem::path& path, const std::string& producer);

struct PipelineConfig {
  FusionMode fusion = FusionMode::concat;
  double epsilon = 0.85;
  LeidenConfig leiden;
  SelectionConfig selection;
  CentralityMeasure rank_measure = CentralityMeasure::betweenness;
  ClassifierConfig classifier;
  std::uint64_t seed = 0;
};

/// Fused embeddings aligned with the manifest, plus the labels scored for the
/// fusion mode and the split rows.
struct LoadedData {
  AlignedDataset data;
  std::vector<LabelValue> labels;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  std::filesystem::path manifest_dir;  // base for relative image paths
};

LoadedData load_data(const std::filesystem::path& manifest, const std::filesystem::path& embeddings, FusionMode mode);

/// Stage outputs, written under `paths`.
EmbeddingMatrix stage_fuse(const ArtifactPaths& paths, FusionMode mode);
SimilarityGraph stage_graph(const ArtifactPaths& paths, FusionMode mode, double epsilon);
Partition stage_cluster(const ArtifactPaths& paths, const LeidenConfig& config);
CentralityScores stage_rank(const ArtifactPaths& paths, CentralityMeasure measure);
SelectionResult stage_select(const ArtifactPaths& paths, const SelectionConfig& config);

// Graph node ids as written by stage_graph.
std::vector<std::string> read_node_ids(const std::filesystem::path& path);

/// Labels for the selected samples: from the manifest (oracle) or from the
/// labeling service's store. not_sure entries come back as unknown.
std::vector<std::pair<std::string, LabelValue>> oracle_labels(const LoadedData& data, const SelectionResult& selection,
                                                              std::span<const std::string> node_ids);
std::unordered_map<std::string, std::string> read_label_store(const std::filesystem::path& path);
void write_label_store(const std::filesystem::path& path, const std::unordered_map<std::string, std::string>& labels);

struct PropagationSummary {
  std::optional<double> balanced_accuracy;  // when the test split has both classes
  std::size_t predicted_relevant = 0;
  std::size_t predicted_irrelevant = 0;
  std::vector<LabelValue> predictions;  // per aligned row
};

/// Trains the configured classifier on the given labels and predicts every
/// row. Throws DataError naming a class with no labelled sample.
PropagationSummary propagate(LoadedData& data, FewShotContext& ctx, std::span<const std::pair<std::string, LabelValue>> labels,
                             const ClassifierConfig& config, std::uint64_t seed);

// predictions.tsv ("id<TAB>label") and filtered_ids.txt (ids predicted relevant).
void write_predictions(const std::filesystem::path& path, const AlignedDataset& data, std::span<const LabelValue> predictions);
std::vector<std::pair<std::string, LabelValue>> read_predictions(const std::filesystem::path& path);
void write_filtered_ids(const std::filesystem::path& path, const AlignedDataset& data, std::span<const LabelValue> predictions);

/// Trains a neural model from the selection and its labels; writes the checkpoint.
nn::TrainedModel stage_train(const ArtifactPaths& paths, const PipelineConfig& config, bool use_label_store);
/// Predictions for every row (LGC reads the selection and labels directly).
std::vector<LabelValue> stage_predict(const ArtifactPaths& paths, const PipelineConfig& config, bool use_label_store);

struct Evaluation {
  double balanced_accuracy = 0.0;
  std::size_t evaluated = 0;
};
// Balanced accuracy of predictions.tsv over the manifest's test split.
Evaluation stage_evaluate(const ArtifactPaths& paths, FusionMode mode);

using LabelProvider = std::function<std::vector<std::pair<std::string, LabelValue>>(
    const LoadedData&, const SelectionResult&, std::span<const std::string> node_ids)>;

struct PipelineResult {
  PropagationSummary summary;
  std::size_t selected = 0;
  std::size_t communities = 0;
};

/// fuse -> epsilon graph -> leiden -> rank -> select -> labels -> train ->
/// predict. Writes every stage artifact plus predictions, the filtered id list
/// and metrics.json. Stage failures are rethrown prefixed with the stage name.
PipelineResult pipeline_run(const ArtifactPaths& paths, const PipelineConfig& config, const LabelProvider& labels);

}  // namespace evf
