#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "evfilter/dataset.hpp"
#include "evfilter/graph.hpp"
#include "evfilter/nn.hpp"
#include "evfilter/propagation.hpp"

namespace evf {

enum class Classifier { lgc, mlpc, ngcn_lin, nsage_lin };

std::string_view to_string(Classifier c);
Classifier parse_classifier(std::string_view s);

struct ClassifierConfig {
  Classifier kind = Classifier::nsage_lin;
  std::size_t train_k = 10;  // KNN graph over the train split, used while training
  std::size_t infer_k = 16;  // KNN graph over every row, used for inference and LGC
  nn::TrainConfig train;
  double mlpc_lr = 1e-3;
  std::vector<std::size_t> hidden;  // empty: the model's default widths
  LgcConfig lgc;
};

/// Embeddings plus lazily built KNN graphs, shared across runs on one dataset.
class FewShotContext {
 public:
  FewShotContext(const EmbeddingMatrix& embeddings, std::vector<std::size_t> train_rows);

  const EmbeddingMatrix& embeddings() const { return embeddings_; }
  std::span<const std::size_t> train_rows() const { return train_rows_; }
  // Position of a dataset row inside the train split; throws DataError if absent.
  std::size_t train_position(std::size_t row) const;

  const SimilarityGraph& train_graph(std::size_t k);  // node i = train_rows()[i]
  const SimilarityGraph& full_graph(std::size_t k);   // node i = dataset row i
  const Matrix<float>& features();
  const Matrix<float>& train_features();

 private:
  const EmbeddingMatrix& embeddings_;
  std::vector<std::size_t> train_rows_;
  std::vector<std::size_t> position_;
  std::map<std::size_t, SimilarityGraph> train_graphs_;
  std::map<std::size_t, SimilarityGraph> full_graphs_;
  Matrix<float> features_;
  Matrix<float> train_features_;
};

struct FewShotOutcome {
  std::vector<LabelValue> predictions;  // one per dataset row
  std::size_t best_epoch = 0;           // neural models only
};

/// Trains a neural classifier on the labelled rows (all inside the train split).
/// The labels are split into train and validation halves unless
/// `validate_on_train` is set, in which case both masks hold every labelled
/// row. Graph models train on the train-split KNN graph.
nn::TrainedModel fewshot_train(FewShotContext& ctx, std::span<const std::size_t> labeled_rows,
                               std::span<const LabelValue> labels, const ClassifierConfig& config, std::uint64_t seed,
                               bool validate_on_train = false);

// Model predictions for every row; graph models use the all-rows KNN graph.
std::vector<LabelValue> fewshot_infer(FewShotContext& ctx, const nn::TrainedModel& model, const ClassifierConfig& config);

/// Trains on the labelled rows (all inside the train split) and predicts
/// every row. Neural models split the labels into train and validation halves
/// unless `validate_on_train` is set, in which case both masks hold every
/// labelled row. LGC seeds the diffusion with every label.
FewShotOutcome fewshot_predict(FewShotContext& ctx, std::span<const std::size_t> labeled_rows,
                               std::span<const LabelValue> labels, const ClassifierConfig& config, std::uint64_t seed,
                               bool validate_on_train = false);

}  // namespace evf
