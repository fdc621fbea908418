#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "evfilter/dataset.hpp"
#include "evfilter/graph.hpp"
#include "evfilter/matrix.hpp"

namespace evf::nn {

enum class ModelKind { mlpc, ngcn_lin, nsage_lin };
enum class Precision { single, double_ };

std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view s);
std::string_view to_string(Precision p);
Precision parse_precision(std::string_view s);
inline bool is_graph_model(ModelKind k) { return k != ModelKind::mlpc; }

/// Architecture descriptor.
///
/// mlpc: affine layers through `hidden` with rectifiers between them, then a
/// final affine layer to `classes` logits. ngcn_lin: one GCN layer over
/// D^-1/2(A+I)D^-1/2 X, rectifier, linear classifier. nsage_lin: one mean
/// aggregator layer X*W_self + mean_N(X)*W_neigh, rectifier, linear classifier.
struct ModelSpec {
  ModelKind kind = ModelKind::mlpc;
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t classes = 2;

  // mlpc: [128, 128, 64]; graph models: [4096].
  static ModelSpec defaults(ModelKind kind, std::size_t input_dim);
  void validate() const;
  // Number of input blocks feeding the first layer (2 for nsage_lin).
  std::size_t input_blocks() const { return kind == ModelKind::nsage_lin ? 2 : 1; }
  // Tensor shapes in declaration order; biases are 1 x width rows.
  std::vector<std::pair<std::size_t, std::size_t>> tensor_shapes() const;

  bool operator==(const ModelSpec&) const = default;
};

template <typename T>
using Parameters = std::vector<Matrix<T>>;

// Weights and biases uniform in +-1/sqrt(fan_in).
template <typename T>
Parameters<T> init_parameters(const ModelSpec& spec, std::uint64_t seed);

/// Per-node inputs of the first layer: {X} for mlpc, {A_hat X} for ngcn_lin,
/// {X, mean of neighbour rows} for nsage_lin.
template <typename T>
std::vector<Matrix<T>> prepare_input(const ModelSpec& spec, const Matrix<T>& x, const SimilarityGraph* g);

// Row-wise mean of neighbour features; isolated nodes get a zero row.
template <typename T>
Matrix<T> mean_aggregate(const SimilarityGraph& g, const Matrix<T>& x);

template <typename T>
struct ForwardCache {
  std::vector<Matrix<T>> inputs;
  std::vector<Matrix<T>> act;  // rectified hidden activations
};

/// Logits for every row of `inputs` (already restricted to the rows of interest).
template <typename T>
Matrix<T> forward(const ModelSpec& spec, const Parameters<T>& params, std::vector<Matrix<T>> inputs,
                  ForwardCache<T>* cache = nullptr);

/// Parameter gradients given d(loss)/d(logits) for the cached forward pass.
template <typename T>
Parameters<T> backward(const ModelSpec& spec, const Parameters<T>& params, const ForwardCache<T>& cache,
                       const Matrix<T>& dlogits);

template <typename T>
Matrix<T> mlp_forward(const ModelSpec& spec, const Matrix<T>& x, const Parameters<T>& params);
template <typename T>
Matrix<T> gcn_forward(const ModelSpec& spec, const SparseOperator& a_hat, const Matrix<T>& x, const Parameters<T>& params);
template <typename T>
Matrix<T> sage_forward(const ModelSpec& spec, const SimilarityGraph& g, const Matrix<T>& x, const Parameters<T>& params);

template <typename T>
struct LossResult {
  double loss = 0.0;
  Matrix<T> grad;  // same shape as logits, zero outside the mask
};

/// Mean softmax cross-entropy over the masked rows. targets[i] is the class of
/// row i (-1 when unknown); masked rows must have a known class.
template <typename T>
LossResult<T> cross_entropy_masked(const Matrix<T>& logits, std::span<const int> targets,
                                   std::span<const std::size_t> mask);

struct OptimizerConfig {
  double lr = 1e-5;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  Parameters<T> m;
  Parameters<T> v;
  std::size_t step = 0;
};

/// Adaptive-moment update with bias correction and decoupled weight decay
/// (theta <- theta - lr*wd*theta before the moment step).
template <typename T>
void optimizer_step(Parameters<T>& params, const Parameters<T>& grads, AdamState<T>& state, const OptimizerConfig& config);

enum class ValidationMetric { balanced_accuracy, accuracy };

struct TrainConfig {
  OptimizerConfig optimizer;
  std::size_t epochs = 1000;
  std::uint64_t seed = 0;
  Precision precision = Precision::single;
  ValidationMetric metric = ValidationMetric::balanced_accuracy;
};

struct EpochRecord {
  double loss = 0.0;
  double validation_score = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainedModel {
  ModelSpec spec;
  Parameters<double> parameters;  // snapshot of the best validation epoch
  std::size_t best_epoch = 0;     // 0-based
  std::vector<EpochRecord> log;
  Precision precision = Precision::single;
};

/// Full-batch training. The loss covers `train_nodes` only; after every epoch
/// the updated model is scored on `val_nodes` and the best epoch (earliest on
/// ties) is kept. Nodes with unknown labels are ignored in both sets.
///
/// Single-layer graph models make every node's logits depend on fixed
/// aggregated inputs, so only the rows of the two node sets are evaluated;
/// the gradients are those of the whole-graph pass.
TrainedModel train_node_classifier(const Matrix<float>& features, const SimilarityGraph* graph,
                                   std::span<const LabelValue> labels, std::span<const std::size_t> train_nodes,
                                   std::span<const std::size_t> val_nodes, const ModelSpec& spec,
                                   const TrainConfig& config);

// Logits for every node (graph required for graph models).
Matrix<double> predict_logits(const TrainedModel& model, const Matrix<float>& features, const SimilarityGraph* graph);
// Row argmax; ties predict irrelevant.
std::vector<LabelValue> predict(const TrainedModel& model, const Matrix<float>& features, const SimilarityGraph* graph);
template <typename T>
std::vector<LabelValue> argmax_labels(const Matrix<T>& logits);

/// Largest relative difference between analytic parameter gradients and
/// central finite differences (h = 1e-5) on a random instance of at most 8
/// nodes, in double precision. Instances are redrawn when a perturbation opens
/// or closes a rectifier (the loss has no derivative there) or when a tensor's
/// gradient norm is below 1e-4 (too small for finite differences to resolve).
double gradient_check(const ModelSpec& spec, std::uint64_t seed);

// EVM1 checkpoint.
void write_checkpoint(std::ostream& out, const TrainedModel& model);
void write_checkpoint(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel read_checkpoint(std::istream& in, const std::string& source = "<stream>");
TrainedModel read_checkpoint(const std::filesystem::path& path);

// Embedding rows as a float matrix.
Matrix<float> to_matrix(const EmbeddingMatrix& m);

}  // namespace evf::nn
