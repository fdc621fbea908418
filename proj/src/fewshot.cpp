#include <limits>
#include <string>

#include "evfilter/error.hpp"
#include "evfilter/fewshot.hpp"
#include "evfilter/selection.hpp"

namespace evf {

std::string_view to_string(Classifier c) {
  switch (c) {
    case Classifier::lgc: return "lgc";
    case Classifier::mlpc: return "mlpc";
    case Classifier::ngcn_lin: return "ngcn_lin";
    case Classifier::nsage_lin: return "nsage_lin";
  }
  return "?";
}

Classifier parse_classifier(std::string_view s) {
  if (s == "lgc") return Classifier::lgc;
  if (s == "mlpc") return Classifier::mlpc;
  if (s == "ngcn_lin") return Classifier::ngcn_lin;
  if (s == "nsage_lin") return Classifier::nsage_lin;
  throw UsageError("unknown model '" + std::string(s) + "' (expected lgc, mlpc, ngcn_lin or nsage_lin)");
}

namespace {
constexpr std::size_t kNotInTrain = std::numeric_limits<std::size_t>::max();
}

FewShotContext::FewShotContext(const EmbeddingMatrix& embeddings, std::vector<std::size_t> train_rows)
    : embeddings_(embeddings), train_rows_(std::move(train_rows)), position_(embeddings.rows(), kNotInTrain) {
  for (std::size_t i = 0; i < train_rows_.size(); ++i) {
    if (train_rows_[i] >= embeddings.rows()) throw std::out_of_range("train row out of range");
    position_[train_rows_[i]] = i;
  }
}

std::size_t FewShotContext::train_position(std::size_t row) const {
  if (row >= position_.size() || position_[row] == kNotInTrain)
    throw DataError("labelled row " + std::to_string(row) + " is not in the train split");
  return position_[row];
}

const SimilarityGraph& FewShotContext::train_graph(std::size_t k) {
  auto it = train_graphs_.find(k);
  if (it == train_graphs_.end()) it = train_graphs_.emplace(k, build_knn_graph(embeddings_, k, train_rows_)).first;
  return it->second;
}

const SimilarityGraph& FewShotContext::full_graph(std::size_t k) {
  auto it = full_graphs_.find(k);
  if (it == full_graphs_.end()) it = full_graphs_.emplace(k, build_knn_graph(embeddings_, k)).first;
  return it->second;
}

const Matrix<float>& FewShotContext::features() {
  if (features_.empty()) features_ = nn::to_matrix(embeddings_);
  return features_;
}

const Matrix<float>& FewShotContext::train_features() {
  if (train_features_.empty()) train_features_ = gather_rows(features(), std::span<const std::size_t>(train_rows_));
  return train_features_;
}

nn::TrainedModel fewshot_train(FewShotContext& ctx, std::span<const std::size_t> labeled_rows,
                               std::span<const LabelValue> labels, const ClassifierConfig& config, std::uint64_t seed,
                               bool validate_on_train) {
  if (labeled_rows.size() != labels.size()) throw std::invalid_argument("fewshot_train: label count");
  if (config.kind == Classifier::lgc) throw UsageError("lgc has no trainable parameters");
  const std::size_t n = ctx.embeddings().rows();

  TrainValSplit split;
  if (validate_on_train) {
    for (std::size_t i = 0; i < labeled_rows.size(); ++i)
      if (labels[i] != LabelValue::unknown) split.train.push_back(labeled_rows[i]);
    split.validation = split.train;
  } else {
    split = split_train_val(labeled_rows, labels, seed);
  }

  const auto kind = config.kind == Classifier::mlpc       ? nn::ModelKind::mlpc
                    : config.kind == Classifier::ngcn_lin ? nn::ModelKind::ngcn_lin
                                                          : nn::ModelKind::nsage_lin;
  auto spec = nn::ModelSpec::defaults(kind, ctx.embeddings().dim);
  if (!config.hidden.empty()) spec.hidden = config.hidden;
  nn::TrainConfig train = config.train;
  train.seed = seed;
  if (kind == nn::ModelKind::mlpc) train.optimizer.lr = config.mlpc_lr;

  std::vector<LabelValue> row_labels(n, LabelValue::unknown);
  for (std::size_t i = 0; i < labeled_rows.size(); ++i) {
    ctx.train_position(labeled_rows[i]);
    row_labels.at(labeled_rows[i]) = labels[i];
  }

  if (kind == nn::ModelKind::mlpc)
    return nn::train_node_classifier(ctx.features(), nullptr, row_labels, split.train, split.validation, spec, train);

  // Training sees only the train split; node ids are positions within it.
  const auto rows = ctx.train_rows();
  std::vector<LabelValue> local_labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) local_labels[i] = row_labels[rows[i]];
  std::vector<std::size_t> local_train, local_val;
  for (auto r : split.train) local_train.push_back(ctx.train_position(r));
  for (auto r : split.validation) local_val.push_back(ctx.train_position(r));
  return nn::train_node_classifier(ctx.train_features(), &ctx.train_graph(config.train_k), local_labels, local_train,
                                   local_val, spec, train);
}

std::vector<LabelValue> fewshot_infer(FewShotContext& ctx, const nn::TrainedModel& model, const ClassifierConfig& config) {
  const SimilarityGraph* g = nn::is_graph_model(model.spec.kind) ? &ctx.full_graph(config.infer_k) : nullptr;
  return nn::predict(model, ctx.features(), g);
}

FewShotOutcome fewshot_predict(FewShotContext& ctx, std::span<const std::size_t> labeled_rows,
                               std::span<const LabelValue> labels, const ClassifierConfig& config, std::uint64_t seed,
                               bool validate_on_train) {
  if (labeled_rows.size() != labels.size()) throw std::invalid_argument("fewshot_predict: label count");
  FewShotOutcome out;
  if (config.kind == Classifier::lgc) {
    const auto& g = ctx.full_graph(config.infer_k);
    const auto y = make_label_matrix(ctx.embeddings().rows(), labeled_rows, labels);
    out.predictions = lgc_predict(lgc_propagate(lgc_smoothing_operator(g), y, config.lgc));
    return out;
  }
  const auto model = fewshot_train(ctx, labeled_rows, labels, config, seed, validate_on_train);
  out.predictions = fewshot_infer(ctx, model, config);
  out.best_epoch = model.best_epoch;
  return out;
}

}  // namespace evf
