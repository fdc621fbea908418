#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "evfilter/error.hpp"
#include "evfilter/metrics.hpp"
#include "evfilter/nn.hpp"
#include "evfilter/rng.hpp"

namespace evf::nn {

Matrix<float> to_matrix(const EmbeddingMatrix& m) { return Matrix<float>(m.rows(), m.dim, m.values); }

namespace {

struct LabelledNodes {
  std::vector<std::size_t> nodes;
  std::vector<LabelValue> labels;
};

LabelledNodes known_only(std::span<const std::size_t> nodes, std::span<const LabelValue> labels, const char* what) {
  LabelledNodes out;
  for (auto v : nodes) {
    if (v >= labels.size()) throw std::out_of_range(std::string(what) + " node index out of range");
    if (labels[v] == LabelValue::unknown) continue;
    out.nodes.push_back(v);
    out.labels.push_back(labels[v]);
  }
  if (out.nodes.empty()) throw DataError(std::string(what) + " set has no labelled nodes");
  return out;
}

template <typename T>
std::vector<Matrix<T>> gather_blocks(const std::vector<Matrix<T>>& blocks, std::span<const std::size_t> rows) {
  std::vector<Matrix<T>> out;
  for (const auto& b : blocks) out.push_back(gather_rows(b, rows));
  return out;
}

template <typename To, typename From>
Parameters<To> cast_parameters(const Parameters<From>& p) {
  Parameters<To> out;
  for (const auto& m : p) out.push_back(m.template cast<To>());
  return out;
}

template <typename T>
TrainedModel train_impl(const Matrix<float>& features, const SimilarityGraph* graph, const LabelledNodes& train,
                        const LabelledNodes& val, const ModelSpec& spec, const TrainConfig& config) {
  const auto inputs = prepare_input(spec, features.cast<T>(), graph);
  const auto train_inputs = gather_blocks(inputs, train.nodes);
  const auto val_inputs = gather_blocks(inputs, val.nodes);

  std::vector<int> targets;
  std::vector<std::size_t> mask;
  for (std::size_t i = 0; i < train.labels.size(); ++i) {
    targets.push_back(class_index(train.labels[i]));
    mask.push_back(i);
  }

  Parameters<T> params = init_parameters<T>(spec, config.seed);
  AdamState<T> state;
  TrainedModel model;
  model.spec = spec;
  model.precision = config.precision;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    ForwardCache<T> cache;
    const Matrix<T> logits = forward(spec, params, train_inputs, &cache);
    const LossResult<T> loss = cross_entropy_masked(logits, targets, mask);
    if (!std::isfinite(loss.loss))
      throw ConvergenceError("training loss is not finite at epoch " + std::to_string(epoch), loss.loss);
    optimizer_step(params, backward(spec, params, cache, loss.grad), state, config.optimizer);

    const auto predicted = argmax_labels(forward(spec, params, val_inputs));
    const double score = config.metric == ValidationMetric::accuracy ? accuracy(predicted, val.labels)
                                                                     : present_class_recall(predicted, val.labels);
    model.log.push_back({loss.loss, score});
    if (score > best) {
      best = score;
      model.best_epoch = epoch;
      model.parameters = cast_parameters<double>(params);
    }
  }
  return model;
}

template <typename T>
Matrix<double> logits_impl(const TrainedModel& model, const Matrix<float>& features, const SimilarityGraph* graph) {
  const auto params = cast_parameters<T>(model.parameters);
  return forward(model.spec, params, prepare_input(model.spec, features.cast<T>(), graph)).template cast<double>();
}

}  // namespace

TrainedModel train_node_classifier(const Matrix<float>& features, const SimilarityGraph* graph,
                                   std::span<const LabelValue> labels, std::span<const std::size_t> train_nodes,
                                   std::span<const std::size_t> val_nodes, const ModelSpec& spec,
                                   const TrainConfig& config) {
  spec.validate();
  if (features.cols() != spec.input_dim) throw DataError("feature width does not match the model input dimension");
  if (labels.size() != features.rows()) throw std::invalid_argument("label count does not match feature rows");
  if (config.epochs == 0) throw std::invalid_argument("training needs at least one epoch");
  const auto train = known_only(train_nodes, labels, "training");
  const auto val = known_only(val_nodes, labels, "validation");
  return config.precision == Precision::single ? train_impl<float>(features, graph, train, val, spec, config)
                                               : train_impl<double>(features, graph, train, val, spec, config);
}

Matrix<double> predict_logits(const TrainedModel& model, const Matrix<float>& features, const SimilarityGraph* graph) {
  if (features.cols() != model.spec.input_dim) throw DataError("feature width does not match the model input dimension");
  return model.precision == Precision::single ? logits_impl<float>(model, features, graph)
                                              : logits_impl<double>(model, features, graph);
}

std::vector<LabelValue> predict(const TrainedModel& model, const Matrix<float>& features, const SimilarityGraph* graph) {
  return argmax_labels(predict_logits(model, features, graph));
}

namespace {

// Which rectifiers are open; central differences are only meaningful while
// a perturbation leaves this pattern unchanged.
std::vector<bool> rectifier_pattern(const ModelSpec& spec, const Parameters<double>& params,
                                    const std::vector<Matrix<double>>& inputs) {
  ForwardCache<double> cache;
  forward(spec, params, inputs, &cache);
  std::vector<bool> open;
  for (const auto& a : cache.act)
    for (double v : a.values()) open.push_back(v > 0.0);
  return open;
}

}  // namespace

double gradient_check(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  constexpr std::size_t n = 7;
  constexpr double h = 1e-5;
  constexpr int max_draws = 100;
  Rng rng(mix_seed(seed, 0x67726164));

  for (int draw = 0; draw < max_draws; ++draw) {
    Parameters<double> params =
        init_parameters<double>(spec, draw == 0 ? seed : mix_seed(seed, static_cast<std::uint64_t>(draw)));
    Matrix<double> x(n, spec.input_dim);
    for (auto& v : x.values()) v = rng.normal();
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.uniform01() < 0.45) edges.push_back({i, j, rng.uniform(0.5, 1.0)});
    const auto g = SimilarityGraph::from_edges(n, edges);

    std::vector<int> targets(n);
    std::vector<std::size_t> mask;
    for (std::size_t i = 0; i < n; ++i) {
      targets[i] = static_cast<int>(rng.uniform_index(spec.classes));
      if (i == 0 || rng.uniform01() < 0.6) mask.push_back(i);
    }

    const auto inputs = prepare_input(spec, x, &g);
    auto loss_at = [&](const Parameters<double>& p) {
      return cross_entropy_masked(forward(spec, p, inputs), targets, mask).loss;
    };

    ForwardCache<double> cache;
    const auto logits = forward(spec, params, inputs, &cache);
    const auto analytic = backward(spec, params, cache, cross_entropy_masked(logits, targets, mask).grad);
    const auto pattern = rectifier_pattern(spec, params, inputs);
    // With most rectifiers closed a tensor's gradient can fall below what
    // central differences resolve (round-off is about 1e-11 here).
    bool resolvable = true;
    for (const auto& a : analytic) {
      double a2 = 0.0;
      for (double v : a.values()) a2 += v * v;
      resolvable = resolvable && std::sqrt(a2) >= 1e-4;
    }
    if (!resolvable) continue;

    // Per tensor: ||analytic - numeric|| / max(||analytic||, ||numeric||).
    double worst = 0.0;
    bool on_kink = false;
    for (std::size_t k = 0; k < params.size() && !on_kink; ++k) {
      double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
      for (std::size_t i = 0; i < params[k].size() && !on_kink; ++i) {
        const double saved = params[k].values()[i];
        params[k].values()[i] = saved + h;
        const double up = loss_at(params);
        on_kink = rectifier_pattern(spec, params, inputs) != pattern;
        params[k].values()[i] = saved - h;
        const double down = loss_at(params);
        on_kink = on_kink || rectifier_pattern(spec, params, inputs) != pattern;
        params[k].values()[i] = saved;
        const double numeric = (up - down) / (2 * h);
        const double a = analytic[k].values()[i];
        diff2 += (a - numeric) * (a - numeric);
        a2 += a * a;
        n2 += numeric * numeric;
      }
      const double scale = std::sqrt(std::max(a2, n2));
      worst = std::max(worst, std::sqrt(diff2) / std::max(scale, 1e-8));
    }
    if (!on_kink) return worst;
  }
  throw std::runtime_error("gradient_check: no well-conditioned instance in " + std::to_string(max_draws) +
                           " draws");
}

}  // namespace evf::nn
