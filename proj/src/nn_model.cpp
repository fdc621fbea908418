#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "evfilter/error.hpp"
#include "evfilter/nn.hpp"
#include "evfilter/rng.hpp"

namespace evf::nn {

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::mlpc: return "mlpc";
    case ModelKind::ngcn_lin: return "ngcn_lin";
    case ModelKind::nsage_lin: return "nsage_lin";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view s) {
  if (s == "mlpc") return ModelKind::mlpc;
  if (s == "ngcn_lin") return ModelKind::ngcn_lin;
  if (s == "nsage_lin") return ModelKind::nsage_lin;
  throw UsageError("unknown model kind '" + std::string(s) + "'");
}

std::string_view to_string(Precision p) { return p == Precision::single ? "single" : "double"; }

Precision parse_precision(std::string_view s) {
  if (s == "single") return Precision::single;
  if (s == "double") return Precision::double_;
  throw UsageError("unknown precision '" + std::string(s) + "'");
}

ModelSpec ModelSpec::defaults(ModelKind kind, std::size_t input_dim) {
  ModelSpec spec;
  spec.kind = kind;
  spec.input_dim = input_dim;
  spec.hidden = kind == ModelKind::mlpc ? std::vector<std::size_t>{128, 128, 64} : std::vector<std::size_t>{4096};
  return spec;
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw std::invalid_argument("model input dimension must be positive");
  if (classes < 2) throw std::invalid_argument("model needs at least two classes");
  if (is_graph_model(kind) && hidden.size() != 1)
    throw std::invalid_argument(std::string(to_string(kind)) + " takes exactly one hidden width");
  for (auto h : hidden)
    if (h == 0) throw std::invalid_argument("hidden widths must be positive");
}

std::vector<std::pair<std::size_t, std::size_t>> ModelSpec::tensor_shapes() const {
  validate();
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  const std::size_t first_out = hidden.empty() ? classes : hidden.front();
  for (std::size_t b = 0; b < input_blocks(); ++b) shapes.emplace_back(input_dim, first_out);
  shapes.emplace_back(1, first_out);
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    const std::size_t out = l + 1 < hidden.size() ? hidden[l + 1] : classes;
    shapes.emplace_back(hidden[l], out);
    shapes.emplace_back(1, out);
  }
  return shapes;
}

template <typename T>
Parameters<T> init_parameters(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  Parameters<T> params;
  const auto shapes = spec.tensor_shapes();
  std::size_t fan_in = spec.input_dim;
  for (const auto& [r, c] : shapes) {
    Matrix<T> m(r, c);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : m.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    params.push_back(std::move(m));
    // Biases close a layer; the next layer's fan-in is this layer's width.
    if (r == 1) fan_in = c;
  }
  return params;
}

template <typename T>
Matrix<T> mean_aggregate(const SimilarityGraph& g, const Matrix<T>& x) {
  detail::check_shape(g.size() == x.rows(), "mean_aggregate");
  Matrix<T> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto nb = g.neighbors(i);
    if (nb.empty()) continue;
    auto dst = out.row(i);
    for (const auto& n : nb) {
      const auto src = x.row(n.node);
      for (std::size_t c = 0; c < x.cols(); ++c) dst[c] += src[c];
    }
    const T inv = T(1) / static_cast<T>(nb.size());
    for (auto& v : dst) v *= inv;
  }
  return out;
}

template <typename T>
std::vector<Matrix<T>> prepare_input(const ModelSpec& spec, const Matrix<T>& x, const SimilarityGraph* g) {
  detail::check_shape(x.cols() == spec.input_dim, "prepare_input");
  if (is_graph_model(spec.kind)) {
    if (g == nullptr) throw std::invalid_argument(std::string(to_string(spec.kind)) + " requires a graph");
    detail::check_shape(g->size() == x.rows(), "prepare_input graph");
  }
  switch (spec.kind) {
    case ModelKind::mlpc: return {x};
    case ModelKind::ngcn_lin: return {normalized_adjacency(*g).apply(x)};
    case ModelKind::nsage_lin: return {x, mean_aggregate(*g, x)};
  }
  return {};
}

template <typename T>
Matrix<T> forward(const ModelSpec& spec, const Parameters<T>& params, std::vector<Matrix<T>> inputs,
                  ForwardCache<T>* cache) {
  const std::size_t blocks = spec.input_blocks();
  if (inputs.size() != blocks) throw std::invalid_argument("forward: wrong number of input blocks");
  if (params.size() != blocks + 1 + 2 * spec.hidden.size()) throw std::invalid_argument("forward: parameter count");
  Matrix<T> z = matmul(inputs[0], params[0]);
  for (std::size_t b = 1; b < blocks; ++b) matmul_add(z, inputs[b], params[b]);
  add_row_bias(z, params[blocks]);
  if (cache) {
    cache->inputs = std::move(inputs);
    cache->act.clear();
  }
  std::size_t p = blocks + 1;
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    Matrix<T> a = std::move(z);
    for (auto& v : a.values()) v = std::max(v, T(0));
    z = matmul(a, params[p]);
    add_row_bias(z, params[p + 1]);
    p += 2;
    if (cache) cache->act.push_back(std::move(a));
  }
  return z;
}

namespace {

template <typename T>
Matrix<T> column_sums(const Matrix<T>& m) {
  Matrix<T> out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += r[j];
  }
  return out;
}

}  // namespace

template <typename T>
Parameters<T> backward(const ModelSpec& spec, const Parameters<T>& params, const ForwardCache<T>& cache,
                       const Matrix<T>& dlogits) {
  const std::size_t blocks = spec.input_blocks();
  const std::size_t layers = spec.hidden.size();
  Parameters<T> grads(params.size());
  Matrix<T> dz = dlogits;
  for (std::size_t l = layers; l > 0; --l) {
    const std::size_t p = blocks + 1 + 2 * (l - 1);
    const Matrix<T>& a = cache.act[l - 1];
    grads[p] = matmul_at_b(a, dz);
    grads[p + 1] = column_sums(dz);
    Matrix<T> da = matmul_a_bt(dz, params[p]);
    // The rectifier passes gradient only where its output was positive.
    for (std::size_t k = 0; k < da.size(); ++k)
      if (!(a.values()[k] > T(0))) da.values()[k] = T(0);
    dz = std::move(da);
  }
  for (std::size_t b = 0; b < blocks; ++b) grads[b] = matmul_at_b(cache.inputs[b], dz);
  grads[blocks] = column_sums(dz);
  return grads;
}

template <typename T>
Matrix<T> mlp_forward(const ModelSpec& spec, const Matrix<T>& x, const Parameters<T>& params) {
  return forward(spec, params, prepare_input(spec, x, nullptr));
}

template <typename T>
Matrix<T> gcn_forward(const ModelSpec& spec, const SparseOperator& a_hat, const Matrix<T>& x, const Parameters<T>& params) {
  if (spec.kind != ModelKind::ngcn_lin) throw std::invalid_argument("gcn_forward needs an ngcn_lin spec");
  return forward(spec, params, std::vector<Matrix<T>>{a_hat.apply(x)});
}

template <typename T>
Matrix<T> sage_forward(const ModelSpec& spec, const SimilarityGraph& g, const Matrix<T>& x, const Parameters<T>& params) {
  if (spec.kind != ModelKind::nsage_lin) throw std::invalid_argument("sage_forward needs an nsage_lin spec");
  return forward(spec, params, prepare_input(spec, x, &g));
}

template <typename T>
LossResult<T> cross_entropy_masked(const Matrix<T>& logits, std::span<const int> targets,
                                   std::span<const std::size_t> mask) {
  if (targets.size() != logits.rows()) throw std::invalid_argument("cross_entropy_masked: target count");
  if (mask.empty()) throw std::invalid_argument("cross_entropy_masked: empty mask");
  LossResult<T> out;
  out.grad = Matrix<T>(logits.rows(), logits.cols());
  const double scale = 1.0 / static_cast<double>(mask.size());
  std::vector<double> prob(logits.cols());
  for (auto i : mask) {
    if (i >= logits.rows()) throw std::out_of_range("cross_entropy_masked: mask index");
    const int t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= logits.cols())
      throw std::invalid_argument("cross_entropy_masked: masked row without a known class");
    const auto row = logits.row(i);
    double mx = -INFINITY;
    for (auto v : row) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) sum += prob[c] = std::exp(static_cast<double>(row[c]) - mx);
    out.loss += (std::log(sum) - (static_cast<double>(row[t]) - mx)) * scale;
    auto g = out.grad.row(i);
    for (std::size_t c = 0; c < row.size(); ++c)
      g[c] += static_cast<T>((prob[c] / sum - (static_cast<int>(c) == t ? 1.0 : 0.0)) * scale);
  }
  return out;
}

template <typename T>
void optimizer_step(Parameters<T>& params, const Parameters<T>& grads, AdamState<T>& state, const OptimizerConfig& config) {
  if (grads.size() != params.size()) throw std::invalid_argument("optimizer_step: gradient count");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.rows(), p.cols());
      state.v.emplace_back(p.rows(), p.cols());
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  const T decay = static_cast<T>(1.0 - config.lr * config.weight_decay);
  const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
  const T step_size = static_cast<T>(config.lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(config.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    detail::check_shape(grads[k].size() == params[k].size(), "optimizer_step");
    T* __restrict p = params[k].data();
    const T* __restrict g = grads[k].data();
    T* __restrict m = state.m[k].data();
    T* __restrict v = state.v[k].data();
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      p[i] *= decay;
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      p[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

template <typename T>
std::vector<LabelValue> argmax_labels(const Matrix<T>& logits) {
  std::vector<LabelValue> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) out[i] = logits(i, 0) > logits(i, 1) ? LabelValue::relevant : LabelValue::irrelevant;
  return out;
}

#define EVF_INSTANTIATE(T)                                                                                           \
  template Parameters<T> init_parameters<T>(const ModelSpec&, std::uint64_t);                                       \
  template std::vector<Matrix<T>> prepare_input<T>(const ModelSpec&, const Matrix<T>&, const SimilarityGraph*);     \
  template Matrix<T> mean_aggregate<T>(const SimilarityGraph&, const Matrix<T>&);                                   \
  template Matrix<T> forward<T>(const ModelSpec&, const Parameters<T>&, std::vector<Matrix<T>>, ForwardCache<T>*);  \
  template Parameters<T> backward<T>(const ModelSpec&, const Parameters<T>&, const ForwardCache<T>&, const Matrix<T>&); \
  template Matrix<T> mlp_forward<T>(const ModelSpec&, const Matrix<T>&, const Parameters<T>&);                      \
  template Matrix<T> gcn_forward<T>(const ModelSpec&, const SparseOperator&, const Matrix<T>&, const Parameters<T>&); \
  template Matrix<T> sage_forward<T>(const ModelSpec&, const SimilarityGraph&, const Matrix<T>&, const Parameters<T>&); \
  template LossResult<T> cross_entropy_masked<T>(const Matrix<T>&, std::span<const int>, std::span<const std::size_t>); \
  template void optimizer_step<T>(Parameters<T>&, const Parameters<T>&, AdamState<T>&, const OptimizerConfig&);     \
  template std::vector<LabelValue> argmax_labels<T>(const Matrix<T>&);

EVF_INSTANTIATE(float)
EVF_INSTANTIATE(double)
#undef EVF_INSTANTIATE

}  // namespace evf::nn
