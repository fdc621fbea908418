#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "evfilter/error.hpp"
#include "evfilter/nn.hpp"
#include "support.hpp"

using namespace evf;
using namespace evf::nn;

namespace {

Matrix<double> random_features(std::size_t n, std::size_t d, Rng& rng) {
  Matrix<double> x(n, d);
  for (auto& v : x.values()) v = rng.normal();
  return x;
}

// Mean softmax cross-entropy written out independently of the library.
double reference_loss(const Matrix<double>& logits, const std::vector<int>& targets) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (targets[i] < 0) continue;
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits(i, c));
    total += std::log(z) - logits(i, static_cast<std::size_t>(targets[i]));
    ++count;
  }
  return total / static_cast<double>(count);
}

Matrix<double> whole_graph_logits(const ModelSpec& spec, const SimilarityGraph& g, const Matrix<double>& x,
                                  const Parameters<double>& p) {
  switch (spec.kind) {
    case ModelKind::mlpc: return mlp_forward(spec, x, p);
    case ModelKind::ngcn_lin: return gcn_forward(spec, normalized_adjacency(g), x, p);
    case ModelKind::nsage_lin: return sage_forward(spec, g, x, p);
  }
  return {};
}

double relative_error(const Matrix<double>& a, const Matrix<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += std::pow(a.values()[i] - b.values()[i], 2);
    na += a.values()[i] * a.values()[i];
    nb += b.values()[i] * b.values()[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
}

ModelSpec small_spec(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  s.input_dim = 4;
  s.hidden = kind == ModelKind::mlpc ? std::vector<std::size_t>{6, 5, 3} : std::vector<std::size_t>{6};
  return s;
}

}  // namespace

TEST_CASE("default architectures") {
  const auto m = ModelSpec::defaults(ModelKind::mlpc, 32);
  CHECK(m.hidden == std::vector<std::size_t>{128, 128, 64});
  CHECK(m.tensor_shapes().size() == 8);
  const auto g = ModelSpec::defaults(ModelKind::ngcn_lin, 32);
  CHECK(g.hidden == std::vector<std::size_t>{4096});
  const auto s = ModelSpec::defaults(ModelKind::nsage_lin, 32);
  CHECK(s.tensor_shapes() == std::vector<std::pair<std::size_t, std::size_t>>{{32, 4096}, {32, 4096}, {1, 4096},
                                                                              {4096, 2}, {1, 2}});
  auto bad = s;
  bad.hidden = {3, 3};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK(parse_model_kind("nsage_lin") == ModelKind::nsage_lin);
  CHECK_THROWS_AS(parse_model_kind("gat"), UsageError);
}

TEST_CASE("GCN forward matches a dense hand computation") {
  Rng rng(11);
  const auto g = test::random_graph(6, 0.5, rng, false);
  const auto x = random_features(6, 4, rng);
  const auto spec = small_spec(ModelKind::ngcn_lin);
  const auto p = init_parameters<double>(spec, 2);
  const auto a = normalized_adjacency(g);
  const auto got = gcn_forward(spec, a, x, p);
  for (std::size_t i = 0; i < 6; ++i) {
    std::vector<double> h(6, 0.0);
    for (std::size_t u = 0; u < 6; ++u) {
      double s = p[1](0, u);
      for (std::size_t j = 0; j < 6; ++j)
        for (std::size_t d = 0; d < 4; ++d) s += a.at(i, j) * x(j, d) * p[0](d, u);
      h[u] = std::max(s, 0.0);
    }
    for (std::size_t c = 0; c < 2; ++c) {
      double s = p[3](0, c);
      for (std::size_t u = 0; u < 6; ++u) s += h[u] * p[2](u, c);
      CHECK(got(i, c) == doctest::Approx(s).epsilon(1e-12));
    }
  }
}

TEST_CASE("SAGE forward uses the neighbour mean") {
  const auto g = test::graph_from(3, {{0, 1}, {0, 2}});
  Matrix<double> x(3, 1);
  x.values() = {1, 2, 6};
  const auto mean = mean_aggregate(g, x);
  CHECK(mean.values() == std::vector<double>{4, 1, 1});
  Matrix<double> y(2, 1);
  y.values() = {3, 4};
  CHECK(mean_aggregate(test::graph_from(2, {}), y).values() == std::vector<double>{0, 0});
}

TEST_CASE("backward matches finite differences of the whole-graph loss") {
  for (auto kind : {ModelKind::mlpc, ModelKind::ngcn_lin, ModelKind::nsage_lin}) {
    CAPTURE(to_string(kind));
    Rng rng(5);
    const auto g = test::random_graph(7, 0.5, rng, false);
    const auto x = random_features(7, 4, rng);
    const std::vector<int> targets{0, 1, -1, 1, 0, -1, 0};
    const std::vector<std::size_t> mask{0, 1, 3, 4, 6};
    const auto spec = small_spec(kind);
    auto p = init_parameters<double>(spec, 8);

    // analytic: library forward over the masked rows only
    auto inputs = prepare_input(spec, x, &g);
    for (auto& in : inputs) in = gather_rows(in, mask);
    ForwardCache<double> cache;
    const auto logits = forward(spec, p, inputs, &cache);
    std::vector<int> masked_targets;
    for (auto i : mask) masked_targets.push_back(targets[i]);
    std::vector<std::size_t> all(mask.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto loss = cross_entropy_masked(logits, masked_targets, all);
    CHECK(loss.loss == doctest::Approx(reference_loss(whole_graph_logits(spec, g, x, p), targets)).epsilon(1e-12));
    const auto grads = backward(spec, p, cache, loss.grad);

    const double h = 1e-5;
    for (std::size_t k = 0; k < p.size(); ++k) {
      Matrix<double> numeric(p[k].rows(), p[k].cols());
      for (std::size_t i = 0; i < p[k].size(); ++i) {
        const double saved = p[k].values()[i];
        p[k].values()[i] = saved + h;
        const double up = reference_loss(whole_graph_logits(spec, g, x, p), targets);
        p[k].values()[i] = saved - h;
        const double down = reference_loss(whole_graph_logits(spec, g, x, p), targets);
        p[k].values()[i] = saved;
        numeric.values()[i] = (up - down) / (2 * h);
      }
      CHECK(relative_error(grads[k], numeric) < 1e-6);
    }
    CHECK(gradient_check(spec, 3) < 1e-6);
  }
}

TEST_CASE("gradient check holds across many random instances") {
  for (auto kind : {ModelKind::mlpc, ModelKind::ngcn_lin, ModelKind::nsage_lin}) {
    CAPTURE(to_string(kind));
    auto spec = small_spec(kind);
    spec.input_dim = 5;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) worst = std::max(worst, gradient_check(spec, seed));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("cross-entropy gradient against finite differences") {
  Rng rng(2);
  auto logits = random_features(5, 2, rng);
  const std::vector<int> targets{0, 1, 1, -1, 0};
  const std::vector<std::size_t> mask{0, 1, 2, 4};
  const auto r = cross_entropy_masked(logits, targets, mask);
  CHECK(r.loss == doctest::Approx(reference_loss(logits, targets)).epsilon(1e-12));
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double saved = logits.values()[i];
    logits.values()[i] = saved + 1e-6;
    const double up = cross_entropy_masked(logits, targets, mask).loss;
    logits.values()[i] = saved - 1e-6;
    const double down = cross_entropy_masked(logits, targets, mask).loss;
    logits.values()[i] = saved;
    CHECK(r.grad.values()[i] == doctest::Approx((up - down) / 2e-6).epsilon(1e-6));
  }
  CHECK(r.grad(3, 0) == 0.0);
  const std::vector<std::size_t> unknown{3};
  CHECK_THROWS_AS(cross_entropy_masked(logits, targets, unknown), std::invalid_argument);
}

TEST_CASE("optimizer step by hand") {
  Parameters<double> p{Matrix<double>(1, 2)};
  p[0].values() = {1.0, -2.0};
  Parameters<double> g{Matrix<double>(1, 2)};
  g[0].values() = {0.5, -0.25};
  AdamState<double> state;
  OptimizerConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  optimizer_step(p, g, state, cfg);
  // first step: bias-corrected moments are g and g^2, so the update is lr * g / (|g| + eps)
  CHECK(p[0](0, 0) == doctest::Approx(1.0 * (1 - 0.001) - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(p[0](0, 1) == doctest::Approx(-2.0 * (1 - 0.001) + 0.1 * 0.25 / (0.25 + 1e-8)).epsilon(1e-14));

  // second step with the same gradient
  const double before = p[0](0, 0);
  optimizer_step(p, g, state, cfg);
  const double m = 0.9 * 0.05 + 0.1 * 0.5, v = 0.999 * 0.00025 + 0.001 * 0.25;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  CHECK(p[0](0, 0) == doctest::Approx(before * (1 - 0.001) - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-12));
  CHECK(state.step == 2);
}

namespace {

struct ToyProblem {
  Matrix<float> x;
  SimilarityGraph g;
  std::vector<LabelValue> labels;
  std::vector<std::size_t> train, val;
};

ToyProblem toy(std::uint64_t seed) {
  Rng rng(seed);
  ToyProblem t;
  t.x = Matrix<float>(40, 3);
  EmbeddingMatrix m;
  m.dim = 3;
  for (std::size_t i = 0; i < 40; ++i) {
    const bool rel = i % 3 == 0;
    t.labels.push_back(rel ? LabelValue::relevant : LabelValue::irrelevant);
    m.ids.push_back(std::to_string(i));
    for (std::size_t d = 0; d < 3; ++d) {
      const float v = static_cast<float>((d == 0 ? (rel ? 1.0 : -1.0) : 0.0) + 0.6 * rng.normal());
      t.x(i, d) = v;
      m.values.push_back(v);
    }
  }
  t.g = build_knn_graph(m, 4);
  t.train = {0, 1, 2, 3, 4, 5, 6, 7};
  t.val = {9, 10, 11, 12, 13, 14};
  return t;
}

}  // namespace

TEST_CASE("training is deterministic and keeps the earliest best epoch") {
  for (auto kind : {ModelKind::mlpc, ModelKind::ngcn_lin, ModelKind::nsage_lin}) {
    CAPTURE(to_string(kind));
    const auto t = toy(1);
    auto spec = small_spec(kind);
    spec.input_dim = 3;
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.optimizer.lr = 1e-2;
    cfg.seed = 4;
    const auto a = train_node_classifier(t.x, &t.g, t.labels, t.train, t.val, spec, cfg);
    const auto b = train_node_classifier(t.x, &t.g, t.labels, t.train, t.val, spec, cfg);
    REQUIRE(a.log.size() == 60);
    CHECK(a.log == b.log);
    CHECK(a.best_epoch == b.best_epoch);
    for (std::size_t k = 0; k < a.parameters.size(); ++k) CHECK(a.parameters[k] == b.parameters[k]);

    std::size_t expected = 0;
    for (std::size_t e = 1; e < a.log.size(); ++e)
      if (a.log[e].validation_score > a.log[expected].validation_score) expected = e;
    CHECK(a.best_epoch == expected);
    CHECK(a.log.back().loss < a.log.front().loss);

    // the snapshot reproduces the best epoch's validation score
    const auto pred = predict(a, t.x, &t.g);
    std::size_t hit[2] = {0, 0}, total[2] = {0, 0};
    for (auto v : t.val) {
      const int c = class_index(t.labels[v]);
      ++total[c];
      hit[c] += pred[v] == t.labels[v];
    }
    const double ba = 0.5 * (double(hit[0]) / total[0] + double(hit[1]) / total[1]);
    CHECK(ba == doctest::Approx(a.log[a.best_epoch].validation_score));

    cfg.seed = 5;
    const auto c = train_node_classifier(t.x, &t.g, t.labels, t.train, t.val, spec, cfg);
    CHECK_FALSE(c.log == a.log);
  }
}

TEST_CASE("double precision training") {
  const auto t = toy(2);
  auto spec = small_spec(ModelKind::nsage_lin);
  spec.input_dim = 3;
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.optimizer.lr = 1e-2;
  cfg.precision = Precision::double_;
  const auto m = train_node_classifier(t.x, &t.g, t.labels, t.train, t.val, spec, cfg);
  CHECK(m.precision == Precision::double_);
  CHECK(predict_logits(m, t.x, &t.g).rows() == 40);
}

TEST_CASE("training input errors") {
  const auto t = toy(3);
  auto spec = small_spec(ModelKind::ngcn_lin);
  spec.input_dim = 3;
  TrainConfig cfg;
  cfg.epochs = 2;
  std::vector<LabelValue> unknown(40, LabelValue::unknown);
  CHECK_THROWS_AS(train_node_classifier(t.x, &t.g, unknown, t.train, t.val, spec, cfg), DataError);
  CHECK_THROWS_AS(train_node_classifier(t.x, nullptr, t.labels, t.train, t.val, spec, cfg), std::invalid_argument);
  spec.input_dim = 4;
  CHECK_THROWS_AS(train_node_classifier(t.x, &t.g, t.labels, t.train, t.val, spec, cfg), DataError);
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto t = toy(4);
  auto spec = small_spec(ModelKind::nsage_lin);
  spec.input_dim = 3;
  TrainConfig cfg;
  cfg.epochs = 5;
  const auto m = train_node_classifier(t.x, &t.g, t.labels, t.train, t.val, spec, cfg);

  std::stringstream buf;
  write_checkpoint(buf, m);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "EVM1");
  std::istringstream in(bytes);
  const auto back = read_checkpoint(in);
  CHECK(back.spec == m.spec);
  CHECK(back.precision == m.precision);
  CHECK(back.best_epoch == m.best_epoch);
  REQUIRE(back.parameters.size() == m.parameters.size());
  for (std::size_t k = 0; k < m.parameters.size(); ++k) CHECK(back.parameters[k] == m.parameters[k]);
  CHECK(predict(back, t.x, &t.g) == predict(m, t.x, &t.g));

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream in1(bad_magic);
  CHECK_THROWS_AS(read_checkpoint(in1), DataError);
  for (std::size_t cut : {std::size_t{6}, bytes.size() / 2, bytes.size() - 1}) {
    std::istringstream in2(bytes.substr(0, cut));
    CHECK_THROWS_AS(read_checkpoint(in2), DataError);
  }
  std::istringstream in3(bytes + "x");
  CHECK_THROWS_AS(read_checkpoint(in3), DataError);

  test::TempDir dir("nn");
  write_checkpoint(dir / "m.evm", m);
  CHECK(read_checkpoint(dir / "m.evm").parameters == m.parameters);
  CHECK_THROWS_AS(read_checkpoint(dir / "missing.evm"), DataError);
}

TEST_CASE("argmax ties predict irrelevant") {
  Matrix<double> l(2, 2);
  l.values() = {1.0, 1.0, 2.0, 1.0};
  CHECK(argmax_labels(l) == std::vector<LabelValue>{LabelValue::irrelevant, LabelValue::relevant});
}

TEST_CASE("optimizer edge cases") {
  Parameters<double> p{Matrix<double>(1, 3)};
  p[0].values() = {1.0, -2.0, 0.5};
  const auto p0 = p;
  Parameters<double> zero{Matrix<double>(1, 3)};
  AdamState<double> state;
  OptimizerConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  optimizer_step(p, zero, state, cfg);
  CHECK(p[0] == p0[0]);

  cfg.weight_decay = 0.5;
  AdamState<double> fresh;
  optimizer_step(p, zero, fresh, cfg);
  for (std::size_t i = 0; i < 3; ++i) CHECK(p[0].values()[i] == doctest::Approx(p0[0].values()[i] * 0.95).epsilon(1e-15));
}

TEST_CASE("permuting nodes permutes logits") {
  Rng rng(21);
  const std::size_t n = 8;
  EmbeddingMatrix m;
  m.dim = 4;
  for (std::size_t i = 0; i < n; ++i) {
    m.ids.push_back(std::to_string(i));
    for (int d = 0; d < 4; ++d) m.values.push_back(static_cast<float>(rng.normal()));
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = (i * 3 + 1) % n;
  EmbeddingMatrix pm;
  pm.dim = 4;
  for (std::size_t i = 0; i < n; ++i) {
    pm.ids.push_back(m.ids[perm[i]]);
    for (int d = 0; d < 4; ++d) pm.values.push_back(m.values[perm[i] * 4 + d]);
  }
  const auto g = build_knn_graph(m, 3);
  const auto pg = build_knn_graph(pm, 3);
  Matrix<double> x(n, 4), px(n, 4);
  for (std::size_t i = 0; i < n * 4; ++i) {
    x.values()[i] = m.values[i];
    px.values()[i] = pm.values[i];
  }
  for (auto kind : {ModelKind::mlpc, ModelKind::ngcn_lin, ModelKind::nsage_lin}) {
    const auto spec = small_spec(kind);
    const auto p = init_parameters<double>(spec, 1);
    const auto a = whole_graph_logits(spec, g, x, p);
    const auto b = whole_graph_logits(spec, pg, px, p);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 2; ++c) CHECK(b(i, c) == doctest::Approx(a(perm[i], c)).epsilon(1e-12));
  }
}

TEST_CASE("isolated node under the GCN depends only on itself") {
  const auto g = test::graph_from(3, {{0, 1}});
  Matrix<double> x(3, 4);
  Rng rng(6);
  for (auto& v : x.values()) v = rng.normal();
  const auto spec = small_spec(ModelKind::ngcn_lin);
  const auto p = init_parameters<double>(spec, 3);
  const auto a = gcn_forward(spec, normalized_adjacency(g), x, p);
  for (std::size_t d = 0; d < 4; ++d) x(0, d) += 5.0;
  const auto b = gcn_forward(spec, normalized_adjacency(g), x, p);
  CHECK(a(2, 0) == b(2, 0));
  CHECK(a(2, 1) == b(2, 1));
  CHECK(a(1, 0) != b(1, 0));
}

TEST_CASE("labels outside the training mask do not touch the trajectory") {
  const auto t = toy(7);
  auto spec = small_spec(ModelKind::nsage_lin);
  spec.input_dim = 3;
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.optimizer.lr = 1e-2;
  auto other = t.labels;
  for (std::size_t i = 15; i < 40; ++i) other[i] = other[i] == LabelValue::relevant ? LabelValue::irrelevant : LabelValue::unknown;
  for (auto v : t.val) other[v] = other[v] == LabelValue::relevant ? LabelValue::irrelevant : LabelValue::relevant;
  const auto a = train_node_classifier(t.x, &t.g, t.labels, t.train, t.val, spec, cfg);
  const auto b = train_node_classifier(t.x, &t.g, other, t.train, t.val, spec, cfg);
  for (std::size_t e = 0; e < cfg.epochs; ++e) CHECK(a.log[e].loss == b.log[e].loss);
}

TEST_CASE("separable blobs: loss falls early and full labels fit") {
  Rng rng(8);
  EmbeddingMatrix m;
  m.dim = 6;
  Matrix<float> x(120, 6);
  std::vector<LabelValue> labels;
  for (std::size_t i = 0; i < 120; ++i) {
    const bool rel = i < 40;
    labels.push_back(rel ? LabelValue::relevant : LabelValue::irrelevant);
    m.ids.push_back(std::to_string(i));
    for (std::size_t d = 0; d < 6; ++d) {
      const float v = static_cast<float>((d == 0 ? (rel ? 1.0 : -1.0) : 0.0) + 0.15 * rng.normal());
      x(i, d) = v;
      m.values.push_back(v);
    }
  }
  const auto g = build_knn_graph(m, 10);
  std::vector<std::size_t> all(120);
  for (std::size_t i = 0; i < 120; ++i) all[i] = i;
  for (auto kind : {ModelKind::mlpc, ModelKind::ngcn_lin, ModelKind::nsage_lin}) {
    CAPTURE(to_string(kind));
    auto spec = ModelSpec::defaults(kind, 6);
    if (kind != ModelKind::mlpc) spec.hidden = {64};
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.optimizer.lr = 1e-3;
    const auto early = train_node_classifier(x, &g, labels, all, all, spec, cfg);
    CHECK(early.log[9].loss < early.log[0].loss);
    cfg.epochs = 200;
    const auto fitted = train_node_classifier(x, &g, labels, all, all, spec, cfg);
    CHECK(fitted.log.back().validation_score >= 0.99);
  }
}
