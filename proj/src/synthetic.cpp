#include <cmath>
#include <cstdio>
#include <numeric>

#include "evfilter/error.hpp"
#include "evfilter/rng.hpp"
#include "evfilter/synthetic.hpp"

namespace evf {

void SyntheticSpec::validate() const {
  if (n < 4) throw UsageError("synthetic n must be at least 4");
  if (dim < 2) throw UsageError("synthetic dim must be at least 2");
  if (!(separation > 0.0)) throw UsageError("synthetic separation must be positive");
  if (!(noise > 0.0)) throw UsageError("synthetic noise must be positive");
  if (!(relevant_fraction > 0.0 && relevant_fraction < 1.0)) throw UsageError("relevant fraction must be in (0, 1)");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw UsageError("test fraction must be in (0, 1)");
}

namespace {

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      sq += x * x;
    }
  } while (sq == 0.0);
  for (auto& x : v) x /= std::sqrt(sq);
  return v;
}

void sample_rows(Rng& rng, const SyntheticSpec& spec, const std::vector<std::vector<double>>& means,
                 const std::vector<int>& cls, EmbeddingMatrix& out) {
  out.dim = spec.dim;
  out.values.assign(spec.n * spec.dim, 0.0f);
  std::vector<double> x(spec.dim);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const auto& mu = means[cls[i]];
    double sq = 0.0;
    for (std::size_t j = 0; j < spec.dim; ++j) {
      x[j] = mu[j] + spec.noise * rng.normal();
      sq += x[j] * x[j];
    }
    const double inv = 1.0 / std::sqrt(sq);
    auto row = out.row(i);
    for (std::size_t j = 0; j < spec.dim; ++j) row[j] = static_cast<float>(x[j] * inv);
  }
}

}  // namespace

SyntheticViews generate_synthetic_views(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  const auto b = random_unit(rng, spec.dim);
  auto u = random_unit(rng, spec.dim);
  const double proj = std::inner_product(b.begin(), b.end(), u.begin(), 0.0);
  double sq = 0.0;
  for (std::size_t j = 0; j < spec.dim; ++j) {
    u[j] -= proj * b[j];
    sq += u[j] * u[j];
  }
  for (auto& x : u) x /= std::sqrt(sq);
  const double half = spec.separation * spec.noise / 2.0;
  std::vector<std::vector<double>> means(2, std::vector<double>(spec.dim));
  for (std::size_t j = 0; j < spec.dim; ++j) {
    means[0][j] = b[j] + half * u[j];
    means[1][j] = b[j] - half * u[j];
  }

  const auto n_rel = static_cast<std::size_t>(std::llround(spec.relevant_fraction * static_cast<double>(spec.n)));
  if (n_rel == 0 || n_rel == spec.n) throw UsageError("synthetic class fraction leaves a class empty");
  std::vector<int> cls(spec.n, 1);
  std::fill(cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(n_rel), 0);
  rng.shuffle(std::span<int>(cls));

  SyntheticViews out;
  out.records.resize(spec.n);
  char buf[32];
  for (std::size_t i = 0; i < spec.n; ++i) {
    std::snprintf(buf, sizeof buf, "s%04zu", i);
    auto& r = out.records[i];
    r.id = buf;
    r.text = "synthetic sample " + r.id;
    r.label_text = r.label_image = r.label_tweet = class_label(cls[i]);
    r.split = Split::train;
  }
  // Stratified split: per class, a rounded share of a shuffled member list goes to test.
  for (int c = 0; c < 2; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < spec.n; ++i)
      if (cls[i] == c) members.push_back(i);
    rng.shuffle(std::span<std::size_t>(members));
    const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(members.size())));
    for (std::size_t k = 0; k < n_test; ++k) out.records[members[k]].split = Split::test;
  }

  for (auto* m : {&out.text, &out.image})
    for (const auto& r : out.records) m->ids.push_back(r.id);
  sample_rows(rng, spec, means, cls, out.text);
  sample_rows(rng, spec, means, cls, out.image);
  return out;
}

AlignedDataset generate_synthetic(const SyntheticSpec& spec) {
  auto views = generate_synthetic_views(spec);
  return align(std::move(views.records), views.text);
}

}  // namespace evf
