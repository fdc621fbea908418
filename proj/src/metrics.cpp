#include "evfilter/metrics.hpp"

#include <array>
#include <stdexcept>

#include "evfilter/error.hpp"

namespace evf {

namespace {
struct Recalls {
  std::array<std::size_t, 2> hits{};
  std::array<std::size_t, 2> totals{};
};

Recalls count(std::span<const LabelValue> predicted, std::span<const LabelValue> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("metrics: prediction and label counts differ");
  Recalls r;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int c = class_index(truth[i]);
    if (c < 0) continue;
    ++r.totals[static_cast<std::size_t>(c)];
    if (predicted[i] == truth[i]) ++r.hits[static_cast<std::size_t>(c)];
  }
  return r;
}
}  // namespace

double balanced_accuracy(std::span<const LabelValue> predicted, std::span<const LabelValue> truth) {
  const auto r = count(predicted, truth);
  for (std::size_t c = 0; c < 2; ++c)
    if (r.totals[c] == 0)
      throw DataError("balanced accuracy undefined: no '" + std::string(to_string(class_label(static_cast<int>(c)))) +
                      "' samples");
  return 0.5 * (static_cast<double>(r.hits[0]) / static_cast<double>(r.totals[0]) +
                static_cast<double>(r.hits[1]) / static_cast<double>(r.totals[1]));
}

double present_class_recall(std::span<const LabelValue> predicted, std::span<const LabelValue> truth) {
  const auto r = count(predicted, truth);
  double sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    if (r.totals[c] == 0) continue;
    sum += static_cast<double>(r.hits[c]) / static_cast<double>(r.totals[c]);
    ++present;
  }
  return present == 0 ? 0.0 : sum / present;
}

double accuracy(std::span<const LabelValue> predicted, std::span<const LabelValue> truth) {
  const auto r = count(predicted, truth);
  const std::size_t total = r.totals[0] + r.totals[1];
  return total == 0 ? 0.0 : static_cast<double>(r.hits[0] + r.hits[1]) / static_cast<double>(total);
}

}  // namespace evf
