#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "evfilter/dataset.hpp"

namespace evf {

/// Two Gaussian blobs on the unit sphere.
///
/// Class means sit at b +- (separation * noise / 2) * u for orthogonal unit
/// vectors b and u, so the means are `separation` noise standard deviations
/// apart. Every coordinate gets independent N(0, noise^2) noise before the row
/// is L2-normalized.
struct SyntheticSpec {
  std::size_t n = 1000;
  std::size_t dim = 32;
  double separation = 6.0;  // in units of `noise`
  double noise = 0.1;
  double relevant_fraction = 0.26;
  double test_fraction = 0.38;
  std::uint64_t seed = 0;

  void validate() const;  // throws UsageError
};

/// Single-view dataset; ids "s0000".., every record carries its tweet, text and
/// image label, and a per-class stratified train/test split.
AlignedDataset generate_synthetic(const SyntheticSpec& spec);

struct SyntheticViews {
  std::vector<SampleRecord> records;
  EmbeddingMatrix text;
  EmbeddingMatrix image;  // same class means, independent noise
};

SyntheticViews generate_synthetic_views(const SyntheticSpec& spec);

}  // namespace evf
