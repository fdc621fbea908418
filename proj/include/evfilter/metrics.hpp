#pragma once

#include <span>

#include "evfilter/dataset.hpp"

namespace evf {

/// Mean of the two per-class recalls over samples with a known label.
/// Throws DataError when either class is absent from `truth`.
double balanced_accuracy(std::span<const LabelValue> predicted, std::span<const LabelValue> truth);

/// Mean recall over the classes that do occur in `truth`; 0 when none do.
/// Used for best-epoch selection, where a tiny validation side may hold one class.
double present_class_recall(std::span<const LabelValue> predicted, std::span<const LabelValue> truth);

// Plain accuracy over samples with a known label.
double accuracy(std::span<const LabelValue> predicted, std::span<const LabelValue> truth);

}  // namespace evf
