#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "evfilter/dataset.hpp"
#include "evfilter/graph.hpp"
#include "evfilter/matrix.hpp"

namespace evf {

enum class LgcMode { iterative, closed_form };

struct LgcConfig {
  double alpha = 0.99;
  double tol = 1e-6;
  std::size_t max_iter = 10000;
  LgcMode mode = LgcMode::iterative;
};

/// n x 2 one-hot seed matrix (column 0 = relevant); unlabeled rows are zero.
Matrix<double> make_label_matrix(std::size_t n, std::span<const std::size_t> nodes, std::span<const LabelValue> labels);

/// Local and global consistency diffusion.
///
/// Iterative mode runs F <- alpha*S*F + (1-alpha)*Y from F = Y and stops once
/// alpha/(1-alpha) * ||F_t+1 - F_t||_F < tol, which bounds the distance to the
/// fixed point by tol for any S with spectral norm at most 1. Closed form
/// solves (I - alpha*S) F = (1-alpha) Y directly.
Matrix<double> lgc_propagate(const SparseOperator& s, const Matrix<double>& y, const LgcConfig& config = {});

/// Row argmax; ties and all-zero rows predict irrelevant.
std::vector<LabelValue> lgc_predict(const Matrix<double>& f);

}  // namespace evf
