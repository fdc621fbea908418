#include "evfilter/propagation.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "evfilter/error.hpp"

namespace evf {

Matrix<double> make_label_matrix(std::size_t n, std::span<const std::size_t> nodes, std::span<const LabelValue> labels) {
  if (nodes.size() != labels.size()) throw std::invalid_argument("make_label_matrix: length mismatch");
  Matrix<double> y(n, 2);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const int c = class_index(labels[i]);
    if (c < 0) continue;
    if (nodes[i] >= n) throw std::invalid_argument("make_label_matrix: node out of range");
    y(nodes[i], static_cast<std::size_t>(c)) = 1.0;
  }
  return y;
}

Matrix<double> lgc_propagate(const SparseOperator& s, const Matrix<double>& y, const LgcConfig& config) {
  if (!(config.alpha >= 0.0 && config.alpha < 1.0)) throw UsageError("lgc: alpha must lie in [0, 1)");
  if (y.rows() != s.size()) throw std::invalid_argument("lgc: operator and label matrix sizes differ");
  const double alpha = config.alpha;
  const std::size_t n = s.size();

  if (config.mode == LgcMode::closed_form) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto cols = s.row_cols(i);
      const auto vals = s.row_values(i);
      for (std::size_t e = 0; e < cols.size(); ++e)
        a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cols[e])) -= alpha * vals[e];
    }
    Eigen::MatrixXd rhs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(y.cols()));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < y.cols(); ++c)
        rhs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = (1.0 - alpha) * y(i, c);
    const Eigen::MatrixXd f = a.partialPivLu().solve(rhs);
    Matrix<double> out(n, y.cols());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < y.cols(); ++c) out(i, c) = f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    return out;
  }

  Matrix<double> f = y;
  double bound = 0.0;
  for (std::size_t iter = 0; iter < config.max_iter; ++iter) {
    Matrix<double> next = s.apply(f);
    double delta_sq = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
      const double v = alpha * next.values()[i] + (1.0 - alpha) * y.values()[i];
      const double d = v - f.values()[i];
      delta_sq += d * d;
      next.values()[i] = v;
    }
    f = std::move(next);
    bound = alpha == 0.0 ? 0.0 : alpha / (1.0 - alpha) * std::sqrt(delta_sq);
    if (bound < config.tol) return f;
  }
  throw ConvergenceError("lgc did not converge in " + std::to_string(config.max_iter) + " iterations", bound);
}

std::vector<LabelValue> lgc_predict(const Matrix<double>& f) {
  std::vector<LabelValue> out(f.rows());
  for (std::size_t i = 0; i < f.rows(); ++i)
    out[i] = f(i, 0) > f(i, 1) ? LabelValue::relevant : LabelValue::irrelevant;
  return out;
}

}  // namespace evf
