#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace evf {

/// Dense row-major matrix.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw std::invalid_argument("matrix data size does not match shape");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    std::transform(data_.begin(), data_.end(), out.values().begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

namespace detail {
inline void check_shape(bool ok, const char* op) {
  if (!ok) throw std::invalid_argument(std::string("dimension mismatch in ") + op);
}
}  // namespace detail

template <typename T>
Matrix<T> transpose(const Matrix<T>& m) {
  Matrix<T> out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

namespace detail {
// Products whose short side is at most this wide are rearranged so the long
// side runs in the innermost, contiguous loop.
inline constexpr std::size_t kNarrow = 8;

// Fixed 16-way interleaved sum; vectorizes without reassociating.
template <typename T>
T dot(const T* __restrict a, const T* __restrict b, std::size_t n) {
  constexpr std::size_t L = 16;
  T part[L] = {};
  std::size_t k = 0;
  for (; k + L <= n; k += L)
    for (std::size_t l = 0; l < L; ++l) part[l] += a[k + l] * b[k + l];
  for (; k < n; ++k) part[k % L] += a[k] * b[k];
  T acc{};
  for (std::size_t l = 0; l < L; ++l) acc += part[l];
  return acc;
}

// c[0..n) += s * b[0..n)
template <typename T>
void axpy(T* __restrict c, T s, const T* __restrict b, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) c[j] += s * b[j];
}

/// c[i*ldc + j] += sum_k a[i*as_i + k*as_k] * b[k*ldb + j] for i < m, j < n.
///
/// Column panels of b are walked outermost so a panel stays in L1 while every
/// row block of a passes over it; each MR x NR tile of c lives in vector
/// registers for the whole k loop. Every element is summed in ascending k.
template <typename T>
void gemm_add(T* c, std::size_t ldc, const T* a, std::size_t as_i, std::size_t as_k, const T* b, std::size_t ldb,
              std::size_t m, std::size_t n, std::size_t depth) {
  constexpr std::size_t VB = 32;  // bytes per vector register
  typedef T vec __attribute__((vector_size(VB)));
  constexpr std::size_t W = VB / sizeof(T);
  constexpr std::size_t MR = 6;
  constexpr std::size_t NV = 2;
  constexpr std::size_t NR = W * NV;
  for (std::size_t j0 = 0; j0 < n; j0 += NR) {
    const std::size_t nr = std::min(NR, n - j0);
    for (std::size_t i0 = 0; i0 < m; i0 += MR) {
      const std::size_t mr = std::min(MR, m - i0);
      if (mr == MR && nr == NR) {
        vec acc[MR][NV];
        for (std::size_t r = 0; r < MR; ++r)
          for (std::size_t v = 0; v < NV; ++v) std::memcpy(&acc[r][v], c + (i0 + r) * ldc + j0 + v * W, VB);
        for (std::size_t k = 0; k < depth; ++k) {
          vec bv[NV];
          for (std::size_t v = 0; v < NV; ++v) std::memcpy(&bv[v], b + k * ldb + j0 + v * W, VB);
          for (std::size_t r = 0; r < MR; ++r) {
            const T ar = a[(i0 + r) * as_i + k * as_k];
            for (std::size_t v = 0; v < NV; ++v) acc[r][v] += ar * bv[v];
          }
        }
        for (std::size_t r = 0; r < MR; ++r)
          for (std::size_t v = 0; v < NV; ++v) std::memcpy(c + (i0 + r) * ldc + j0 + v * W, &acc[r][v], VB);
      } else {
        for (std::size_t r = 0; r < mr; ++r)
          for (std::size_t k = 0; k < depth; ++k)
            axpy(c + (i0 + r) * ldc + j0, a[(i0 + r) * as_i + k * as_k], b + k * ldb + j0, nr);
      }
    }
  }
}
}  // namespace detail

/// C += A * B.
template <typename T>
void matmul_add(Matrix<T>& c, const Matrix<T>& a, const Matrix<T>& b) {
  detail::check_shape(a.cols() == b.rows() && c.rows() == a.rows() && c.cols() == b.cols(), "matmul");
  const std::size_t n = b.cols();
  if (n <= detail::kNarrow) {
    const Matrix<T> bt = transpose(b);
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < n; ++j) c(i, j) += detail::dot(a.data() + i * a.cols(), bt.data() + j * bt.cols(), a.cols());
    return;
  }
  detail::gemm_add(c.data(), n, a.data(), a.cols(), 1, b.data(), n, a.rows(), n, a.cols());
}

/// C = A * B.
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  detail::check_shape(a.cols() == b.rows(), "matmul");
  Matrix<T> c(a.rows(), b.cols());
  matmul_add(c, a, b);
  return c;
}

/// C = A^T * B.
template <typename T>
Matrix<T> matmul_at_b(const Matrix<T>& a, const Matrix<T>& b) {
  detail::check_shape(a.rows() == b.rows(), "matmul_at_b");
  const std::size_t n = b.cols();
  if (n <= detail::kNarrow) {
    // Row j of C^T is sum_k b(k, j) * a.row(k).
    Matrix<T> ct(n, a.cols());
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < a.rows(); ++k) detail::axpy(ct.data() + j * a.cols(), b(k, j), a.data() + k * a.cols(), a.cols());
    return transpose(ct);
  }
  Matrix<T> c(a.cols(), n);
  detail::gemm_add(c.data(), n, a.data(), 1, a.cols(), b.data(), n, a.cols(), n, a.rows());
  return c;
}

/// C = A * B^T.
template <typename T>
Matrix<T> matmul_a_bt(const Matrix<T>& a, const Matrix<T>& b) {
  detail::check_shape(a.cols() == b.cols(), "matmul_a_bt");
  if (a.cols() <= detail::kNarrow) return matmul(a, transpose(b));
  Matrix<T> c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = detail::dot(a.data() + i * a.cols(), b.data() + j * b.cols(), a.cols());
  return c;
}

// Adds a 1 x cols bias row to every row of m.
template <typename T>
void add_row_bias(Matrix<T>& m, const Matrix<T>& bias) {
  detail::check_shape(bias.rows() == 1 && bias.cols() == m.cols(), "add_row_bias");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) r[j] += bias(0, j);
  }
}

// Gathers the listed rows into a new matrix.
template <typename T>
Matrix<T> gather_rows(const Matrix<T>& m, std::span<const std::size_t> rows) {
  Matrix<T> out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace evf
