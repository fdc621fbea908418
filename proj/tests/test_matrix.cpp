#include <doctest.h>

#include <cmath>

#include "evfilter/matrix.hpp"
#include "evfilter/rng.hpp"

using namespace evf;

namespace {

template <typename T>
Matrix<T> random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix<T> m(r, c);
  for (auto& v : m.values()) v = static_cast<T>(rng.normal());
  return m;
}

template <typename T>
Matrix<double> naive(const Matrix<T>& a, const Matrix<T>& b, bool ta, bool tb) {
  const std::size_t n = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t m = tb ? b.rows() : b.cols();
  Matrix<double> c(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < k; ++l) s += double(ta ? a(l, i) : a(i, l)) * double(tb ? b(j, l) : b(l, j));
      c(i, j) = s;
    }
  return c;
}

template <typename T>
void check_close(const Matrix<T>& got, const Matrix<double>& want, double tol) {
  REQUIRE(got.rows() == want.rows());
  REQUIRE(got.cols() == want.cols());
  for (std::size_t i = 0; i < want.size(); ++i)
    CHECK(std::abs(double(got.values()[i]) - want.values()[i]) <= tol * (1.0 + std::abs(want.values()[i])));
}

}  // namespace

TEST_CASE_TEMPLATE("products match the naive triple loop", T, float, double) {
  Rng rng(3);
  const double tol = std::is_same_v<T, float> ? 1e-4 : 1e-12;
  // shapes straddle the register block, the vector width and the narrow path
  const std::size_t dims[] = {1, 2, 5, 6, 7, 8, 9, 13, 16, 31, 33, 64, 70};
  for (std::size_t r : dims)
    for (std::size_t k : {std::size_t{1}, std::size_t{3}, std::size_t{8}, std::size_t{17}, std::size_t{40}})
      for (std::size_t c : dims) {
        const auto a = random_matrix<T>(r, k, rng);
        const auto b = random_matrix<T>(k, c, rng);
        check_close(matmul(a, b), naive(a, b, false, false), tol);
        const auto at = random_matrix<T>(k, r, rng);
        check_close(matmul_at_b(at, b), naive(at, b, true, false), tol);
        const auto bt = random_matrix<T>(c, k, rng);
        check_close(matmul_a_bt(a, bt), naive(a, bt, false, true), tol);
      }
}

TEST_CASE("matmul_add accumulates") {
  Rng rng(9);
  const auto a = random_matrix<double>(7, 5, rng);
  const auto b = random_matrix<double>(5, 11, rng);
  auto c = random_matrix<double>(7, 11, rng);
  const auto c0 = c;
  matmul_add(c, a, b);
  const auto ab = naive(a, b, false, false);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c.values()[i] == doctest::Approx(c0.values()[i] + ab.values()[i]));
}

TEST_CASE("helpers") {
  Matrix<double> m(2, 3);
  for (std::size_t i = 0; i < 6; ++i) m.values()[i] = double(i);
  const auto t = transpose(m);
  CHECK(t.rows() == 3);
  CHECK(t(2, 1) == 5.0);

  Matrix<double> bias(1, 3);
  bias.values() = {10, 20, 30};
  add_row_bias(m, bias);
  CHECK(m.values() == std::vector<double>{10, 21, 32, 13, 24, 35});

  const std::vector<std::size_t> rows{1, 1, 0};
  const auto g = gather_rows(m, rows);
  CHECK(g.values() == std::vector<double>{13, 24, 35, 13, 24, 35, 10, 21, 32});

  Matrix<double> bad(4, 4);
  CHECK_THROWS_AS(matmul(m, bad), std::invalid_argument);
}
