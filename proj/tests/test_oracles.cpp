// Self-checks for the reference implementations in oracles.cpp. These must
// hold before the oracles are trusted to judge the library.

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"

using oracle::fit_line;
using oracle::gauss_hermite;
using oracle::gaussian_pair_expectation;
using oracle::jacobi_eig;
using tvsplit::DenseMatrix;

namespace {

// Householder reflector H = I - 2 u u^T / (u^T u) for a fixed u: exactly
// orthogonal, so H diag(lambda) H^T has a known spectrum.
DenseMatrix householder_conjugate(const std::vector<double>& u,
                                  const std::vector<double>& lambdas) {
  const std::size_t n = u.size();
  double uu = 0.0;
  for (double x : u) uu += x * x;
  DenseMatrix h(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      h(i, j) = (i == j ? 1.0 : 0.0) - 2.0 * u[i] * u[j] / uu;
  DenseMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += h(i, k) * lambdas[k] * h(j, k);
      a(i, j) = s;
    }
  return a;
}

}  // namespace

TEST(Oracles, JacobiRecoversConstructedSpectrum) {
  const std::vector<double> u = {1.0, 2.0, 3.0, 4.0};
  const std::vector<double> lambdas = {1.0, 2.0, 3.0, 4.0};
  DenseMatrix a = householder_conjugate(u, lambdas);
  oracle::SymEig e = jacobi_eig(a);
  ASSERT_EQ(e.values.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(e.values[i], lambdas[i], 1e-12);
  // Orthonormal eigenvectors satisfying A V = V diag(values).
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double dot = 0.0, av = 0.0;
      for (std::size_t k = 0; k < 4; ++k) {
        dot += e.vectors(k, i) * e.vectors(k, j);
        av += a(i, k) * e.vectors(k, j);
      }
      EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12);
      EXPECT_NEAR(av, e.values[j] * e.vectors(i, j), 1e-10);
    }
}

TEST(Oracles, EigSolveMatchesDirectInverse) {
  DenseMatrix a(2, 2);
  a(0, 0) = 4.0;
  a(0, 1) = a(1, 0) = 1.0;
  a(1, 1) = 3.0;
  const std::vector<double> b = {1.0, 2.0};
  const std::vector<double> x = oracle::eig_solve(a, b);
  // inverse of [[4,1],[1,3]] is [[3,-1],[-1,4]]/11
  EXPECT_NEAR(x[0], (3.0 * 1.0 - 1.0 * 2.0) / 11.0, 1e-12);
  EXPECT_NEAR(x[1], (-1.0 * 1.0 + 4.0 * 2.0) / 11.0, 1e-12);
}

TEST(Oracles, GaussHermiteMatchesNormalMoments) {
  oracle::Quadrature q = gauss_hermite(21);
  double m0 = 0.0, m2 = 0.0, m4 = 0.0, m6 = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    const double x = q.nodes[i], w = q.weights[i];
    m0 += w;
    m2 += w * x * x;
    m4 += w * x * x * x * x;
    m6 += w * x * x * x * x * x * x;
  }
  EXPECT_NEAR(m0, 1.0, 1e-12);
  EXPECT_NEAR(m2, 1.0, 1e-10);
  EXPECT_NEAR(m4, 3.0, 1e-9);
  EXPECT_NEAR(m6, 15.0, 1e-8);
}

TEST(Oracles, PairExpectationMatchesIsserlis) {
  oracle::Quadrature q = gauss_hermite(40);
  // g = identity: E[uv] = c.
  EXPECT_NEAR(gaussian_pair_expectation([](double z) { return z; }, 2.0, 3.0, 1.0, q),
              1.0, 1e-10);
  // g = square: E[u^2 v^2] = ab + 2c^2.
  EXPECT_NEAR(
      gaussian_pair_expectation([](double z) { return z * z; }, 1.5, 2.0, 0.7, q),
      1.5 * 2.0 + 2.0 * 0.7 * 0.7, 1e-9);
  // Perfectly correlated pair (v = u/2).
  EXPECT_NEAR(
      gaussian_pair_expectation([](double z) { return z * z; }, 4.0, 1.0, 2.0, q),
      12.0, 1e-9);
  // Degenerate first coordinate.
  EXPECT_NEAR(gaussian_pair_expectation([](double z) { return z + 1.0; }, 0.0, 1.0, 0.0, q),
              1.0, 1e-10);
}

TEST(Oracles, FiniteDifferencesMatchCalculus) {
  EXPECT_NEAR(oracle::fd_derivative([](double z) { return std::sin(z); }, 0.3, 1e-6),
              std::cos(0.3), 1e-8);
  EXPECT_NEAR(oracle::fd_second([](double z) { return std::sin(z); }, 0.3, 1e-4),
              -std::sin(0.3), 1e-5);

  // Quadratic form x^T M x with M = [[2,1],[1,3]]: gradient 2 M x.
  auto f = [](const std::vector<double>& x) {
    return 2.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + 3.0 * x[1] * x[1];
  };
  const std::vector<double> g = oracle::fd_gradient(f, {0.4, -0.2}, 1e-6);
  EXPECT_NEAR(g[0], 4.0 * 0.4 + 2.0 * (-0.2), 1e-7);
  EXPECT_NEAR(g[1], 2.0 * 0.4 + 6.0 * (-0.2), 1e-7);

  // Linear map recovered exactly by fd_jacobian.
  auto lin = [](const std::vector<double>& x) {
    return std::vector<double>{2.0 * x[0] - x[1], 0.5 * x[1] + x[2]};
  };
  DenseMatrix j = oracle::fd_jacobian(lin, {0.1, 0.2, 0.3}, 2, 1e-5);
  EXPECT_NEAR(j(0, 0), 2.0, 1e-9);
  EXPECT_NEAR(j(0, 1), -1.0, 1e-9);
  EXPECT_NEAR(j(0, 2), 0.0, 1e-9);
  EXPECT_NEAR(j(1, 1), 0.5, 1e-9);
  EXPECT_NEAR(j(1, 2), 1.0, 1e-9);
}

TEST(Oracles, NormalQuantileRoundtrip) {
  EXPECT_NEAR(oracle::normal_quantile(0.5), 0.0, 1e-9);
  EXPECT_NEAR(oracle::normal_quantile(0.975), 1.959963984540054, 1e-6);
  const double x = 1.234;
  EXPECT_NEAR(oracle::normal_quantile(oracle::normal_cdf(x)), x, 1e-9);
}

TEST(Oracles, ChiSquareCriticalValueSane) {
  const double c63 = oracle::chi_square_critical_999(63);
  EXPECT_GT(c63, 100.0);  // tabulated value is ~103.4
  EXPECT_LT(c63, 107.0);
  EXPECT_GT(oracle::chi_square_critical_999(64), c63);
}

TEST(Oracles, ChiSquareStatSeparatesGoodFromBad) {
  // Perfectly stratified standard normal sample: every equal-probability bin
  // receives exactly n/bins points, so the statistic vanishes.
  const std::size_t n = 12800;
  std::vector<double> samples(n);
  for (std::size_t i = 0; i < n; ++i)
    samples[i] = oracle::normal_quantile((static_cast<double>(i) + 0.5) / n);
  EXPECT_NEAR(oracle::chi_square_stat_normal(samples, 1.0, 64), 0.0, 1e-9);
  // The same data tested against a 25%-wrong scale fails decisively.
  EXPECT_GT(oracle::chi_square_stat_normal(samples, 1.25, 64),
            oracle::chi_square_critical_999(63));
}

TEST(Oracles, FitLineExactAndLeastSquares) {
  oracle::LineFit f = fit_line({0.0, 1.0, 2.0, 3.0}, {1.0, 3.0, 5.0, 7.0});
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);

  f = fit_line({0.0, 1.0, 2.0}, {0.0, 1.0, 1.0});
  EXPECT_NEAR(f.slope, 0.5, 1e-12);
  EXPECT_NEAR(f.intercept, 1.0 / 6.0, 1e-12);
  EXPECT_NEAR(f.r2, 0.75, 1e-12);
}

TEST(Oracles, ShallowJacobianExplicitHandCase) {
  DenseMatrix x(1, 2);
  x(0, 0) = 1.0;
  x(0, 1) = 2.0;
  DenseMatrix w(2, 2);
  w(0, 0) = 0.3;
  w(0, 1) = -0.1;
  w(1, 0) = 0.2;
  w(1, 1) = 0.5;
  const std::vector<double> v = {0.7, -0.4};
  DenseMatrix j = oracle::shallow_jacobian_explicit(
      x, w, v, [](double) { return 1.0; });  // identity activation
  ASSERT_EQ(j.rows, 1u);
  ASSERT_EQ(j.cols, 4u);
  EXPECT_NEAR(j(0, 0), 0.7 * 1.0, 1e-15);
  EXPECT_NEAR(j(0, 1), 0.7 * 2.0, 1e-15);
  EXPECT_NEAR(j(0, 2), -0.4 * 1.0, 1e-15);
  EXPECT_NEAR(j(0, 3), -0.4 * 2.0, 1e-15);
}
