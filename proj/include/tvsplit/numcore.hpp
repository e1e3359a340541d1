#pragma once

// Dense linear algebra and seeded randomness primitives.
//
// The factorization, power-iteration, and sampling routines are implemented
// here rather than delegated because their failure semantics (pivot
// thresholds, jitter retry, sign conventions, counter-based re-streaming)
// are part of this library's contract. Plain matrix products go through
// Eigen maps over the row-major storage.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "tvsplit/common.hpp"

namespace tvsplit {

struct NotPositiveDefinite : Error {
  using Error::Error;
};
struct SingularGram : Error {
  using Error::Error;
};
struct ZeroMatrix : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// DenseMatrix: row-major 64-bit floats. Values are immutable by convention
// once an operation returns them; all entries are expected finite.
// ---------------------------------------------------------------------------
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, rows*cols entries

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

using EigenRowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMat>;
using MutMap = Eigen::Map<EigenRowMat>;

inline ConstMap as_eigen(const DenseMatrix& m) {
  return ConstMap(m.data.data(), static_cast<Eigen::Index>(m.rows),
                  static_cast<Eigen::Index>(m.cols));
}
inline MutMap as_eigen(DenseMatrix& m) {
  return MutMap(m.data.data(), static_cast<Eigen::Index>(m.rows),
                static_cast<Eigen::Index>(m.cols));
}

inline Eigen::Map<const Eigen::VectorXd> as_eigen_vec(const std::vector<double>& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}
inline Eigen::Map<Eigen::VectorXd> as_eigen_vec(std::vector<double>& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

// ---------------------------------------------------------------------------
// RngStream: counter-based PRNG. The i-th output word is a pure function of
// (master_seed, stream_id, i), which is what makes two-pass re-streaming of
// per-sample data (lowrank) bitwise reproducible. The word function chains
// add-then-avalanche steps of the SplitMix64 finalizer.
// ---------------------------------------------------------------------------
namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace detail

struct RngStream {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;
  // Position within the stream plus the cached second output of the polar
  // Gaussian pair. Copying a stream copies its position.
  std::uint64_t counter = 0;
  double gauss_spare = 0.0;
  bool has_gauss_spare = false;

  RngStream() = default;
  RngStream(std::uint64_t seed, std::uint64_t id) : master_seed(seed), stream_id(id) {}

  // A fresh, statistically independent stream keyed by two tags. Used for
  // per-sample and per-purpose substreams.
  RngStream derived(std::uint64_t tag_a, std::uint64_t tag_b = 0) const {
    const std::uint64_t id =
        detail::mix64(stream_id + detail::mix64(tag_a + detail::mix64(tag_b)));
    return RngStream(master_seed, id);
  }

  std::uint64_t next_u64() {
    const std::uint64_t key = detail::mix64(stream_id + detail::mix64(master_seed));
    return detail::mix64(counter++ + key);
  }

  // Uniform on the open interval (0,1): 53-bit mantissa, half-step offset.
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via the polar (Marsaglia) method; the second member of
  // each accepted pair is cached.
  double next_gauss() {
    if (has_gauss_spare) {
      has_gauss_spare = false;
      return gauss_spare;
    }
    double u, v, s;
    do {
      u = 2.0 * next_unit() - 1.0;
      v = 2.0 * next_unit() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    gauss_spare = v * f;
    has_gauss_spare = true;
    return u * f;
  }
};

// i.i.d. N(0, std^2) matrix. The stream is taken by value: calling twice with
// the same stream descriptor yields bitwise-identical matrices.
inline DenseMatrix gauss_matrix(RngStream stream, std::size_t rows, std::size_t cols,
                                double std_dev) {
  if (!(std_dev > 0.0))
    throw InvalidArgument("gauss_matrix: std must be positive");
  DenseMatrix m(rows, cols);
  for (double& x : m.data) x = std_dev * stream.next_gauss();
  return m;
}

// ---------------------------------------------------------------------------
// Symmetric-triangular (LDL^T) factorization with pivot inspection.
// ---------------------------------------------------------------------------
namespace detail {

struct Ldlt {
  std::size_t n = 0;
  std::vector<double> L;  // unit lower triangle, row-major n*n (diag implied 1)
  std::vector<double> D;  // pivots
  double min_pivot = std::numeric_limits<double>::infinity();
  bool positive = true;  // all pivots > 0

  void solve_in_place(std::vector<double>& x) const {
    // L z = x
    for (std::size_t i = 0; i < n; ++i) {
      double s = x[i];
      for (std::size_t j = 0; j < i; ++j) s -= L[i * n + j] * x[j];
      x[i] = s;
    }
    // D w = z
    for (std::size_t i = 0; i < n; ++i) x[i] /= D[i];
    // L^T y = w
    for (std::size_t i = n; i-- > 0;) {
      double s = x[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= L[j * n + i] * x[j];
      x[i] = s;
    }
  }
};

// Factors A + jitter*I. Stops early (positive=false) when a pivot is <= 0;
// min_pivot always reflects the pivots seen so far.
inline Ldlt ldlt_factor(const DenseMatrix& a, double jitter) {
  const std::size_t n = a.rows;
  Ldlt f;
  f.n = n;
  f.L.assign(n * n, 0.0);
  f.D.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j) + jitter;
    for (std::size_t k = 0; k < j; ++k) d -= f.L[j * n + k] * f.L[j * n + k] * f.D[k];
    f.D[j] = d;
    f.min_pivot = std::min(f.min_pivot, d);
    if (!(d > 0.0)) {
      f.positive = false;
      return f;
    }
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j) + (i == j ? jitter : 0.0);
      for (std::size_t k = 0; k < j; ++k) s -= f.L[i * n + k] * f.L[j * n + k] * f.D[k];
      f.L[i * n + j] = s / d;
    }
    f.L[j * n + j] = 1.0;
  }
  return f;
}

inline double trace_of(const DenseMatrix& a) {
  double t = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) t += a(i, i);
  return t;
}

}  // namespace detail

// Solves (A + jitter*I) x = b for symmetric positive definite A. If a pivot
// fails, one automatic retry adds 1e-10*trace(A)/n before giving up.
inline std::vector<double> solve_psd(const DenseMatrix& a, const std::vector<double>& b,
                                     double jitter = 0.0) {
  const std::size_t n = a.rows;
  if (n == 0 || a.cols != n) throw DimensionMismatch("solve_psd: A must be square");
  if (b.size() != n) throw DimensionMismatch("solve_psd: b length mismatch");
  if (!(jitter >= 0.0)) throw InvalidArgument("solve_psd: jitter must be >= 0");
  if (!a.all_finite()) throw InvalidArgument("solve_psd: non-finite entries in A");
  double amax = 0.0;
  for (double v : a.data) amax = std::max(amax, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-10 * std::max(amax, 1.0))
        throw InvalidArgument("solve_psd: A is not symmetric within tolerance");

  detail::Ldlt f = detail::ldlt_factor(a, jitter);
  if (!f.positive) {
    const double retry = jitter + 1e-10 * detail::trace_of(a) / static_cast<double>(n);
    f = detail::ldlt_factor(a, retry);
    if (!f.positive)
      throw NotPositiveDefinite("solve_psd: pivot <= 0 after jitter retry");
  }
  std::vector<double> x = b;
  f.solve_in_place(x);
  return x;
}

// ---------------------------------------------------------------------------
// Minimum-norm / ridge solution through the n x n gram.
// ---------------------------------------------------------------------------
struct MinNormFit {
  std::vector<double> theta;  // length p
  double gram_min_pivot = 0.0;
  double gram_trace = 0.0;
};

// theta = Phi^T (Phi Phi^T + lambda I)^{-1} y, for n <= p. At lambda = 0 this
// is the minimum-Euclidean-norm interpolator.
inline MinNormFit min_norm_fit_detail(const DenseMatrix& phi, const std::vector<double>& y,
                                      double lambda) {
  const std::size_t n = phi.rows, p = phi.cols;
  if (n == 0 || p == 0) throw DimensionMismatch("min_norm_fit: empty matrix");
  if (n > p) throw DimensionMismatch("min_norm_fit: requires n <= p");
  if (y.size() != n) throw DimensionMismatch("min_norm_fit: y length mismatch");
  if (!(lambda >= 0.0)) throw InvalidArgument("min_norm_fit: lambda must be >= 0");

  DenseMatrix gram(n, n);
  {
    auto P = as_eigen(phi);
    as_eigen(gram).noalias() = P * P.transpose();
    for (std::size_t i = 0; i < n; ++i) gram(i, i) += lambda;
  }
  const double trace = detail::trace_of(gram);
  detail::Ldlt f = detail::ldlt_factor(gram, 0.0);
  const double threshold = 1e-12 * trace / static_cast<double>(n);
  if (!f.positive || f.min_pivot < threshold || !(f.min_pivot > 0.0))
    throw SingularGram("min_norm_fit: gram pivot below 1e-12*trace/n");

  std::vector<double> w = y;
  f.solve_in_place(w);
  MinNormFit out;
  out.theta.assign(p, 0.0);
  Eigen::Map<Eigen::VectorXd>(out.theta.data(), static_cast<Eigen::Index>(p)).noalias() =
      as_eigen(phi).transpose() *
      Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(n));
  out.gram_min_pivot = f.min_pivot;
  out.gram_trace = trace;
  return out;
}

inline std::vector<double> min_norm_fit(const DenseMatrix& phi, const std::vector<double>& y,
                                        double lambda) {
  return min_norm_fit_detail(phi, y, lambda).theta;
}

// ---------------------------------------------------------------------------
// Power iteration for the top left singular pair of M (via M M^T).
// ---------------------------------------------------------------------------
struct TopSingular {
  std::vector<double> u;  // unit vector, length rows(M)
  double sigma1 = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

inline TopSingular top_singular_left(const DenseMatrix& m, std::size_t max_iter = 1000,
                                     double tol = 1e-10) {
  const std::size_t h = m.rows;
  if (h == 0 || m.cols == 0) throw DimensionMismatch("top_singular_left: empty matrix");
  double fro2 = 0.0;
  for (double v : m.data) fro2 += v * v;
  if (fro2 == 0.0) throw ZeroMatrix("top_singular_left: all-zero matrix");

  Eigen::MatrixXd S(h, h);
  {
    auto M = as_eigen(m);
    S.noalias() = M * M.transpose();
  }
  // Deterministic start: normalized all-ones. It has overlap 1/sqrt(h) with
  // every coordinate direction; if it happens to sit in the null space the
  // loop restarts from the dominant diagonal coordinate.
  Eigen::VectorXd u = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(h),
                                                1.0 / std::sqrt(static_cast<double>(h)));
  TopSingular out;
  double q = 0.0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    out.iterations = it;
    Eigen::VectorXd w = S * u;
    q = u.dot(w);
    const double resid = (w - q * u).norm();
    if (q > 0.0 && resid <= tol * q) {
      out.converged = true;
      break;
    }
    const double nw = w.norm();
    if (nw <= std::numeric_limits<double>::min()) {
      Eigen::Index best = 0;
      S.diagonal().maxCoeff(&best);
      u.setZero();
      u[best] = 1.0;
      continue;
    }
    u = w / nw;
  }
  out.sigma1 = std::sqrt(std::max(q, 0.0));
  out.u.assign(u.data(), u.data() + h);
  // Sign convention: the first component of largest magnitude is positive.
  std::size_t arg = 0;
  for (std::size_t i = 1; i < h; ++i)
    if (std::abs(out.u[i]) > std::abs(out.u[arg])) arg = i;
  if (out.u[arg] < 0.0)
    for (double& v : out.u) v = -v;
  return out;
}

// Smallest eigenvalue of a symmetric PSD matrix by inverse power iteration
// (each step is one LDL^T solve). This is a measurement helper for the
// lambda_0 proxies, not a general eigensolver. Returns 0 when the matrix is
// numerically singular.
inline double min_eig_psd(const DenseMatrix& g, std::size_t max_iter = 300,
                          double tol = 1e-12) {
  const std::size_t n = g.rows;
  if (n == 0 || g.cols != n) throw DimensionMismatch("min_eig_psd: square matrix required");
  detail::Ldlt f = detail::ldlt_factor(g, 0.0);
  if (!f.positive) {
    const double jitter = 1e-14 * std::max(detail::trace_of(g), 0.0) / static_cast<double>(n);
    f = detail::ldlt_factor(g, jitter);
    if (!f.positive) return 0.0;
  }
  std::vector<double> u(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double lambda = 0.0, prev = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < max_iter; ++it) {
    std::vector<double> w = u;
    f.solve_in_place(w);
    double nw = 0.0;
    for (double v : w) nw += v * v;
    nw = std::sqrt(nw);
    if (!(nw > 0.0) || !std::isfinite(nw)) return 0.0;
    for (std::size_t i = 0; i < n; ++i) u[i] = w[i] / nw;
    // Rayleigh quotient on G itself.
    Eigen::Map<const Eigen::VectorXd> uv(u.data(), static_cast<Eigen::Index>(n));
    lambda = uv.dot(as_eigen(g) * uv);
    if (std::abs(lambda - prev) <= tol * std::max(std::abs(lambda), 1e-300)) break;
    prev = lambda;
  }
  return std::max(lambda, 0.0);
}

}  // namespace tvsplit
