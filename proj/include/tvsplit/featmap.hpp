#pragma once

// Superposed feature-map regression: phi_alpha = sum_i alpha_i phi_i with
// alpha in the unit l1 ball, ridge / minimum-norm fitting through the n x n
// gram, the excess-risk quadratic form, and probes that measure how fast the
// fitted solution moves when alpha or lambda move.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tvsplit/common.hpp"
#include "tvsplit/numcore.hpp"

namespace tvsplit {

using HyperPoint = std::vector<double>;

struct DegenerateDirection : Error {
  using Error::Error;
};

inline double l1_norm(const HyperPoint& a) {
  double s = 0.0;
  for (double v : a) s += std::abs(v);
  return s;
}
inline double l2_norm(const std::vector<double>& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Samples
// ---------------------------------------------------------------------------
struct SampleSet {
  DenseMatrix inputs;          // n x d
  std::vector<double> labels;  // n
  bool normalized = false;     // unit-norm rows, labels in [-1, 1]

  std::size_t n() const { return inputs.rows; }
  std::size_t d() const { return inputs.cols; }
};

inline SampleSet make_sample_set(DenseMatrix inputs, std::vector<double> labels,
                                 bool normalized) {
  if (inputs.rows != labels.size())
    throw DimensionMismatch("make_sample_set: inputs/labels row mismatch");
  if (normalized) {
    for (std::size_t i = 0; i < inputs.rows; ++i) {
      double r2 = 0.0;
      for (std::size_t j = 0; j < inputs.cols; ++j) r2 += inputs(i, j) * inputs(i, j);
      if (std::abs(r2 - 1.0) > 1e-9)
        throw InvalidArgument("make_sample_set: normalized flag requires unit-norm rows");
    }
    for (double y : labels)
      if (std::abs(y) > 1.0 + 1e-12)
        throw InvalidArgument("make_sample_set: normalized flag requires |y| <= 1");
  }
  SampleSet s;
  s.inputs = std::move(inputs);
  s.labels = std::move(labels);
  s.normalized = normalized;
  return s;
}

inline double input_radius(const SampleSet& data) {
  double r2 = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < data.d(); ++j) s += data.inputs(i, j) * data.inputs(i, j);
    r2 = std::max(r2, s);
  }
  return std::sqrt(r2);
}

// ---------------------------------------------------------------------------
// Feature families
// ---------------------------------------------------------------------------
struct FeatureFamily {
  std::string name;
  std::size_t h = 0;  // number of maps
  std::size_t p = 0;  // feature dimension
  std::size_t d = 0;  // input dimension
  double bound_B = 1.0;  // sup_x ||phi_i(x)||^2 <= B over the working domain
  // Evaluate map i on one input (d doubles), writing p doubles.
  std::function<void(std::size_t i, const double* x, double* out)> map;
  // Optional batched form: fill an n x p block with map i over all rows of X.
  std::function<void(std::size_t i, const DenseMatrix& x, DenseMatrix& out)> map_batch;
};

namespace detail {

inline void eval_map_block(const FeatureFamily& fam, std::size_t i, const DenseMatrix& x,
                           DenseMatrix& out) {
  if (fam.map_batch) {
    fam.map_batch(i, x, out);
    return;
  }
  for (std::size_t r = 0; r < x.rows; ++r)
    fam.map(i, &x.data[r * x.cols], &out.data[r * out.cols]);
}

}  // namespace detail

// Phi_alpha with row i = sum_j alpha_j phi_j(x_i).
inline DenseMatrix feature_matrix(const FeatureFamily& fam, const HyperPoint& alpha,
                                  const SampleSet& data) {
  if (alpha.size() != fam.h)
    throw DimensionMismatch("feature_matrix: alpha length does not match family");
  if (data.d() != fam.d)
    throw DimensionMismatch("feature_matrix: input dimension does not match family");
  if (l1_norm(alpha) > 1.0 + 1e-12)
    throw InvalidArgument("feature_matrix: alpha outside the unit l1 ball");
  const std::size_t n = data.n();
  DenseMatrix phi(n, fam.p);
  DenseMatrix block(n, fam.p);
  for (std::size_t j = 0; j < fam.h; ++j) {
    if (alpha[j] == 0.0) continue;
    detail::eval_map_block(fam, j, data.inputs, block);
    const double w = alpha[j];
    for (std::size_t t = 0; t < phi.data.size(); ++t) phi.data[t] += w * block.data[t];
  }
  return phi;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------
struct FitResult {
  std::vector<double> theta;  // length p
  HyperPoint alpha;
  double lambda = 0.0;
  double gram_min_eig_proxy = 0.0;  // smallest pivot of Phi Phi^T + lambda I
};

inline FitResult ridge_fit(const FeatureFamily& fam, const HyperPoint& alpha,
                           const SampleSet& data, double lambda) {
  const DenseMatrix phi = feature_matrix(fam, alpha, data);
  MinNormFit fit = min_norm_fit_detail(phi, data.labels, lambda);
  FitResult out;
  out.theta = std::move(fit.theta);
  out.alpha = alpha;
  out.lambda = lambda;
  out.gram_min_eig_proxy = fit.gram_min_pivot;
  return out;
}

inline double predict(const FeatureFamily& fam, const FitResult& fit,
                      const std::vector<double>& x) {
  if (x.size() != fam.d) throw DimensionMismatch("predict: input dimension mismatch");
  std::vector<double> feat(fam.p), acc(fam.p, 0.0);
  for (std::size_t j = 0; j < fam.h; ++j) {
    if (fit.alpha[j] == 0.0) continue;
    fam.map(j, x.data(), feat.data());
    for (std::size_t t = 0; t < fam.p; ++t) acc[t] += fit.alpha[j] * feat[t];
  }
  double s = 0.0;
  for (std::size_t t = 0; t < fam.p; ++t) s += acc[t] * fit.theta[t];
  return s;
}

inline std::vector<double> predict_all(const FeatureFamily& fam, const FitResult& fit,
                                       const SampleSet& data) {
  const DenseMatrix phi = feature_matrix(fam, fit.alpha, data);
  std::vector<double> out(data.n(), 0.0);
  Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())).noalias() =
      as_eigen(phi) *
      Eigen::Map<const Eigen::VectorXd>(fit.theta.data(),
                                        static_cast<Eigen::Index>(fit.theta.size()));
  return out;
}

// sqrt(B * y^T (Phi_a Phi_a^T)^{-1} y / n); at lambda = 0 this equals
// sqrt(B/n) * ||theta||.
inline double excess_risk_form(const FeatureFamily& fam, const HyperPoint& alpha,
                               const SampleSet& data) {
  const DenseMatrix phi = feature_matrix(fam, alpha, data);
  const std::size_t n = data.n();
  DenseMatrix gram(n, n);
  {
    auto p = as_eigen(phi);
    as_eigen(gram).noalias() = p * p.transpose();
  }
  detail::Ldlt f = detail::ldlt_factor(gram, 0.0);
  const double threshold = 1e-12 * detail::trace_of(gram) / static_cast<double>(n);
  if (!f.positive || f.min_pivot < threshold || !(f.min_pivot > 0.0))
    throw SingularGram("excess_risk_form: gram not invertible");
  std::vector<double> w = data.labels;
  f.solve_in_place(w);
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) quad += data.labels[i] * w[i];
  return std::sqrt(fam.bound_B * std::max(quad, 0.0) / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Sensitivity probes
// ---------------------------------------------------------------------------
struct LipschitzProbe {
  std::vector<double> ratios;  // ||theta(a + eps*da) - theta(a)|| / eps per eps
  double bound = 0.0;          // 5 R^2 sqrt(B^3 n^3 h) / lambda0^2 * ||y||
  double lambda0 = 0.0;        // lambda + measured sigma_min^2(Phi_a)
};

// The direction is normalized to unit Euclidean length, so ratios are per
// unit l2 distance in alpha and directly comparable to the bound.
inline LipschitzProbe solution_lipschitz_probe(const FeatureFamily& fam,
                                               const HyperPoint& alpha, HyperPoint da,
                                               const std::vector<double>& eps_list,
                                               const SampleSet& data, double lambda) {
  if (da.size() != alpha.size())
    throw DimensionMismatch("solution_lipschitz_probe: direction length mismatch");
  const double dn = l2_norm(da);
  if (dn == 0.0) throw DegenerateDirection("solution_lipschitz_probe: zero direction");
  for (double& v : da) v /= dn;

  const FitResult base = ridge_fit(fam, alpha, data, lambda);
  LipschitzProbe out;
  for (double eps : eps_list) {
    if (!(eps > 0.0)) throw InvalidArgument("solution_lipschitz_probe: eps must be > 0");
    HyperPoint shifted = alpha;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += eps * da[i];
    if (l1_norm(shifted) > 1.0 + 1e-12)
      throw InvalidArgument("solution_lipschitz_probe: perturbed point leaves the l1 ball");
    const FitResult moved = ridge_fit(fam, shifted, data, lambda);
    double diff2 = 0.0;
    for (std::size_t t = 0; t < base.theta.size(); ++t)
      diff2 += (moved.theta[t] - base.theta[t]) * (moved.theta[t] - base.theta[t]);
    out.ratios.push_back(std::sqrt(diff2) / eps);
  }

  const DenseMatrix phi = feature_matrix(fam, alpha, data);
  DenseMatrix gram(data.n(), data.n());
  {
    auto p = as_eigen(phi);
    as_eigen(gram).noalias() = p * p.transpose();
  }
  out.lambda0 = lambda + min_eig_psd(gram);
  const double r = input_radius(data);
  const double n = static_cast<double>(data.n());
  const double b = fam.bound_B;
  out.bound = 5.0 * r * r * std::sqrt(b * b * b * n * n * n * static_cast<double>(fam.h)) /
              (out.lambda0 * out.lambda0) * l2_norm(data.labels);
  return out;
}

struct RobustnessProbe {
  double measured = 0.0;  // ||theta(lambda) - theta(lambda + dlambda)||
  double bound = 0.0;     // 2 B ||y|| / lambda0^2 * |dlambda|
  double lambda0 = 0.0;
};

// Sensitivity of the solution to the ridge level at fixed features; lambda0
// uses the smaller of the two ridge levels, which is the conservative choice.
inline RobustnessProbe ridge_robustness_probe(const FeatureFamily& fam,
                                              const HyperPoint& alpha,
                                              const SampleSet& data, double lambda,
                                              double dlambda) {
  const FitResult a = ridge_fit(fam, alpha, data, lambda);
  const FitResult b = ridge_fit(fam, alpha, data, lambda + dlambda);
  RobustnessProbe out;
  double diff2 = 0.0;
  for (std::size_t t = 0; t < a.theta.size(); ++t)
    diff2 += (a.theta[t] - b.theta[t]) * (a.theta[t] - b.theta[t]);
  out.measured = std::sqrt(diff2);

  const DenseMatrix phi = feature_matrix(fam, alpha, data);
  DenseMatrix gram(data.n(), data.n());
  {
    auto p = as_eigen(phi);
    as_eigen(gram).noalias() = p * p.transpose();
  }
  out.lambda0 = std::min(lambda, lambda + dlambda) + min_eig_psd(gram);
  out.bound = 2.0 * fam.bound_B * l2_norm(data.labels) / (out.lambda0 * out.lambda0) *
              std::abs(dlambda);
  return out;
}

// ---------------------------------------------------------------------------
// Hyperparameter grids over the unit l1 ball (nonnegative orthant)
// ---------------------------------------------------------------------------
namespace detail {

inline void enumerate_grid(std::size_t h, std::size_t m, std::size_t min_total,
                           std::size_t coord, std::size_t used, HyperPoint& cur,
                           std::vector<HyperPoint>& out) {
  if (coord + 1 == h) {
    for (std::size_t j = 0; j + used <= m; ++j) {
      if (used + j < min_total) continue;
      cur[coord] = static_cast<double>(j) / static_cast<double>(m);
      out.push_back(cur);
    }
    return;
  }
  for (std::size_t j = 0; j + used <= m; ++j) {
    cur[coord] = static_cast<double>(j) / static_cast<double>(m);
    enumerate_grid(h, m, min_total, coord + 1, used + j, cur, out);
  }
}

}  // namespace detail

// All alpha with coordinates in {0, 1/m, ..., 1} and ||alpha||_1 <= 1, in
// lexicographic order (first coordinate major, ascending).
inline std::vector<HyperPoint> alpha_grid(std::size_t h, std::size_t m = 10) {
  if (h == 0 || m == 0) throw InvalidArgument("alpha_grid: h and m must be positive");
  std::vector<HyperPoint> out;
  HyperPoint cur(h, 0.0);
  detail::enumerate_grid(h, m, 0, 0, 0, cur, out);
  return out;
}

// The face ||alpha||_1 = 1 of the same grid.
inline std::vector<HyperPoint> alpha_grid_simplex(std::size_t h, std::size_t m = 10) {
  if (h == 0 || m == 0)
    throw InvalidArgument("alpha_grid_simplex: h and m must be positive");
  std::vector<HyperPoint> out;
  HyperPoint cur(h, 0.0);
  detail::enumerate_grid(h, m, m, 0, 0, cur, out);
  return out;
}

// ---------------------------------------------------------------------------
// Built-in synthetic families
// ---------------------------------------------------------------------------

// phi_i(x) = tanh(G_i x) / sqrt(p), G_i fixed Gaussian. Every coordinate is
// in (-1/sqrt(p), 1/sqrt(p)), so ||phi_i(x)||^2 < 1 uniformly.
inline FeatureFamily tanh_feature_family(std::size_t h, std::size_t p, std::size_t d,
                                         std::uint64_t seed) {
  if (h == 0 || p == 0 || d == 0)
    throw InvalidArgument("tanh_feature_family: h, p, d must be positive");
  auto mats = std::make_shared<std::vector<DenseMatrix>>();
  for (std::size_t i = 0; i < h; ++i)
    mats->push_back(gauss_matrix(RngStream(seed, 1000 + i), p, d, 1.0));
  FeatureFamily fam;
  fam.name = "tanh-gauss";
  fam.h = h;
  fam.p = p;
  fam.d = d;
  fam.bound_B = 1.0;
  const double scale = 1.0 / std::sqrt(static_cast<double>(p));
  fam.map = [mats, p, d, scale](std::size_t i, const double* x, double* out) {
    const DenseMatrix& g = (*mats)[i];
    for (std::size_t r = 0; r < p; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += g(r, c) * x[c];
      out[r] = std::tanh(s) * scale;
    }
  };
  fam.map_batch = [mats, scale](std::size_t i, const DenseMatrix& x, DenseMatrix& out) {
    as_eigen(out).noalias() = as_eigen(x) * as_eigen((*mats)[i]).transpose();
    for (double& v : out.data) v = std::tanh(v) * scale;
  };
  return fam;
}

// phi_i(x) = G_i x / sqrt(p): linear maps, so f(x) = phi_alpha(x)^T theta is a
// linear predictor and population risks have closed forms. bound_B is the
// measured sup over the radius-R input ball.
inline FeatureFamily linear_feature_family(std::size_t h, std::size_t p, std::size_t d,
                                           std::uint64_t seed, double radius = 1.0) {
  if (h == 0 || p == 0 || d == 0)
    throw InvalidArgument("linear_feature_family: h, p, d must be positive");
  auto mats = std::make_shared<std::vector<DenseMatrix>>();
  double bound = 0.0;
  for (std::size_t i = 0; i < h; ++i) {
    mats->push_back(gauss_matrix(RngStream(seed, 2000 + i), p, d, 1.0));
    const TopSingular ts = top_singular_left(mats->back());
    bound = std::max(bound, ts.sigma1 * ts.sigma1 * radius * radius /
                                static_cast<double>(p));
  }
  FeatureFamily fam;
  fam.name = "linear-gauss";
  fam.h = h;
  fam.p = p;
  fam.d = d;
  fam.bound_B = bound;
  const double scale = 1.0 / std::sqrt(static_cast<double>(p));
  fam.map = [mats, p, d, scale](std::size_t i, const double* x, double* out) {
    const DenseMatrix& g = (*mats)[i];
    for (std::size_t r = 0; r < p; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += g(r, c) * x[c];
      out[r] = s * scale;
    }
  };
  fam.map_batch = [mats, scale](std::size_t i, const DenseMatrix& x, DenseMatrix& out) {
    as_eigen(out).noalias() = as_eigen(x) * as_eigen((*mats)[i]).transpose() * scale;
  };
  return fam;
}

}  // namespace tvsplit
