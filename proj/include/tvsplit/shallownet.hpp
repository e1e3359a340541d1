#pragma once

// One-hidden-layer networks f(x) = v^T sigma_alpha(W x) with the output layer
// v frozen to a balanced +-sqrt(c0/k) sign pattern. Provides full-batch
// gradient descent on the squared loss, the closed-form empirical tangent
// gram, a Monte-Carlo estimate of its population counterpart, and ridge
// fitting of the model linearized at initialization.

#include <cmath>
#include <cstdint>
#include <iostream>
#include <vector>

#include "tvsplit/activations.hpp"
#include "tvsplit/common.hpp"
#include "tvsplit/featmap.hpp"
#include "tvsplit/numcore.hpp"

namespace tvsplit {

struct OddWidth : Error {
  using Error::Error;
};
struct DivergedLoss : Error {
  using Error::Error;
};

struct ShallowConfig {
  std::size_t k = 0;  // width, even
  std::size_t d = 0;  // input dimension
  double c0 = 1.0;    // squared norm of v
  double eta = 0.0;   // step size
  std::size_t T = 0;  // iteration count
  RngStream seed;
};

struct ShallowState {
  ShallowConfig cfg;
  ActivationFamily fam;
  HyperPoint alpha;
  DenseMatrix w0;  // k x d, never mutated after init
  DenseMatrix w;   // k x d, current
  std::vector<double> v;  // fixed output layer
  std::vector<double> loss_trace;  // ||f(W_tau) - y||^2, entry 0 at W before training
  bool loss_monotone = true;
};

inline ShallowState shallow_init(const ShallowConfig& cfg, const ActivationFamily& fam,
                                 HyperPoint alpha) {
  if (cfg.k == 0 || cfg.k % 2 != 0) throw OddWidth("shallow_init: width must be even");
  if (cfg.d == 0) throw InvalidArgument("shallow_init: input dimension must be positive");
  if (!(cfg.c0 > 0.0)) throw InvalidArgument("shallow_init: c0 must be positive");
  if (alpha.size() != fam.size())
    throw DimensionMismatch("shallow_init: alpha length does not match family");
  ShallowState st;
  st.cfg = cfg;
  st.fam = fam;
  st.alpha = std::move(alpha);
  st.w0 = gauss_matrix(cfg.seed, cfg.k, cfg.d, 1.0);
  st.w = st.w0;
  const double mag = std::sqrt(cfg.c0 / static_cast<double>(cfg.k));
  st.v.assign(cfg.k, mag);
  for (std::size_t i = cfg.k / 2; i < cfg.k; ++i) st.v[i] = -mag;
  return st;
}

namespace detail {

// out[i,j] = mix(z[i,j]); out is resized to match z.
inline void apply_mix(const MixFn& fn, const DenseMatrix& z, DenseMatrix& out) {
  out.rows = z.rows;
  out.cols = z.cols;
  out.data.resize(z.data.size());
  for (std::size_t t = 0; t < z.data.size(); ++t) out.data[t] = fn(z.data[t]);
}

}  // namespace detail

inline double shallow_forward(const ShallowState& st, const std::vector<double>& x) {
  if (x.size() != st.cfg.d) throw DimensionMismatch("shallow_forward: input dimension");
  const MixFn act = compile_mix(st.fam, st.alpha, 0);
  double out = 0.0;
  for (std::size_t l = 0; l < st.cfg.k; ++l) {
    double z = 0.0;
    for (std::size_t c = 0; c < st.cfg.d; ++c) z += st.w(l, c) * x[c];
    out += st.v[l] * act(z);
  }
  return out;
}

inline std::vector<double> shallow_forward_all(const ShallowState& st,
                                               const DenseMatrix& x) {
  if (x.cols != st.cfg.d) throw DimensionMismatch("shallow_forward_all: input dimension");
  DenseMatrix z(x.rows, st.cfg.k);
  as_eigen(z).noalias() = as_eigen(x) * as_eigen(st.w).transpose();
  DenseMatrix a;
  detail::apply_mix(compile_mix(st.fam, st.alpha, 0), z, a);
  std::vector<double> out(x.rows);
  Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(x.rows)).noalias() =
      as_eigen(a) *
      Eigen::Map<const Eigen::VectorXd>(st.v.data(), static_cast<Eigen::Index>(st.cfg.k));
  return out;
}

// Operator norm of the input matrix, for the step-size prescription.
inline double input_operator_norm(const DenseMatrix& x) {
  return top_singular_left(x).sigma1;
}

inline double default_c0(std::size_t n) {
  return 1.0 / (16.0 * std::max(std::log(static_cast<double>(n)), 1.0));
}

inline double default_eta(double c0, double bound_b, const DenseMatrix& inputs) {
  const double xnorm = input_operator_norm(inputs);
  return 1.0 / (2.0 * c0 * bound_b * bound_b * xnorm * xnorm);
}

// Smallest T with (1 - eta*gram_min_eig/8)^T <= target, capped.
inline std::size_t default_T(double eta, double gram_min_eig, double target = 1e-4,
                             std::size_t cap = 100000) {
  const double rate = eta * gram_min_eig / 8.0;
  if (!(rate > 0.0) || rate >= 1.0) return cap;
  const double t = std::ceil(std::log(target) / std::log1p(-rate));
  if (!(t > 0.0)) return 1;
  return std::min<std::size_t>(cap, static_cast<std::size_t>(t));
}

// Full-batch gradient descent on L(W) = 1/2 sum_i (f(x_i) - y_i)^2.
// loss_trace receives ||f - y||^2 at every iterate (T+1 entries appended).
inline void gd_train(ShallowState& st, const SampleSet& data, double eta, std::size_t t_steps) {
  if (data.d() != st.cfg.d) throw DimensionMismatch("gd_train: input dimension");
  if (!(eta >= 0.0)) throw InvalidArgument("gd_train: eta must be >= 0");
  const std::size_t n = data.n(), k = st.cfg.k, d = st.cfg.d;

  const double eta_cap = default_eta(st.cfg.c0, mixture_bound(st.fam, st.alpha), data.inputs);
  if (eta > eta_cap * (1.0 + 1e-12))
    std::cerr << "[tvsplit] gd_train: eta " << eta << " exceeds the stability "
              << "prescription " << eta_cap << "; convergence is not guaranteed\n";

  const MixFn act0 = compile_mix(st.fam, st.alpha, 0);
  const MixFn act1 = compile_mix(st.fam, st.alpha, 1);

  auto x = as_eigen(data.inputs);
  auto w = as_eigen(st.w);
  Eigen::Map<const Eigen::VectorXd> y(data.labels.data(), static_cast<Eigen::Index>(n));
  Eigen::Map<const Eigen::VectorXd> v(st.v.data(), static_cast<Eigen::Index>(k));

  DenseMatrix zbuf(n, k), abuf(n, k), dbuf(n, k);
  auto z = as_eigen(zbuf);
  auto a = as_eigen(abuf);
  auto der = as_eigen(dbuf);
  Eigen::VectorXd r(n);
  EigenRowMat grad(k, d);

  double initial_loss = -1.0;
  for (std::size_t step = 0; step <= t_steps; ++step) {
    z.noalias() = x * w.transpose();
    for (std::size_t i = 0; i < zbuf.data.size(); ++i) abuf.data[i] = act0(zbuf.data[i]);
    r.noalias() = a * v;
    r -= y;
    const double loss = r.squaredNorm();
    if (initial_loss < 0.0) initial_loss = loss;
    if (!st.loss_trace.empty() &&
        loss > st.loss_trace.back() * (1.0 + 1e-9) + 1e-12 && step > 0)
      st.loss_monotone = false;
    st.loss_trace.push_back(loss);
    if (loss > 1e6 * std::max(initial_loss, 1e-12))
      throw DivergedLoss("gd_train: loss exceeded 1e6x its initial value");
    if (step == t_steps || eta == 0.0 || loss == 0.0) {
      if (step < t_steps) {
        // Remaining iterates are fixed points; pad the trace to full length.
        st.loss_trace.insert(st.loss_trace.end(), t_steps - step, loss);
        break;
      }
      continue;
    }
    for (std::size_t i = 0; i < zbuf.data.size(); ++i) dbuf.data[i] = act1(zbuf.data[i]);
    der.array().colwise() *= r.array();  // row i scaled by residual r_i
    grad.noalias() = der.transpose() * x;
    grad.array().colwise() *= v.array();  // row l scaled by v_l
    w.noalias() -= eta * grad;
  }
}

// K[i,j] = (sum_l v_l^2 s'(w_l.x_i) s'(w_l.x_j)) * (x_i . x_j), evaluated at
// the current weights (at_init = false) or at W0.
inline DenseMatrix empirical_gram(const ShallowState& st, const SampleSet& data,
                                  bool at_init = false) {
  if (data.d() != st.cfg.d) throw DimensionMismatch("empirical_gram: input dimension");
  const std::size_t n = data.n(), k = st.cfg.k;
  const MixFn act1 = compile_mix(st.fam, st.alpha, 1);
  const DenseMatrix& wm = at_init ? st.w0 : st.w;

  DenseMatrix zbuf(n, k);
  as_eigen(zbuf).noalias() = as_eigen(data.inputs) * as_eigen(wm).transpose();
  for (double& t : zbuf.data) t = act1(t);
  // Scale columns by v, so the product carries diag(v)^2.
  auto z = as_eigen(zbuf);
  Eigen::Map<const Eigen::VectorXd> v(st.v.data(), static_cast<Eigen::Index>(k));
  z.array().rowwise() *= v.transpose().array();

  DenseMatrix gram(n, n);
  as_eigen(gram).noalias() = z * z.transpose();
  DenseMatrix xx(n, n);
  as_eigen(xx).noalias() = as_eigen(data.inputs) * as_eigen(data.inputs).transpose();
  for (std::size_t t = 0; t < gram.data.size(); ++t) gram.data[t] *= xx.data[t];
  return gram;
}

struct NtkEstimate {
  DenseMatrix gram;          // c0 * E_w[s'(w.x_i) s'(w.x_j)] * (x_i . x_j)
  DenseMatrix stderr_gram;   // per-entry Monte-Carlo standard error
  std::size_t mc_samples = 0;
};

// Monte-Carlo estimate of the population tangent kernel over w ~ N(0, I_d).
inline NtkEstimate ntk_gram_mc(const ActivationFamily& fam, const HyperPoint& alpha,
                               const SampleSet& data, double c0,
                               std::size_t mc_samples, RngStream stream) {
  if (mc_samples == 0) throw InvalidArgument("ntk_gram_mc: need at least one sample");
  if (!(c0 > 0.0)) throw InvalidArgument("ntk_gram_mc: c0 must be positive");
  const std::size_t n = data.n(), d = data.d();
  const MixFn act1 = compile_mix(fam, alpha, 1);

  // Draw in blocks to bound memory at n x block; each block gets its own
  // derived substream, so the estimate is independent of the block size's
  // interaction with the generator position.
  const std::size_t block = std::min<std::size_t>(mc_samples, 8192);
  DenseMatrix sum(n, n), sumsq(n, n);
  DenseMatrix zbuf(n, block), sq(n, block);
  std::size_t done = 0, block_idx = 0;
  while (done < mc_samples) {
    const std::size_t m = std::min(block, mc_samples - done);
    DenseMatrix wmc = gauss_matrix(stream.derived(7001, block_idx++), m, d, 1.0);
    if (m != block) {
      zbuf = DenseMatrix(n, m);
      sq = DenseMatrix(n, m);
    }
    as_eigen(zbuf).noalias() = as_eigen(data.inputs) * as_eigen(wmc).transpose();
    for (double& t : zbuf.data) t = act1(t);
    for (std::size_t t = 0; t < zbuf.data.size(); ++t) sq.data[t] = zbuf.data[t] * zbuf.data[t];
    as_eigen(sum).noalias() += as_eigen(zbuf) * as_eigen(zbuf).transpose();
    as_eigen(sumsq).noalias() += as_eigen(sq) * as_eigen(sq).transpose();
    done += m;
  }

  DenseMatrix xx(n, n);
  as_eigen(xx).noalias() = as_eigen(data.inputs) * as_eigen(data.inputs).transpose();
  NtkEstimate out;
  out.gram = DenseMatrix(n, n);
  out.stderr_gram = DenseMatrix(n, n);
  out.mc_samples = mc_samples;
  const double m = static_cast<double>(mc_samples);
  for (std::size_t t = 0; t < out.gram.data.size(); ++t) {
    const double mean = sum.data[t] / m;
    const double var = std::max(sumsq.data[t] / m - mean * mean, 0.0);
    out.gram.data[t] = c0 * mean * xx.data[t];
    out.stderr_gram.data[t] = c0 * std::sqrt(var / m) * std::abs(xx.data[t]);
  }
  return out;
}

// Jacobian of the predictions with respect to vec(W), row-major k x d layout,
// evaluated at W0 (the linearization point).
inline DenseMatrix shallow_jacobian_at_init(const ShallowState& st, const SampleSet& data) {
  const std::size_t n = data.n(), k = st.cfg.k, d = st.cfg.d;
  const MixFn act1 = compile_mix(st.fam, st.alpha, 1);
  DenseMatrix zbuf(n, k);
  as_eigen(zbuf).noalias() = as_eigen(data.inputs) * as_eigen(st.w0).transpose();
  for (double& t : zbuf.data) t = act1(t);
  DenseMatrix j(n, k * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double coef = st.v[l] * zbuf(i, l);
      for (std::size_t c = 0; c < d; ++c) j(i, l * d + c) = coef * data.inputs(i, c);
    }
  return j;
}

enum class LinearizedLabels { ideal, offset };

// theta = J^T (J J^T + lambda I)^{-1} labels, with J taken at W0. The ideal
// variant regresses the raw labels; the offset variant removes the untrained
// network's predictions first.
inline std::vector<double> linearized_fit(const ShallowState& st, const SampleSet& data,
                                          double lambda, LinearizedLabels mode) {
  const DenseMatrix j = shallow_jacobian_at_init(st, data);
  std::vector<double> labels = data.labels;
  if (mode == LinearizedLabels::offset) {
    ShallowState at0 = st;
    at0.w = st.w0;
    const std::vector<double> p = shallow_forward_all(at0, data.inputs);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] -= p[i];
  }
  return min_norm_fit(j, labels, lambda);
}

// Inputs uniform on the unit sphere; labels sign(u.x + 0.3 tanh(u'.x)) for
// fixed direction vectors drawn from the seed. Nonlinear but learnable.
inline SampleSet binary_task(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n == 0 || d == 0) throw InvalidArgument("binary_task: n and d must be positive");
  DenseMatrix x = gauss_matrix(RngStream(seed, 0), n, d, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t c = 0; c < d; ++c) r += x(i, c) * x(i, c);
    r = std::sqrt(r);
    for (std::size_t c = 0; c < d; ++c) x(i, c) /= r;
  }
  auto unit_vec = [&](std::uint64_t id) {
    DenseMatrix g = gauss_matrix(RngStream(seed, id), d, 1, 1.0);
    double r = 0.0;
    for (double t : g.data) r += t * t;
    r = std::sqrt(r);
    for (double& t : g.data) t /= r;
    return g.data;
  };
  const std::vector<double> u = unit_vec(1), up = unit_vec(2);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double a = 0.0, b = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      a += u[c] * x(i, c);
      b += up[c] * x(i, c);
    }
    y[i] = (a + 0.3 * std::tanh(b)) >= 0.0 ? 1.0 : -1.0;
  }
  return make_sample_set(std::move(x), std::move(y), true);
}

}  // namespace tvsplit
