#pragma once

// Depth-D feedforward nets with a per-layer activation mixture
// alpha = (alpha^(1), ..., alpha^(D)) and scalar output. The module provides
// the forward pass, the exact parameter-Jacobian gram accumulated backward
// layer by layer (no full Jacobian is materialized), and a probe measuring
// how fast the gram moves when the mixture weights move, against the
// deterministic depth-dependent bound. Deep nets are not trained here.

#include <cmath>
#include <cstdint>
#include <vector>

#include "tvsplit/activations.hpp"
#include "tvsplit/common.hpp"
#include "tvsplit/featmap.hpp"
#include "tvsplit/numcore.hpp"

namespace tvsplit {

struct DeepConfig {
  // k0 = input dim, k1..kD hidden widths, last entry 1 (scalar output).
  std::vector<std::size_t> layer_widths;
  // Per-layer weight variances c_1..c_{D+1}; the scheme is c_1 = cbar and
  // c_l <= cbar / k_{l-1} for l >= 2 (cbar is identified with c_1).
  std::vector<double> init_variances;
  RngStream seed;

  std::size_t depth() const { return layer_widths.size() >= 2 ? layer_widths.size() - 2 : 0; }
};

inline void validate_deep_config(const DeepConfig& cfg) {
  const std::size_t L = cfg.layer_widths.size();
  if (L < 2) throw InvalidArgument("deep config: need at least input and output widths");
  if (cfg.layer_widths.back() != 1)
    throw InvalidArgument("deep config: output width must be 1");
  for (std::size_t w : cfg.layer_widths)
    if (w == 0) throw InvalidArgument("deep config: widths must be >= 1");
  if (cfg.init_variances.size() != L - 1)
    throw DimensionMismatch("deep config: need one variance per weight layer");
  for (double c : cfg.init_variances)
    if (!(c > 0.0)) throw InvalidArgument("deep config: variances must be positive");
  const double cbar = cfg.init_variances.front();
  for (std::size_t l = 2; l < L; ++l) {
    const double cap = cbar / static_cast<double>(cfg.layer_widths[l - 1]);
    if (cfg.init_variances[l - 1] > cap * (1.0 + 1e-12))
      throw InvalidArgument("deep config: variance scheme violated at layer " +
                            std::to_string(l));
  }
}

inline DeepConfig make_deep_config(std::vector<std::size_t> layer_widths, double cbar,
                                   RngStream seed) {
  DeepConfig cfg;
  cfg.layer_widths = std::move(layer_widths);
  cfg.seed = seed;
  if (cfg.layer_widths.size() >= 2) {
    cfg.init_variances.push_back(cbar);
    for (std::size_t l = 2; l < cfg.layer_widths.size(); ++l)
      cfg.init_variances.push_back(cbar / static_cast<double>(cfg.layer_widths[l - 1]));
  }
  validate_deep_config(cfg);
  return cfg;
}

struct DeepState {
  DeepConfig cfg;
  ActivationFamily fam;
  std::vector<HyperPoint> alpha_layers;  // D mixtures, each ||.||_1 <= 1
  std::vector<DenseMatrix> weights;      // W^(1)..W^(D+1)
};

inline DeepState deep_init(const DeepConfig& cfg, const ActivationFamily& fam,
                           std::vector<HyperPoint> alpha_layers) {
  validate_deep_config(cfg);
  const std::size_t depth = cfg.depth();
  if (alpha_layers.size() != depth)
    throw DimensionMismatch("deep_init: need one mixture per hidden layer");
  for (const HyperPoint& a : alpha_layers) {
    if (a.size() != fam.size())
      throw DimensionMismatch("deep_init: mixture length does not match family");
    if (l1_norm(a) > 1.0 + 1e-12)
      throw InvalidArgument("deep_init: mixture outside the unit l1 ball");
  }
  DeepState st;
  st.cfg = cfg;
  st.fam = fam;
  st.alpha_layers = std::move(alpha_layers);
  for (std::size_t l = 1; l < cfg.layer_widths.size(); ++l)
    st.weights.push_back(gauss_matrix(cfg.seed.derived(l),
                                      cfg.layer_widths[l], cfg.layer_widths[l - 1],
                                      std::sqrt(cfg.init_variances[l - 1])));
  return st;
}

namespace detail {

// Batched forward over all rows of x: hidden[l] = h^(l) (hidden[0] = x),
// preact[l-1] = z^(l) for l = 1..D, values = W^(D+1) h^(D).
struct DeepBatch {
  std::vector<DenseMatrix> hidden;
  std::vector<DenseMatrix> preact;
  std::vector<double> values;
};

inline DeepBatch deep_forward_batch(const DeepState& st, const DenseMatrix& x) {
  const std::size_t depth = st.cfg.depth();
  if (x.cols != st.cfg.layer_widths.front())
    throw DimensionMismatch("deep_forward: input dimension mismatch");
  DeepBatch b;
  b.hidden.push_back(x);
  for (std::size_t l = 1; l <= depth; ++l) {
    const DenseMatrix& w = st.weights[l - 1];
    DenseMatrix z(x.rows, w.rows);
    as_eigen(z).noalias() = as_eigen(b.hidden.back()) * as_eigen(w).transpose();
    DenseMatrix h = z;
    const MixFn act = compile_mix(st.fam, st.alpha_layers[l - 1], 0);
    for (double& t : h.data) t = act(t);
    b.preact.push_back(std::move(z));
    b.hidden.push_back(std::move(h));
  }
  const DenseMatrix& wout = st.weights.back();
  b.values.assign(x.rows, 0.0);
  Eigen::Map<Eigen::VectorXd>(b.values.data(), static_cast<Eigen::Index>(x.rows))
      .noalias() = as_eigen(b.hidden.back()) * as_eigen(wout).transpose();
  return b;
}

}  // namespace detail

struct DeepForward {
  double value = 0.0;
  // hidden[0] = x, hidden[l] = h^(l); preact[l-1] = z^(l).
  std::vector<std::vector<double>> hidden;
  std::vector<std::vector<double>> preact;
};

inline DeepForward deep_forward(const DeepState& st, const std::vector<double>& x) {
  DenseMatrix xm(1, x.size());
  xm.data = x;
  detail::DeepBatch b = detail::deep_forward_batch(st, xm);
  DeepForward out;
  out.value = b.values[0];
  for (const DenseMatrix& m : b.hidden) out.hidden.push_back(m.data);
  for (const DenseMatrix& m : b.preact) out.preact.push_back(m.data);
  return out;
}

// K[i,j] = sum_{l=1}^{D+1} (delta_i^(l) . delta_j^(l)) (h_i^(l-1) . h_j^(l-1)),
// the exact gram of the parameter Jacobian, accumulated backward.
inline DenseMatrix deep_jacobian_gram(const DeepState& st, const SampleSet& data) {
  const std::size_t n = data.n();
  const std::size_t depth = st.cfg.depth();
  detail::DeepBatch b = detail::deep_forward_batch(st, data.inputs);

  DenseMatrix gram(n, n);
  // Output layer: delta^(D+1) = 1, features h^(D).
  {
    auto hd = as_eigen(b.hidden[depth]);
    as_eigen(gram).noalias() = hd * hd.transpose();
  }
  // Hidden layers, walking backward with the sensitivity recursion
  // delta^(l) = sigma'(z^(l)) (.) (W^(l+1)^T delta^(l+1)).
  DenseMatrix delta(n, 1, 1.0);
  for (std::size_t l = depth; l >= 1; --l) {
    const DenseMatrix& wnext = st.weights[l];  // W^(l+1): k_{l+1} x k_l
    DenseMatrix next(n, wnext.cols);
    as_eigen(next).noalias() = as_eigen(delta) * as_eigen(wnext);
    const MixFn act1 = compile_mix(st.fam, st.alpha_layers[l - 1], 1);
    const DenseMatrix& z = b.preact[l - 1];
    for (std::size_t t = 0; t < next.data.size(); ++t) next.data[t] *= act1(z.data[t]);
    delta = std::move(next);

    DenseMatrix dcorr(n, n), hcorr(n, n);
    auto dl = as_eigen(delta);
    auto hl = as_eigen(b.hidden[l - 1]);
    as_eigen(dcorr).noalias() = dl * dl.transpose();
    as_eigen(hcorr).noalias() = hl * hl.transpose();
    for (std::size_t t = 0; t < gram.data.size(); ++t)
      gram.data[t] += dcorr.data[t] * hcorr.data[t];
  }
  return gram;
}

// ---------------------------------------------------------------------------
// Gram Lipschitzness vs depth
// ---------------------------------------------------------------------------
struct GramProbeRow {
  std::size_t depth = 0;
  double alpha_distance = 0.0;  // l2 over the concatenated per-layer mixtures
  double measured = 0.0;        // ||K(a) - K(a')|| / distance
  double bound = 0.0;           // 4 n sqrt(h) (D B^D Mbar N)^3
  bool within_bound = false;
};

struct GramProbeResult {
  std::vector<GramProbeRow> rows;
  double log_slope_vs_depth = 0.0;  // least-squares slope of log(measured) on depth
};

namespace detail {

inline double spectral_norm_symmetric(const DenseMatrix& m) {
  return top_singular_left(m).sigma1;
}

}  // namespace detail

// For each depth D, builds nets [d, width, ..., width, 1] under the variance
// scheme, draws mixture pairs at l2 distance `step`, and compares the
// measured gram movement with the deterministic bound evaluated from the
// measured layer operator norms (Sbar_i = ||W^(i)|| + max(1, sqrt(k_i/k_{i-1}))).
// The hidden width, cbar, and seed come from `cfg`; its depth is ignored in
// favor of `depths`.
inline GramProbeResult gram_lipschitz_probe(const DeepConfig& cfg,
                                            const ActivationFamily& fam,
                                            const SampleSet& data,
                                            const std::vector<std::size_t>& depths,
                                            std::size_t trials, double step = 1e-3) {
  validate_deep_config(cfg);
  if (cfg.layer_widths.size() < 3)
    throw InvalidArgument("gram_lipschitz_probe: config needs a hidden layer");
  const std::size_t width = cfg.layer_widths[1];
  const double cbar = cfg.init_variances.front();
  RngStream stream = cfg.seed;
  if (trials == 0)
    throw InvalidArgument("gram_lipschitz_probe: trials must be positive");
  if (!(step >= 1e-6))
    throw InvalidArgument("gram_lipschitz_probe: pair distance below 1e-6 is degenerate");
  const std::size_t h = fam.size();
  const double n = static_cast<double>(data.n());
  const double cap_n = std::max(std::sqrt(static_cast<double>(data.d())),
                                input_radius(data));  // N >= sqrt(d) >= ||x||

  GramProbeResult out;
  std::vector<double> depth_axis, log_measured;
  for (std::size_t depth : depths) {
    if (depth == 0) throw InvalidArgument("gram_lipschitz_probe: depth must be >= 1");
    std::vector<std::size_t> widths(depth + 2, width);
    widths.front() = data.d();
    widths.back() = 1;

    double mean_measured = 0.0;
    std::size_t used = 0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
      DeepConfig cfg = make_deep_config(widths, cbar,
                                        stream.derived(depth, 10 * trial));
      RngStream mix = stream.derived(depth, 10 * trial + 1);

      // Base point: per-layer random mixture with l1 mass 0.9, plus a unit
      // direction scaled to the requested distance. Both points stay in the
      // ball: per-layer l1 change is at most sqrt(h) * step << 0.1.
      std::vector<HyperPoint> a(depth, HyperPoint(h, 0.0));
      std::vector<HyperPoint> a2(depth, HyperPoint(h, 0.0));
      std::vector<double> dir(depth * h, 0.0);
      double dn = 0.0;
      for (double& t : dir) {
        t = 2.0 * mix.next_unit() - 1.0;
        dn += t * t;
      }
      dn = std::sqrt(dn);
      for (double& t : dir) t *= step / dn;
      for (std::size_t l = 0; l < depth; ++l) {
        double mass = 0.0;
        for (std::size_t i = 0; i < h; ++i) {
          a[l][i] = -std::log(mix.next_unit());
          mass += a[l][i];
        }
        for (std::size_t i = 0; i < h; ++i) {
          a[l][i] *= 0.9 / mass;
          a2[l][i] = a[l][i] + dir[l * h + i];
        }
        if (l1_norm(a[l]) > 1.0 || l1_norm(a2[l]) > 1.0)
          throw InvalidArgument("gram_lipschitz_probe: mixture pair left the ball");
      }

      DeepState st = deep_init(cfg, fam, a);
      DeepState st2 = st;
      st2.alpha_layers = a2;

      DenseMatrix diff = deep_jacobian_gram(st, data);
      DenseMatrix k2 = deep_jacobian_gram(st2, data);
      for (std::size_t t = 0; t < diff.data.size(); ++t) diff.data[t] -= k2.data[t];
      const double measured = detail::spectral_norm_symmetric(diff) / step;

      double mbar = 1.0;
      for (std::size_t l = 0; l < st.weights.size(); ++l) {
        const double opnorm = top_singular_left(st.weights[l]).sigma1;
        const double ratio = std::sqrt(static_cast<double>(widths[l + 1]) /
                                       static_cast<double>(widths[l]));
        mbar *= opnorm + std::max(1.0, ratio);
      }
      const double b = fam.bound_B;
      const double core = static_cast<double>(depth) * std::pow(b, static_cast<double>(depth)) *
                          mbar * cap_n;
      const double bound = 4.0 * n * std::sqrt(static_cast<double>(h)) * core * core * core;

      GramProbeRow row;
      row.depth = depth;
      row.alpha_distance = step;
      row.measured = measured;
      row.bound = bound;
      row.within_bound = measured <= bound;
      out.rows.push_back(row);
      mean_measured += measured;
      ++used;
    }
    depth_axis.push_back(static_cast<double>(depth));
    log_measured.push_back(std::log(std::max(mean_measured / used, 1e-300)));
  }

  if (depth_axis.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < depth_axis.size(); ++i) {
      mx += depth_axis[i];
      my += log_measured[i];
    }
    mx /= depth_axis.size();
    my /= log_measured.size();
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < depth_axis.size(); ++i) {
      sxx += (depth_axis[i] - mx) * (depth_axis[i] - mx);
      sxy += (depth_axis[i] - mx) * (log_measured[i] - my);
    }
    out.log_slope_vs_depth = sxy / sxx;
  }
  return out;
}

}  // namespace tvsplit
