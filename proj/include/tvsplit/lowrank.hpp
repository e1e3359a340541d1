#pragma once

// Overparameterized rank-1 matrix learning: instances stream sensing matrices
// X_i (i.i.d. standard normal) and labels y_i = alpha*^T X_i theta* + sigma z_i
// from counter-based sub-streams (one per sample and split, so every sample can
// be regenerated on demand), the spectral stage estimates alpha* from the
// label/measurement cross-moment on the validation split, stage 2 fits the
// min-norm regression on alpha-hat features over the training split, and the
// closed-form risk expressions evaluate the result.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "tvsplit/common.hpp"
#include "tvsplit/numcore.hpp"

namespace tvsplit {

struct InvalidRegime : Error {
  using Error::Error;
};

enum class Split : std::uint64_t { train = 1, val = 2 };

struct Rank1Instance {
  std::size_t h = 0;  // left dimension (feature-map count analogue)
  std::size_t p = 0;  // right dimension (parameters)
  std::size_t n = 0;  // samples per split (equal train/val split)
  std::vector<double> alpha_star;  // unit, length h
  std::vector<double> theta_star;  // unit, length p
  double noise_sigma = 0.0;
  RngStream seed;  // sample i of a split comes from seed.derived(split, i)
};

inline void validate_rank1_instance(const Rank1Instance& inst) {
  if (inst.h == 0 || inst.p == 0 || inst.n == 0)
    throw InvalidArgument("rank1 instance: h, p, n must be positive");
  if (inst.alpha_star.size() != inst.h || inst.theta_star.size() != inst.p)
    throw DimensionMismatch("rank1 instance: planted vector dimensions");
  if (!(inst.noise_sigma >= 0.0))
    throw InvalidArgument("rank1 instance: noise level must be >= 0");
  const double na = as_eigen_vec(inst.alpha_star).norm();
  const double np = as_eigen_vec(inst.theta_star).norm();
  if (std::abs(na - 1.0) > 1e-12 || std::abs(np - 1.0) > 1e-12)
    throw InvalidArgument("rank1 instance: planted vectors must be unit norm");
}

inline Rank1Instance random_rank1_instance(std::size_t h, std::size_t p, std::size_t n,
                                           double noise_sigma, std::uint64_t master_seed) {
  Rank1Instance inst;
  inst.h = h;
  inst.p = p;
  inst.n = n;
  inst.noise_sigma = noise_sigma;
  inst.seed = RngStream(master_seed, 0);
  RngStream ar(master_seed, 1), tr(master_seed, 2);
  inst.alpha_star.resize(h);
  inst.theta_star.resize(p);
  for (double& t : inst.alpha_star) t = ar.next_gauss();
  for (double& t : inst.theta_star) t = tr.next_gauss();
  as_eigen_vec(inst.alpha_star).normalize();
  as_eigen_vec(inst.theta_star).normalize();
  validate_rank1_instance(inst);
  return inst;
}

namespace detail {

// Regenerates sample i of the split into `x` (h x p) and returns its label.
// The draw order (X row-major, then the noise variate) is part of the format:
// it makes two-pass streaming bitwise reproducible.
inline double stream_sample(const Rank1Instance& inst, Split split, std::size_t i,
                            DenseMatrix& x) {
  x.rows = inst.h;
  x.cols = inst.p;
  x.data.resize(inst.h * inst.p);
  RngStream s = inst.seed.derived(static_cast<std::uint64_t>(split), i);
  for (double& t : x.data) t = s.next_gauss();
  const double z = s.next_gauss();
  // y = alpha*^T X theta* + sigma z via t = X theta*.
  double y = 0.0;
  {
    Eigen::VectorXd t = as_eigen(x) * as_eigen_vec(inst.theta_star);
    y = as_eigen_vec(inst.alpha_star).dot(t);
  }
  return y + inst.noise_sigma * z;
}

// Pairwise (binary-counter) reduction over per-block partial sums: the merge
// tree depends only on the number of pushed blocks, so totals are bitwise
// identical for any worker count, with O(log blocks) live partials.
struct PairwiseReducer {
  std::vector<std::pair<std::size_t, DenseMatrix>> stack;

  void push(DenseMatrix block) {
    std::size_t level = 0;
    while (!stack.empty() && stack.back().first == level) {
      DenseMatrix& top = stack.back().second;
      for (std::size_t t = 0; t < block.data.size(); ++t) block.data[t] += top.data[t];
      stack.pop_back();
      ++level;
    }
    stack.emplace_back(level, std::move(block));
  }

  DenseMatrix finalize(std::size_t rows, std::size_t cols) {
    DenseMatrix total(rows, cols);
    // Fold newest (lowest level) into oldest so the order is fixed.
    for (auto it = stack.rbegin(); it != stack.rend(); ++it)
      for (std::size_t t = 0; t < total.data.size(); ++t)
        total.data[t] += it->second.data[t];
    stack.clear();
    return total;
  }
};

constexpr std::size_t kRank1Block = 64;

}  // namespace detail

struct Rank1Sample {
  DenseMatrix x;
  double y = 0.0;
};

inline Rank1Sample rank1_sample(const Rank1Instance& inst, Split split, std::size_t i) {
  if (i >= inst.n) throw InvalidArgument("rank1_sample: sample index out of range");
  Rank1Sample s;
  s.y = detail::stream_sample(inst, split, i, s.x);
  return s;
}

// (1/n) sum_i y_i X_i over the validation split, streamed in 64-sample blocks
// (parallel block waves, deterministic pairwise merge). Peak memory is
// O((workers + log n) * h * p), never O(n * h * p).
inline DenseMatrix cross_moment(const Rank1Instance& inst, std::size_t workers = 0) {
  const std::size_t blocks =
      (inst.n + detail::kRank1Block - 1) / detail::kRank1Block;
  const std::size_t wave = std::max<std::size_t>(resolve_worker_count(workers), 1);

  detail::PairwiseReducer reducer;
  std::vector<DenseMatrix> partials(std::min(wave, blocks));
  for (std::size_t base = 0; base < blocks; base += partials.size()) {
    const std::size_t count = std::min(partials.size(), blocks - base);
    parallel_for_indexed(
        count,
        [&](std::size_t w) {
          const std::size_t b = base + w;
          const std::size_t lo = b * detail::kRank1Block;
          const std::size_t hi = std::min(inst.n, lo + detail::kRank1Block);
          DenseMatrix sum(inst.h, inst.p);
          DenseMatrix x;
          for (std::size_t i = lo; i < hi; ++i) {
            const double y = detail::stream_sample(inst, Split::val, i, x);
            for (std::size_t t = 0; t < sum.data.size(); ++t)
              sum.data[t] += y * x.data[t];
          }
          partials[w] = std::move(sum);
        },
        workers);
    for (std::size_t w = 0; w < count; ++w) reducer.push(std::move(partials[w]));
  }
  DenseMatrix total = reducer.finalize(inst.h, inst.p);
  const double inv_n = 1.0 / static_cast<double>(inst.n);
  for (double& t : total.data) t *= inv_n;
  return total;
}

struct SpectralResult {
  std::vector<double> alpha_hat;  // unit, length h
  double sigma1 = 0.0;            // top singular value of the cross-moment
  double rho = 0.0;               // |alpha_star . alpha_hat|
  std::vector<double> theta_hat;  // empty until stage 2 runs
  double risk = std::numeric_limits<double>::quiet_NaN();
};

inline SpectralResult spectral_estimate(const Rank1Instance& inst,
                                        std::size_t workers = 0) {
  validate_rank1_instance(inst);
  const DenseMatrix m = cross_moment(inst, workers);
  TopSingular top = top_singular_left(m);  // throws ZeroMatrix on M = 0
  SpectralResult out;
  out.alpha_hat = std::move(top.u);
  out.sigma1 = top.sigma1;
  out.rho = std::abs(as_eigen_vec(inst.alpha_star).dot(as_eigen_vec(out.alpha_hat)));
  return out;
}

// Min-norm fit of theta over the training split with features x_i = X_i^T a.
// Flipping the sign of a negates the features and hence theta-hat while
// leaving every prediction a^T X theta identical, so under exact interpolation
// (n <= p) both orientations tie on training residual; the orientation handed
// in (the deterministic one from top_singular_left) is kept.
inline std::vector<double> stage2_erm(const Rank1Instance& inst,
                                      const std::vector<double>& alpha_hat,
                                      std::size_t workers = 0) {
  validate_rank1_instance(inst);
  if (alpha_hat.size() != inst.h) throw DimensionMismatch("stage2_erm: alpha dimension");
  if (inst.n > inst.p)
    throw InvalidArgument("stage2_erm: needs the overparameterized regime n <= p");

  DenseMatrix feat(inst.n, inst.p);
  std::vector<double> y(inst.n, 0.0);
  parallel_for_indexed(
      inst.n,
      [&](std::size_t i) {
        DenseMatrix x;
        y[i] = detail::stream_sample(inst, Split::train, i, x);
        Eigen::Map<Eigen::VectorXd> row(feat.data.data() + i * inst.p,
                                        static_cast<Eigen::Index>(inst.p));
        row.noalias() = as_eigen(x).transpose() * as_eigen_vec(alpha_hat);
      },
      workers);
  return min_norm_fit(feat, y, 0.0);
}

// E[(y - a^T X t)^2] for X with i.i.d. N(0,1) entries and unit alpha_star:
// ||a||^2 ||t||^2 + ||theta_star||^2 - 2 (alpha_star.a)(theta_star.t) + sigma^2.
inline double exact_population_risk(const std::vector<double>& alpha_star,
                                    const std::vector<double>& theta_star,
                                    const std::vector<double>& alpha_hat,
                                    const std::vector<double>& theta_hat,
                                    double noise_sigma) {
  if (alpha_star.size() != alpha_hat.size() || theta_star.size() != theta_hat.size())
    throw DimensionMismatch("exact_population_risk: dimension mismatch");
  const double ah2 = as_eigen_vec(alpha_hat).squaredNorm();
  const double th2 = as_eigen_vec(theta_hat).squaredNorm();
  const double ts2 = as_eigen_vec(theta_star).squaredNorm();
  const double ca = as_eigen_vec(alpha_star).dot(as_eigen_vec(alpha_hat));
  const double ct = as_eigen_vec(theta_star).dot(as_eigen_vec(theta_hat));
  return ah2 * th2 + ts2 - 2.0 * ca * ct + noise_sigma * noise_sigma;
}

// Limiting risk of the stage-2 min-norm fit at correlation rho and
// overparameterization ratio p_bar = p/n > 1:
// (p_bar^2 - 2 p_bar rho + 2 rho - rho^2) / (p_bar (p_bar - 1)).
inline double asymptotic_risk(double rho, double p_bar) {
  if (!(p_bar > 1.0))
    throw InvalidRegime("asymptotic_risk: requires p_bar > 1 (overparameterized limit)");
  if (!(rho >= 0.0 && rho <= 1.0))
    throw InvalidArgument("asymptotic_risk: rho must lie in [0, 1]");
  return (p_bar * p_bar - 2.0 * p_bar * rho + 2.0 * rho - rho * rho) /
         (p_bar * (p_bar - 1.0));
}

// Spectral stage + stage-2 ERM + closed-form risk in one pass.
inline SpectralResult rank1_pipeline(const Rank1Instance& inst, std::size_t workers = 0) {
  SpectralResult out = spectral_estimate(inst, workers);
  out.theta_hat = stage2_erm(inst, out.alpha_hat, workers);
  out.risk = exact_population_risk(inst.alpha_star, inst.theta_star, out.alpha_hat,
                                   out.theta_hat, inst.noise_sigma);
  return out;
}

}  // namespace tvsplit
