#pragma once

// Scalar activation bases and their convex mixtures. A mixture is
// sigma_alpha(z) = sum_i alpha_i * base_i(z) with alpha in the unit l1 ball;
// the same alpha weights apply to derivatives, since mixing is linear.

#include <cmath>
#include <string>
#include <vector>

#include "tvsplit/common.hpp"

namespace tvsplit {

struct NonSmoothSecondDerivative : Error {
  using Error::Error;
};

namespace act {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}
inline double sigmoid_d1(double z) {
  const double s = sigmoid(z);
  return s * (1.0 - s);
}
inline double sigmoid_d2(double z) {
  const double s = sigmoid(z);
  return s * (1.0 - s) * (1.0 - 2.0 * s);
}

inline double relu(double z) { return z > 0.0 ? z : 0.0; }
// Subgradient convention at the kink: midpoint.
inline double relu_d1(double z) { return z > 0.0 ? 1.0 : (z < 0.0 ? 0.0 : 0.5); }

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
inline double softplus_d1(double z) { return sigmoid(z); }
inline double softplus_d2(double z) { return sigmoid_d1(z); }

inline double tanh_(double z) { return std::tanh(z); }
inline double tanh_d1(double z) {
  const double t = std::tanh(z);
  return 1.0 - t * t;
}
inline double tanh_d2(double z) {
  const double t = std::tanh(z);
  return -2.0 * t * (1.0 - t * t);
}

inline double swish(double z) { return z * sigmoid(z); }
inline double swish_d1(double z) {
  const double s = sigmoid(z);
  return s * (1.0 + z * (1.0 - s));
}
inline double swish_d2(double z) {
  return sigmoid_d1(z) * (2.0 + z * (1.0 - 2.0 * sigmoid(z)));
}

inline double identity(double z) { return z; }
inline double one(double) { return 1.0; }
inline double zero(double) { return 0.0; }

}  // namespace act

struct BaseActivation {
  const char* name;
  bool smooth;  // twice continuously differentiable
  double (*value)(double);
  double (*deriv)(double);
  double (*second)(double);  // nullptr for nonsmooth bases
};

struct ActivationFamily {
  std::string name;
  std::vector<BaseActivation> bases;
  // B >= 1 dominating |base(0)|, sup|base'|, sup|base''| over the working
  // range for every base (a.e. derivatives for the nonsmooth ones).
  double bound_B = 1.0;

  std::size_t size() const { return bases.size(); }
  bool has_nonsmooth() const {
    for (const auto& b : bases)
      if (!b.smooth) return true;
    return false;
  }
};

namespace detail {

inline double (*base_order_fn(const BaseActivation& b, int order))(double) {
  switch (order) {
    case 0:
      return b.value;
    case 1:
      return b.deriv;
    default:
      return b.second;
  }
}

inline void check_mix_args(const ActivationFamily& fam, const std::vector<double>& alpha,
                           int order) {
  if (alpha.size() != fam.bases.size())
    throw DimensionMismatch("eval_mix: alpha length does not match family size");
  if (order < 0 || order > 2) throw InvalidArgument("eval_mix: order must be 0, 1, or 2");
  if (order == 2)
    for (std::size_t i = 0; i < alpha.size(); ++i)
      if (!fam.bases[i].smooth && alpha[i] != 0.0)
        throw NonSmoothSecondDerivative(
            "eval_mix: second derivative requested with nonzero weight on base '" +
            std::string(fam.bases[i].name) + "'");
}

// Numerical sup of |base(0)|, |base'|, |base''| over [-20, 20], floored at 1.
inline double numeric_bound(const std::vector<BaseActivation>& bases) {
  double b = 1.0;
  const int grid = 40001;
  for (const auto& base : bases) {
    b = std::max(b, std::abs(base.value(0.0)));
    for (int i = 0; i < grid; ++i) {
      const double z = -20.0 + 40.0 * static_cast<double>(i) / (grid - 1);
      b = std::max(b, std::abs(base.deriv(z)));
      if (base.second) b = std::max(b, std::abs(base.second(z)));
    }
  }
  return b;
}

}  // namespace detail

// sum_i alpha_i * d^order(base_i)(z). Weight-zero bases are skipped, so a
// nonsmooth base with alpha_i = 0 does not block order 2.
inline double eval_mix(const ActivationFamily& fam, const std::vector<double>& alpha,
                       double z, int order) {
  detail::check_mix_args(fam, alpha, order);
  double s = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i] == 0.0) continue;
    s += alpha[i] * detail::base_order_fn(fam.bases[i], order)(z);
  }
  return s;
}

// Pre-resolved mixture for hot loops: nonzero terms only, plain function
// pointers.
struct MixFn {
  std::vector<std::pair<double, double (*)(double)>> terms;
  double operator()(double z) const {
    double s = 0.0;
    for (const auto& t : terms) s += t.first * t.second(z);
    return s;
  }
};

inline MixFn compile_mix(const ActivationFamily& fam, const std::vector<double>& alpha,
                         int order) {
  detail::check_mix_args(fam, alpha, order);
  MixFn fn;
  for (std::size_t i = 0; i < alpha.size(); ++i)
    if (alpha[i] != 0.0)
      fn.terms.emplace_back(alpha[i], detail::base_order_fn(fam.bases[i], order));
  return fn;
}

// Numerical sup of |mix'| (and |mix''| where defined) over the working range:
// the per-mixture sharpening of the family bound for curvature-based step
// sizes. A pure-sigmoid mixture, for instance, has bound 1/4 rather than the
// family-level 1.
inline double mixture_bound(const ActivationFamily& fam, const std::vector<double>& alpha) {
  const MixFn d1 = compile_mix(fam, alpha, 1);
  bool smooth_part = true;
  for (std::size_t i = 0; i < alpha.size(); ++i)
    if (alpha[i] != 0.0 && !fam.bases[i].smooth) smooth_part = false;
  MixFn d2;
  if (smooth_part) d2 = compile_mix(fam, alpha, 2);
  double b = 0.0;
  const int grid = 4001;
  for (int i = 0; i < grid; ++i) {
    const double z = -20.0 + 40.0 * static_cast<double>(i) / (grid - 1);
    b = std::max(b, std::abs(d1(z)));
    if (smooth_part) b = std::max(b, std::abs(d2(z)));
  }
  return std::max(b, 1e-6);
}

inline ActivationFamily relu_sigmoid_family() {
  ActivationFamily f;
  f.name = "relu-sigmoid";
  f.bases = {
      {"relu", false, act::relu, act::relu_d1, nullptr},
      {"sigmoid", true, act::sigmoid, act::sigmoid_d1, act::sigmoid_d2},
  };
  // sup|relu'| = 1 dominates |sigmoid(0)| = 0.5 and the sigmoid derivatives.
  f.bound_B = 1.0;
  return f;
}

inline ActivationFamily smooth4_family() {
  ActivationFamily f;
  f.name = "smooth4";
  f.bases = {
      {"softplus", true, act::softplus, act::softplus_d1, act::softplus_d2},
      {"sigmoid", true, act::sigmoid, act::sigmoid_d1, act::sigmoid_d2},
      {"tanh", true, act::tanh_, act::tanh_d1, act::tanh_d2},
      {"swish", true, act::swish, act::swish_d1, act::swish_d2},
  };
  f.bound_B = detail::numeric_bound(f.bases);  // ~1.0998, from swish'
  return f;
}

// Single identity base. Mixtures are then linear maps, for which most of the
// library's quantities have closed forms; used as a diagnostic family.
inline ActivationFamily linear_family() {
  ActivationFamily f;
  f.name = "linear";
  f.bases = {{"identity", true, act::identity, act::one, act::zero}};
  f.bound_B = 1.0;
  return f;
}

inline ActivationFamily activation_family(const std::string& name) {
  if (name == "relu-sigmoid") return relu_sigmoid_family();
  if (name == "smooth4") return smooth4_family();
  if (name == "linear") return linear_family();
  throw InvalidArgument("activation_family: unknown family '" + name + "'");
}

}  // namespace tvsplit
