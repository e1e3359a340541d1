#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tvsplit/featmap.hpp"

using tvsplit::DenseMatrix;
using tvsplit::FeatureFamily;
using tvsplit::HyperPoint;
using tvsplit::RngStream;
using tvsplit::SampleSet;

namespace {

SampleSet random_samples(std::size_t n, std::size_t d, std::uint64_t seed,
                         bool unit_rows) {
  DenseMatrix x = tvsplit::gauss_matrix(RngStream(seed, 0), n, d, 1.0);
  if (unit_rows)
    for (std::size_t i = 0; i < n; ++i) {
      double r = 0.0;
      for (std::size_t j = 0; j < d; ++j) r += x(i, j) * x(i, j);
      r = std::sqrt(r);
      for (std::size_t j = 0; j < d; ++j) x(i, j) /= r;
    }
  RngStream ys(seed, 1);
  std::vector<double> y(n);
  for (double& v : y) v = 2.0 * ys.next_unit() - 1.0;
  return tvsplit::make_sample_set(std::move(x), std::move(y), unit_rows);
}

// Family whose single map is the input itself (p = d); with identity inputs
// the feature matrix is the identity.
FeatureFamily passthrough_family(std::size_t d) {
  FeatureFamily fam;
  fam.name = "passthrough";
  fam.h = 1;
  fam.p = d;
  fam.d = d;
  fam.bound_B = 1.0;
  fam.map = [d](std::size_t, const double* x, double* out) {
    for (std::size_t j = 0; j < d; ++j) out[j] = x[j];
  };
  return fam;
}

}  // namespace

TEST(SampleSetChecks, NormalizedFlagIsEnforced) {
  DenseMatrix x(2, 2);
  x(0, 0) = 1.0;
  x(1, 0) = 0.6;
  x(1, 1) = 0.8;
  EXPECT_NO_THROW(tvsplit::make_sample_set(x, {0.5, -1.0}, true));
  EXPECT_THROW(tvsplit::make_sample_set(x, {0.5, -1.5}, true), tvsplit::InvalidArgument);
  DenseMatrix bad = x;
  bad(0, 0) = 2.0;
  EXPECT_THROW(tvsplit::make_sample_set(bad, {0.5, -1.0}, true), tvsplit::InvalidArgument);
  EXPECT_NO_THROW(tvsplit::make_sample_set(bad, {0.5, -1.5}, false));
  EXPECT_THROW(tvsplit::make_sample_set(x, {0.5}, false), tvsplit::DimensionMismatch);
}

TEST(FeatureMatrix, MatchesDirectSummation) {
  const std::size_t n = 7, d = 4, p = 9;
  FeatureFamily fam = tvsplit::tanh_feature_family(2, p, d, 5);
  SampleSet data = random_samples(n, d, 6, false);

  const HyperPoint a = {0.3, 0.7};
  DenseMatrix phi = tvsplit::feature_matrix(fam, a, data);
  ASSERT_EQ(phi.rows, n);
  ASSERT_EQ(phi.cols, p);
  std::vector<double> f0(p), f1(p);
  for (std::size_t i = 0; i < n; ++i) {
    fam.map(0, &data.inputs.data[i * d], f0.data());
    fam.map(1, &data.inputs.data[i * d], f1.data());
    for (std::size_t t = 0; t < p; ++t)
      EXPECT_NEAR(phi(i, t), 0.3 * f0[t] + 0.7 * f1[t], 1e-12);
  }

  // Single map passthrough and the zero mixture.
  DenseMatrix one = tvsplit::feature_matrix(fam, {1.0, 0.0}, data);
  for (std::size_t i = 0; i < n; ++i) {
    fam.map(0, &data.inputs.data[i * d], f0.data());
    for (std::size_t t = 0; t < p; ++t) EXPECT_DOUBLE_EQ(one(i, t), f0[t]);
  }
  DenseMatrix zero = tvsplit::feature_matrix(fam, {0.0, 0.0}, data);
  for (double v : zero.data) EXPECT_DOUBLE_EQ(v, 0.0);

  EXPECT_THROW(tvsplit::feature_matrix(fam, {1.0}, data), tvsplit::DimensionMismatch);
  EXPECT_THROW(tvsplit::feature_matrix(fam, {0.8, 0.8}, data), tvsplit::InvalidArgument);
}

TEST(FeatureMatrix, BatchedAndScalarEvaluatorsAgree) {
  FeatureFamily tanh_fam = tvsplit::tanh_feature_family(3, 11, 5, 17);
  FeatureFamily lin_fam = tvsplit::linear_feature_family(2, 8, 5, 18);
  SampleSet data = random_samples(6, 5, 19, true);
  for (FeatureFamily* fam : {&tanh_fam, &lin_fam}) {
    FeatureFamily scalar_only = *fam;
    scalar_only.map_batch = nullptr;
    const HyperPoint a(fam->h, 1.0 / static_cast<double>(fam->h));
    DenseMatrix via_batch = tvsplit::feature_matrix(*fam, a, data);
    DenseMatrix via_scalar = tvsplit::feature_matrix(scalar_only, a, data);
    for (std::size_t t = 0; t < via_batch.data.size(); ++t)
      EXPECT_NEAR(via_batch.data[t], via_scalar.data[t], 1e-13);
  }
}

TEST(FeatureFamilies, NormBoundHolds) {
  FeatureFamily tanh_fam = tvsplit::tanh_feature_family(2, 12, 4, 21);
  for (std::uint64_t s = 0; s < 4; ++s) {
    // Include inputs far outside the unit ball: tanh saturates, bound global.
    DenseMatrix x = tvsplit::gauss_matrix(RngStream(22, s), 10, 4, s == 3 ? 10.0 : 1.0);
    std::vector<double> out(tanh_fam.p);
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t j = 0; j < tanh_fam.h; ++j) {
        tanh_fam.map(j, &x.data[i * x.cols], out.data());
        double n2 = 0.0;
        for (double v : out) n2 += v * v;
        EXPECT_LE(n2, tanh_fam.bound_B * (1.0 + 1e-6));
      }
  }

  // Linear family: bound is over the unit-radius ball.
  FeatureFamily lin = tvsplit::linear_feature_family(2, 9, 4, 23, 1.0);
  SampleSet data = random_samples(20, 4, 24, true);
  std::vector<double> out(lin.p);
  for (std::size_t i = 0; i < data.n(); ++i)
    for (std::size_t j = 0; j < lin.h; ++j) {
      lin.map(j, &data.inputs.data[i * 4], out.data());
      double n2 = 0.0;
      for (double v : out) n2 += v * v;
      EXPECT_LE(n2, lin.bound_B * (1.0 + 1e-6));
    }
}

TEST(RidgeFit, IdentityFeaturesReturnLabels) {
  const std::size_t n = 5;
  FeatureFamily fam = passthrough_family(n);
  DenseMatrix eye(n, n);
  for (std::size_t i = 0; i < n; ++i) eye(i, i) = 1.0;
  const std::vector<double> y = {0.4, -0.2, 0.9, 0.1, -0.7};
  SampleSet data = tvsplit::make_sample_set(eye, y, false);

  tvsplit::FitResult fit = tvsplit::ridge_fit(fam, {1.0}, data, 0.0);
  ASSERT_EQ(fit.theta.size(), n);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(fit.theta[i], y[i], 1e-12);
  EXPECT_GT(fit.gram_min_eig_proxy, 0.0);

  tvsplit::FitResult heavy = tvsplit::ridge_fit(fam, {1.0}, data, 1e12);
  for (double t : heavy.theta) EXPECT_LE(std::abs(t), 1e-11);
}

TEST(RidgeFit, InterpolatesGaussianMaps) {
  const std::size_t n = 8, p = 16, d = 5;
  FeatureFamily fam = tvsplit::tanh_feature_family(2, p, d, 31);
  SampleSet data = random_samples(n, d, 32, false);
  tvsplit::FitResult fit = tvsplit::ridge_fit(fam, {0.5, 0.5}, data, 0.0);

  const std::vector<double> pred = tvsplit::predict_all(fam, fit, data);
  double err = 0.0, yn = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    err += (pred[i] - data.labels[i]) * (pred[i] - data.labels[i]);
    yn += data.labels[i] * data.labels[i];
  }
  EXPECT_LE(std::sqrt(err), 1e-8 * std::sqrt(yn));

  // Per-sample prediction agrees with the batched path.
  std::vector<double> x0(d);
  for (std::size_t j = 0; j < d; ++j) x0[j] = data.inputs(0, j);
  EXPECT_NEAR(tvsplit::predict(fam, fit, x0), pred[0], 1e-12);
}

TEST(ExcessRiskForm, PinnedAndHomogeneous) {
  const std::size_t n = 4;
  FeatureFamily fam = passthrough_family(n);
  DenseMatrix eye(n, n);
  for (std::size_t i = 0; i < n; ++i) eye(i, i) = 1.0;
  SampleSet e1 = tvsplit::make_sample_set(eye, {1.0, 0.0, 0.0, 0.0}, false);
  EXPECT_NEAR(tvsplit::excess_risk_form(fam, {1.0}, e1), 0.5, 1e-12);

  SampleSet e2 = tvsplit::make_sample_set(eye, {2.0, 0.0, 0.0, 0.0}, false);
  EXPECT_NEAR(tvsplit::excess_risk_form(fam, {1.0}, e2), 1.0, 1e-12);
}

TEST(ExcessRiskForm, MatchesMinNormSolutionNorm) {
  const std::size_t n = 10, p = 25, d = 6;
  FeatureFamily fam = tvsplit::tanh_feature_family(2, p, d, 41);
  SampleSet data = random_samples(n, d, 42, false);
  const HyperPoint a = {0.4, 0.6};
  const double form = tvsplit::excess_risk_form(fam, a, data);
  tvsplit::FitResult fit = tvsplit::ridge_fit(fam, a, data, 0.0);
  const double norm = tvsplit::l2_norm(fit.theta);
  EXPECT_NEAR(form, std::sqrt(fam.bound_B / static_cast<double>(n)) * norm,
              1e-8 * std::max(form, 1e-3));
}

TEST(LipschitzProbe, RejectsDegenerateAndOffBallDirections) {
  FeatureFamily fam = tvsplit::tanh_feature_family(2, 12, 4, 51);
  SampleSet data = random_samples(6, 4, 52, false);
  EXPECT_THROW(tvsplit::solution_lipschitz_probe(fam, {0.5, 0.5}, {0.0, 0.0}, {1e-3},
                                                 data, 0.0),
               tvsplit::DegenerateDirection);

  FeatureFamily single = tvsplit::tanh_feature_family(1, 12, 4, 53);
  EXPECT_THROW(
      tvsplit::solution_lipschitz_probe(single, {1.0}, {1.0}, {1e-3}, data, 0.0),
      tvsplit::InvalidArgument);
  // Moving inward from the simplex face stays feasible.
  EXPECT_NO_THROW(
      tvsplit::solution_lipschitz_probe(single, {1.0}, {-1.0}, {1e-3}, data, 0.0));
}

TEST(Invariants, GridInterpolationAtEveryNonzeroAlpha) {
  const std::size_t n = 20, p = 60, d = 6;
  FeatureFamily fam = tvsplit::tanh_feature_family(2, p, d, 61);
  SampleSet data = random_samples(n, d, 62, false);
  double yn = 0.0;
  for (double v : data.labels) yn += v * v;
  yn = std::sqrt(yn);

  // The zero mixture has no interpolant (its gram is the zero matrix), so the
  // grid sweep covers every other point.
  for (const HyperPoint& a : tvsplit::alpha_grid(2, 10)) {
    if (tvsplit::l1_norm(a) == 0.0) continue;
    tvsplit::FitResult fit = tvsplit::ridge_fit(fam, a, data, 0.0);
    const std::vector<double> pred = tvsplit::predict_all(fam, fit, data);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      err += (pred[i] - data.labels[i]) * (pred[i] - data.labels[i]);
    EXPECT_LE(std::sqrt(err), 1e-7 * yn) << "alpha = (" << a[0] << "," << a[1] << ")";
  }
}

TEST(Invariants, SolutionLipschitzBoundNeverViolated) {
  std::size_t checked = 0;
  for (std::uint64_t inst = 0; inst < 50; ++inst) {
    const double lambda = (inst % 2 == 0) ? 0.0 : 0.1;
    FeatureFamily fam = tvsplit::tanh_feature_family(2, 48, 8, 700 + inst);
    SampleSet data = random_samples(16, 8, 800 + inst, true);
    RngStream dir(900 + inst, 0);
    HyperPoint a = {0.35, 0.45};
    HyperPoint da = {2.0 * dir.next_unit() - 1.0, 2.0 * dir.next_unit() - 1.0};
    tvsplit::LipschitzProbe probe = tvsplit::solution_lipschitz_probe(
        fam, a, da, {1e-4, 1e-3, 1e-2}, data, lambda);
    EXPECT_GT(probe.lambda0, 0.0);
    for (double ratio : probe.ratios) {
      EXPECT_LE(ratio, probe.bound) << "instance " << inst;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 150u);
}

TEST(Invariants, RidgeRobustnessBoundNeverViolated) {
  for (std::uint64_t inst = 0; inst < 50; ++inst) {
    const double lambda = (inst % 2 == 0) ? 0.0 : 0.1;
    const double dlambda = 0.01 + 0.04 * static_cast<double>(inst % 5);
    FeatureFamily fam = tvsplit::tanh_feature_family(2, 48, 8, 1700 + inst);
    SampleSet data = random_samples(16, 8, 1800 + inst, true);
    tvsplit::RobustnessProbe probe =
        tvsplit::ridge_robustness_probe(fam, {0.5, 0.4}, data, lambda, dlambda);
    EXPECT_LE(probe.measured, probe.bound) << "instance " << inst;
  }
}

TEST(Invariants, SensitivityShrinksWithRidgeStrength) {
  FeatureFamily fam = tvsplit::tanh_feature_family(2, 48, 8, 71);
  SampleSet data = random_samples(16, 8, 72, true);
  const HyperPoint a = {0.5, 0.3};
  const HyperPoint da = {1.0, -1.0};
  std::vector<double> ratios;
  for (double lambda : {0.1, 1.0, 10.0}) {
    tvsplit::LipschitzProbe probe =
        tvsplit::solution_lipschitz_probe(fam, a, da, {1e-3}, data, lambda);
    ratios.push_back(probe.ratios[0]);
  }
  EXPECT_LE(ratios[1], ratios[0] * 1.05);
  EXPECT_LE(ratios[2], ratios[1] * 1.05);
}

TEST(AlphaGrids, EnumerationIsDeterministicAndComplete) {
  const std::vector<HyperPoint> grid = tvsplit::alpha_grid(2, 10);
  EXPECT_EQ(grid.size(), 66u);  // (m+1)(m+2)/2 for h=2
  EXPECT_DOUBLE_EQ(grid.front()[0], 0.0);
  EXPECT_DOUBLE_EQ(grid.front()[1], 0.0);
  bool has10 = false, has01 = false;
  for (const HyperPoint& a : grid) {
    EXPECT_LE(tvsplit::l1_norm(a), 1.0 + 1e-12);
    if (a[0] == 1.0 && a[1] == 0.0) has10 = true;
    if (a[0] == 0.0 && a[1] == 1.0) has01 = true;
  }
  EXPECT_TRUE(has10);
  EXPECT_TRUE(has01);

  // Lexicographic: second coordinate varies fastest.
  EXPECT_DOUBLE_EQ(grid[1][0], 0.0);
  EXPECT_DOUBLE_EQ(grid[1][1], 0.1);

  const std::vector<HyperPoint> face = tvsplit::alpha_grid_simplex(2, 10);
  EXPECT_EQ(face.size(), 11u);
  for (const HyperPoint& a : face) EXPECT_NEAR(tvsplit::l1_norm(a), 1.0, 1e-12);

  EXPECT_THROW(tvsplit::alpha_grid(0, 10), tvsplit::InvalidArgument);
  EXPECT_THROW(tvsplit::alpha_grid(2, 0), tvsplit::InvalidArgument);
}
