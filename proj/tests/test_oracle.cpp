#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "scoreflow/error.hpp"
#include "scoreflow/flow.hpp"
#include "scoreflow/oracle.hpp"
#include "scoreflow/score_control.hpp"

using namespace scoreflow;
using namespace scoreflow::oracle;

namespace {

MixtureData two_modes() { return MixtureData({{0.5, {-1.0}, 0.0625}, {0.5, {1.0}, 0.0625}}); }

}  // namespace

TEST(GaussianMarginalScore, TimeZeroIsSourceScore) {
  const GaussianData g({1.5, -2.0}, 0.7);
  const std::vector<double> a{0.3, 0.8};
  const auto s = gaussian_marginal_score(g, a, 0.0);
  EXPECT_EQ(s[0], -0.3);
  EXPECT_EQ(s[1], -0.8);
}

TEST(GaussianMarginalScore, OneDimExample) {
  // var = 0.25 + 0.25 * 4 = 1.25, score = -1 / 1.25
  const GaussianData g({0.0}, 4.0);
  const std::vector<double> a{1.0};
  EXPECT_NEAR(gaussian_marginal_score(g, a, 0.5)[0], -0.8, 1e-15);
}

TEST(GaussianMarginalScore, ZeroAtMode) {
  const GaussianData g({2.0, -1.0}, 0.5);
  const std::vector<double> a{0.6, -0.3};
  const auto s = gaussian_marginal_score(g, a, 0.3);
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 0.0);
}

TEST(GaussianOptimalVelocity, OneDimExample) {
  // posterior precision 1/4 + 0.25/0.25 = 1.25, mean = (0.5 * 1 / 0.25) / 1.25 = 1.6
  const GaussianData g({0.0}, 4.0);
  const std::vector<double> a{1.0};
  EXPECT_NEAR(gaussian_posterior_mean(g, a, 0.5)[0], 1.6, 1e-14);
  EXPECT_NEAR(gaussian_optimal_velocity(g, a, 0.5)[0], 1.2, 1e-14);
}

TEST(GaussianOptimalVelocity, SmallTimeApproachesMeanMinusPoint) {
  const GaussianData g({0.7}, 2.0);
  const std::vector<double> a{-0.4};
  // v = m - a + O(t)
  EXPECT_NEAR(gaussian_optimal_velocity(g, a, 1e-6)[0], 0.7 - -0.4, 1e-5);
}

TEST(GaussianOptimalVelocity, ZeroAtOriginForCenteredData) {
  const GaussianData g({0.0, 0.0}, 3.0);
  const std::vector<double> a{0.0, 0.0};
  const auto v = gaussian_optimal_velocity(g, a, 0.6);
  EXPECT_EQ(v[0], 0.0);
  EXPECT_EQ(v[1], 0.0);
}

TEST(DualityCheck, OneDimExampleTight) {
  const GaussianData g({0.0}, 4.0);
  const std::vector<double> a{1.0};
  EXPECT_LT(duality_check(g, a, 0.5), 1e-12);
}

TEST(DualityCheck, TimeZeroExact) {
  const GaussianData g({0.3, 0.4}, 1.7);
  const std::vector<double> a{-1.0, 2.0};
  EXPECT_EQ(duality_check(g, a, 0.0), 0.0);
}

TEST(DualitySweep, TenThousandCasesBelowTolerance) {
  const auto r = duality_sweep(10000, 3, 2024);
  EXPECT_EQ(r.cases, 10000u);
  EXPECT_LT(r.max_residual, 1e-10) << "worst t " << r.worst_t;
}

TEST(DualitySweep, NearEndOfTimeStillTight) {
  const GaussianData g({2.5}, 0.05);
  const std::vector<double> a{-3.0};
  EXPECT_LT(duality_check(g, a, 0.999), 1e-10);
}

TEST(MixtureData, WeightsMustSumToOne) {
  EXPECT_THROW(MixtureData({{0.5, {0.0}, 1.0}, {0.4, {1.0}, 1.0}}), DomainError);
  EXPECT_THROW(MixtureData({{1.0, {0.0}, -1.0}}), DomainError);
  EXPECT_THROW(MixtureData({}), ConfigError);
}

TEST(MixtureScore, SingleComponentEqualsGaussian) {
  const MixtureData m({{1.0, {0.4, -0.2}, 0.8}});
  const GaussianData g({0.4, -0.2}, 0.8);
  const std::vector<double> a{1.1, 0.3};
  for (double t : {0.0, 0.3, 0.9, 0.999}) EXPECT_EQ(mixture_score(m, a, t), gaussian_marginal_score(g, a, t));
}

TEST(MixtureScore, SymmetricPairZeroAtOrigin) {
  const std::vector<double> a{0.0};
  for (double t : {0.1, 0.5, 0.95}) EXPECT_NEAR(mixture_score(two_modes(), a, t)[0], 0.0, 1e-15);
}

TEST(MixtureScore, FarTailsDoNotUnderflow) {
  const std::vector<double> a{40.0};
  const auto s = mixture_score(two_modes(), a, 0.999);
  EXPECT_TRUE(std::isfinite(s[0]));
  EXPECT_LT(s[0], 0.0);
}

TEST(MixtureScore, MatchesFiniteDifferenceOfLogDensity) {
  const MixtureData m({{0.2, {-2.0}, 0.3}, {0.5, {0.5}, 0.1}, {0.3, {1.8}, 0.6}});
  for (double t : {0.0, 0.4, 0.8}) {
    for (double x : {-1.5, 0.0, 0.7, 2.2}) {
      const double h = 1e-6;
      const std::vector<double> p{x + h}, q{x - h}, a{x};
      const double fd = (mixture_log_density(m, p, t) - mixture_log_density(m, q, t)) / (2 * h);
      EXPECT_NEAR(mixture_score(m, a, t)[0], fd, 1e-6);
    }
  }
}

TEST(McPosteriorScore, GaussianDataWithinThreeSe) {
  const MixtureData m({{1.0, {0.5}, 1.5}});
  const GaussianData g({0.5}, 1.5);
  const std::vector<double> a{0.9};
  const auto r = mc_posterior_score(m, a, 0.6, 100000, 7);
  EXPECT_FALSE(r.low_ess);
  EXPECT_LT(std::abs(r.estimate[0] - gaussian_marginal_score(g, a, 0.6)[0]), 3.0 * r.std_error[0]);
}

TEST(McPosteriorScore, TimeZeroGivesSourceScore) {
  const std::vector<double> a{0.8};
  const auto r = mc_posterior_score(two_modes(), a, 0.0, 5000, 1);
  EXPECT_NEAR(r.ess, 5000.0, 1e-6);
  EXPECT_LE(std::abs(r.estimate[0] - -0.8), 3.0 * r.std_error[0] + 1e-15);
}

TEST(McPosteriorScore, ThreeComponentMatchesAnalytic) {
  const MixtureData m({{0.3, {-1.5}, 0.2}, {0.45, {0.2}, 0.5}, {0.25, {2.0}, 0.1}});
  const std::vector<double> a{0.4};
  const auto r = mc_posterior_score(m, a, 0.5, 100000, 3);
  EXPECT_LT(std::abs(r.estimate[0] - mixture_score(m, a, 0.5)[0]), 3.0 * r.std_error[0]);
}

TEST(McPosteriorScore, SameSeedIdentical) {
  const std::vector<double> a{0.2};
  const auto x = mc_posterior_score(two_modes(), a, 0.5, 2000, 9);
  const auto y = mc_posterior_score(two_modes(), a, 0.5, 2000, 9);
  EXPECT_EQ(x.estimate, y.estimate);
  EXPECT_EQ(x.std_error, y.std_error);
}

TEST(McPosteriorScore, TooFewSamplesRejected) {
  const std::vector<double> a{0.2};
  EXPECT_THROW(mc_posterior_score(two_modes(), a, 0.5, 999, 9), DomainError);
}

TEST(McPosteriorScore, LowEssFlagged) {
  // narrow posterior far from the data: few samples carry weight
  const std::vector<double> a{2.9};
  const auto r = mc_posterior_score(two_modes(), a, 0.99, 1000, 4);
  EXPECT_TRUE(r.low_ess);
}

TEST(McPosteriorScore, StandardErrorShrinksAsRootN) {
  const MixtureData m({{0.4, {-1.0}, 0.3}, {0.6, {1.2}, 0.4}});
  const std::vector<double> a{0.3};
  // least-squares slope of log SE on log n over a doubling ladder
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const std::size_t ladder[4] = {20000, 40000, 80000, 160000};
  for (std::size_t n : ladder) {
    const auto r = mc_posterior_score(m, a, 0.3, n, 11);
    const double x = std::log(static_cast<double>(n)), y = std::log(r.std_error[0]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (4 * sxy - sx * sy) / (4 * sxx - sx * sx);
  EXPECT_GE(-slope, 0.4);
  EXPECT_LE(-slope, 0.6);
}

TEST(TrainedDuality, ZeroFieldExactAtTimeZero) {
  auto f = flow::make_velocity_field(1, 0, {8}, 0);
  f.params.set_zero();
  const std::vector<double> a_grid{-1.0, -0.5, 0.0, 0.5, 1.0}, t_grid{0.0};
  const auto r = trained_velocity_duality(f, two_modes(), a_grid, t_grid);
  for (double e : r.errors) EXPECT_EQ(e, 0.0);
}

TEST(TrainedDuality, BulkExcludesLowDensityTail) {
  auto f = flow::make_velocity_field(1, 0, {8}, 0);
  std::vector<double> a_grid;
  for (int i = -30; i <= 30; ++i) a_grid.push_back(i * 0.1);
  const std::vector<double> t_grid{0.0, 0.5};
  const auto r = trained_velocity_duality(f, two_modes(), a_grid, t_grid);
  EXPECT_EQ(r.grid_points, 122u);
  EXPECT_LT(r.bulk_points, r.grid_points);
  EXPECT_GE(r.bulk_points, 115u);
}

TEST(TrainedDuality, ObservationFieldRejected) {
  const auto f = flow::make_velocity_field(1, 2, {8}, 0);
  const std::vector<double> g{0.0};
  EXPECT_THROW(trained_velocity_duality(f, two_modes(), g, g), ShapeError);
}

TEST(TrainedDuality, NearPointMassDataReducesToConditionalScore) {
  // s1^2 -> small: the marginal score approaches -(a - t a1) / (1 - t)^2
  const GaussianData g({0.6}, 1e-10);
  const std::vector<double> a{0.1};
  for (double t : {0.2, 0.5, 0.9}) {
    EXPECT_NEAR(gaussian_marginal_score(g, a, t)[0], -(0.1 - t * 0.6) / ((1 - t) * (1 - t)), 1e-6);
    EXPECT_TRUE(std::isfinite(duality_check(g, a, t)));
  }
}
