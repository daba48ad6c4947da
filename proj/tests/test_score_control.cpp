#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "scoreflow/error.hpp"
#include "scoreflow/oracle.hpp"
#include "scoreflow/rng.hpp"
#include "scoreflow/score_control.hpp"

using namespace scoreflow;
using namespace scoreflow::control;

namespace {

// ln(1 + e^-2), evaluated with mpmath to 30 digits then rounded.
constexpr double kSoftplusMinus2 = 0.1269280110429725;

ScoreScheduler constant_scheduler(double raw) {
  auto s = make_score_scheduler(16, 0);
  // Softplus^-1(raw) = ln(e^raw - 1)
  s.params.bias(s.params.num_layers() - 1)[0] = std::log(std::expm1(raw));
  return s;
}

}  // namespace

TEST(ClosedFormScore, TimeZeroIsNegatedPoint) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> v{rng.normal(), rng.normal()}, a{rng.normal(), rng.normal()};
    const auto s = closed_form_score(v, a, 0.0);
    EXPECT_EQ(s[0], -a[0]);
    EXPECT_EQ(s[1], -a[1]);
  }
}

TEST(ClosedFormScore, OriginAtHalfReturnsVelocity) {
  const std::vector<double> v{0.7, -1.3}, a{0.0, 0.0};
  const auto s = closed_form_score(v, a, 0.5);
  EXPECT_EQ(s[0], 0.7);
  EXPECT_EQ(s[1], -1.3);
}

TEST(ClosedFormScore, GaussianDataMatchesAnalyticScore) {
  // a1 ~ N(0, 4), t = 0.5: a_t ~ N(0, 0.25 + 0.25 * 4) = N(0, 1.25).
  // optimal v = E[a1 - a0 | a_t = 1] = 1.2 and the marginal score is -1 / 1.25 = -0.8.
  const oracle::GaussianData g({0.0}, 4.0);
  const std::vector<double> a{1.0};
  const auto v = oracle::gaussian_optimal_velocity(g, a, 0.5);
  EXPECT_NEAR(v[0], 1.2, 1e-14);
  const auto s = closed_form_score(v, a, 0.5);
  EXPECT_NEAR(s[0], -0.8, 1e-14);
  EXPECT_NEAR(s[0], oracle::gaussian_marginal_score(g, a, 0.5)[0], 1e-14);
}

TEST(ClosedFormScore, OutsideFloorThrows) {
  const std::vector<double> v{1.0}, a{1.0};
  EXPECT_THROW(closed_form_score(v, a, 1.0), DomainError);
  EXPECT_THROW(closed_form_score(v, a, 1.0 - 1e-7), DomainError);
  EXPECT_THROW(closed_form_score(v, a, -0.01), DomainError);
  EXPECT_NO_THROW(closed_form_score(v, a, 1.0 - kTimeFloor));
}

TEST(AlphaScaled, ZeroAtOneExactly) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = make_score_scheduler(16, seed);
    Rng rng(seed);
    for (double& w : s.params.values()) w = rng.normal();
    EXPECT_EQ(alpha_scaled(s, 1.0), 0.0);
  }
}

TEST(AlphaScaled, FreshSchedulerIsSoftplusOfInitBias) {
  for (std::uint64_t seed : {0u, 5u, 99u}) {
    const auto s = make_score_scheduler(16, seed);
    for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      EXPECT_NEAR(alpha_raw(s, t), kSoftplusMinus2, 1e-15);
      EXPECT_NEAR(alpha_scaled(s, t), (1.0 - t) * kSoftplusMinus2, 1e-15);
    }
  }
}

TEST(AlphaScaled, ConstructedNetHalvesAtHalf) {
  const auto s = constant_scheduler(0.2);
  EXPECT_NEAR(alpha_raw(s, 0.5), 0.2, 1e-15);
  EXPECT_NEAR(alpha_scaled(s, 0.5), 0.1, 1e-15);
}

TEST(AlphaScaled, NonNegativeOnRandomNets) {
  Rng rng(3);
  for (int n = 0; n < 50; ++n) {
    auto s = make_score_scheduler(16, n);
    for (double& w : s.params.values()) w = 3.0 * rng.normal();
    for (int i = 0; i <= 100; ++i) EXPECT_GE(alpha_scaled(s, i / 100.0), 0.0);
  }
}

TEST(ScoreScheduler, ParameterCountIsFixed) {
  // 1*16+16 + 16*16+16 + 16*1+1 = 32 + 272 + 17
  EXPECT_EQ(make_score_scheduler(16, 0).params.size(), 321u);
}

TEST(ModulatedDrift, BoundedByScaledInputs) {
  // |alpha_raw (1-t) (t v - a)/(1-t)| <= sup alpha_raw (|v| + |a|)
  Rng rng(11);
  double worst = 0.0;
  for (int n = 0; n < 200; ++n) {
    auto s = make_score_scheduler(16, n);
    for (double& w : s.params.values()) w = rng.normal();
    double sup = 0.0;
    for (int i = 0; i <= 1000; ++i) sup = std::max(sup, alpha_raw(s, i / 1000.0));
    for (int k = 0; k < 4; ++k) {
      const double t = k / 4.0;
      const std::vector<double> v{rng.uniform(-5, 5)}, a{rng.uniform(-3, 3)};
      const double drift = std::abs(alpha_scaled(s, t) * closed_form_score(v, a, t)[0]);
      const double bound = sup * (std::abs(v[0]) + std::abs(a[0]));
      worst = std::max(worst, drift / bound);
    }
  }
  EXPECT_LE(worst, 1.0 + 1e-12);
}

TEST(Sigma, ZeroLogitIsMidpoint) { EXPECT_NEAR(sigma_from_logit(0.0, 0.10, 0.24), 0.17, 1e-15); }

TEST(Sigma, LargeLogitApproachesUpperBound) {
  EXPECT_NEAR(sigma_from_logit(50.0, 0.10, 0.24), 0.24, 1e-15);
  EXPECT_NEAR(sigma_from_logit(-50.0, 0.10, 0.24), 0.10, 1e-15);
}

TEST(Sigma, UnitLogit) {
  // 0.10 + 0.07 (tanh 1 + 1), tanh 1 = 0.7615941559557649 (mpmath)
  EXPECT_NEAR(sigma_from_logit(1.0, 0.10, 0.24), 0.22331159091690356, 1e-15);
}

TEST(Sigma, SlopeMatchesFiniteDifference) {
  for (double z : {-2.0, -0.3, 0.0, 0.8, 2.5}) {
    const double h = 1e-6;
    const double fd = (sigma_from_logit(z + h, 0.1, 0.24) - sigma_from_logit(z - h, 0.1, 0.24)) / (2 * h);
    EXPECT_NEAR(sigma_logit_slope(z, 0.1, 0.24), fd, 1e-9);
  }
}

TEST(Sigma, StrictlyInsideBoundsOnRandomInputs) {
  Rng rng(21);
  auto p = make_variance_predictor(2, 4, {16, 16}, 0.10, 0.24, 1);
  for (double& w : p.params.values()) w = rng.normal();
  std::vector<double> a(2), s(4);
  for (int i = 0; i < 100000; ++i) {
    rng.fill_normal(a);
    rng.fill_normal(s);
    const double sigma = sigma_eval(p, a, rng.uniform(), s);
    ASSERT_GT(sigma, 0.10);
    ASSERT_LT(sigma, 0.24);
  }
}

TEST(Sigma, InvertedBoundsAreConfigError) {
  EXPECT_THROW(make_variance_predictor(1, 0, {4}, 0.24, 0.10, 0), ConfigError);
  EXPECT_THROW(make_variance_predictor(1, 0, {4}, 0.2, 0.2, 0), ConfigError);
}

TEST(NoiseBound, HoldRatioOneNeverDecays) {
  NoiseBoundSchedule s{1.0, 0.3, 100};
  for (int it = 0; it <= 100; ++it) EXPECT_EQ(effective_sigma_max(s, 0.10, 0.24, it), 0.24);
}

TEST(NoiseBound, FinalIterationHitsMixTarget) {
  NoiseBoundSchedule s{0.35, 0.3, 100};
  // 0.3 * 0.10 + 0.7 * 0.24
  EXPECT_NEAR(effective_sigma_max(s, 0.10, 0.24, 100), 0.198, 1e-15);
}

TEST(NoiseBound, HoldBoundaryStillAtMax) {
  NoiseBoundSchedule s{0.35, 0.3, 100};
  EXPECT_EQ(effective_sigma_max(s, 0.10, 0.24, 35), 0.24);
  EXPECT_LT(effective_sigma_max(s, 0.10, 0.24, 36), 0.24);
}

TEST(NoiseBound, NonIncreasingAndAboveMin) {
  NoiseBoundSchedule s{0.2, 1.0, 50};
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= 50; ++it) {
    const double e = effective_sigma_max(s, 0.10, 0.24, it);
    EXPECT_LE(e, prev);
    EXPECT_GE(e, 0.10);
    prev = e;
  }
}
