#pragma once

#include <span>

namespace scoreflow::stats {

double mean(std::span<const double> x);
/// Unbiased sample variance.
double sample_variance(std::span<const double> x);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of freedom.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace scoreflow::stats
