#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scoreflow/nn.hpp"

namespace scoreflow::control {

/// Smallest admissible 1 - t in the score denominator.
inline constexpr double kTimeFloor = 1e-6;

/// Marginal score of the linear Gaussian-source path recovered from a
/// velocity: (t v - a) / (1 - t). Throws DomainError unless 0 <= t <= 1 - kTimeFloor.
std::vector<double> closed_form_score(std::span<const double> v, std::span<const double> a, double t);
void closed_form_score(std::span<const double> v, std::span<const double> a, double t, std::span<double> out);

/// Scalar time -> positive weight; Softplus output, final layer starts at
/// zero weights and bias -2 so every fresh scheduler returns Softplus(-2).
struct ScoreScheduler {
  nn::ParamBundle params;

  friend bool operator==(const ScoreScheduler&, const ScoreScheduler&) = default;
};

inline constexpr double kSchedulerInitBias = -2.0;

/// 1 -> hidden -> hidden -> 1 with SiLU hidden units.
ScoreScheduler make_score_scheduler(std::size_t hidden_dim, std::uint64_t seed);

/// Raw scheduler output before time decay.
double alpha_raw(const ScoreScheduler& sched, double t);
/// (1 - t) * alpha_raw(t); exactly zero at t = 1.
double alpha_scaled(const ScoreScheduler& sched, double t);

/// Bounded per-step standard deviation over the concatenation [a, t, s].
struct VariancePredictor {
  nn::ParamBundle params;
  std::size_t action_dim = 0;
  std::size_t obs_dim = 0;
  double sigma_min = 0.10;
  double sigma_max = 0.24;
  /// Upper bound currently in force; equals sigma_max until the noise-bound
  /// schedule starts decaying it.
  double sigma_max_effective = 0.24;

  friend bool operator==(const VariancePredictor&, const VariancePredictor&) = default;
};

VariancePredictor make_variance_predictor(std::size_t action_dim, std::size_t obs_dim,
                                          const std::vector<std::size_t>& hidden, double sigma_min,
                                          double sigma_max, std::uint64_t seed);

/// sigma_min + (sigma_max - sigma_min) / 2 * (tanh(z) + 1).
double sigma_from_logit(double logit, double sigma_min, double sigma_max);
/// d sigma / d logit for the map above.
double sigma_logit_slope(double logit, double sigma_min, double sigma_max);

double sigma_eval(const VariancePredictor& pred, std::span<const double> a, double t, std::span<const double> s);

/// Training-time schedule for the variance upper bound: hold, then linear
/// decay to mix * sigma_min + (1 - mix) * sigma_max at the last iteration.
struct NoiseBoundSchedule {
  double hold_ratio = 0.35;
  double decay_target_mix = 0.3;
  std::int64_t total_iters = 100;
};

double effective_sigma_max(const NoiseBoundSchedule& schedule, double sigma_min, double sigma_max,
                           std::int64_t iter);

}  // namespace scoreflow::control
