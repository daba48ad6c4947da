#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scoreflow/sampler.hpp"

namespace scoreflow::verify {

/// One named check: `value` is compared against `threshold` (pass iff value <= threshold).
struct CheckResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string detail;
};

CheckResult make_result(std::string name, double value, double threshold, std::string detail = {});

/// Random policy over (action_dim, obs_dim) with small hidden layers and a
/// scheduler whose output varies with t.
sampler::Policy random_policy(std::size_t action_dim, std::size_t obs_dim, std::uint64_t seed,
                              std::size_t hidden = 16);

/// Analytic Gaussian duality residual over random (a, t, m, s1^2).
CheckResult duality_sweep_check(std::size_t cases = 10000, std::uint64_t seed = 1);

/// Importance-sampled posterior score against the closed-form mixture score:
/// value is the largest |estimate - exact| / SE over all triples.
CheckResult posterior_identity_check(std::size_t triples = 50, std::size_t samples = 100000, std::uint64_t seed = 1);

struct TrainedDualityOptions {
  std::size_t data_points = 20000;
  std::vector<std::size_t> hidden{64, 64, 64};
  std::size_t steps = 4000;
  std::size_t batch_size = 256;
  double lr = 2e-3;
  double min_lr = 1e-4;
  std::uint64_t seed = 7;
};

/// Pretrains an observation-free field on the +-1 / 0.25 two-mode mixture and
/// reports the median bulk score error.
CheckResult trained_duality_check(const TrainedDualityOptions& options = {});

/// Recomputed log-likelihood of sampled chains against the accumulated value, all variants.
CheckResult replay_check(std::size_t trajectories = 1000, std::uint64_t seed = 1);

/// Means under variance-head perturbations and sigmas under scheduler
/// perturbations, replayed on the same chain inputs.
std::vector<CheckResult> decoupling_checks(std::size_t perturbations = 100, std::uint64_t seed = 1);

/// alpha_scaled(1) = 0, drift bound, and fresh-init schedule.
std::vector<CheckResult> boundary_checks(std::size_t points = 100000, std::uint64_t seed = 1);

/// Finite-difference checks of every analytic gradient used in training.
std::vector<CheckResult> gradient_checks(std::uint64_t seed = 1);

/// Ratio-one start, clipped-surrogate cases and KL early stopping.
std::vector<CheckResult> ppo_mechanics_checks(std::uint64_t seed = 1);

/// sigma^2 == 2 lambda on every step of coupled-variant rollouts.
CheckResult coupling_check(std::size_t rollouts = 200, std::uint64_t seed = 1);

/// Frozen reference values for closed-form quantities.
std::vector<CheckResult> reference_value_checks();

/// Everything above; `include_training` adds the trained-duality check.
std::vector<CheckResult> run_battery(bool include_training);

}  // namespace scoreflow::verify
