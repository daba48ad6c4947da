#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "scoreflow/env.hpp"
#include "scoreflow/flow.hpp"
#include "scoreflow/nn.hpp"
#include "scoreflow/optim.hpp"
#include "scoreflow/rng.hpp"
#include "scoreflow/sampler.hpp"
#include "scoreflow/score_control.hpp"

namespace scoreflow::rl {

using sampler::chain_entropy;

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Generalized advantage estimation over one stream. `values` has length
/// T + 1; the last entry bootstraps the tail and is ignored after a done.
GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
              double gamma, double lambda);

/// min(r A, clip(r, 1 - eps, 1 + eps) A) with r = exp(new - old).
double ppo_surrogate(double new_log_prob, double old_log_prob, double advantage, double clip_eps);

/// Mean 0 / std 1 rescaling; only centers when the std is below `eps`.
void normalize_advantages(std::vector<double>& adv, double eps = 1e-8);

/// Welford accumulator.
struct RunningStat {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x);
  double variance() const { return count > 1.0 ? m2 / count : 0.0; }

  friend bool operator==(const RunningStat&, const RunningStat&) = default;
};

/// Divides rewards by the running std of the discounted return.
struct RewardNormalizer {
  RunningStat stat;
  std::vector<double> running_returns;
  double gamma = 0.99;
  double eps = 1e-8;

  /// Updates the running statistics from rewards laid out [env][step] and
  /// returns the common divisor applied to the batch.
  double update(std::span<const double> rewards, std::span<const std::uint8_t> dones, std::size_t n_envs,
                std::size_t n_steps);
  double divisor() const;

  friend bool operator==(const RewardNormalizer&, const RewardNormalizer&) = default;
};

struct Critic {
  nn::ParamBundle params;

  friend bool operator==(const Critic&, const Critic&) = default;
};

Critic make_critic(std::size_t obs_dim, const std::vector<std::size_t>& hidden, std::uint64_t seed);
double critic_value(const Critic& critic, std::span<const double> obs);

/// coef * mean (V(s_i) - target_i)^2 over rows of `obs`; accumulates the
/// gradient into `grad` when non-null.
double critic_loss(const nn::ParamBundle& critic, std::span<const double> obs, std::span<const double> targets,
                   double coef, nn::Gradient* grad);

struct PPOConfig {
  double clip_eps = 0.01;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  std::size_t update_epochs = 5;
  std::size_t minibatch_size = 80;
  double entropy_coef = 0.03;
  double bc_coef = 0.01;
  double critic_coef = 0.5;
  double target_kl = 1.0;
  double max_grad_norm = 25.0;
  bool normalize_advantage = true;
  bool normalize_reward = true;
  std::size_t critic_warmup_iters = 0;
  bool train_velocity = true;
};

/// One environment transition produced by the chained-denoising policy.
struct Transition {
  std::vector<double> obs;
  sampler::FlowTrajectory traj;
  std::vector<double> env_action;
  double reward = 0.0;         // raw environment reward
  double train_reward = 0.0;   // reward after normalization
  bool done = false;
  double value = 0.0;
  double old_log_prob = 0.0;
};

struct RolloutBatch {
  std::size_t n_envs = 0;
  std::size_t n_steps = 0;
  std::vector<Transition> items;  // env-major: items[env * n_steps + step]
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<double> episode_returns;  // raw, one per completed episode
  double reward_divisor = 1.0;

  std::size_t size() const { return items.size(); }
};

/// Everything that changes during fine-tuning.
struct Learner {
  sampler::Policy policy;
  Critic critic;
  nn::OptimizerState opt_velocity;
  nn::OptimizerState opt_scheduler;
  nn::OptimizerState opt_variance;
  nn::OptimizerState opt_critic;
  RewardNormalizer reward_norm;
  std::int64_t iteration = 0;

  friend bool operator==(const Learner&, const Learner&) = default;
};

struct PpoDiagnostics {
  std::vector<double> epoch_kl;
  double approx_kl = 0.0;
  double clip_frac = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double bc_loss = 0.0;
  double first_minibatch_ratio = 1.0;
  double grad_norm = 0.0;
  std::size_t epochs_run = 0;
  bool early_stopped = false;
};

/// Clipped-surrogate update of the policy networks and a regression update of
/// the critic. On a non-finite loss the learner is restored and NumericError
/// is thrown.
PpoDiagnostics ppo_update(const RolloutBatch& batch, Learner& learner, const sampler::SamplerConfig& sampler_config,
                          const PPOConfig& config, const flow::DemoDataset* demos, double actor_lr, double critic_lr,
                          Rng& rng, bool critic_only = false);

/// Rolls every environment through one full episode.
RolloutBatch collect_rollouts(const Learner& learner, const sampler::SamplerConfig& sampler_config,
                              const flow::ActionNormalizer& normalizer, const PointMassConfig& env_config,
                              std::size_t n_envs, Rng& rng);

/// Fills reward normalization, GAE advantages and returns.
void finish_batch(RolloutBatch& batch, Learner& learner, const PPOConfig& config);

struct LrSchedule {
  double base = 3e-4;
  double min = 3e-4;
  std::int64_t cycle_steps = 100;
  std::int64_t warmup_steps = 0;

  double at(std::int64_t step) const;
};

struct FinetuneConfig {
  PointMassConfig env;
  std::size_t n_envs = 8;
  std::size_t n_iters = 100;
  sampler::SamplerConfig sampler;
  PPOConfig ppo;
  control::NoiseBoundSchedule noise;
  LrSchedule actor_lr{1e-4, 5e-5, 100, 0};
  LrSchedule critic_lr{1e-3, 5e-4, 100, 10};
  std::vector<std::size_t> critic_hidden{256, 256, 256};
  std::size_t score_hidden_dim = 16;
  std::vector<std::size_t> variance_hidden{64, 64};
  double sigma_min = 0.10;
  double sigma_max = 0.24;
};

/// Attaches fresh control heads, critic and optimizers to a pretrained field.
Learner make_learner(const flow::VelocityField& pretrained, const FinetuneConfig& config, std::uint64_t seed);

struct IterationMetrics {
  std::int64_t iter = 0;
  double return_mean = 0.0;
  double return_std = 0.0;
  double approx_kl = 0.0;
  double clip_frac = 0.0;
  double entropy = 0.0;
  double sigma_mean = 0.0;
  double alpha_mean_at_t0 = 0.0;
  double actor_lr = 0.0;
  double critic_lr = 0.0;
  std::size_t epochs_run = 0;
  bool early_stopped = false;
  double first_minibatch_ratio = 1.0;

  friend bool operator==(const IterationMetrics&, const IterationMetrics&) = default;
};

using IterationCallback = std::function<void(const IterationMetrics&, const Learner&)>;

struct FinetuneResult {
  Learner learner;
  std::vector<IterationMetrics> metrics;
};

/// Runs iterations learner.iteration .. n_iters - 1: collect, GAE, PPO,
/// noise-bound schedule. Deterministic given `seed`.
FinetuneResult finetune(Learner learner, const flow::DemoDataset& demos, const FinetuneConfig& config,
                        std::uint64_t seed, const IterationCallback& on_iteration = {});

enum class EvalMode { kStochastic, kDeterministicOde };

/// Episode returns over `episodes` resets drawn from Rng(seed); the reset
/// sequence depends only on the seed so different policies see the same starts.
std::vector<double> evaluate_policy(const sampler::Policy& policy, const sampler::SamplerConfig& sampler_config,
                                    const flow::ActionNormalizer& normalizer, const PointMassConfig& env_config,
                                    std::size_t episodes, std::uint64_t seed, EvalMode mode);

}  // namespace scoreflow::rl
