#include <algorithm>
#include <cmath>
#include <numeric>

#include "scoreflow/error.hpp"
#include "scoreflow/rl.hpp"

namespace scoreflow::rl {

namespace {

constexpr std::uint64_t kCollectStream = 0xc011;
constexpr std::uint64_t kUpdateStream = 0x0bd7;
constexpr std::uint64_t kEvalResetStream = 0xe1;
constexpr std::uint64_t kEvalChainStream = 0xe2;

std::vector<double> clip_final(std::span<const double> a, double bound) {
  std::vector<double> out(a.begin(), a.end());
  for (auto& x : out) x = std::clamp(x, -bound, bound);
  return out;
}

}  // namespace

double LrSchedule::at(std::int64_t step) const {
  return nn::cosine_warm_restart_lr(base, min, cycle_steps, warmup_steps, step);
}

RolloutBatch collect_rollouts(const Learner& learner, const sampler::SamplerConfig& sampler_config,
                              const flow::ActionNormalizer& normalizer, const PointMassConfig& env_config,
                              std::size_t n_envs, Rng& rng) {
  if (n_envs == 0) throw ConfigError("n_envs must be positive");
  RolloutBatch batch;
  batch.n_envs = n_envs;
  batch.n_steps = env_config.horizon;
  batch.items.reserve(n_envs * env_config.horizon);
  for (std::size_t e = 0; e < n_envs; ++e) {
    Rng env_rng = rng.split(e);
    PointMassEnv env(env_config);
    auto obs = env.reset(env_rng);
    double episode_return = 0.0;
    while (!env.done()) {
      Transition tr;
      tr.obs.assign(obs.begin(), obs.end());
      tr.traj = sampler::sample_action(learner.policy, tr.obs, sampler_config, env_rng);
      tr.old_log_prob = tr.traj.log_prob;
      tr.value = critic_value(learner.critic, tr.obs);
      tr.env_action = normalizer.denormalize(tr.traj.final_action());
      const auto res = env.step(tr.env_action);
      tr.reward = res.reward;
      tr.train_reward = res.reward;
      tr.done = res.done;
      episode_return += res.reward;
      obs = res.obs;
      batch.items.push_back(std::move(tr));
    }
    batch.episode_returns.push_back(episode_return);
  }
  return batch;
}

void finish_batch(RolloutBatch& batch, Learner& learner, const PPOConfig& config) {
  const std::size_t n = batch.size();
  if (n != batch.n_envs * batch.n_steps) throw ShapeError("finish_batch: batch layout mismatch");
  std::vector<double> rewards(n);
  std::vector<std::uint8_t> dones(n);
  for (std::size_t i = 0; i < n; ++i) {
    rewards[i] = batch.items[i].reward;
    dones[i] = batch.items[i].done ? 1 : 0;
  }
  batch.reward_divisor = 1.0;
  if (config.normalize_reward) {
    learner.reward_norm.gamma = config.gamma;
    batch.reward_divisor = learner.reward_norm.update(rewards, dones, batch.n_envs, batch.n_steps);
  }
  batch.advantages.assign(n, 0.0);
  batch.returns.assign(n, 0.0);
  std::vector<double> r(batch.n_steps), v(batch.n_steps + 1, 0.0);
  std::vector<std::uint8_t> d(batch.n_steps);
  for (std::size_t e = 0; e < batch.n_envs; ++e) {
    for (std::size_t t = 0; t < batch.n_steps; ++t) {
      auto& tr = batch.items[e * batch.n_steps + t];
      tr.train_reward = tr.reward / batch.reward_divisor;
      r[t] = tr.train_reward;
      v[t] = tr.value;
      d[t] = tr.done ? 1 : 0;
    }
    const auto& last = batch.items[e * batch.n_steps + batch.n_steps - 1];
    v[batch.n_steps] = last.done ? 0.0 : critic_value(learner.critic, last.obs);
    const auto g = gae(r, v, d, config.gamma, config.gae_lambda);
    std::copy(g.advantages.begin(), g.advantages.end(), batch.advantages.begin() + e * batch.n_steps);
    std::copy(g.returns.begin(), g.returns.end(), batch.returns.begin() + e * batch.n_steps);
  }
}

Learner make_learner(const flow::VelocityField& pretrained, const FinetuneConfig& config, std::uint64_t seed) {
  Rng seeds(seed, 0x1ea7);
  Learner l;
  l.policy.velocity = pretrained;
  l.policy.heads.scheduler = control::make_score_scheduler(config.score_hidden_dim, seeds.next_u64());
  l.policy.heads.variance = control::make_variance_predictor(pretrained.action_dim, pretrained.obs_dim,
                                                             config.variance_hidden, config.sigma_min,
                                                             config.sigma_max, seeds.next_u64());
  l.critic = make_critic(pretrained.obs_dim, config.critic_hidden, seeds.next_u64());
  l.opt_velocity = nn::adam_init(l.policy.velocity.params);
  l.opt_scheduler = nn::adam_init(l.policy.heads.scheduler.params);
  l.opt_variance = nn::adam_init(l.policy.heads.variance.params);
  l.opt_critic = nn::adam_init(l.critic.params);
  l.reward_norm.gamma = config.ppo.gamma;
  return l;
}

FinetuneResult finetune(Learner learner, const flow::DemoDataset& demos, const FinetuneConfig& config,
                        std::uint64_t seed, const IterationCallback& on_iteration) {
  if (demos.action_dim != learner.policy.action_dim() || demos.obs_dim != learner.policy.obs_dim()) {
    throw ShapeError("finetune: demonstration dims do not match the policy");
  }
  control::NoiseBoundSchedule noise = config.noise;
  noise.total_iters = static_cast<std::int64_t>(config.n_iters);

  FinetuneResult result;
  for (std::int64_t it = learner.iteration; it < static_cast<std::int64_t>(config.n_iters); ++it) {
    auto& var = learner.policy.heads.variance;
    var.sigma_max_effective = control::effective_sigma_max(noise, var.sigma_min, var.sigma_max, it);
    const double actor_lr = config.actor_lr.at(it);
    const double critic_lr = config.critic_lr.at(it);
    const auto iu = static_cast<std::uint64_t>(it);

    Rng collect_rng = Rng(seed, kCollectStream).split(iu);
    RolloutBatch batch = collect_rollouts(learner, config.sampler, demos.normalizer, config.env, config.n_envs,
                                          collect_rng);
    finish_batch(batch, learner, config.ppo);

    Rng update_rng = Rng(seed, kUpdateStream).split(iu);
    const bool critic_only = it < static_cast<std::int64_t>(config.ppo.critic_warmup_iters);
    const PpoDiagnostics diag =
        ppo_update(batch, learner, config.sampler, config.ppo, &demos, actor_lr, critic_lr, update_rng, critic_only);

    IterationMetrics m;
    m.iter = it;
    const double ne = static_cast<double>(batch.episode_returns.size());
    m.return_mean = std::accumulate(batch.episode_returns.begin(), batch.episode_returns.end(), 0.0) / ne;
    double ss = 0.0;
    for (double r : batch.episode_returns) ss += (r - m.return_mean) * (r - m.return_mean);
    m.return_std = std::sqrt(ss / ne);
    m.approx_kl = diag.approx_kl;
    m.clip_frac = diag.clip_frac;
    const double dt = 1.0 / static_cast<double>(config.sampler.steps);
    double sig = 0.0, w0 = 0.0, ent = 0.0, cnt = 0.0;
    for (const auto& tr : batch.items) {
      for (double s : tr.traj.sigmas) sig += s;
      cnt += static_cast<double>(tr.traj.sigmas.size());
      w0 += tr.traj.drift_weights.front();
      ent += chain_entropy(tr.traj.sigmas, learner.policy.action_dim(), dt);
    }
    const double nb = static_cast<double>(batch.size());
    m.sigma_mean = sig / cnt;
    m.alpha_mean_at_t0 = w0 / nb;
    m.entropy = ent / nb;
    m.actor_lr = actor_lr;
    m.critic_lr = critic_lr;
    m.epochs_run = diag.epochs_run;
    m.early_stopped = diag.early_stopped;
    m.first_minibatch_ratio = diag.first_minibatch_ratio;

    learner.iteration = it + 1;
    result.metrics.push_back(m);
    if (on_iteration) on_iteration(m, learner);
  }
  result.learner = std::move(learner);
  return result;
}

std::vector<double> evaluate_policy(const sampler::Policy& policy, const sampler::SamplerConfig& sampler_config,
                                    const flow::ActionNormalizer& normalizer, const PointMassConfig& env_config,
                                    std::size_t episodes, std::uint64_t seed, EvalMode mode) {
  Rng reset_rng(seed, kEvalResetStream);
  Rng chain_rng(seed, kEvalChainStream);
  std::vector<double> returns;
  returns.reserve(episodes);
  const std::size_t d = policy.action_dim();
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    PointMassEnv env(env_config);
    auto obs = env.reset(reset_rng);
    double total = 0.0;
    while (!env.done()) {
      std::vector<double> action;
      if (mode == EvalMode::kStochastic) {
        const auto traj = sampler::sample_action(policy, obs, sampler_config, chain_rng);
        action = normalizer.denormalize(traj.final_action());
      } else {
        std::vector<double> a0(d);
        chain_rng.fill_normal(a0);
        const auto a = flow::ode_integrate(policy.velocity, obs, sampler_config.steps, std::move(a0));
        action = normalizer.denormalize(clip_final(a, sampler_config.clip.final));
      }
      const auto res = env.step(action);
      total += res.reward;
      obs = res.obs;
    }
    returns.push_back(total);
  }
  return returns;
}

}  // namespace scoreflow::rl
