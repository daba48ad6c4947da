#include "scoreflow/rl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "scoreflow/error.hpp"

namespace scoreflow::rl {

GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
              double gamma, double lambda) {
  const std::size_t T = rewards.size();
  if (values.size() != T + 1 || dones.size() != T) {
    throw ShapeError("gae: expected " + std::to_string(T + 1) + " values and " + std::to_string(T) + " done flags");
  }
  GaeResult r;
  r.advantages.assign(T, 0.0);
  r.returns.assign(T, 0.0);
  double next_adv = 0.0;
  for (std::size_t i = T; i-- > 0;) {
    const double not_done = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * values[i + 1] * not_done - values[i];
    next_adv = delta + gamma * lambda * not_done * next_adv;
    r.advantages[i] = next_adv;
    r.returns[i] = next_adv + values[i];
  }
  return r;
}

double ppo_surrogate(double new_log_prob, double old_log_prob, double advantage, double clip_eps) {
  const double ratio = std::exp(new_log_prob - old_log_prob);
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

void normalize_advantages(std::vector<double>& adv, double eps) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : adv) ss += (a - mean) * (a - mean);
  const double sd = std::sqrt(ss / n);
  for (auto& a : adv) a = sd > eps ? (a - mean) / sd : a - mean;
}

void RunningStat::push(double x) {
  count += 1.0;
  const double delta = x - mean;
  mean += delta / count;
  m2 += delta * (x - mean);
}

double RewardNormalizer::update(std::span<const double> rewards, std::span<const std::uint8_t> dones,
                                std::size_t n_envs, std::size_t n_steps) {
  if (rewards.size() != n_envs * n_steps || dones.size() != rewards.size()) {
    throw ShapeError("RewardNormalizer::update: batch layout mismatch");
  }
  running_returns.resize(n_envs, 0.0);
  for (std::size_t t = 0; t < n_steps; ++t) {
    for (std::size_t e = 0; e < n_envs; ++e) {
      const std::size_t i = e * n_steps + t;
      running_returns[e] = running_returns[e] * gamma + rewards[i];
      stat.push(running_returns[e]);
      if (dones[i]) running_returns[e] = 0.0;
    }
  }
  return divisor();
}

double RewardNormalizer::divisor() const { return std::sqrt(stat.variance() + eps); }

Critic make_critic(std::size_t obs_dim, const std::vector<std::size_t>& hidden, std::uint64_t seed) {
  nn::MlpSpec spec;
  spec.input_dim = obs_dim;
  spec.hidden = hidden;
  spec.output_dim = 1;
  spec.hidden_act = nn::Activation::kSiLU;
  spec.output_act = nn::Activation::kIdentity;
  return {nn::mlp_init(spec, seed)};
}

double critic_value(const Critic& critic, std::span<const double> obs) { return nn::mlp_forward(critic.params, obs)[0]; }

double critic_loss(const nn::ParamBundle& critic, std::span<const double> obs, std::span<const double> targets,
                   double coef, nn::Gradient* grad) {
  const std::size_t n = targets.size();
  const std::size_t obs_dim = critic.input_dim();
  if (n == 0 || obs.size() != n * obs_dim) throw ShapeError("critic_loss: observation rows do not match targets");
  const double m = static_cast<double>(n);
  nn::ForwardCache cache;
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = obs.subspan(i * obs_dim, obs_dim);
    const double err = nn::mlp_forward(critic, row, cache)[0] - targets[i];
    loss += coef * err * err / m;
    if (grad != nullptr) {
      const double up[1] = {2.0 * coef * err / m};
      nn::mlp_backward(critic, cache, up, *grad);
    }
  }
  return loss;
}

namespace {

bool trains_scheduler(sampler::Variant v) { return v == sampler::Variant::kScoreFlow; }
bool trains_variance(sampler::Variant v) { return v != sampler::Variant::kScoreSdeCoupled; }

}  // namespace

PpoDiagnostics ppo_update(const RolloutBatch& batch, Learner& learner, const sampler::SamplerConfig& sampler_config,
                          const PPOConfig& config, const flow::DemoDataset* demos, double actor_lr, double critic_lr,
                          Rng& rng, bool critic_only) {
  const std::size_t n = batch.size();
  if (n == 0) throw UsageError("ppo_update: empty batch");
  if (batch.advantages.size() != n || batch.returns.size() != n) {
    throw ShapeError("ppo_update: advantages/returns missing; call finish_batch first");
  }
  if (!(config.clip_eps > 0.0)) throw ConfigError("ppo.clip_eps must be positive");

  const Learner snapshot = learner;
  std::vector<double> adv = batch.advantages;
  if (config.normalize_advantage) normalize_advantages(adv);

  PpoDiagnostics diag;
  auto& policy = learner.policy;
  sampler::PolicyGradient pgrad = sampler::PolicyGradient::zeros_like(policy);
  nn::Gradient cgrad = nn::Gradient::zeros_like(learner.critic.params);
  std::vector<double> mb_obs;
  std::vector<double> mb_targets;

  const std::size_t mb = std::max<std::size_t>(1, std::min(config.minibatch_size, n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  double clip_count = 0.0, seen = 0.0;
  double policy_loss_sum = 0.0, value_loss_sum = 0.0, entropy_sum = 0.0, bc_sum = 0.0;
  std::size_t minibatches = 0;
  bool first = true;

  for (std::size_t epoch = 0; epoch < config.update_epochs; ++epoch) {
    // Fisher-Yates with the update stream keeps shuffles reproducible.
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double kl_sum = 0.0;

    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t end = std::min(n, start + mb);
      const double m = static_cast<double>(end - start);
      pgrad.set_zero();
      cgrad.set_zero();
      double pl = 0.0, ent = 0.0, ratio_sum = 0.0;
      mb_obs.clear();
      mb_targets.clear();

      for (std::size_t j = start; j < end; ++j) {
        const std::size_t idx = order[j];
        const auto& tr = batch.items[idx];
        const double a = adv[idx];

        mb_obs.insert(mb_obs.end(), tr.obs.begin(), tr.obs.end());
        mb_targets.push_back(batch.returns[idx]);
        if (critic_only) continue;
        const sampler::ChainTape tape(policy, sampler_config, tr.obs, tr.traj);
        const double log_ratio = tape.log_prob() - tr.old_log_prob;
        const double ratio = std::exp(log_ratio);
        const double clipped = std::clamp(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
        const double unclipped_obj = ratio * a;
        const double clipped_obj = clipped * a;
        pl += -std::min(unclipped_obj, clipped_obj) / m;
        ent += tape.entropy() / m;
        ratio_sum += ratio;
        kl_sum += -log_ratio;
        clip_count += std::abs(ratio - 1.0) > config.clip_eps ? 1.0 : 0.0;
        seen += 1.0;
        const double d_logp = unclipped_obj <= clipped_obj ? -a * ratio / m : 0.0;
        const double d_ent = -config.entropy_coef / m;
        tape.backward(d_logp, d_ent, pgrad);
      }

      const double vl = critic_loss(learner.critic.params, mb_obs, mb_targets, config.critic_coef, &cgrad);

      double bc = 0.0;
      if (!critic_only && config.bc_coef > 0.0 && demos != nullptr && demos->size() > 0) {
        std::vector<std::size_t> rows(end - start);
        for (auto& r : rows) r = rng.below(demos->size());
        auto samples = flow::draw_fm_samples(*demos, rows, rng);
        auto fm = flow::fm_loss(policy.velocity, samples);
        bc = config.bc_coef * fm.loss;
        nn::axpy(config.bc_coef, fm.grad, pgrad.velocity);
      }

      const double total = pl + vl - config.entropy_coef * ent + bc;
      if (!std::isfinite(total)) {
        learner = snapshot;
        throw NumericError("ppo_update: non-finite loss in epoch " + std::to_string(epoch));
      }
      if (first && !critic_only) {
        diag.first_minibatch_ratio = ratio_sum / m;
        first = false;
      }

      // critic step
      nn::Gradient* cg[] = {&cgrad};
      nn::clip_grad_norm(cg, config.max_grad_norm);
      nn::adam_step(learner.critic.params, cgrad, learner.opt_critic, critic_lr);

      if (!critic_only) {
        std::vector<nn::Gradient*> ag;
        if (config.train_velocity) ag.push_back(&pgrad.velocity);
        if (trains_scheduler(sampler_config.variant)) ag.push_back(&pgrad.scheduler);
        if (trains_variance(sampler_config.variant)) ag.push_back(&pgrad.variance);
        diag.grad_norm = nn::clip_grad_norm(ag, config.max_grad_norm);
        try {
          if (config.train_velocity) nn::adam_step(policy.velocity.params, pgrad.velocity, learner.opt_velocity, actor_lr);
          if (trains_scheduler(sampler_config.variant)) {
            nn::adam_step(policy.heads.scheduler.params, pgrad.scheduler, learner.opt_scheduler, actor_lr);
          }
          if (trains_variance(sampler_config.variant)) {
            nn::adam_step(policy.heads.variance.params, pgrad.variance, learner.opt_variance, actor_lr);
          }
        } catch (const NumericError&) {
          learner = snapshot;
          throw;
        }
      }

      policy_loss_sum += pl;
      value_loss_sum += vl;
      entropy_sum += ent;
      bc_sum += bc;
      ++minibatches;
    }

    diag.epochs_run = epoch + 1;
    if (!critic_only) {
      const double kl = kl_sum / static_cast<double>(n);
      diag.epoch_kl.push_back(kl);
      diag.approx_kl = kl;
      if (kl > config.target_kl) {
        diag.early_stopped = true;
        break;
      }
    }
  }

  const double mbs = static_cast<double>(std::max<std::size_t>(minibatches, 1));
  diag.policy_loss = policy_loss_sum / mbs;
  diag.value_loss = value_loss_sum / mbs;
  diag.entropy = entropy_sum / mbs;
  diag.bc_loss = bc_sum / mbs;
  diag.clip_frac = seen > 0.0 ? clip_count / seen : 0.0;
  return diag;
}

}  // namespace scoreflow::rl
