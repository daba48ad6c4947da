#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "scoreflow/env.hpp"
#include "scoreflow/error.hpp"
#include "scoreflow/flow.hpp"
#include "scoreflow/rl.hpp"
#include "scoreflow/stats.hpp"

using namespace scoreflow;
using namespace scoreflow::rl;

namespace {

FinetuneConfig tiny_config() {
  FinetuneConfig c;
  c.env.horizon = 5;
  c.n_envs = 3;
  c.n_iters = 3;
  c.critic_hidden = {8};
  c.variance_hidden = {8};
  c.ppo.minibatch_size = 5;
  c.ppo.update_epochs = 2;
  c.noise.total_iters = 3;
  return c;
}

struct Fixture {
  flow::DemoDataset demos;
  flow::VelocityField field;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    DemoConfig dc;
    dc.episodes = 4;
    PointMassConfig env;
    env.horizon = 5;
    Fixture x;
    x.demos = generate_demos(env, dc);
    flow::PretrainConfig pc;
    pc.hidden = {8, 8};
    pc.steps = 20;
    pc.batch_size = 8;
    x.field = flow::pretrain(x.demos, pc).field;
    return x;
  }();
  return f;
}

}  // namespace

TEST(PointMassEnv, ZeroActionKeepsPosition) {
  PointMassEnv env;
  env.reset({0.3, -0.4}, {1.0, 0.2});
  const double zero[2] = {0.0, 0.0};
  const auto r = env.step(zero);
  EXPECT_EQ(env.position()[0], 0.3);
  EXPECT_EQ(env.position()[1], -0.4);
  EXPECT_EQ(r.reward, -std::hypot(0.3 - 1.0, -0.4 - 0.2));
}

TEST(PointMassEnv, AtGoalZeroReward) {
  PointMassEnv env;
  env.reset({0.5, 0.5}, {0.5, 0.5});
  const double zero[2] = {0.0, 0.0};
  EXPECT_EQ(env.step(zero).reward, 0.0);
}

TEST(PointMassEnv, SeededResetIsDeterministic) {
  PointMassEnv a, b;
  Rng ra(42), rb(42);
  EXPECT_EQ(a.reset(ra), b.reset(rb));
  EXPECT_EQ(a.goal(), b.goal());
}

TEST(PointMassEnv, ActionClampedAndArenaBounded) {
  PointMassConfig cfg;
  PointMassEnv env(cfg);
  env.reset({1.45, 0.0}, {0.0, 0.0});
  const double big[2] = {10.0, -3.0};
  env.step(big);
  EXPECT_EQ(env.position()[0], 1.5);
  EXPECT_NEAR(env.position()[1], -0.1, 1e-15);
}

TEST(PointMassEnv, DoneAtHorizonThenUsageError) {
  PointMassConfig cfg;
  cfg.horizon = 3;
  PointMassEnv env(cfg);
  env.reset({0.0, 0.0}, {1.0, 1.0});
  const double zero[2] = {0.0, 0.0};
  EXPECT_FALSE(env.step(zero).done);
  EXPECT_FALSE(env.step(zero).done);
  EXPECT_TRUE(env.step(zero).done);
  EXPECT_THROW(env.step(zero), UsageError);
}

TEST(PointMassEnv, ObservationIsPositionAndOffset) {
  PointMassEnv env;
  const auto o = env.reset({0.2, 0.3}, {-0.5, 1.0});
  EXPECT_EQ(o[0], 0.2);
  EXPECT_EQ(o[1], 0.3);
  EXPECT_EQ(o[2], -0.5 - 0.2);
  EXPECT_EQ(o[3], 1.0 - 0.3);
}

TEST(Gae, LambdaZeroIsTdError) {
  const std::vector<double> r{1.0, -0.5, 2.0}, v{0.3, 0.1, -0.2, 0.4};
  const std::vector<std::uint8_t> d{0, 0, 0};
  const auto g = gae(r, v, d, 0.9, 0.0);
  for (int t = 0; t < 3; ++t) EXPECT_NEAR(g.advantages[t], r[t] + 0.9 * v[t + 1] - v[t], 1e-15);
}

TEST(Gae, TwoStepBackwardRecursion) {
  // delta = [1 + 0.5 - 0.5, 0 + 0 - 0.5] = [1, -0.5]; A1 = -0.5, A0 = 1 + A1 = 0.5
  const std::vector<double> r{1.0, 0.0}, v{0.5, 0.5, 0.0};
  const std::vector<std::uint8_t> d{0, 0};
  const auto g = gae(r, v, d, 1.0, 1.0);
  EXPECT_EQ(g.advantages[0], 0.5);
  EXPECT_EQ(g.advantages[1], -0.5);
  EXPECT_EQ(g.returns[0], 1.0);
  EXPECT_EQ(g.returns[1], 0.0);
}

TEST(Gae, ZeroRewardsZeroValues) {
  const std::vector<double> r(6, 0.0), v(7, 0.0);
  const std::vector<std::uint8_t> d{0, 0, 1, 0, 0, 0};
  for (double a : gae(r, v, d, 0.99, 0.95).advantages) EXPECT_EQ(a, 0.0);
}

TEST(Gae, DoneCutsBootstrap) {
  // done at step 0: delta0 = 1 - 0.2, no contribution from later steps
  const std::vector<double> r{1.0, 5.0}, v{0.2, 9.0, 9.0};
  const std::vector<std::uint8_t> d{1, 0};
  EXPECT_NEAR(gae(r, v, d, 0.99, 0.95).advantages[0], 0.8, 1e-15);
}

TEST(Gae, LengthMismatchIsShapeError) {
  const std::vector<double> r{1.0, 0.0}, v{0.5, 0.5};
  const std::vector<std::uint8_t> d{0, 0};
  EXPECT_THROW(gae(r, v, d, 1.0, 1.0), ShapeError);
}

TEST(PpoSurrogate, EqualLogProbsReturnAdvantage) { EXPECT_EQ(ppo_surrogate(-1.3, -1.3, 0.7, 0.01), 0.7); }

TEST(PpoSurrogate, PositiveAdvantageClipsAbove) {
  EXPECT_NEAR(ppo_surrogate(std::log(1.5), 0.0, 1.0, 0.01), 1.01, 1e-15);
}

TEST(PpoSurrogate, NegativeAdvantageClipsBelow) {
  EXPECT_NEAR(ppo_surrogate(std::log(0.5), 0.0, -1.0, 0.01), -0.99, 1e-15);
}

TEST(AdvantageNormalization, ZeroMeanUnitStd) {
  Rng rng(5);
  std::vector<double> a(257);
  for (auto& x : a) x = 3.0 + 7.0 * rng.normal();
  normalize_advantages(a);
  const double m = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
  double v = 0.0;
  for (double x : a) v += (x - m) * (x - m);
  EXPECT_LT(std::abs(m), 1e-10);
  EXPECT_NEAR(std::sqrt(v / a.size()), 1.0, 1e-10);
}

TEST(AdvantageNormalization, ConstantInputOnlyCentered) {
  std::vector<double> a(10, 2.5);
  normalize_advantages(a);
  for (double x : a) EXPECT_EQ(x, 0.0);
}

TEST(RewardNormalizer, PositiveRescalingPreservesOrder) {
  RewardNormalizer rn;
  const std::vector<double> rewards{-1.0, -0.5, -2.0, -0.1, -0.3, -0.9};
  const std::vector<std::uint8_t> dones{0, 0, 1, 0, 0, 1};
  const double div = rn.update(rewards, dones, 2, 3);
  EXPECT_GT(div, 0.0);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    for (std::size_t j = 0; j < rewards.size(); ++j) {
      EXPECT_EQ(rewards[i] < rewards[j], rewards[i] / div < rewards[j] / div);
    }
  }
}

TEST(RunningStat, MatchesTwoPassVariance) {
  RunningStat s;
  const std::vector<double> x{1.0, 4.0, -2.0, 7.5, 0.25};
  for (double v : x) s.push(v);
  // population variance with mean 2.15: squared deviations sum to 54.2, over 5
  EXPECT_NEAR(s.mean, 2.15, 1e-15);
  EXPECT_NEAR(s.variance(), 10.84, 1e-12);
}

TEST(Critic, LossGradientMatchesFiniteDifferences) {
  const auto c = make_critic(4, {8, 8}, 3);
  Rng rng(9);
  std::vector<double> obs(4 * 6), tgt(6);
  rng.fill_normal(obs);
  rng.fill_normal(tgt);
  const nn::LossFn fn = [&](const nn::ParamBundle& p, nn::Gradient* g) {
    if (g) g->set_zero();
    return critic_loss(p, obs, tgt, 0.5, g);
  };
  EXPECT_LT(nn::finite_diff_check(fn, c.params).max_rel_error, 1e-4);
}

TEST(Finetune, ZeroIterationsLeaveParamsUnchanged) {
  auto cfg = tiny_config();
  cfg.n_iters = 0;
  const auto learner = make_learner(fixture().field, cfg, 1);
  const auto r = finetune(learner, fixture().demos, cfg, 1);
  EXPECT_EQ(r.learner.policy, learner.policy);
  EXPECT_TRUE(r.metrics.empty());
}

TEST(Finetune, SameSeedSameMetricStream) {
  const auto cfg = tiny_config();
  const auto a = finetune(make_learner(fixture().field, cfg, 2), fixture().demos, cfg, 2);
  const auto b = finetune(make_learner(fixture().field, cfg, 2), fixture().demos, cfg, 2);
  ASSERT_EQ(a.metrics.size(), 3u);
  EXPECT_EQ(a.metrics, b.metrics);
  EXPECT_EQ(a.learner, b.learner);
}

TEST(Finetune, DifferentSeedsDifferentStreams) {
  const auto cfg = tiny_config();
  const auto a = finetune(make_learner(fixture().field, cfg, 2), fixture().demos, cfg, 2);
  const auto b = finetune(make_learner(fixture().field, cfg, 3), fixture().demos, cfg, 3);
  EXPECT_NE(a.metrics[0].return_mean, b.metrics[0].return_mean);
}

TEST(Finetune, RatioStartsAtOneEveryIteration) {
  const auto cfg = tiny_config();
  const auto r = finetune(make_learner(fixture().field, cfg, 4), fixture().demos, cfg, 4);
  for (const auto& m : r.metrics) EXPECT_NEAR(m.first_minibatch_ratio, 1.0, 1e-6);
}

TEST(Finetune, ResumeMatchesUninterruptedRun) {
  auto cfg = tiny_config();
  const auto full = finetune(make_learner(fixture().field, cfg, 5), fixture().demos, cfg, 5);
  auto half_cfg = cfg;
  half_cfg.n_iters = 1;
  half_cfg.noise.total_iters = 1;
  auto first = finetune(make_learner(fixture().field, cfg, 5), fixture().demos, half_cfg, 5);
  const auto rest = finetune(first.learner, fixture().demos, cfg, 5);
  ASSERT_EQ(rest.metrics.size(), 2u);
  EXPECT_EQ(rest.metrics[0], full.metrics[1]);
  EXPECT_EQ(rest.metrics[1], full.metrics[2]);
  EXPECT_EQ(rest.learner, full.learner);
}

TEST(PpoUpdate, ZeroAdvantageGivesNoPolicyGradient) {
  auto cfg = tiny_config();
  cfg.ppo.entropy_coef = 0.0;
  cfg.ppo.bc_coef = 0.0;
  cfg.ppo.normalize_advantage = false;
  auto learner = make_learner(fixture().field, cfg, 6);
  Rng rng(1);
  auto batch = collect_rollouts(learner, cfg.sampler, fixture().demos.normalizer, cfg.env, 2, rng);
  finish_batch(batch, learner, cfg.ppo);
  std::fill(batch.advantages.begin(), batch.advantages.end(), 0.0);
  const auto before = learner;
  ppo_update(batch, learner, cfg.sampler, cfg.ppo, nullptr, 1e-2, 1e-2, rng);
  EXPECT_EQ(learner.policy, before.policy);
  EXPECT_NE(learner.critic, before.critic);
}

TEST(PpoUpdate, SingleBiasMovesWithAnalyticGradientSign) {
  // Coupled score-SDE keeps only the velocity trainable. Its output bias b
  // shifts every transition mean by dt (1 + lambda t / (1 - t)), so
  // dJ/db = sum_i A_i sum_k <x_k - mu_k, 1> / (sigma_k^2 dt) * dt (1 + lambda_k t_k / (1 - t_k)).
  FinetuneConfig cfg = tiny_config();
  cfg.sampler.variant = sampler::Variant::kScoreSdeCoupled;
  cfg.sampler.clip.enabled = false;
  cfg.ppo.entropy_coef = 0.0;
  cfg.ppo.bc_coef = 0.0;
  cfg.ppo.normalize_advantage = false;
  cfg.ppo.update_epochs = 1;
  cfg.ppo.minibatch_size = 1000;
  auto learner = make_learner(fixture().field, cfg, 7);
  Rng rng(3);
  auto batch = collect_rollouts(learner, cfg.sampler, fixture().demos.normalizer, cfg.env, 2, rng);
  finish_batch(batch, learner, cfg.ppo);
  for (std::size_t i = 0; i < batch.size(); ++i) batch.advantages[i] = (i % 3 == 0) ? 1.5 : -0.4;

  const auto& vp = learner.policy.velocity.params;
  const std::size_t last = vp.num_layers() - 1;
  double grad[2] = {0.0, 0.0};
  const double dt = 1.0 / cfg.sampler.steps;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& tr = batch.items[i].traj;
    for (std::size_t k = 0; k < tr.steps; ++k) {
      const double t = k * dt;
      const double lam = tr.drift_weights[k];
      for (int j = 0; j < 2; ++j) {
        const double dlogp_dmu = (tr.sample(k)[j] - tr.mean(k)[j]) / (tr.sigmas[k] * tr.sigmas[k] * dt);
        grad[j] += batch.advantages[i] * dlogp_dmu * dt * (1.0 + lam * t / (1.0 - t));
      }
    }
  }
  const double b0[2] = {vp.bias(last)[0], vp.bias(last)[1]};
  ppo_update(batch, learner, cfg.sampler, cfg.ppo, nullptr, 1e-3, 1e-3, rng);
  const auto& after = learner.policy.velocity.params.bias(last);
  for (int j = 0; j < 2; ++j) {
    ASSERT_GT(std::abs(grad[j]), 1e-6);
    EXPECT_EQ(std::signbit(after[j] - b0[j]), std::signbit(grad[j])) << "dim " << j;
  }
}

TEST(PpoUpdate, KlEarlyStopHaltsEpochLoop) {
  auto cfg = tiny_config();
  cfg.ppo.update_epochs = 10;
  cfg.ppo.target_kl = 1e-9;
  auto learner = make_learner(fixture().field, cfg, 8);
  Rng rng(5);
  auto batch = collect_rollouts(learner, cfg.sampler, fixture().demos.normalizer, cfg.env, 3, rng);
  finish_batch(batch, learner, cfg.ppo);
  const auto d = ppo_update(batch, learner, cfg.sampler, cfg.ppo, nullptr, 5e-2, 1e-3, rng);
  ASSERT_TRUE(d.early_stopped);
  EXPECT_EQ(d.epoch_kl.size(), d.epochs_run);
  EXPECT_GT(d.epoch_kl.back(), cfg.ppo.target_kl);
  for (std::size_t e = 0; e + 1 < d.epoch_kl.size(); ++e) EXPECT_LE(d.epoch_kl[e], cfg.ppo.target_kl);
  EXPECT_LT(d.epochs_run, 10u);
}

TEST(PpoUpdate, EmptyBatchRejected) {
  auto cfg = tiny_config();
  auto learner = make_learner(fixture().field, cfg, 8);
  Rng rng(5);
  EXPECT_THROW(ppo_update(RolloutBatch{}, learner, cfg.sampler, cfg.ppo, nullptr, 1e-3, 1e-3, rng), UsageError);
}

TEST(Rollouts, OldLogProbMatchesTrajectory) {
  auto cfg = tiny_config();
  auto learner = make_learner(fixture().field, cfg, 9);
  Rng rng(6);
  const auto batch = collect_rollouts(learner, cfg.sampler, fixture().demos.normalizer, cfg.env, 3, rng);
  ASSERT_EQ(batch.size(), 3u * cfg.env.horizon);
  for (const auto& t : batch.items) EXPECT_EQ(t.old_log_prob, t.traj.log_prob);
}

TEST(EvaluatePolicy, SameSeedSameReturns) {
  const auto cfg = tiny_config();
  const auto learner = make_learner(fixture().field, cfg, 10);
  const auto& n = fixture().demos.normalizer;
  for (auto mode : {EvalMode::kStochastic, EvalMode::kDeterministicOde}) {
    EXPECT_EQ(evaluate_policy(learner.policy, cfg.sampler, n, cfg.env, 4, 3, mode),
              evaluate_policy(learner.policy, cfg.sampler, n, cfg.env, 4, 3, mode));
  }
}

TEST(Welch, TextbookPair) {
  // scipy.stats.ttest_ind(a, b, equal_var=False):
  // t = -2.089580194352092, p = 0.05038771656613143, df = 18.93784260260507
  const std::vector<double> a{27.5, 21, 19, 23.6, 17, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6};
  const std::vector<double> b{27.1, 22, 20.8, 23.4, 23.4, 23.5, 25.8, 22, 24.8, 20.2, 21.9, 22.1};
  const auto r = stats::welch_t_test(a, b);
  EXPECT_NEAR(r.t, -2.089580194352092, 1e-3);
  EXPECT_NEAR(r.df, 18.93784260260507, 1e-9);
  EXPECT_NEAR(r.p, 0.05038771656613143, 1e-9);
}

TEST(Welch, IdenticalSetsGivePOne) {
  const std::vector<double> a{1.0, 2.0, 3.0};
  const auto r = stats::welch_t_test(a, a);
  EXPECT_EQ(r.t, 0.0);
  EXPECT_EQ(r.p, 1.0);
}

TEST(Welch, ShiftedSetsSeparate) {
  const std::vector<double> a{1.0, 2.0, 3.0}, b{101.0, 102.0, 103.0};
  EXPECT_LT(stats::welch_t_test(a, b).p, 0.05);
}

TEST(Welch, DegenerateVarianceRejected) {
  const std::vector<double> a{1.0, 1.0, 1.0}, b{2.0, 2.0};
  EXPECT_THROW(stats::welch_t_test(a, b), DomainError);
  const std::vector<double> one{1.0};
  EXPECT_THROW(stats::welch_t_test(one, b), DomainError);
}
