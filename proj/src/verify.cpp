#include "scoreflow/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "scoreflow/error.hpp"
#include "scoreflow/oracle.hpp"
#include "scoreflow/rl.hpp"
#include "scoreflow/stats.hpp"

namespace scoreflow::verify {

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

void perturb(nn::ParamBundle& p, Rng& rng, double scale) {
  for (auto& x : p.values()) x += scale * rng.normal();
}

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<double> random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

}  // namespace

CheckResult make_result(std::string name, double value, double threshold, std::string detail) {
  CheckResult r;
  r.name = std::move(name);
  r.value = value;
  r.threshold = threshold;
  r.pass = std::isfinite(value) && value <= threshold;
  r.detail = std::move(detail);
  return r;
}

sampler::Policy random_policy(std::size_t action_dim, std::size_t obs_dim, std::uint64_t seed, std::size_t hidden) {
  Rng rng(seed, 0x9011);
  sampler::Policy p;
  p.velocity = flow::make_velocity_field(action_dim, obs_dim, {hidden, hidden}, rng.next_u64());
  p.heads.scheduler = control::make_score_scheduler(hidden, rng.next_u64());
  auto& sp = p.heads.scheduler.params;
  const std::size_t last = sp.num_layers() - 1;
  for (auto& w : sp.weights(last)) w = 0.5 * rng.normal();
  p.heads.variance = control::make_variance_predictor(action_dim, obs_dim, {hidden, hidden}, 0.10, 0.24, rng.next_u64());
  return p;
}

CheckResult duality_sweep_check(std::size_t cases, std::uint64_t seed) {
  const auto rep = oracle::duality_sweep(cases, 3, seed);
  return make_result("duality_sweep", rep.max_residual, 1e-10,
                     std::to_string(cases) + " cases, worst t = " + fmt(rep.worst_t));
}

CheckResult posterior_identity_check(std::size_t triples, std::size_t samples, std::uint64_t seed) {
  Rng rng(seed, 0x90e7);
  double worst = 0.0;
  std::size_t low_ess = 0;
  for (std::size_t i = 0; i < triples; ++i) {
    std::vector<oracle::MixtureComponent> comps(3);
    double rest = 1.0;
    for (std::size_t k = 0; k < comps.size(); ++k) {
      const double w = k + 1 < comps.size() ? rest * rng.uniform(0.2, 0.7) : rest;
      rest -= w;
      comps[k] = {w, {rng.uniform(-2.0, 2.0)}, rng.uniform(0.05, 1.0)};
    }
    const oracle::MixtureData mix(comps);
    const double t = rng.uniform(0.0, 0.9);
    // query point drawn from the path marginal at t
    const double a1 = mix.sample(rng)[0];
    const double a[1] = {t * a1 + (1.0 - t) * rng.normal()};
    const auto exact = oracle::mixture_score(mix, a, t);
    const auto mc = oracle::mc_posterior_score(mix, a, t, samples, rng.next_u64());
    if (mc.low_ess) ++low_ess;
    worst = std::max(worst, std::abs(mc.estimate[0] - exact[0]) / mc.std_error[0]);
  }
  return make_result("posterior_identity", worst, 3.0,
                     std::to_string(triples) + " triples, max |err|/SE; low-ESS cases " + std::to_string(low_ess));
}

CheckResult trained_duality_check(const TrainedDualityOptions& o) {
  const oracle::MixtureData mix({{0.5, {-1.0}, 0.0625}, {0.5, {1.0}, 0.0625}});
  Rng rng(o.seed, 0xda7a);
  flow::DemoDataset data;
  data.obs_dim = 0;
  data.action_dim = 1;
  for (std::size_t i = 0; i < o.data_points; ++i) data.actions.push_back(mix.sample(rng)[0]);
  data.normalizer.low = {-1.0};
  data.normalizer.high = {1.0};

  flow::PretrainConfig pc;
  pc.hidden = o.hidden;
  pc.steps = o.steps;
  pc.batch_size = o.batch_size;
  pc.lr = o.lr;
  pc.min_lr = o.min_lr;
  pc.seed = o.seed;
  const auto trained = flow::pretrain(data, pc);

  std::vector<double> a_grid, t_grid;
  for (int i = 0; i <= 60; ++i) a_grid.push_back(-3.0 + 0.1 * i);
  for (int i = 0; i <= 9; ++i) t_grid.push_back(0.1 * i);
  const auto rep = oracle::trained_velocity_duality(trained.field, mix, a_grid, t_grid);
  return make_result("trained_duality", rep.median_bulk_error, 0.15,
                     "median bulk error over " + std::to_string(rep.bulk_points) + " of " +
                         std::to_string(rep.grid_points) + " grid points, final FM loss " + fmt(trained.final_loss) +
                         ", max bulk error " + fmt(rep.max_bulk_error));
}

CheckResult replay_check(std::size_t trajectories, std::uint64_t seed) {
  const std::size_t d = 2, obs = 3;
  const auto policy = random_policy(d, obs, seed);
  const sampler::Variant variants[] = {sampler::Variant::kScoreFlow, sampler::Variant::kNoiseOnly,
                                       sampler::Variant::kAlphaOne, sampler::Variant::kScoreSdeCoupled,
                                       sampler::Variant::kCoupledLearned};
  Rng rng(seed, 0x4e91);
  double worst = 0.0;
  for (std::size_t i = 0; i < trajectories; ++i) {
    sampler::SamplerConfig cfg;
    cfg.variant = variants[i % 5];
    cfg.steps = 4;
    const auto s = random_vec(obs, rng);
    const auto traj = sampler::sample_action(policy, s, cfg, rng.next_u64());
    const double replay = sampler::trajectory_log_prob(policy, cfg, s, traj);
    const double dt = 1.0 / static_cast<double>(cfg.steps);
    double from_fields = 0.0;
    for (std::size_t k = 0; k < traj.steps; ++k) {
      if (traj.sigmas[k] > 0.0) from_fields += sampler::gaussian_log_density(traj.sample(k), traj.mean(k), traj.sigmas[k], dt);
    }
    worst = std::max({worst, std::abs(replay - traj.log_prob), std::abs(from_fields - traj.log_prob)});
  }
  return make_result("likelihood_replay", worst, 1e-9, std::to_string(trajectories) + " chains over 5 variants");
}

std::vector<CheckResult> decoupling_checks(std::size_t perturbations, std::uint64_t seed) {
  const std::size_t d = 2, obs = 3;
  const auto base = random_policy(d, obs, seed);
  sampler::SamplerConfig cfg;
  Rng rng(seed, 0xdec0);
  std::size_t mean_mismatch = 0, sigma_mismatch = 0, sigma_moved = 0, mean_moved = 0;
  for (std::size_t i = 0; i < perturbations; ++i) {
    const auto s = random_vec(obs, rng);
    const auto traj = sampler::sample_action(base, s, cfg, rng.next_u64());
    const sampler::ChainTape ref(base, cfg, s, traj);

    auto var_pert = base;
    perturb(var_pert.heads.variance.params, rng, 0.3);
    const sampler::ChainTape tv(var_pert, cfg, s, traj);
    if (!bit_equal(tv.means(), ref.means())) ++mean_mismatch;
    if (!bit_equal(tv.sigmas(), ref.sigmas())) ++sigma_moved;

    auto alpha_pert = base;
    perturb(alpha_pert.heads.scheduler.params, rng, 0.3);
    const sampler::ChainTape ta(alpha_pert, cfg, s, traj);
    if (!bit_equal(ta.sigmas(), ref.sigmas())) ++sigma_mismatch;
    if (!bit_equal(ta.means(), ref.means())) ++mean_moved;
  }
  const auto n = std::to_string(perturbations);
  return {make_result("means_fixed_under_sigma_perturbation", static_cast<double>(mean_mismatch), 0.0,
                      n + " perturbations; sigmas moved in " + std::to_string(sigma_moved)),
          make_result("sigmas_fixed_under_alpha_perturbation", static_cast<double>(sigma_mismatch), 0.0,
                      n + " perturbations; means moved in " + std::to_string(mean_moved))};
}

std::vector<CheckResult> boundary_checks(std::size_t points, std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed, 0xb0d1);

  double at_one = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto p = random_policy(1, 1, rng.next_u64());
    at_one = std::max(at_one, std::abs(control::alpha_scaled(p.heads.scheduler, 1.0)));
  }
  out.push_back(make_result("alpha_scaled_at_one", at_one, 0.0, "100 random schedulers"));

  const std::size_t d = 2, obs = 3;
  const auto policy = random_policy(d, obs, rng.next_u64());
  double sup_alpha = 0.0;
  for (int i = 0; i <= 10000; ++i) sup_alpha = std::max(sup_alpha, control::alpha_raw(policy.heads.scheduler, i / 10000.0));
  std::vector<double> ts(points);
  for (std::size_t i = 0; i < points; ++i) {
    if (i % 2 == 0) {
      const auto K = 1 + rng.below(16);
      ts[i] = static_cast<double>(rng.below(K)) / static_cast<double>(K);
    } else {
      ts[i] = rng.uniform(0.0, 1.0 - control::kTimeFloor);
    }
    sup_alpha = std::max(sup_alpha, control::alpha_raw(policy.heads.scheduler, ts[i]));
  }
  double worst_ratio = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const auto a = random_vec(d, rng, 2.0);
    const auto s = random_vec(obs, rng);
    const auto v = flow::velocity(policy.velocity, a, ts[i], s);
    const auto score = control::closed_form_score(v, a, ts[i]);
    const double w = control::alpha_scaled(policy.heads.scheduler, ts[i]);
    double lhs = 0.0, nv = 0.0, na = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      lhs += (w * score[j]) * (w * score[j]);
      nv += v[j] * v[j];
      na += a[j] * a[j];
    }
    const double rhs = sup_alpha * (std::sqrt(nv) + std::sqrt(na));
    worst_ratio = std::max(worst_ratio, std::sqrt(lhs) / rhs);
  }
  out.push_back(make_result("modulated_drift_bound", worst_ratio, 1.0,
                            "max ||alpha_scaled*score|| / (sup alpha (||v||+||a||)) over " + std::to_string(points) +
                                " points"));

  const double sp = std::log1p(std::exp(-2.0));
  double init_err = 0.0;
  for (std::uint64_t sd = 0; sd < 10; ++sd) {
    const auto sched = control::make_score_scheduler(16, sd);
    for (int i = 0; i <= 1000; ++i) {
      const double t = i / 1000.0;
      init_err = std::max(init_err, std::abs(control::alpha_scaled(sched, t) - (1.0 - t) * sp));
    }
  }
  out.push_back(make_result("fresh_scheduler_schedule", init_err, 1e-6, "10 seeds x 1001 times"));
  return out;
}

std::vector<CheckResult> gradient_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  const double tol = 1e-4;
  Rng rng(seed, 0x96ad);
  const std::size_t d = 2, obs = 3;

  {
    const auto field = flow::make_velocity_field(d, obs, {8, 8}, rng.next_u64());
    std::vector<flow::FmSample> samples;
    for (int i = 0; i < 16; ++i) {
      samples.push_back({random_vec(obs, rng), random_vec(d, rng), random_vec(d, rng), rng.uniform(0.0, 0.999)});
    }
    const nn::LossFn fn = [&](const nn::ParamBundle& p, nn::Gradient* g) {
      flow::VelocityField f = field;
      f.params = p;
      auto r = flow::fm_loss(f, samples, g != nullptr);
      if (g) *g = r.grad;
      return r.loss;
    };
    const auto rep = nn::finite_diff_check(fn, field.params);
    out.push_back(make_result("grad_fm_loss", rep.max_rel_error, tol));
  }

  const auto policy = random_policy(d, obs, rng.next_u64(), 8);
  struct Case {
    const char* name;
    sampler::Variant variant;
    int net;  // 0 velocity, 1 scheduler, 2 variance
    double w_lp;
    double w_ent;
  };
  const Case cases[] = {
      {"grad_logprob_velocity", sampler::Variant::kScoreFlow, 0, 1.0, 0.0},
      {"grad_logprob_scheduler", sampler::Variant::kScoreFlow, 1, 1.0, 0.0},
      {"grad_logprob_variance", sampler::Variant::kScoreFlow, 2, 1.0, 0.0},
      {"grad_logprob_velocity_alpha_one", sampler::Variant::kAlphaOne, 0, 1.0, 0.0},
      {"grad_logprob_velocity_score_sde", sampler::Variant::kScoreSdeCoupled, 0, 1.0, 0.0},
      {"grad_logprob_variance_coupled_learned", sampler::Variant::kCoupledLearned, 2, 1.0, 0.0},
      {"grad_logprob_velocity_coupled_learned", sampler::Variant::kCoupledLearned, 0, 1.0, 0.0},
      {"grad_chain_entropy_variance", sampler::Variant::kScoreFlow, 2, 0.0, 1.0},
  };
  for (const auto& c : cases) {
    sampler::SamplerConfig cfg;
    cfg.variant = c.variant;
    std::vector<std::vector<double>> obs_list;
    std::vector<sampler::FlowTrajectory> trajs;
    for (int i = 0; i < 3; ++i) {
      obs_list.push_back(random_vec(obs, rng));
      trajs.push_back(sampler::sample_action(policy, obs_list.back(), cfg, rng.next_u64()));
    }
    auto select = [&](sampler::Policy& p) -> nn::ParamBundle& {
      if (c.net == 0) return p.velocity.params;
      if (c.net == 1) return p.heads.scheduler.params;
      return p.heads.variance.params;
    };
    const nn::LossFn fn = [&](const nn::ParamBundle& params, nn::Gradient* g) {
      sampler::Policy p = policy;
      select(p) = params;
      double loss = 0.0;
      auto pg = sampler::PolicyGradient::zeros_like(p);
      for (std::size_t i = 0; i < trajs.size(); ++i) {
        const sampler::ChainTape tape(p, cfg, obs_list[i], trajs[i]);
        loss += c.w_lp * tape.log_prob() + c.w_ent * tape.entropy();
        if (g) tape.backward(c.w_lp, c.w_ent, pg);
      }
      if (g) *g = c.net == 0 ? pg.velocity : c.net == 1 ? pg.scheduler : pg.variance;
      return loss;
    };
    sampler::Policy probe = policy;
    const auto rep = nn::finite_diff_check(fn, select(probe));
    out.push_back(make_result(c.name, rep.max_rel_error, tol));
  }

  {
    const auto critic = rl::make_critic(obs, {8, 8}, rng.next_u64());
    const auto states = random_vec(16 * obs, rng);
    const auto targets = random_vec(16, rng);
    const nn::LossFn fn = [&](const nn::ParamBundle& p, nn::Gradient* g) {
      return rl::critic_loss(p, states, targets, 0.5, g);
    };
    const auto rep = nn::finite_diff_check(fn, critic.params);
    out.push_back(make_result("grad_critic_loss", rep.max_rel_error, tol));
  }
  return out;
}

std::vector<CheckResult> ppo_mechanics_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  rl::FinetuneConfig fc;
  fc.critic_hidden = {16, 16};
  fc.variance_hidden = {16, 16};
  const rl::PointMassConfig env;
  const auto velocity = flow::make_velocity_field(rl::PointMassEnv::kActionDim, rl::PointMassEnv::kObsDim, {16, 16},
                                                  seed);
  flow::ActionNormalizer norm{{-1.0, -1.0}, {1.0, 1.0}};
  auto learner = rl::make_learner(velocity, fc, seed);
  Rng rng(seed, 0x990);
  auto batch = rl::collect_rollouts(learner, fc.sampler, norm, env, 2, rng);
  rl::finish_batch(batch, learner, fc.ppo);

  {
    auto l = learner;
    const auto diag = rl::ppo_update(batch, l, fc.sampler, fc.ppo, nullptr, 1e-3, 1e-3, rng);
    out.push_back(make_result("first_minibatch_ratio", std::abs(diag.first_minibatch_ratio - 1.0), 1e-6));
  }

  {
    const double e1 = std::abs(rl::ppo_surrogate(std::log(1.5), 0.0, 1.0, 0.01) - 1.01);
    const double e2 = std::abs(rl::ppo_surrogate(std::log(0.5), 0.0, -1.0, 0.01) - (-0.99));
    const double e3 = std::abs(rl::ppo_surrogate(0.3, 0.3, 0.7, 0.01) - 0.7);
    out.push_back(make_result("surrogate_cases", std::max({e1, e2, e3}), 1e-12,
                              "r=1.5,A=1 / r=0.5,A=-1 / r=1,A=0.7"));
  }

  {
    auto l = learner;
    auto cfg = fc.ppo;
    cfg.target_kl = 1e-7;
    cfg.update_epochs = 5;
    const auto diag = rl::ppo_update(batch, l, fc.sampler, cfg, nullptr, 5e-2, 1e-3, rng);
    bool honored = diag.epoch_kl.size() == diag.epochs_run;
    for (std::size_t e = 0; e + 1 < diag.epoch_kl.size(); ++e) honored = honored && diag.epoch_kl[e] <= cfg.target_kl;
    if (diag.early_stopped) {
      honored = honored && diag.epoch_kl.back() > cfg.target_kl && diag.epochs_run < cfg.update_epochs;
    } else {
      honored = honored && diag.epochs_run == cfg.update_epochs;
    }
    out.push_back(make_result("kl_early_stop", honored && diag.early_stopped ? 0.0 : 1.0, 0.0,
                              "epochs run " + std::to_string(diag.epochs_run) + " of " +
                                  std::to_string(cfg.update_epochs) + ", last epoch KL " +
                                  fmt(diag.epoch_kl.empty() ? 0.0 : diag.epoch_kl.back())));
  }
  return out;
}

CheckResult coupling_check(std::size_t rollouts, std::uint64_t seed) {
  const std::size_t d = 2, obs = 3;
  const auto policy = random_policy(d, obs, seed);
  Rng rng(seed, 0xc0c0);
  std::size_t steps = 0, violations = 0, raw_lambda_exact = 0, sde_steps = 0;
  for (auto variant : {sampler::Variant::kScoreSdeCoupled, sampler::Variant::kCoupledLearned}) {
    sampler::SamplerConfig cfg;
    cfg.variant = variant;
    for (std::size_t i = 0; i < rollouts; ++i) {
      const auto s = random_vec(obs, rng);
      const auto traj = sampler::sample_action(policy, s, cfg, rng.next_u64());
      for (std::size_t k = 0; k < traj.steps; ++k) {
        ++steps;
        const double sig = traj.sigmas[k];
        if (!(sig * sig == 2.0 * traj.drift_weights[k])) ++violations;
        if (variant == sampler::Variant::kScoreSdeCoupled) {
          ++sde_steps;
          const double t = static_cast<double>(k) / static_cast<double>(traj.steps);
          if (sig * sig == 2.0 * sampler::linear_lambda(cfg.lambda_max, t)) ++raw_lambda_exact;
        }
      }
    }
  }
  return make_result("sde_coupling", static_cast<double>(violations), 0.0,
                     std::to_string(steps) + " steps; schedule value reproduced bit-exactly on " +
                         std::to_string(raw_lambda_exact) + " of " + std::to_string(sde_steps) + " fixed-schedule steps");
}

std::vector<CheckResult> reference_value_checks() {
  std::vector<CheckResult> out;
  out.push_back(make_result("softplus_minus_two", std::abs(nn::softplus(-2.0) - 0.1269280110429725), 1e-12));
  const double x[1] = {0.3};
  out.push_back(make_result("step_log_density",
                            std::abs(sampler::gaussian_log_density(x, x, 0.1, 0.25) - 2.076793740349318), 1e-9));
  const double sig[4] = {0.1, 0.1, 0.1, 0.1};
  out.push_back(make_result("chain_entropy", std::abs(sampler::chain_entropy(sig, 1, 0.25) - (-6.307174961397274)),
                            1e-9));
  out.push_back(make_result("sigma_from_logit_one",
                            std::abs(control::sigma_from_logit(1.0, 0.10, 0.24) - 0.22331159091690356), 1e-12));
  const oracle::GaussianData g({0.0}, 4.0);
  const double a[1] = {1.0};
  out.push_back(make_result("gaussian_duality_instance", oracle::duality_check(g, a, 0.5), 1e-12));
  const double r[2] = {1.0, 0.0}, v[3] = {0.5, 0.5, 0.0};
  const std::uint8_t dn[2] = {0, 0};
  const auto ge = rl::gae(r, v, dn, 1.0, 1.0);
  out.push_back(make_result("gae_instance", std::max(std::abs(ge.advantages[0] - 0.5), std::abs(ge.advantages[1] + 0.5)),
                            1e-15));
  control::NoiseBoundSchedule sched;
  out.push_back(make_result("final_sigma_bound",
                            std::abs(control::effective_sigma_max(sched, 0.10, 0.24, sched.total_iters) - 0.198),
                            1e-12));
  return out;
}

std::vector<CheckResult> run_battery(bool include_training) {
  std::vector<CheckResult> out = reference_value_checks();
  auto append = [&](std::vector<CheckResult> more) { out.insert(out.end(), more.begin(), more.end()); };
  out.push_back(duality_sweep_check());
  out.push_back(posterior_identity_check());
  if (include_training) out.push_back(trained_duality_check());
  out.push_back(replay_check());
  append(decoupling_checks());
  append(boundary_checks());
  append(gradient_checks());
  append(ppo_mechanics_checks());
  out.push_back(coupling_check());
  return out;
}

}  // namespace scoreflow::verify
