#include "scoreflow/sampler.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "scoreflow/error.hpp"

namespace scoreflow::sampler {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kScoreFlow: return "scoreflow";
    case Variant::kNoiseOnly: return "noise_only";
    case Variant::kAlphaOne: return "alpha_one";
    case Variant::kScoreSdeCoupled: return "score_sde_coupled";
    case Variant::kCoupledLearned: return "coupled_learned";
  }
  return "unknown";
}

Variant variant_from_name(std::string_view name) {
  for (auto v : {Variant::kScoreFlow, Variant::kNoiseOnly, Variant::kAlphaOne, Variant::kScoreSdeCoupled,
                 Variant::kCoupledLearned}) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("unknown sampler variant '" + std::string(name) + "'");
}

bool is_coupled(Variant v) { return v == Variant::kScoreSdeCoupled || v == Variant::kCoupledLearned; }

double gaussian_log_density(std::span<const double> x, std::span<const double> mean, double sigma, double dt) {
  const double var = sigma * sigma * dt;
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - mean[i];
    sq += d * d;
  }
  return -0.5 * (sq / var + static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi * var));
}

double chain_entropy(std::span<const double> sigmas, std::size_t action_dim, double dt) {
  double h = 0.0;
  const double d = static_cast<double>(action_dim);
  for (double s : sigmas) h += 0.5 * d * std::log(2.0 * std::numbers::pi * std::numbers::e * s * s * dt);
  return h;
}

double linear_lambda(double lambda_max, double t) { return lambda_max * (1.0 - t); }

namespace {

// mean = a + [v + w * score] dt; the score term is skipped entirely when w == 0
// so that the zero-weight chain is the plain Euler step bit for bit.
void transition_mean(std::span<const double> v, double w, std::span<const double> a, double t, double dt,
                     std::vector<double>& score, std::vector<double>& mean) {
  mean.resize(a.size());
  if (w == 0.0) {
    score.assign(a.size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) mean[i] = a[i] + v[i] * dt;
    return;
  }
  score.resize(a.size());
  control::closed_form_score(v, a, t, score);
  for (std::size_t i = 0; i < a.size(); ++i) mean[i] = a[i] + (v[i] + w * score[i]) * dt;
}

StepResult finish_step(std::vector<double> mean, double sigma, double w, std::span<const double> eps, double dt) {
  if (!(sigma >= 0.0)) throw std::logic_error("transition standard deviation must be non-negative");
  StepResult r;
  r.mean = std::move(mean);
  r.sigma = sigma;
  r.drift_weight = w;
  r.next.resize(r.mean.size());
  const double scale = sigma * std::sqrt(dt);
  for (std::size_t i = 0; i < r.mean.size(); ++i) r.next[i] = r.mean[i] + scale * eps[i];
  // A zero-variance transition is a Dirac; it contributes nothing to the density.
  r.log_prob = sigma > 0.0 ? gaussian_log_density(r.next, r.mean, sigma, dt) : 0.0;
  return r;
}

}  // namespace

StepResult scoreflow_step(std::span<const double> v, double alpha_scaled, double sigma, std::span<const double> a,
                          double t, std::span<const double> eps, double dt) {
  if (v.size() != a.size() || eps.size() != a.size()) throw ShapeError("scoreflow_step: width mismatch");
  if (!(sigma > 0.0)) throw std::logic_error("scoreflow_step: sigma must be positive");
  std::vector<double> score, mean;
  transition_mean(v, alpha_scaled, a, t, dt, score, mean);
  return finish_step(std::move(mean), sigma, alpha_scaled, eps, dt);
}

StepResult score_sde_step(std::span<const double> v, double lambda, std::span<const double> a, double t,
                          std::span<const double> eps, double dt) {
  if (v.size() != a.size() || eps.size() != a.size()) throw ShapeError("score_sde_step: width mismatch");
  if (!(lambda >= 0.0)) throw DomainError("score_sde_step: lambda must be non-negative");
  const double sigma = std::sqrt(2.0 * lambda);
  const double tied = sigma * sigma / 2.0;
  std::vector<double> score, mean;
  transition_mean(v, tied, a, t, dt, score, mean);
  return finish_step(std::move(mean), sigma, tied, eps, dt);
}

StepResult scoreflow_step(const Policy& policy, std::span<const double> a, double t, std::span<const double> s,
                          std::span<const double> eps, double dt) {
  const auto v = flow::velocity(policy.velocity, a, t, s);
  const double w = control::alpha_scaled(policy.heads.scheduler, t);
  const double sigma = control::sigma_eval(policy.heads.variance, a, t, s);
  return scoreflow_step(v, w, sigma, a, t, eps, dt);
}

PolicyGradient PolicyGradient::zeros_like(const Policy& policy) {
  return {nn::Gradient::zeros_like(policy.velocity.params), nn::Gradient::zeros_like(policy.heads.scheduler.params),
          nn::Gradient::zeros_like(policy.heads.variance.params)};
}

void PolicyGradient::set_zero() {
  velocity.set_zero();
  scheduler.set_zero();
  variance.set_zero();
}

namespace {

struct StepEval {
  std::vector<double> v;
  std::vector<double> score;
  std::vector<double> mean;
  double sigma = 0.0;
  double weight = 0.0;
  double sigma_logit = 0.0;
  double scheduler_out = 0.0;
};

// Forward evaluation of one transition for any variant. Caches are filled for
// the networks that participate.
void evaluate_step(const Policy& policy, const SamplerConfig& config, std::span<const double> a, double t,
                   std::span<const double> s, double dt, StepEval& out, nn::ForwardCache& vcache,
                   nn::ForwardCache& scache, nn::ForwardCache& varcache, std::vector<double>& input) {
  flow::pack_input(a, t, s, input);
  const auto vout = nn::mlp_forward(policy.velocity.params, input, vcache);
  out.v.assign(vout.begin(), vout.end());

  const auto& var = policy.heads.variance;
  auto learned_sigma = [&] {
    out.sigma_logit = nn::mlp_forward(var.params, input, varcache)[0];
    return control::sigma_from_logit(out.sigma_logit, var.sigma_min, var.sigma_max_effective);
  };

  switch (config.variant) {
    case Variant::kScoreFlow: {
      const double tin[1] = {t};
      out.scheduler_out = nn::mlp_forward(policy.heads.scheduler.params, tin, scache)[0];
      out.weight = (1.0 - t) * out.scheduler_out;
      out.sigma = learned_sigma();
      break;
    }
    case Variant::kNoiseOnly:
      out.weight = 0.0;
      out.sigma = learned_sigma();
      break;
    case Variant::kAlphaOne:
      out.weight = 1.0 - t;
      out.sigma = learned_sigma();
      break;
    case Variant::kScoreSdeCoupled: {
      const double lambda = linear_lambda(config.lambda_max, t);
      if (!(lambda >= 0.0)) throw DomainError("score_sde: lambda must be non-negative");
      out.sigma = std::sqrt(2.0 * lambda);
      out.weight = out.sigma * out.sigma / 2.0;
      break;
    }
    case Variant::kCoupledLearned:
      out.sigma = learned_sigma();
      out.weight = out.sigma * out.sigma / 2.0;
      break;
  }
  transition_mean(out.v, out.weight, a, t, dt, out.score, out.mean);
}

inline double clip_value(double x, double bound) { return std::min(bound, std::max(-bound, x)); }

}  // namespace

FlowTrajectory sample_action_with_noise(const Policy& policy, std::span<const double> s, const SamplerConfig& config,
                                        std::vector<double> a0, std::span<const double> noise) {
  const std::size_t d = policy.action_dim();
  const std::size_t K = config.steps;
  if (K == 0) throw DomainError("sample_action: need at least one denoising step");
  if (a0.size() != d || noise.size() != K * d || s.size() != policy.obs_dim()) {
    throw ShapeError("sample_action: start, noise or observation has the wrong width");
  }
  FlowTrajectory traj;
  traj.variant = config.variant;
  traj.action_dim = d;
  traj.steps = K;
  traj.states.reserve((K + 1) * d);
  traj.states.insert(traj.states.end(), a0.begin(), a0.end());
  traj.noise.assign(noise.begin(), noise.end());
  traj.samples.reserve(K * d);
  traj.means.reserve(K * d);

  const double dt = 1.0 / static_cast<double>(K);
  StepEval ev;
  nn::ForwardCache vc, sc, varc;
  std::vector<double> input;
  std::vector<double> a = std::move(a0);
  for (std::size_t k = 0; k < K; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(K);
    evaluate_step(policy, config, a, t, s, dt, ev, vc, sc, varc, input);
    const auto step = finish_step(ev.mean, ev.sigma, ev.weight, traj.eps(k), dt);
    const bool last = k + 1 == K;
    for (std::size_t i = 0; i < d; ++i) {
      if (!std::isfinite(step.next[i])) {
        throw NumericError("sample_action: non-finite state at step " + std::to_string(k) + " (variant " +
                           std::string(variant_name(config.variant)) + ")");
      }
      a[i] = config.clip.enabled ? clip_value(step.next[i], last ? config.clip.final : config.clip.intermediate)
                                 : step.next[i];
    }
    traj.samples.insert(traj.samples.end(), step.next.begin(), step.next.end());
    traj.means.insert(traj.means.end(), step.mean.begin(), step.mean.end());
    traj.sigmas.push_back(step.sigma);
    traj.drift_weights.push_back(step.drift_weight);
    traj.states.insert(traj.states.end(), a.begin(), a.end());
    traj.log_prob += step.log_prob;
  }
  return traj;
}

FlowTrajectory sample_action(const Policy& policy, std::span<const double> s, const SamplerConfig& config, Rng& rng) {
  std::vector<double> a0(policy.action_dim());
  rng.fill_normal(a0);
  std::vector<double> noise(config.steps * policy.action_dim());
  rng.fill_normal(noise);
  return sample_action_with_noise(policy, s, config, std::move(a0), noise);
}

FlowTrajectory sample_action(const Policy& policy, std::span<const double> s, const SamplerConfig& config,
                             std::uint64_t seed) {
  Rng rng(seed);
  return sample_action(policy, s, config, rng);
}

ChainTape::ChainTape(const Policy& policy, const SamplerConfig& config, std::span<const double> s,
                     const FlowTrajectory& traj)
    : policy_(&policy), config_(config), traj_(&traj) {
  const std::size_t d = policy.action_dim();
  if (traj.action_dim != d || traj.states.size() != (traj.steps + 1) * d || traj.samples.size() != traj.steps * d) {
    throw ShapeError("trajectory chain does not match the policy action width");
  }
  if (traj.steps != config.steps) throw ShapeError("trajectory step count does not match the sampler");
  if (traj.variant != config.variant) throw UsageError("trajectory was generated by a different sampler variant");

  const std::size_t K = traj.steps;
  const double dt = 1.0 / static_cast<double>(K);
  steps_.resize(K);
  means_.reserve(K * d);
  StepEval ev;
  std::vector<double> input;
  for (std::size_t k = 0; k < K; ++k) {
    auto& st = steps_[k];
    st.t = static_cast<double>(k) / static_cast<double>(K);
    evaluate_step(policy, config, traj.state(k), st.t, s, dt, ev, st.velocity_cache, st.scheduler_cache,
                  st.variance_cache, input);
    st.v = ev.v;
    st.score = ev.score;
    st.sigma_logit = ev.sigma_logit;
    st.scheduler_logit = ev.scheduler_out;
    means_.insert(means_.end(), ev.mean.begin(), ev.mean.end());
    sigmas_.push_back(ev.sigma);
    weights_.push_back(ev.weight);
    if (ev.sigma > 0.0) log_prob_ += gaussian_log_density(traj.sample(k), ev.mean, ev.sigma, dt);
  }
  entropy_ = chain_entropy(sigmas_, d, dt);
}

void ChainTape::backward(double w_log_prob, double w_entropy, PolicyGradient& grad) const {
  const auto& policy = *policy_;
  const auto& traj = *traj_;
  const std::size_t d = policy.action_dim();
  const double dd = static_cast<double>(d);
  const double dt = 1.0 / static_cast<double>(traj.steps);
  const auto& var = policy.heads.variance;
  std::vector<double> g_mean(d), g_v(d);
  double one[1];

  for (std::size_t k = 0; k < steps_.size(); ++k) {
    const auto& st = steps_[k];
    const double sigma = sigmas_[k];
    if (!(sigma > 0.0)) continue;
    const double w = weights_[k];
    const double variance = sigma * sigma * dt;
    const auto x = traj.sample(k);
    const double* mu = means_.data() + k * d;

    double sq = 0.0;
    double g_w = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = x[i] - mu[i];
      sq += diff * diff;
      g_mean[i] = w_log_prob * diff / variance;
      g_w += g_mean[i] * st.score[i] * dt;
    }
    double g_sigma = w_log_prob * (sq / (sigma * sigma * sigma * dt) - dd / sigma) + w_entropy * dd / sigma;

    const double v_factor = w == 0.0 ? dt : (1.0 + w * st.t / (1.0 - st.t)) * dt;
    for (std::size_t i = 0; i < d; ++i) g_v[i] = g_mean[i] * v_factor;
    nn::mlp_backward(policy.velocity.params, st.velocity_cache, g_v, grad.velocity);

    switch (config_.variant) {
      case Variant::kScoreFlow:
        one[0] = g_w * (1.0 - st.t);
        nn::mlp_backward(policy.heads.scheduler.params, st.scheduler_cache, one, grad.scheduler);
        break;
      case Variant::kCoupledLearned:
        g_sigma += g_w * sigma;
        break;
      default:
        break;
    }
    if (config_.variant != Variant::kScoreSdeCoupled) {
      one[0] = g_sigma * control::sigma_logit_slope(st.sigma_logit, var.sigma_min, var.sigma_max_effective);
      nn::mlp_backward(var.params, st.variance_cache, one, grad.variance);
    }
  }
}

double trajectory_log_prob(const Policy& policy, const SamplerConfig& config, std::span<const double> s,
                           const FlowTrajectory& traj) {
  return ChainTape(policy, config, s, traj).log_prob();
}

}  // namespace scoreflow::sampler
