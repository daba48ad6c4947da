#include "scoreflow/score_control.hpp"

#include <cmath>
#include <string>

#include "scoreflow/error.hpp"
#include "scoreflow/flow.hpp"

namespace scoreflow::control {

void closed_form_score(std::span<const double> v, std::span<const double> a, double t, std::span<double> out) {
  if (v.size() != a.size() || out.size() != a.size()) throw ShapeError("closed_form_score: width mismatch");
  if (!(t >= 0.0 && t <= 1.0 - kTimeFloor)) {
    throw DomainError("closed_form_score: t = " + std::to_string(t) + " outside [0, 1 - 1e-6]");
  }
  const double denom = 1.0 - t;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (t * v[i] - a[i]) / denom;
}

std::vector<double> closed_form_score(std::span<const double> v, std::span<const double> a, double t) {
  std::vector<double> out(a.size());
  closed_form_score(v, a, t, out);
  return out;
}

ScoreScheduler make_score_scheduler(std::size_t hidden_dim, std::uint64_t seed) {
  if (hidden_dim == 0) throw ConfigError("score_hidden_dim must be positive");
  nn::MlpSpec spec;
  spec.input_dim = 1;
  spec.hidden = {hidden_dim, hidden_dim};
  spec.output_dim = 1;
  spec.hidden_act = nn::Activation::kSiLU;
  spec.output_act = nn::Activation::kSoftplus;
  spec.final_bias = kSchedulerInitBias;
  return {nn::mlp_init(spec, seed)};
}

double alpha_raw(const ScoreScheduler& sched, double t) {
  const double in[1] = {t};
  return nn::mlp_forward(sched.params, in)[0];
}

double alpha_scaled(const ScoreScheduler& sched, double t) {
  if (t == 1.0) return 0.0;
  return (1.0 - t) * alpha_raw(sched, t);
}

VariancePredictor make_variance_predictor(std::size_t action_dim, std::size_t obs_dim,
                                          const std::vector<std::size_t>& hidden, double sigma_min,
                                          double sigma_max, std::uint64_t seed) {
  if (!(sigma_min > 0.0) || !(sigma_min < sigma_max)) {
    throw ConfigError("variance bounds need 0 < sigma_min < sigma_max (got " + std::to_string(sigma_min) + ", " +
                      std::to_string(sigma_max) + ")");
  }
  nn::MlpSpec spec;
  spec.input_dim = action_dim + 1 + obs_dim;
  spec.hidden = hidden;
  spec.output_dim = 1;
  spec.hidden_act = nn::Activation::kTanh;
  spec.output_act = nn::Activation::kIdentity;
  VariancePredictor p;
  p.params = nn::mlp_init(spec, seed);
  p.action_dim = action_dim;
  p.obs_dim = obs_dim;
  p.sigma_min = sigma_min;
  p.sigma_max = sigma_max;
  p.sigma_max_effective = sigma_max;
  return p;
}

double sigma_from_logit(double logit, double sigma_min, double sigma_max) {
  if (!(sigma_min <= sigma_max)) throw ConfigError("sigma bounds need sigma_min <= sigma_max");
  return sigma_min + (sigma_max - sigma_min) / 2.0 * (std::tanh(logit) + 1.0);
}

double sigma_logit_slope(double logit, double sigma_min, double sigma_max) {
  const double th = std::tanh(logit);
  return (sigma_max - sigma_min) / 2.0 * (1.0 - th * th);
}

double sigma_eval(const VariancePredictor& pred, std::span<const double> a, double t, std::span<const double> s) {
  if (!(pred.sigma_min < pred.sigma_max)) throw ConfigError("sigma_eval: sigma_min must be below sigma_max");
  if (a.size() != pred.action_dim || s.size() != pred.obs_dim) throw ShapeError("sigma_eval: width mismatch");
  std::vector<double> input;
  flow::pack_input(a, t, s, input);
  const double logit = nn::mlp_forward(pred.params, input)[0];
  return sigma_from_logit(logit, pred.sigma_min, pred.sigma_max_effective);
}

double effective_sigma_max(const NoiseBoundSchedule& schedule, double sigma_min, double sigma_max,
                           std::int64_t iter) {
  const double total = static_cast<double>(schedule.total_iters);
  const double hold = schedule.hold_ratio * total;
  const double it = static_cast<double>(iter);
  if (it <= hold || schedule.total_iters <= 0) return sigma_max;
  const double target = schedule.decay_target_mix * sigma_min + (1.0 - schedule.decay_target_mix) * sigma_max;
  const double frac = std::min(1.0, (it - hold) / (total - hold));
  return std::max(sigma_min, sigma_max + (target - sigma_max) * frac);
}

}  // namespace scoreflow::control
