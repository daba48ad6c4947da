#include "scoreflow/optim.hpp"

#include <cmath>
#include <numbers>

namespace scoreflow::nn {

OptimizerState adam_init(const ParamBundle& params, const AdamConfig& config) {
  OptimizerState state;
  state.layers = params.layers();
  state.first_moment.assign(params.size(), 0.0);
  state.second_moment.assign(params.size(), 0.0);
  state.beta1 = config.beta1;
  state.beta2 = config.beta2;
  state.eps = config.eps;
  return state;
}

void adam_step(ParamBundle& params, const Gradient& grad, OptimizerState& state, double lr) {
  if (!grad.same_shape(params) || state.layers != params.layers() ||
      state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: parameters, gradient and optimizer state are not shape-congruent");
  }
  if (!(lr > 0.0)) throw DomainError("adam_step: learning rate must be positive");
  const auto g = grad.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw NumericError("adam_step: non-finite gradient entry at index " + std::to_string(i));
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  auto p = params.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g[i];
    v = state.beta2 * v + (1.0 - state.beta2) * g[i] * g[i];
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

double cosine_warm_restart_lr(double base_lr, double min_lr, std::int64_t cycle_steps,
                              std::int64_t warmup_steps, std::int64_t step) {
  if (cycle_steps <= 0 || warmup_steps < 0 || warmup_steps >= cycle_steps || step < 0) {
    throw DomainError("cosine_warm_restart_lr: need 0 <= warmup < cycle and step >= 0");
  }
  const std::int64_t s = step % cycle_steps;
  if (s < warmup_steps) {
    return min_lr + (base_lr - min_lr) * static_cast<double>(s) / static_cast<double>(warmup_steps);
  }
  const double progress =
      static_cast<double>(s - warmup_steps) / static_cast<double>(cycle_steps - warmup_steps);
  return min_lr + (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
}

double clip_grad_norm(std::span<Gradient* const> grads, double max_norm) {
  double total = 0.0;
  for (const Gradient* g : grads) total += squared_norm(*g);
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Gradient* g : grads) scale(*g, s);
  }
  return norm;
}

GradCheckReport finite_diff_check(const LossFn& loss_fn, const ParamBundle& params, double h) {
  if (!(h > 0.0)) throw DomainError("finite_diff_check: step h must be positive");
  Gradient analytic = Gradient::zeros_like(params);
  const double base = loss_fn(params, &analytic);
  const double again = loss_fn(params, nullptr);
  if (base != again) throw UsageError("finite_diff_check: loss function is not deterministic");

  GradCheckReport report;
  ParamBundle probe = params;
  auto pv = probe.values();
  const auto av = analytic.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double orig = pv[i];
    pv[i] = orig + h;
    const double up = loss_fn(probe, nullptr);
    pv[i] = orig - h;
    const double down = loss_fn(probe, nullptr);
    pv[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double rel = std::abs(numeric - av[i]) / std::max(std::abs(av[i]), 1e-8);
    if (i == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic = av[i];
      report.numeric = numeric;
    }
  }
  return report;
}

}  // namespace scoreflow::nn
