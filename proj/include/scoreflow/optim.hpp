#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "scoreflow/nn.hpp"

namespace scoreflow::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam moments for one ParamBundle.
struct OptimizerState {
  std::vector<LayerSpec> layers;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

OptimizerState adam_init(const ParamBundle& params, const AdamConfig& config = {});

/// Bias-corrected Adam. Throws NumericError (leaving params and state
/// untouched) when the gradient holds a non-finite entry.
void adam_step(ParamBundle& params, const Gradient& grad, OptimizerState& state, double lr);

/// Linear warmup from `min_lr` to `base_lr`, then half-cosine back to `min_lr`;
/// restarts every `cycle_steps`.
double cosine_warm_restart_lr(double base_lr, double min_lr, std::int64_t cycle_steps,
                              std::int64_t warmup_steps, std::int64_t step);

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Gradient* const> grads, double max_norm);

/// Loss evaluated at `params`; fills `grad` with the analytic gradient when non-null.
using LossFn = std::function<double(const ParamBundle& params, Gradient* grad)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central differences against the analytic gradient. Relative error uses
/// max(|analytic|, 1e-8) as denominator.
GradCheckReport finite_diff_check(const LossFn& loss_fn, const ParamBundle& params, double h = 1e-5);

}  // namespace scoreflow::nn
