#include "scoreflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scoreflow/error.hpp"

namespace scoreflow::flow {

VelocityField make_velocity_field(std::size_t action_dim, std::size_t obs_dim,
                                  const std::vector<std::size_t>& hidden, std::uint64_t seed) {
  if (action_dim == 0) throw ConfigError("velocity field needs a positive action dimension");
  nn::MlpSpec spec;
  spec.input_dim = action_dim + 1 + obs_dim;
  spec.hidden = hidden;
  spec.output_dim = action_dim;
  spec.hidden_act = nn::Activation::kSiLU;
  spec.output_act = nn::Activation::kIdentity;
  return {nn::mlp_init(spec, seed), action_dim, obs_dim};
}

void pack_input(std::span<const double> a, double t, std::span<const double> s, std::vector<double>& out) {
  out.resize(a.size() + 1 + s.size());
  std::copy(a.begin(), a.end(), out.begin());
  out[a.size()] = t;
  std::copy(s.begin(), s.end(), out.begin() + static_cast<std::ptrdiff_t>(a.size() + 1));
}

std::vector<double> velocity(const VelocityField& field, std::span<const double> a, double t,
                             std::span<const double> s) {
  if (a.size() != field.action_dim || s.size() != field.obs_dim) {
    throw ShapeError("velocity: expected action width " + std::to_string(field.action_dim) +
                     " and observation width " + std::to_string(field.obs_dim));
  }
  std::vector<double> input;
  pack_input(a, t, s, input);
  return nn::mlp_forward(field.params, input);
}

ActionNormalizer ActionNormalizer::fit(std::span<const double> actions, std::size_t action_dim) {
  if (action_dim == 0 || actions.empty() || actions.size() % action_dim != 0) {
    throw ShapeError("ActionNormalizer::fit: action buffer is empty or not a multiple of the action width");
  }
  ActionNormalizer n;
  n.low.assign(action_dim, std::numeric_limits<double>::infinity());
  n.high.assign(action_dim, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const double v = actions[i];
    if (!std::isfinite(v)) throw NumericError("demonstration action " + std::to_string(i / action_dim) + " is not finite");
    const std::size_t j = i % action_dim;
    n.low[j] = std::min(n.low[j], v);
    n.high[j] = std::max(n.high[j], v);
  }
  return n;
}

namespace {

// Degenerate dimensions (constant action) map onto 0 with unit scale.
inline double half_range(double lo, double hi) {
  const double h = 0.5 * (hi - lo);
  return h > 0.0 ? h : 1.0;
}

}  // namespace

std::vector<double> ActionNormalizer::normalize(std::span<const double> raw) const {
  if (raw.size() != low.size()) throw ShapeError("normalize: action width mismatch");
  std::vector<double> out(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) {
    const double mid = 0.5 * (low[j] + high[j]);
    out[j] = std::clamp((raw[j] - mid) / half_range(low[j], high[j]), -1.0, 1.0);
  }
  return out;
}

std::vector<double> ActionNormalizer::denormalize(std::span<const double> normalized) const {
  if (normalized.size() != low.size()) throw ShapeError("denormalize: action width mismatch");
  std::vector<double> out(normalized.size());
  for (std::size_t j = 0; j < normalized.size(); ++j) {
    const double mid = 0.5 * (low[j] + high[j]);
    out[j] = mid + normalized[j] * half_range(low[j], high[j]);
  }
  return out;
}

DemoDataset DemoDataset::from_raw(std::size_t obs_dim, std::size_t action_dim, std::vector<double> observations,
                                  std::span<const double> raw_actions) {
  DemoDataset d;
  d.obs_dim = obs_dim;
  d.action_dim = action_dim;
  d.normalizer = ActionNormalizer::fit(raw_actions, action_dim);
  const std::size_t n = raw_actions.size() / action_dim;
  if (observations.size() != n * obs_dim) throw ShapeError("demo observations and actions disagree on row count");
  d.observations = std::move(observations);
  d.actions.reserve(raw_actions.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = d.normalizer.normalize(raw_actions.subspan(i * action_dim, action_dim));
    d.actions.insert(d.actions.end(), row.begin(), row.end());
  }
  return d;
}

FlowPathSample linear_interpolate(std::span<const double> a0, std::span<const double> a1, double t) {
  if (a0.size() != a1.size()) throw ShapeError("linear_interpolate: endpoints differ in width");
  if (!(t >= 0.0 && t < 1.0)) throw DomainError("linear_interpolate: t must lie in [0, 1), got " + std::to_string(t));
  FlowPathSample s;
  s.a0.assign(a0.begin(), a0.end());
  s.a1.assign(a1.begin(), a1.end());
  s.t = t;
  s.at.resize(a0.size());
  s.target.resize(a0.size());
  for (std::size_t i = 0; i < a0.size(); ++i) {
    s.at[i] = (1.0 - t) * a0[i] + t * a1[i];
    s.target[i] = a1[i] - a0[i];
  }
  return s;
}

FmLossResult fm_loss(const VelocityField& field, std::span<const FmSample> samples, bool with_grad) {
  if (samples.empty()) throw UsageError("fm_loss: empty batch");
  FmLossResult result;
  if (with_grad) result.grad = nn::Gradient::zeros_like(field.params);
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  nn::ForwardCache cache;
  std::vector<double> input;
  std::vector<double> upstream(field.action_dim);
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& smp = samples[i];
    if (smp.a0.size() != field.action_dim || smp.a1.size() != field.action_dim || smp.obs.size() != field.obs_dim) {
      throw ShapeError("fm_loss: sample " + std::to_string(i) + " has the wrong width");
    }
    const auto path = linear_interpolate(smp.a0, smp.a1, smp.t);
    pack_input(path.at, smp.t, smp.obs, input);
    const auto out = nn::mlp_forward(field.params, input, cache);
    double err = 0.0;
    for (std::size_t j = 0; j < field.action_dim; ++j) {
      if (!std::isfinite(out[j])) {
        throw NumericError("fm_loss: non-finite network output at sample " + std::to_string(i));
      }
      const double r = out[j] - path.target[j];
      err += r * r;
      upstream[j] = 2.0 * r * inv_n;
    }
    total += err;
    if (with_grad) nn::mlp_backward(field.params, cache, upstream, result.grad);
  }
  result.loss = total * inv_n;
  return result;
}

std::vector<FmSample> draw_fm_samples(const DemoDataset& data, std::span<const std::size_t> rows, Rng& rng) {
  std::vector<FmSample> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= data.size()) throw ShapeError("draw_fm_samples: row index out of range");
    FmSample s;
    const auto o = data.obs(r);
    const auto a = data.action(r);
    s.obs.assign(o.begin(), o.end());
    s.a1.assign(a.begin(), a.end());
    s.a0.resize(data.action_dim);
    rng.fill_normal(s.a0);
    s.t = rng.uniform(0.0, kMaxTrainTime);
    out.push_back(std::move(s));
  }
  return out;
}

FmLossResult fm_loss(const VelocityField& field, const DemoDataset& data, std::span<const std::size_t> rows,
                     std::uint64_t seed, bool with_grad) {
  Rng rng(seed);
  const auto samples = draw_fm_samples(data, rows, rng);
  return fm_loss(field, samples, with_grad);
}

std::vector<double> ode_integrate(const VelocityField& field, std::span<const double> s, std::size_t steps,
                                  std::vector<double> a) {
  if (steps == 0) throw DomainError("ode_sample: need at least one step");
  if (a.size() != field.action_dim || s.size() != field.obs_dim) throw ShapeError("ode_sample: width mismatch");
  const double dt = 1.0 / static_cast<double>(steps);
  std::vector<double> input;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(steps);
    pack_input(a, t, s, input);
    const auto v = nn::mlp_forward(field.params, input);
    for (std::size_t j = 0; j < a.size(); ++j) {
      a[j] = a[j] + v[j] * dt;
      if (!std::isfinite(a[j])) throw NumericError("ode_sample: non-finite state at step " + std::to_string(k));
    }
  }
  return a;
}

std::vector<double> ode_sample(const VelocityField& field, std::span<const double> s, std::size_t steps,
                               std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> a0(field.action_dim);
  rng.fill_normal(a0);
  return ode_integrate(field, s, steps, std::move(a0));
}

PretrainResult pretrain(const DemoDataset& data, const PretrainConfig& config) {
  auto field = make_velocity_field(data.action_dim, data.obs_dim, config.hidden, config.seed);
  return pretrain_from(std::move(field), data, config);
}

PretrainResult pretrain_from(VelocityField field, const DemoDataset& data, const PretrainConfig& config) {
  if (data.size() == 0) throw UsageError("pretrain: empty dataset");
  PretrainResult result;
  result.optimizer = nn::adam_init(field.params);
  Rng rng = Rng(config.seed).split(0x9f);
  std::vector<std::size_t> rows(config.batch_size);
  const auto cycle = static_cast<std::int64_t>(std::max<std::size_t>(config.steps, 1));
  const auto warmup = static_cast<std::int64_t>(std::min(config.warmup_steps, config.steps > 0 ? config.steps - 1 : 0));
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (auto& r : rows) r = rng.below(data.size());
    auto samples = draw_fm_samples(data, rows, rng);
    FmLossResult loss;
    try {
      loss = fm_loss(field, samples);
    } catch (const NumericError&) {
      result.diverged = true;
      break;
    }
    if (!std::isfinite(loss.loss) || !loss.grad.all_finite()) {
      result.diverged = true;
      break;
    }
    const double lr = nn::cosine_warm_restart_lr(config.lr, config.min_lr, cycle, warmup,
                                                 static_cast<std::int64_t>(step));
    nn::ParamBundle before = field.params;
    nn::adam_step(field.params, loss.grad, result.optimizer, lr);
    if (!field.params.all_finite()) {
      field.params = std::move(before);
      result.diverged = true;
      break;
    }
    result.losses.push_back(loss.loss);
  }
  result.final_loss = result.losses.empty() ? 0.0 : result.losses.back();
  result.field = std::move(field);
  return result;
}

}  // namespace scoreflow::flow
