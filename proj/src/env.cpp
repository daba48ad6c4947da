#include "scoreflow/env.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scoreflow/error.hpp"

namespace scoreflow::rl {

PointMassEnv::PointMassEnv(PointMassConfig config) : config_(config) {
  if (config_.horizon == 0) throw ConfigError("env.horizon must be positive");
  if (!(config_.action_scale > 0.0) || !(config_.arena_bound > 0.0)) {
    throw ConfigError("env.action_scale and env.arena_bound must be positive");
  }
}

std::array<double, PointMassEnv::kObsDim> PointMassEnv::reset(Rng& rng) {
  const double r = config_.init_range;
  std::array<double, 2> p{rng.uniform(-r, r), rng.uniform(-r, r)};
  std::array<double, 2> g{rng.uniform(-r, r), rng.uniform(-r, r)};
  return reset(p, g);
}

std::array<double, PointMassEnv::kObsDim> PointMassEnv::reset(std::array<double, 2> position,
                                                              std::array<double, 2> goal) {
  for (auto& x : position) x = std::clamp(x, -config_.arena_bound, config_.arena_bound);
  position_ = position;
  goal_ = goal;
  step_ = 0;
  started_ = true;
  return observation();
}

std::array<double, PointMassEnv::kObsDim> PointMassEnv::observation() const {
  return {position_[0], position_[1], goal_[0] - position_[0], goal_[1] - position_[1]};
}

PointMassEnv::StepResult PointMassEnv::step(std::span<const double> action) {
  if (!started_) throw UsageError("PointMassEnv::step before reset");
  if (done()) throw UsageError("PointMassEnv::step on a finished episode");
  if (action.size() != kActionDim) throw ShapeError("PointMassEnv::step expects a 2-D action");
  for (std::size_t i = 0; i < kActionDim; ++i) {
    if (!std::isfinite(action[i])) throw NumericError("PointMassEnv::step: non-finite action");
    const double a = std::clamp(action[i], -1.0, 1.0);
    position_[i] = std::clamp(position_[i] + config_.action_scale * a, -config_.arena_bound, config_.arena_bound);
  }
  ++step_;
  StepResult r;
  r.obs = observation();
  r.reward = -std::hypot(position_[0] - goal_[0], position_[1] - goal_[1]);
  r.done = done();
  return r;
}

std::array<double, 2> expert_action(const PointMassEnv& env, double gain) {
  const auto& p = env.position();
  const auto& g = env.goal();
  const double s = env.config().action_scale;
  return {gain * std::clamp((g[0] - p[0]) / s, -1.0, 1.0), gain * std::clamp((g[1] - p[1]) / s, -1.0, 1.0)};
}

flow::DemoDataset generate_demos(const PointMassConfig& env_config, const DemoConfig& demo_config) {
  if (demo_config.episodes == 0) throw ConfigError("demo.episodes must be positive");
  PointMassEnv env(env_config);
  Rng rng(demo_config.seed, 0xde);
  std::vector<double> obs, actions;
  for (std::size_t ep = 0; ep < demo_config.episodes; ++ep) {
    auto o = env.reset(rng);
    while (!env.done()) {
      auto a = expert_action(env, demo_config.gain);
      for (auto& x : a) x = std::clamp(x + demo_config.noise_std * rng.normal(), -1.0, 1.0);
      obs.insert(obs.end(), o.begin(), o.end());
      actions.insert(actions.end(), a.begin(), a.end());
      o = env.step(a).obs;
    }
  }
  return flow::DemoDataset::from_raw(PointMassEnv::kObsDim, PointMassEnv::kActionDim, std::move(obs), actions);
}

}  // namespace scoreflow::rl
