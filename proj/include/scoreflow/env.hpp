#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "scoreflow/flow.hpp"
#include "scoreflow/rng.hpp"

namespace scoreflow::rl {

struct PointMassConfig {
  std::size_t horizon = 40;
  double action_scale = 0.1;
  double arena_bound = 1.5;
  /// Start position and goal are drawn from U[-init_range, init_range]^2.
  double init_range = 1.0;
};

/// 2-D point mass steered toward a goal. Observation is [pos, goal - pos].
class PointMassEnv {
 public:
  static constexpr std::size_t kObsDim = 4;
  static constexpr std::size_t kActionDim = 2;

  struct StepResult {
    std::array<double, kObsDim> obs;
    double reward = 0.0;
    bool done = false;
  };

  explicit PointMassEnv(PointMassConfig config = {});

  std::array<double, kObsDim> reset(Rng& rng);
  /// Places the mass and goal explicitly.
  std::array<double, kObsDim> reset(std::array<double, 2> position, std::array<double, 2> goal);
  /// Clamps the action to [-1, 1]^2, moves, clamps to the arena; reward is the
  /// negative distance to the goal after the move; done at the horizon.
  StepResult step(std::span<const double> action);

  std::array<double, kObsDim> observation() const;
  const std::array<double, 2>& position() const { return position_; }
  const std::array<double, 2>& goal() const { return goal_; }
  std::size_t steps_taken() const { return step_; }
  bool done() const { return step_ >= config_.horizon; }
  const PointMassConfig& config() const { return config_; }

 private:
  PointMassConfig config_;
  std::array<double, 2> position_{};
  std::array<double, 2> goal_{};
  std::size_t step_ = 0;
  bool started_ = false;
};

/// Scripted proportional controller with injected suboptimality:
/// gain * clamp((goal - pos) / action_scale, -1, 1) + N(0, noise_std^2).
struct DemoConfig {
  std::size_t episodes = 200;
  double gain = 0.6;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
};

std::array<double, 2> expert_action(const PointMassEnv& env, double gain);

flow::DemoDataset generate_demos(const PointMassConfig& env_config, const DemoConfig& demo_config);

}  // namespace scoreflow::rl
