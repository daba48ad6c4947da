#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scoreflow/nn.hpp"
#include "scoreflow/optim.hpp"
#include "scoreflow/rng.hpp"

namespace scoreflow::flow {

/// Upper end of the training-time distribution U[0, kMaxTrainTime]; keeps the
/// 1/(1-t) factor of the score finite on every sample the field is fitted on.
inline constexpr double kMaxTrainTime = 0.999;

/// Conditional velocity field v(a, t, s). The network consumes the
/// concatenation [a, t, s] and returns a vector of width `action_dim`.
struct VelocityField {
  nn::ParamBundle params;
  std::size_t action_dim = 0;
  std::size_t obs_dim = 0;

  friend bool operator==(const VelocityField&, const VelocityField&) = default;
};

VelocityField make_velocity_field(std::size_t action_dim, std::size_t obs_dim,
                                  const std::vector<std::size_t>& hidden, std::uint64_t seed);

/// Writes [a, t, s] into `out` (resized as needed).
void pack_input(std::span<const double> a, double t, std::span<const double> s, std::vector<double>& out);

std::vector<double> velocity(const VelocityField& field, std::span<const double> a, double t,
                             std::span<const double> s);

/// Per-dimension affine map of raw actions onto [-1, 1] using dataset min/max.
struct ActionNormalizer {
  std::vector<double> low;
  std::vector<double> high;

  static ActionNormalizer fit(std::span<const double> actions, std::size_t action_dim);
  std::vector<double> normalize(std::span<const double> raw) const;
  std::vector<double> denormalize(std::span<const double> normalized) const;

  friend bool operator==(const ActionNormalizer&, const ActionNormalizer&) = default;
};

/// Demonstrations with actions stored already normalized.
struct DemoDataset {
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  std::vector<double> observations;  // row-major [n x obs_dim]
  std::vector<double> actions;       // row-major [n x action_dim], normalized
  ActionNormalizer normalizer;

  /// Builds a dataset from raw actions, fitting the normalizer.
  static DemoDataset from_raw(std::size_t obs_dim, std::size_t action_dim, std::vector<double> observations,
                              std::span<const double> raw_actions);

  std::size_t size() const { return action_dim == 0 ? 0 : actions.size() / action_dim; }
  std::span<const double> obs(std::size_t i) const { return {observations.data() + i * obs_dim, obs_dim}; }
  std::span<const double> action(std::size_t i) const {
    return {actions.data() + i * action_dim, action_dim};
  }
};

struct FlowPathSample {
  std::vector<double> a0;
  std::vector<double> a1;
  double t = 0.0;
  std::vector<double> at;
  std::vector<double> target;  // a1 - a0
};

/// a_t = (1 - t) a0 + t a1 with target velocity a1 - a0. Requires 0 <= t < 1.
FlowPathSample linear_interpolate(std::span<const double> a0, std::span<const double> a1, double t);

/// One regression pair of the flow-matching objective.
struct FmSample {
  std::vector<double> obs;
  std::vector<double> a1;
  std::vector<double> a0;
  double t = 0.0;
};

struct FmLossResult {
  double loss = 0.0;
  nn::Gradient grad;
};

/// Mean over samples of ||v(a_t, t, s) - (a1 - a0)||^2 with its gradient.
FmLossResult fm_loss(const VelocityField& field, std::span<const FmSample> samples, bool with_grad = true);

/// Draws a0 ~ N(0, I) and t ~ U[0, kMaxTrainTime] for the selected rows.
std::vector<FmSample> draw_fm_samples(const DemoDataset& data, std::span<const std::size_t> rows, Rng& rng);

/// Flow-matching loss on dataset rows with noise from `seed`.
FmLossResult fm_loss(const VelocityField& field, const DemoDataset& data, std::span<const std::size_t> rows,
                     std::uint64_t seed, bool with_grad = true);

/// Euler integration of da = v dt on the grid t_k = k/K from a given start.
std::vector<double> ode_integrate(const VelocityField& field, std::span<const double> s, std::size_t steps,
                                  std::vector<double> a0);

/// Same as ode_integrate with a^0 ~ N(0, I) drawn from Rng(seed).
std::vector<double> ode_sample(const VelocityField& field, std::span<const double> s, std::size_t steps,
                               std::uint64_t seed);

struct PretrainConfig {
  std::vector<std::size_t> hidden{64, 64, 64};
  std::size_t steps = 2000;
  std::size_t batch_size = 256;
  double lr = 3e-3;
  double min_lr = 1e-4;
  std::size_t warmup_steps = 0;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  VelocityField field;
  nn::OptimizerState optimizer;
  std::vector<double> losses;
  double final_loss = 0.0;
  bool diverged = false;
};

/// Adam over flow-matching mini-batches with a single cosine cycle spanning
/// the run. Stops at the first non-finite loss and returns the last finite
/// parameters with `diverged` set.
PretrainResult pretrain(const DemoDataset& data, const PretrainConfig& config);

/// Continues training an existing field in place (used by pretrain).
PretrainResult pretrain_from(VelocityField field, const DemoDataset& data, const PretrainConfig& config);

}  // namespace scoreflow::flow
