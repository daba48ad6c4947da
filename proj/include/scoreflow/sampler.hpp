#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "scoreflow/flow.hpp"
#include "scoreflow/nn.hpp"
#include "scoreflow/rng.hpp"
#include "scoreflow/score_control.hpp"

namespace scoreflow::sampler {

/// How the drift and diffusion of each denoising transition are formed.
enum class Variant : std::uint8_t {
  kScoreFlow = 0,        // v + alpha_scaled(t) * score, sigma from the variance head
  kNoiseOnly = 1,        // alpha == 0
  kAlphaOne = 2,         // alpha_raw == 1, still multiplied by (1 - t)
  kScoreSdeCoupled = 3,  // lambda(t) = lambda_max (1 - t), sigma = sqrt(2 lambda)
  kCoupledLearned = 4,   // variance head output sigma ties lambda = sigma^2 / 2
};

std::string_view variant_name(Variant v);
Variant variant_from_name(std::string_view name);
/// Coupled variants tie the drift weight to the diffusion.
bool is_coupled(Variant v);

struct ClipPolicy {
  double intermediate = 3.0;
  double final = 1.0;
  bool enabled = true;
};

struct SamplerConfig {
  Variant variant = Variant::kScoreFlow;
  std::size_t steps = 4;
  ClipPolicy clip;
  double lambda_max = 0.1;
};

/// Learnable heads that shape each transition next to the velocity field.
struct ControlHeads {
  control::ScoreScheduler scheduler;
  control::VariancePredictor variance;

  friend bool operator==(const ControlHeads&, const ControlHeads&) = default;
};

struct Policy {
  flow::VelocityField velocity;
  ControlHeads heads;

  std::size_t action_dim() const { return velocity.action_dim; }
  std::size_t obs_dim() const { return velocity.obs_dim; }

  friend bool operator==(const Policy&, const Policy&) = default;
};

/// Record of one K-step stochastic denoising chain.
struct FlowTrajectory {
  Variant variant = Variant::kScoreFlow;
  std::size_t action_dim = 0;
  std::size_t steps = 0;
  std::vector<double> states;         // [(K+1) x d] chain inputs a^0..a^K after clipping
  std::vector<double> samples;        // [K x d] pre-clip draws, samples[k] = means[k] + sigmas[k] sqrt(dt) noise[k]
  std::vector<double> means;          // [K x d]
  std::vector<double> sigmas;         // [K]
  std::vector<double> drift_weights;  // [K] alpha_scaled for score variants, lambda for coupled ones
  std::vector<double> noise;          // [K x d]
  double log_prob = 0.0;

  std::span<const double> state(std::size_t k) const { return {states.data() + k * action_dim, action_dim}; }
  std::span<const double> sample(std::size_t k) const { return {samples.data() + k * action_dim, action_dim}; }
  std::span<const double> mean(std::size_t k) const { return {means.data() + k * action_dim, action_dim}; }
  std::span<const double> eps(std::size_t k) const { return {noise.data() + k * action_dim, action_dim}; }
  std::span<const double> final_action() const { return state(steps); }

  friend bool operator==(const FlowTrajectory&, const FlowTrajectory&) = default;
};

/// log N(x; mean, sigma^2 dt I).
double gaussian_log_density(std::span<const double> x, std::span<const double> mean, double sigma, double dt);

struct StepResult {
  std::vector<double> next;  // pre-clip sample
  std::vector<double> mean;
  double sigma = 0.0;
  double drift_weight = 0.0;
  double log_prob = 0.0;
};

/// One decoupled transition: mean = a + [v + alpha_scaled * score] dt,
/// next = mean + sigma sqrt(dt) eps. The caller supplies v, alpha_scaled and sigma.
StepResult scoreflow_step(std::span<const double> v, double alpha_scaled, double sigma, std::span<const double> a,
                          double t, std::span<const double> eps, double dt);

/// Evaluates the networks of `policy` and takes one ScoRe-Flow transition.
StepResult scoreflow_step(const Policy& policy, std::span<const double> a, double t, std::span<const double> s,
                          std::span<const double> eps, double dt);

/// Coupled score-SDE transition: drift v + lambda * score, diffusion sqrt(2 lambda).
/// The returned drift_weight is sigma^2 / 2 so that sigma^2 == 2 * drift_weight holds exactly.
StepResult score_sde_step(std::span<const double> v, double lambda, std::span<const double> a, double t,
                          std::span<const double> eps, double dt);

/// Linear-decay coupling schedule lambda_max (1 - t).
double linear_lambda(double lambda_max, double t);

/// Runs the K-step chain from a^0 ~ N(0, I) drawn from Rng(seed), followed by the noise draws.
FlowTrajectory sample_action(const Policy& policy, std::span<const double> s, const SamplerConfig& config,
                             std::uint64_t seed);
FlowTrajectory sample_action(const Policy& policy, std::span<const double> s, const SamplerConfig& config, Rng& rng);

/// Chain with caller-provided start and noise ([K x d]).
FlowTrajectory sample_action_with_noise(const Policy& policy, std::span<const double> s, const SamplerConfig& config,
                                        std::vector<double> a0, std::span<const double> noise);

/// Gradients of a scalar with respect to every policy network.
struct PolicyGradient {
  nn::Gradient velocity;
  nn::Gradient scheduler;
  nn::Gradient variance;

  static PolicyGradient zeros_like(const Policy& policy);
  void set_zero();
};

/// Per-step forward state for replaying a stored chain under the current
/// parameters. Holds what the reverse pass needs.
class ChainTape {
 public:
  ChainTape(const Policy& policy, const SamplerConfig& config, std::span<const double> s,
            const FlowTrajectory& traj);

  double log_prob() const { return log_prob_; }
  /// Exact entropy of the Gaussian chain given the visited means.
  double entropy() const { return entropy_; }
  const std::vector<double>& sigmas() const { return sigmas_; }
  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& drift_weights() const { return weights_; }

  /// Accumulates d(w_lp * log_prob + w_ent * entropy) / d(params) into `grad`.
  void backward(double w_log_prob, double w_entropy, PolicyGradient& grad) const;

 private:
  struct Step {
    nn::ForwardCache velocity_cache;
    nn::ForwardCache scheduler_cache;
    nn::ForwardCache variance_cache;
    std::vector<double> v;
    std::vector<double> score;
    double t = 0.0;
    double sigma_logit = 0.0;
    double scheduler_logit = 0.0;
  };

  const Policy* policy_;
  SamplerConfig config_;
  const FlowTrajectory* traj_;
  std::vector<Step> steps_;
  std::vector<double> means_;
  std::vector<double> sigmas_;
  std::vector<double> weights_;
  double log_prob_ = 0.0;
  double entropy_ = 0.0;
};

/// Sum over steps of log N(sample_k; mean_k, sigma_k^2 dt I), recomputed from
/// the stored chain with the current parameters.
double trajectory_log_prob(const Policy& policy, const SamplerConfig& config, std::span<const double> s,
                           const FlowTrajectory& traj);

/// sum_k d/2 ln(2 pi e sigma_k^2 dt).
double chain_entropy(std::span<const double> sigmas, std::size_t action_dim, double dt);

}  // namespace scoreflow::sampler
