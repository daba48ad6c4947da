#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scoreflow/error.hpp"

namespace scoreflow::nn {

enum class Activation : std::uint8_t { kIdentity = 0, kSiLU = 1, kTanh = 2, kSoftplus = 3 };

std::string_view activation_name(Activation act);
Activation activation_from_name(std::string_view name);

double activate(Activation act, double x);
/// d(act)/dx given the pre-activation `x` and the already computed output `y`.
double activation_slope(Activation act, double x, double y);

double softplus(double x);
double sigmoid(double x);

struct LayerSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation act = Activation::kIdentity;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Row-major weights [out x in] followed by bias [out], layer after layer, in
/// one contiguous buffer. `Tag` distinguishes parameters from gradients so the
/// two cannot be mixed up at call sites.
template <typename Tag>
class Layered {
 public:
  Layered() = default;
  explicit Layered(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ConfigError("network needs at least one layer");
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& s = layers_[l];
      if (s.in == 0 || s.out == 0) throw ConfigError("zero-width layer at index " + std::to_string(l));
      if (l > 0 && layers_[l - 1].out != s.in) {
        throw ConfigError("layer " + std::to_string(l) + " input width " + std::to_string(s.in) +
                          " does not match previous output " + std::to_string(layers_[l - 1].out));
      }
      offsets_.push_back(offset);
      offset += s.out * s.in + s.out;
    }
    values_.assign(offset, 0.0);
  }

  template <typename OtherTag>
  static Layered zeros_like(const Layered<OtherTag>& other) {
    return Layered(other.layers());
  }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::span<double> weights(std::size_t l) {
    return {values_.data() + offsets_[l], layers_[l].out * layers_[l].in};
  }
  std::span<const double> weights(std::size_t l) const {
    return {values_.data() + offsets_[l], layers_[l].out * layers_[l].in};
  }
  std::span<double> bias(std::size_t l) {
    return {values_.data() + offsets_[l] + layers_[l].out * layers_[l].in, layers_[l].out};
  }
  std::span<const double> bias(std::size_t l) const {
    return {values_.data() + offsets_[l] + layers_[l].out * layers_[l].in, layers_[l].out};
  }
  double& weight(std::size_t l, std::size_t row, std::size_t col) {
    return values_[offsets_[l] + row * layers_[l].in + col];
  }
  double weight(std::size_t l, std::size_t row, std::size_t col) const {
    return values_[offsets_[l] + row * layers_[l].in + col];
  }

  template <typename OtherTag>
  bool same_shape(const Layered<OtherTag>& other) const {
    return layers_ == other.layers();
  }

  void set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Layered&, const Layered&) = default;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
};

struct ParamTag {};
struct GradTag {};
using ParamBundle = Layered<ParamTag>;
using Gradient = Layered<GradTag>;

/// Architecture of a fully connected net.
struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 0;
  Activation hidden_act = Activation::kSiLU;
  Activation output_act = Activation::kIdentity;
  /// When set, the final layer starts with zero weights and this bias.
  std::optional<double> final_bias = std::nullopt;

  std::vector<LayerSpec> layers() const;
};

/// He-style init: weights ~ N(0, 1/fan_in) from a seeded stream, biases zero.
ParamBundle mlp_init(const MlpSpec& spec, std::uint64_t seed);

/// Per-layer intermediates kept for the backward pass.
struct ForwardCache {
  std::vector<std::vector<double>> inputs;  // inputs[l] feeds layer l; inputs[L] is the output
  std::vector<std::vector<double>> pre;     // pre-activations of layer l
  std::span<const double> output() const { return inputs.back(); }
};

std::vector<double> mlp_forward(const ParamBundle& params, std::span<const double> input);
/// Forward pass that records intermediates into `cache` (buffers are reused).
std::span<const double> mlp_forward(const ParamBundle& params, std::span<const double> input,
                                    ForwardCache& cache);

/// Reverse pass. Adds dL/dparams into `grad` and returns dL/dinput.
std::vector<double> mlp_backward(const ParamBundle& params, const ForwardCache& cache,
                                 std::span<const double> upstream, Gradient& grad);

struct BackpropResult {
  Gradient grad;
  std::vector<double> input_grad;
};

BackpropResult backprop(const ParamBundle& params, std::span<const double> input,
                        std::span<const double> upstream);

// Elementwise helpers on gradients.
void axpy(double scale, const Gradient& x, Gradient& y);
void scale(Gradient& g, double s);
double squared_norm(const Gradient& g);

}  // namespace scoreflow::nn
