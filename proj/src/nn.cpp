#include "scoreflow/nn.hpp"

#include <cmath>

#include "scoreflow/rng.hpp"

namespace scoreflow::nn {

std::string_view activation_name(Activation act) {
  switch (act) {
    case Activation::kIdentity: return "identity";
    case Activation::kSiLU: return "silu";
    case Activation::kTanh: return "tanh";
    case Activation::kSoftplus: return "softplus";
  }
  return "unknown";
}

Activation activation_from_name(std::string_view name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "silu") return Activation::kSiLU;
  if (name == "tanh") return Activation::kTanh;
  if (name == "softplus") return Activation::kSoftplus;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double activate(Activation act, double x) {
  switch (act) {
    case Activation::kIdentity: return x;
    case Activation::kSiLU: return x * sigmoid(x);
    case Activation::kTanh: return std::tanh(x);
    case Activation::kSoftplus: return softplus(x);
  }
  return x;
}

double activation_slope(Activation act, double x, double y) {
  switch (act) {
    case Activation::kIdentity: return 1.0;
    case Activation::kSiLU: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Activation::kTanh: return 1.0 - y * y;
    case Activation::kSoftplus: return sigmoid(x);
  }
  return 1.0;
}

std::vector<LayerSpec> MlpSpec::layers() const {
  std::vector<LayerSpec> out;
  std::size_t in = input_dim;
  for (std::size_t h : hidden) {
    out.push_back({in, h, hidden_act});
    in = h;
  }
  out.push_back({in, output_dim, output_act});
  return out;
}

ParamBundle mlp_init(const MlpSpec& spec, std::uint64_t seed) {
  ParamBundle params(spec.layers());
  Rng rng(seed);
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    const auto& layer = params.layers()[l];
    const bool special = spec.final_bias && l + 1 == params.num_layers();
    if (special) {
      // weights already zero
      for (auto& b : params.bias(l)) b = *spec.final_bias;
      continue;
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.in));
    for (auto& w : params.weights(l)) w = scale * rng.normal();
  }
  return params;
}

namespace {

void affine(const ParamBundle& params, std::size_t l, std::span<const double> x, std::span<double> z) {
  const auto& layer = params.layers()[l];
  const auto w = params.weights(l);
  const auto b = params.bias(l);
  for (std::size_t r = 0; r < layer.out; ++r) {
    const double* row = w.data() + r * layer.in;
    double acc = 0.0;
    for (std::size_t c = 0; c < layer.in; ++c) acc += row[c] * x[c];
    z[r] = acc + b[r];
  }
}

void check_input(const ParamBundle& params, std::span<const double> input) {
  if (input.size() != params.input_dim()) {
    throw ShapeError("network expects input width " + std::to_string(params.input_dim()) + ", got " +
                     std::to_string(input.size()));
  }
}

}  // namespace

std::vector<double> mlp_forward(const ParamBundle& params, std::span<const double> input) {
  check_input(params, input);
  std::vector<double> x(input.begin(), input.end());
  std::vector<double> z;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    const auto& layer = params.layers()[l];
    z.resize(layer.out);
    affine(params, l, x, z);
    for (auto& v : z) v = activate(layer.act, v);
    x.swap(z);
  }
  return x;
}

std::span<const double> mlp_forward(const ParamBundle& params, std::span<const double> input,
                                    ForwardCache& cache) {
  check_input(params, input);
  const std::size_t n = params.num_layers();
  cache.inputs.resize(n + 1);
  cache.pre.resize(n);
  cache.inputs[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < n; ++l) {
    const auto& layer = params.layers()[l];
    auto& z = cache.pre[l];
    auto& y = cache.inputs[l + 1];
    z.resize(layer.out);
    y.resize(layer.out);
    affine(params, l, cache.inputs[l], z);
    for (std::size_t i = 0; i < layer.out; ++i) y[i] = activate(layer.act, z[i]);
  }
  return cache.inputs[n];
}

std::vector<double> mlp_backward(const ParamBundle& params, const ForwardCache& cache,
                                 std::span<const double> upstream, Gradient& grad) {
  if (!grad.same_shape(params)) throw ShapeError("gradient shape does not match parameters");
  if (upstream.size() != params.output_dim()) {
    throw ShapeError("upstream gradient width " + std::to_string(upstream.size()) + " != network output " +
                     std::to_string(params.output_dim()));
  }
  if (cache.pre.size() != params.num_layers()) throw ShapeError("forward cache does not match network");

  std::vector<double> delta(upstream.begin(), upstream.end());
  std::vector<double> next;
  for (std::size_t l = params.num_layers(); l-- > 0;) {
    const auto& layer = params.layers()[l];
    const auto& z = cache.pre[l];
    const auto& y = cache.inputs[l + 1];
    const auto& x = cache.inputs[l];
    for (std::size_t i = 0; i < layer.out; ++i) delta[i] *= activation_slope(layer.act, z[i], y[i]);

    auto gw = grad.weights(l);
    auto gb = grad.bias(l);
    const auto w = params.weights(l);
    next.assign(layer.in, 0.0);
    for (std::size_t r = 0; r < layer.out; ++r) {
      const double d = delta[r];
      gb[r] += d;
      if (d == 0.0) continue;
      double* grow = gw.data() + r * layer.in;
      const double* wrow = w.data() + r * layer.in;
      for (std::size_t c = 0; c < layer.in; ++c) {
        grow[c] += d * x[c];
        next[c] += d * wrow[c];
      }
    }
    delta.swap(next);
  }
  return delta;
}

BackpropResult backprop(const ParamBundle& params, std::span<const double> input,
                        std::span<const double> upstream) {
  ForwardCache cache;
  mlp_forward(params, input, cache);
  BackpropResult result{Gradient::zeros_like(params), {}};
  result.input_grad = mlp_backward(params, cache, upstream, result.grad);
  return result;
}

void axpy(double s, const Gradient& x, Gradient& y) {
  if (!x.same_shape(y)) throw ShapeError("axpy on gradients of different shape");
  auto yv = y.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] += s * xv[i];
}

void scale(Gradient& g, double s) {
  for (auto& v : g.values()) v *= s;
}

double squared_norm(const Gradient& g) {
  double acc = 0.0;
  for (double v : g.values()) acc += v * v;
  return acc;
}

}  // namespace scoreflow::nn
