#pragma once

// Fully connected interval network: two linear outputs (lower, upper) or a
// single output for point regressors.

#include "nnpi/core.hpp"

#include <nlohmann/json.hpp>

#include <random>
#include <string>
#include <vector>

namespace nnpi {

enum class Activation { relu, tanh, linear };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    default: return "linear";
  }
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "linear") return Activation::linear;
  throw ConfigError("unknown activation '" + s + "'");
}

struct MLPConfig {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_layers{32, 32};
  Activation hidden_activation = Activation::relu;
  std::size_t output_dim = 2;

  static constexpr std::size_t min_layers = 1;
  static constexpr std::size_t max_layers = 4;
  static constexpr std::size_t min_width = 10;
  static constexpr std::size_t max_width = 150;

  void validate() const {
    if (input_dim < 1) throw ConfigError("network input_dim must be >= 1");
    if (hidden_layers.size() < min_layers || hidden_layers.size() > max_layers)
      throw ConfigError("network must have 1 to 4 hidden layers");
    for (auto w : hidden_layers)
      if (w < min_width || w > max_width)
        throw ConfigError("hidden width " + std::to_string(w) + " outside [10, 150]");
    if (output_dim != 1 && output_dim != 2) throw ConfigError("output_dim must be 1 or 2");
  }

  /// Layer sizes including input and output.
  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s{input_dim};
    s.insert(s.end(), hidden_layers.begin(), hidden_layers.end());
    s.push_back(output_dim);
    return s;
  }

  std::size_t parameter_count() const {
    const auto s = sizes();
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < s.size(); ++l) total += s[l] * s[l + 1] + s[l + 1];
    return total;
  }

  friend bool operator==(const MLPConfig&, const MLPConfig&) = default;
};

/// Weights are stored fan_in x fan_out so a layer computes Z = A W + 1 b^T.
struct Layer {
  Matrix weights;
  Vector bias;

  friend bool operator==(const Layer& a, const Layer& b) {
    return a.weights == b.weights && a.bias == b.bias;
  }
};

struct MLPParams {
  MLPConfig config;
  std::vector<Layer> layers;

  friend bool operator==(const MLPParams& a, const MLPParams& b) {
    return a.config == b.config && a.layers == b.layers;
  }
};

/// Same shapes as MLPParams; holds dLoss/dtheta.
using MLPGradient = std::vector<Layer>;

inline constexpr double kInitBoundSpread = 1.0;

/// Zero-mean Gaussian weights with variance 2/fan_in (relu) or 1/fan_in.
/// Hidden biases start at 0. Output biases start at the label midpoint, spread
/// by +/- kInitBoundSpread for interval nets so initial intervals are nonempty.
inline MLPParams init(const MLPConfig& cfg, std::uint64_t seed, double label_min = 0.0,
                      double label_max = 4.0) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto sizes = cfg.sizes();
  MLPParams p{cfg, {}};
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const bool is_output = l + 2 == sizes.size();
    const double gain =
        (!is_output && cfg.hidden_activation == Activation::relu) ? 2.0 : 1.0;
    const double stddev = std::sqrt(gain / static_cast<double>(sizes[l]));
    Layer layer;
    layer.weights.resize(static_cast<Eigen::Index>(sizes[l]),
                         static_cast<Eigen::Index>(sizes[l + 1]));
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i)
      layer.weights.data()[i] = stddev * gauss(rng);
    layer.bias = Vector::Zero(static_cast<Eigen::Index>(sizes[l + 1]));
    p.layers.push_back(std::move(layer));
  }
  const double mid = 0.5 * (label_min + label_max);
  auto& out_bias = p.layers.back().bias;
  if (cfg.output_dim == 2) {
    out_bias[0] = mid - kInitBoundSpread;
    out_bias[1] = mid + kInitBoundSpread;
  } else {
    out_bias[0] = mid;
  }
  return p;
}

namespace detail {

inline void activate(Matrix& z, Activation a) {
  switch (a) {
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh(); break;
    case Activation::linear: break;
  }
}

/// Multiplies `grad` in place by the activation derivative evaluated from the
/// pre-activation `z` (relu'(0) = 0).
inline void activation_backward(Matrix& grad, const Matrix& z, Activation a) {
  switch (a) {
    case Activation::relu: grad = (z.array() > 0.0).select(grad, 0.0); break;
    case Activation::tanh: grad.array() *= 1.0 - z.array().tanh().square(); break;
    case Activation::linear: break;
  }
}

}  // namespace detail

/// Pre-activations of every layer, retained for the backward pass.
struct ForwardCache {
  std::vector<Matrix> pre;   // one per layer
  std::vector<Matrix> post;  // hidden activations, one per hidden layer
};

inline Matrix forward_raw(const MLPParams& p, const Matrix& x, ForwardCache* cache = nullptr) {
  if (static_cast<std::size_t>(x.cols()) != p.config.input_dim)
    throw ShapeError("input has " + std::to_string(x.cols()) + " columns, network expects " +
                     std::to_string(p.config.input_dim));
  if (cache) {
    cache->pre.clear();
    cache->post.clear();
  }
  Matrix a = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Matrix z = a * p.layers[l].weights;
    z.rowwise() += p.layers[l].bias.transpose();
    if (l + 1 == p.layers.size()) {
      if (cache) cache->pre.push_back(z);
      return z;
    }
    if (cache) cache->pre.push_back(z);
    detail::activate(z, p.config.hidden_activation);
    if (cache) cache->post.push_back(z);
    a = std::move(z);
  }
  return a;
}

/// Interval net forward pass; column 0 is the lower bound, column 1 the upper.
inline IntervalBatch forward(const MLPParams& p, const Matrix& x) {
  if (p.config.output_dim != 2) throw ShapeError("forward(): network is not an interval net");
  const Matrix out = forward_raw(p, x);
  return {out.col(0), out.col(1)};
}

inline Vector forward_point(const MLPParams& p, const Matrix& x) {
  if (p.config.output_dim != 1) throw ShapeError("forward_point(): network is not a point net");
  return forward_raw(p, x).col(0);
}

/// Reverse accumulation given upstream gradient dLoss/dOutput (n x output_dim).
inline MLPGradient backward(const MLPParams& p, const Matrix& x, const Matrix& grad_out,
                            const ForwardCache& cache) {
  if (grad_out.rows() != x.rows() ||
      static_cast<std::size_t>(grad_out.cols()) != p.config.output_dim)
    throw ShapeError("upstream gradient shape does not match network output");
  if (cache.pre.size() != p.layers.size()) throw ShapeError("forward cache does not match network");
  MLPGradient grads(p.layers.size());
  Matrix delta = grad_out;
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const Matrix& input = l == 0 ? x : cache.post[l - 1];
    grads[l].weights = input.transpose() * delta;
    grads[l].bias = delta.colwise().sum().transpose();
    if (l == 0) break;
    Matrix upstream = delta * p.layers[l].weights.transpose();
    detail::activation_backward(upstream, cache.pre[l - 1], p.config.hidden_activation);
    delta = std::move(upstream);
  }
  return grads;
}

inline MLPGradient backward(const MLPParams& p, const Matrix& x, const Matrix& grad_out) {
  ForwardCache cache;
  forward_raw(p, x, &cache);
  return backward(p, x, grad_out, cache);
}

/// Interval-net overload taking dLoss/dL_i and dLoss/dU_i.
inline MLPGradient backward(const MLPParams& p, const Matrix& x, const Vector& grad_lower,
                            const Vector& grad_upper) {
  if (grad_lower.size() != x.rows() || grad_upper.size() != x.rows())
    throw ShapeError("gradient vectors must have one entry per row");
  Matrix g(x.rows(), 2);
  g.col(0) = grad_lower;
  g.col(1) = grad_upper;
  return backward(p, x, g);
}

// ---------------------------------------------------------------------------
// Flat parameter view: layer-major; within a layer the weight matrix
// (fan_in x fan_out, row-major) precedes the bias.

inline Vector flatten(const std::vector<Layer>& layers) {
  std::size_t total = 0;
  for (const auto& l : layers) total += l.weights.size() + l.bias.size();
  Vector v(static_cast<Eigen::Index>(total));
  Eigen::Index pos = 0;
  for (const auto& l : layers) {
    v.segment(pos, l.weights.size()) = Eigen::Map<const Vector>(l.weights.data(), l.weights.size());
    pos += l.weights.size();
    v.segment(pos, l.bias.size()) = l.bias;
    pos += l.bias.size();
  }
  return v;
}

inline Vector flatten(const MLPParams& p) { return flatten(p.layers); }

inline MLPParams unflatten(const MLPConfig& cfg, const Vector& v) {
  cfg.validate();
  if (static_cast<std::size_t>(v.size()) != cfg.parameter_count())
    throw ShapeError("flat vector has " + std::to_string(v.size()) + " entries, expected " +
                     std::to_string(cfg.parameter_count()));
  const auto sizes = cfg.sizes();
  MLPParams p{cfg, {}};
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(sizes[l]);
    const auto out = static_cast<Eigen::Index>(sizes[l + 1]);
    Layer layer;
    layer.weights = Eigen::Map<const Matrix>(v.data() + pos, in, out);
    pos += in * out;
    layer.bias = v.segment(pos, out);
    pos += out;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Checkpoints (JSON, versioned)

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json to_json(const MLPConfig& c) {
  return {{"input_dim", c.input_dim},
          {"hidden_layers", c.hidden_layers},
          {"hidden_activation", to_string(c.hidden_activation)},
          {"output_dim", c.output_dim}};
}

inline MLPConfig mlp_config_from_json(const nlohmann::json& j) {
  MLPConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_layers = j.at("hidden_layers").get<std::vector<std::size_t>>();
  c.hidden_activation = activation_from_string(j.at("hidden_activation").get<std::string>());
  c.output_dim = j.at("output_dim").get<std::size_t>();
  c.validate();
  return c;
}

inline nlohmann::json to_json(const MLPParams& p) {
  const Vector flat = flatten(p);
  return {{"format", "nnpi-mlp"},
          {"version", kCheckpointVersion},
          {"config", to_json(p.config)},
          {"params", std::vector<double>(flat.data(), flat.data() + flat.size())}};
}

inline MLPParams mlp_params_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "nnpi-mlp") throw SchemaError("not an nnpi-mlp checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw SchemaError("unsupported checkpoint version");
  const MLPConfig cfg = mlp_config_from_json(j.at("config"));
  auto flat = j.at("params").get<std::vector<double>>();
  return unflatten(cfg, Eigen::Map<Vector>(flat.data(), static_cast<Eigen::Index>(flat.size())));
}

}  // namespace nnpi
