#pragma once

// Dense feed-forward stacks with exact reverse-mode gradients, Adam, and a
// central-difference gradient oracle. Batches are row-major: one sample per row.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <concepts>
#include <cstdint>
#include <type_traits>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fols {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Activation { tanh, identity };

inline const char* to_string(Activation a) {
  return a == Activation::tanh ? "tanh" : "identity";
}

struct LayerParams {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::identity;

  std::size_t in_width() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_width() const { return static_cast<std::size_t>(weights.rows()); }
};

using LayerStack = std::vector<LayerParams>;

/// Glorot-uniform weights, zero bias.
inline LayerParams init_layer(std::size_t in, std::size_t out, Activation act,
                              std::mt19937_64& rng) {
  LayerParams layer;
  layer.weights.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  layer.bias = Vector::Zero(static_cast<Eigen::Index>(out));
  layer.activation = act;
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = dist(rng);
  return layer;
}

/// Builds a stack for widths (w0, w1, ..., wn): tanh on every layer, except the
/// last one when `identity_output` is set.
inline LayerStack init_stack(std::span<const std::size_t> widths, bool identity_output,
                             std::mt19937_64& rng) {
  LayerStack stack;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const bool last = k + 2 == widths.size();
    stack.push_back(init_layer(widths[k], widths[k + 1],
                               last && identity_output ? Activation::identity : Activation::tanh,
                               rng));
  }
  return stack;
}

/// Retained state of one forward pass. `activations[0]` is the input batch.
struct ForwardTrace {
  std::vector<Matrix> pre_activations;  // one per layer
  std::vector<Matrix> activations;      // layers + 1
};

inline void check_stack(const LayerStack& layers, std::size_t input_width) {
  std::size_t width = input_width;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (l.in_width() != width) {
      throw ShapeError("layer " + std::to_string(k) + ": expects input width " +
                       std::to_string(l.in_width()) + ", got " + std::to_string(width));
    }
    if (static_cast<std::size_t>(l.bias.size()) != l.out_width()) {
      throw ShapeError("layer " + std::to_string(k) + ": bias length " +
                       std::to_string(l.bias.size()) + " != output width " +
                       std::to_string(l.out_width()));
    }
    width = l.out_width();
  }
}

inline std::size_t output_width(const LayerStack& layers, std::size_t input_width) {
  return layers.empty() ? input_width : layers.back().out_width();
}

/// Batched forward pass. Pass `trace` to retain what net_backward needs.
inline Matrix net_forward(const LayerStack& layers, const Matrix& batch,
                          ForwardTrace* trace = nullptr) {
  check_stack(layers, static_cast<std::size_t>(batch.cols()));
  if (trace) {
    trace->pre_activations.clear();
    trace->activations.clear();
    trace->activations.push_back(batch);
  }
  Matrix h = batch;
  for (const auto& layer : layers) {
    Matrix z = h * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    h = layer.activation == Activation::tanh ? Matrix(z.array().tanh()) : z;
    if (trace) {
      trace->pre_activations.push_back(std::move(z));
      trace->activations.push_back(h);
    }
  }
  return h;
}

/// Single-sample pass. Only an exact Vector selects this overload, so Eigen
/// expressions resolve to the batched form.
template <typename V>
  requires std::same_as<std::remove_cvref_t<V>, Vector>
std::pair<Vector, ForwardTrace> net_forward(const LayerStack& layers, V&& input) {
  ForwardTrace trace;
  Matrix out = net_forward(layers, Matrix(input.transpose()), &trace);
  return {Vector(out.row(0).transpose()), std::move(trace)};
}

struct LayerGradients {
  Matrix weights;
  Vector bias;
};

struct BackwardResult {
  std::vector<LayerGradients> layers;
  Matrix input_gradient;
};

/// Exact gradients of sum over rows of <output_gradient, net(batch)>.
inline BackwardResult net_backward(const LayerStack& layers, const ForwardTrace& trace,
                                   const Matrix& output_gradient) {
  if (trace.activations.size() != layers.size() + 1 ||
      trace.pre_activations.size() != layers.size()) {
    throw ShapeError("stale trace: recorded " + std::to_string(trace.pre_activations.size()) +
                     " layers, network has " + std::to_string(layers.size()));
  }
  const Matrix& out = trace.activations.back();
  if (output_gradient.rows() != out.rows() || output_gradient.cols() != out.cols()) {
    throw ShapeError("output gradient is " + std::to_string(output_gradient.rows()) + "x" +
                     std::to_string(output_gradient.cols()) + ", trace output is " +
                     std::to_string(out.rows()) + "x" + std::to_string(out.cols()));
  }
  BackwardResult result;
  result.layers.resize(layers.size());
  Matrix g = output_gradient;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& layer = layers[k];
    const Matrix& z = trace.pre_activations[k];
    const Matrix& input = trace.activations[k];
    if (z.cols() != static_cast<Eigen::Index>(layer.out_width()) ||
        input.cols() != static_cast<Eigen::Index>(layer.in_width())) {
      throw ShapeError("stale trace at layer " + std::to_string(k));
    }
    if (layer.activation == Activation::tanh) {
      const Matrix& h = trace.activations[k + 1];
      g = (g.array() * (1.0 - h.array().square())).matrix();
    }
    result.layers[k].weights = g.transpose() * input;
    result.layers[k].bias = g.colwise().sum().transpose();
    g = g * layer.weights;
  }
  result.input_gradient = std::move(g);
  return result;
}

/// Named view over one contiguous block of parameters.
struct ParamBlock {
  std::string name;
  std::span<double> values;
};

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  AdamState() = default;
  AdamState(std::span<const ParamBlock> params, double lr) : learning_rate(lr) {
    for (const auto& b : params) {
      first_moment.emplace_back(b.values.size(), 0.0);
      second_moment.emplace_back(b.values.size(), 0.0);
    }
  }
};

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(AdamState& state, std::span<const ParamBlock> params,
                      std::span<const ParamBlock> gradients) {
  if (params.size() != gradients.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam: " + std::to_string(params.size()) + " parameter blocks, " +
                     std::to_string(gradients.size()) + " gradient blocks, " +
                     std::to_string(state.first_moment.size()) + " tracked");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].values.size() != gradients[b].values.size() ||
        params[b].values.size() != state.first_moment[b].size()) {
      throw ShapeError("adam: shape mismatch in block '" + params[b].name + "'");
    }
    if (!all_finite(gradients[b].values)) {
      throw NonFiniteError("adam: non-finite gradient in block '" + params[b].name + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    auto p = params[b].values;
    auto g = gradients[b].values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

/// Central differences of `loss` with respect to every scalar in `params`.
/// `loss` must read the parameters through the same storage the blocks view;
/// each entry is perturbed in place and restored.
inline std::vector<std::vector<double>> finite_difference_gradient(
    const std::function<double()>& loss, std::span<const ParamBlock> params, double step) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& block : params) {
    std::vector<double> g(block.values.size());
    for (std::size_t i = 0; i < block.values.size(); ++i) {
      const double saved = block.values[i];
      block.values[i] = saved + step;
      const double up = loss();
      block.values[i] = saved - step;
      const double down = loss();
      block.values[i] = saved;
      g[i] = (up - down) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

/// max |a - b| / max(|a|, |b|, floor) over all entries.
inline double max_relative_error(const std::vector<std::vector<double>>& a,
                                 const std::vector<std::vector<double>>& b,
                                 double floor = 1e-6) {
  if (a.size() != b.size()) throw ShapeError("max_relative_error: block count differs");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].size() != b[k].size()) throw ShapeError("max_relative_error: block size differs");
    for (std::size_t i = 0; i < a[k].size(); ++i) {
      const double scale = std::max({std::abs(a[k][i]), std::abs(b[k][i]), floor});
      worst = std::max(worst, std::abs(a[k][i] - b[k][i]) / scale);
    }
  }
  return worst;
}

}  // namespace fols
