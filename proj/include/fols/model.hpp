#pragma once

// Dual-encoder model: a shared nonlinear trunk feeds a deterministic head and a
// stochastic head (mean and log-std projections). Both representations live in
// measurement space and the reconstruction is their sum.

#include "fols/numerics.hpp"

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fols {

inline constexpr double kLogStdMin = -6.0;
inline constexpr double kLogStdMax = 2.0;

struct ModelConfig {
  std::size_t input_dim = 16;
  std::vector<std::size_t> shared_widths{16, 100, 50};
  std::vector<std::size_t> deterministic_widths{50, 85, 16};
  // Trunk widths followed by the width of the two parallel projection heads.
  std::vector<std::size_t> stochastic_widths{50, 65, 16};
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& msg) { throw ShapeError("model config: " + msg); };
    if (input_dim == 0) fail("input_dim must be positive");
    if (shared_widths.empty() || shared_widths.front() != input_dim)
      fail("shared_widths must start with input_dim");
    if (deterministic_widths.size() < 2 || stochastic_widths.size() < 2)
      fail("each head needs at least an input and an output width");
    for (auto w : shared_widths)
      if (w == 0) fail("zero width in shared_widths");
    for (auto w : deterministic_widths)
      if (w == 0) fail("zero width in deterministic_widths");
    for (auto w : stochastic_widths)
      if (w == 0) fail("zero width in stochastic_widths");
    if (deterministic_widths.front() != shared_widths.back())
      fail("deterministic head input must equal shared output width");
    if (stochastic_widths.front() != shared_widths.back())
      fail("stochastic head input must equal shared output width");
    if (deterministic_widths.back() != input_dim)
      fail("deterministic head output must equal input_dim");
    if (stochastic_widths.back() != input_dim)
      fail("stochastic head output must equal input_dim");
  }

  bool operator==(const ModelConfig&) const = default;
};

struct ModelParams {
  LayerStack shared;
  LayerStack deterministic;
  LayerStack stochastic_trunk;
  LayerParams mean_head;
  LayerParams log_std_head;

  /// Every parameter block in canonical order (checkpoint and optimizer order).
  std::vector<ParamBlock> blocks() {
    std::vector<ParamBlock> out;
    auto add_layer = [&out](const std::string& prefix, LayerParams& l) {
      out.push_back({prefix + ".weight", {l.weights.data(), static_cast<std::size_t>(l.weights.size())}});
      out.push_back({prefix + ".bias", {l.bias.data(), static_cast<std::size_t>(l.bias.size())}});
    };
    for (std::size_t k = 0; k < shared.size(); ++k) add_layer("shared." + std::to_string(k), shared[k]);
    for (std::size_t k = 0; k < deterministic.size(); ++k)
      add_layer("deterministic." + std::to_string(k), deterministic[k]);
    for (std::size_t k = 0; k < stochastic_trunk.size(); ++k)
      add_layer("stochastic." + std::to_string(k), stochastic_trunk[k]);
    add_layer("mean_head", mean_head);
    add_layer("log_std_head", log_std_head);
    return out;
  }

  std::vector<std::vector<double>> flatten() const {
    auto copy = *this;
    std::vector<std::vector<double>> out;
    for (const auto& b : copy.blocks()) out.emplace_back(b.values.begin(), b.values.end());
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    auto count = [&n](const LayerParams& l) {
      n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    };
    for (const auto& l : shared) count(l);
    for (const auto& l : deterministic) count(l);
    for (const auto& l : stochastic_trunk) count(l);
    count(mean_head);
    count(log_std_head);
    return n;
  }

  /// Same shapes and activations, all values zero.
  ModelParams zeros_like() const {
    ModelParams z = *this;
    for (auto& b : z.blocks()) std::fill(b.values.begin(), b.values.end(), 0.0);
    return z;
  }
};

inline ModelParams init_params(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  ModelParams p;
  p.shared = init_stack(config.shared_widths, false, rng);
  p.deterministic = init_stack(config.deterministic_widths, true, rng);
  const auto& sw = config.stochastic_widths;
  std::span<const std::size_t> trunk(sw.data(), sw.size() - 1);
  p.stochastic_trunk = init_stack(trunk, false, rng);
  const std::size_t trunk_out = trunk.back();
  p.mean_head = init_layer(trunk_out, sw.back(), Activation::identity, rng);
  p.log_std_head = init_layer(trunk_out, sw.back(), Activation::identity, rng);
  return p;
}

/// Shapes of `params` must match what `config` would initialize.
inline void check_params_match(const ModelParams& params, const ModelConfig& config) {
  const ModelParams ref = init_params(ModelConfig{config.input_dim, config.shared_widths,
                                                  config.deterministic_widths,
                                                  config.stochastic_widths, 0});
  auto same = [](const LayerStack& a, const LayerStack& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k)
      if (a[k].weights.rows() != b[k].weights.rows() || a[k].weights.cols() != b[k].weights.cols() ||
          a[k].bias.size() != b[k].bias.size() || a[k].activation != b[k].activation)
        return false;
    return true;
  };
  if (!same(params.shared, ref.shared) || !same(params.deterministic, ref.deterministic) ||
      !same(params.stochastic_trunk, ref.stochastic_trunk) ||
      !same({params.mean_head}, {ref.mean_head}) ||
      !same({params.log_std_head}, {ref.log_std_head})) {
    throw ShapeError("parameters do not match model config");
  }
}

inline std::size_t input_dim(const ModelParams& params) {
  return params.shared.empty() ? params.deterministic.front().in_width()
                               : params.shared.front().in_width();
}

inline void check_input(const ModelParams& params, Eigen::Index cols) {
  if (static_cast<std::size_t>(cols) != input_dim(params)) {
    throw ShapeError("measurement width " + std::to_string(cols) + " != model input_dim " +
                     std::to_string(input_dim(params)));
  }
}

inline Matrix encode_deterministic(const ModelParams& params, const Matrix& batch) {
  check_input(params, batch.cols());
  return net_forward(params.deterministic, net_forward(params.shared, batch));
}

inline Vector encode_deterministic(const ModelParams& params, const Vector& y) {
  return encode_deterministic(params, Matrix(y.transpose())).row(0).transpose();
}

struct StochasticEncoding {
  Vector mu;
  Vector sigma;
  Vector phi;
};

inline Matrix clamp_log_std(const Matrix& raw) {
  return raw.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

inline StochasticEncoding encode_stochastic(const ModelParams& params, const Vector& y,
                                            const Vector& noise) {
  check_input(params, y.size());
  if (noise.size() != y.size()) {
    throw ShapeError("noise length " + std::to_string(noise.size()) + " != " +
                     std::to_string(y.size()));
  }
  const Matrix h = net_forward(params.stochastic_trunk, net_forward(params.shared, Matrix(y.transpose())));
  StochasticEncoding out;
  out.mu = net_forward({params.mean_head}, h).row(0).transpose();
  out.sigma = clamp_log_std(net_forward({params.log_std_head}, h)).array().exp().matrix().row(0).transpose();
  out.phi = out.mu + noise.cwiseProduct(out.sigma);
  return out;
}

struct EncodedBatch {
  Matrix phi_d;
  Matrix mu_s;
  Matrix sigma_s;
  Matrix noise;
  Matrix phi_s;
  Matrix y_hat;
};

/// Traces of every sub-network, kept for model_backward.
struct ModelTrace {
  ForwardTrace shared;
  ForwardTrace deterministic;
  ForwardTrace stochastic_trunk;
  ForwardTrace mean_head;
  ForwardTrace log_std_head;
  Matrix raw_log_std;
};

inline EncodedBatch forward_batch(const ModelParams& params, const Matrix& batch,
                                  const Matrix& noise, ModelTrace* trace = nullptr) {
  check_input(params, batch.cols());
  if (noise.rows() != batch.rows() || noise.cols() != batch.cols()) {
    throw ShapeError("noise is " + std::to_string(noise.rows()) + "x" + std::to_string(noise.cols()) +
                     ", batch is " + std::to_string(batch.rows()) + "x" + std::to_string(batch.cols()));
  }
  ModelTrace local;
  ModelTrace& t = trace ? *trace : local;
  const Matrix shared = net_forward(params.shared, batch, &t.shared);
  EncodedBatch e;
  e.phi_d = net_forward(params.deterministic, shared, &t.deterministic);
  const Matrix trunk = net_forward(params.stochastic_trunk, shared, &t.stochastic_trunk);
  e.mu_s = net_forward({params.mean_head}, trunk, &t.mean_head);
  t.raw_log_std = net_forward({params.log_std_head}, trunk, &t.log_std_head);
  e.sigma_s = clamp_log_std(t.raw_log_std).array().exp().matrix();
  e.noise = noise;
  e.phi_s = e.mu_s + noise.cwiseProduct(e.sigma_s);
  e.y_hat = e.phi_d + e.phi_s;
  if (!e.y_hat.allFinite() || !e.sigma_s.allFinite()) {
    throw NonFiniteError("forward_batch: non-finite activations");
  }
  return e;
}

/// Loss gradients with respect to the encoder outputs. `phi_s` is the gradient
/// through the sampled representation; it is routed to mu_s and sigma_s here.
struct EncodedGradients {
  Matrix phi_d;
  Matrix mu_s;
  Matrix sigma_s;
  Matrix phi_s;
};

inline void accumulate(LayerParams& dst, const LayerGradients& g) {
  dst.weights += g.weights;
  dst.bias += g.bias;
}

/// Parameter gradients (shaped like `params`) given output gradients.
inline ModelParams model_backward(const ModelParams& params, const ModelTrace& trace,
                                  const EncodedBatch& encoded, const EncodedGradients& g) {
  ModelParams grads = params.zeros_like();
  const Matrix d_mu = g.mu_s + g.phi_s;
  const Matrix d_sigma = g.sigma_s + g.phi_s.cwiseProduct(encoded.noise);
  // sigma = exp(clamp(raw)); the clamp passes gradient only strictly inside its range.
  Matrix d_raw = d_sigma.cwiseProduct(encoded.sigma_s);
  for (Eigen::Index i = 0; i < d_raw.size(); ++i) {
    const double r = trace.raw_log_std.data()[i];
    if (r < kLogStdMin || r > kLogStdMax) d_raw.data()[i] = 0.0;
  }

  const auto mean_back = net_backward({params.mean_head}, trace.mean_head, d_mu);
  const auto log_std_back = net_backward({params.log_std_head}, trace.log_std_head, d_raw);
  accumulate(grads.mean_head, mean_back.layers[0]);
  accumulate(grads.log_std_head, log_std_back.layers[0]);

  const Matrix d_trunk = mean_back.input_gradient + log_std_back.input_gradient;
  const auto trunk_back = net_backward(params.stochastic_trunk, trace.stochastic_trunk, d_trunk);
  for (std::size_t k = 0; k < params.stochastic_trunk.size(); ++k)
    accumulate(grads.stochastic_trunk[k], trunk_back.layers[k]);

  const auto det_back = net_backward(params.deterministic, trace.deterministic, g.phi_d);
  for (std::size_t k = 0; k < params.deterministic.size(); ++k)
    accumulate(grads.deterministic[k], det_back.layers[k]);

  const Matrix d_shared = trunk_back.input_gradient + det_back.input_gradient;
  const auto shared_back = net_backward(params.shared, trace.shared, d_shared);
  for (std::size_t k = 0; k < params.shared.size(); ++k)
    accumulate(grads.shared[k], shared_back.layers[k]);
  return grads;
}

}  // namespace fols
