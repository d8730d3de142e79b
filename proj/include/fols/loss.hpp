#pragma once

// Training objective: orthogonality + Gaussian NLL + smoothness + KL, each
// averaged over the batch, and its exact gradients.

#include "fols/model.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace fols {

inline constexpr double kOrthogonalityEpsilon = 1e-12;

enum class OrthogonalityForm {
  squared_cosine,  // (a.b)^2 / ((|a|^2+eps)(|b|^2+eps)), bounded in [0, 1]
  dot_product,     // raw a.b, unbounded below; kept for ablation
};

enum class OrthogonalitySource { sampled, mean };

struct LossWeights {
  double orthogonality = 1.0;
  double nll = 1.0;
  double smoothness = 1.0;
  double kl = 1.0;
  OrthogonalityForm orthogonality_form = OrthogonalityForm::squared_cosine;
  OrthogonalitySource orthogonality_source = OrthogonalitySource::sampled;

  void validate() const {
    for (double w : {orthogonality, nll, smoothness, kl}) {
      if (!std::isfinite(w) || w < 0.0) throw DomainError("loss weights must be finite and >= 0");
    }
  }

  bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
  double orthogonality = 0.0;
  double nll = 0.0;
  double smoothness = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

namespace detail {

inline void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

inline void check_positive(const Matrix& sigma, const char* what) {
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (!(sigma.data()[i] > 0.0)) throw DomainError(std::string(what) + ": sigma must be > 0");
  }
}

}  // namespace detail

inline double nll_term(const Matrix& y, const Matrix& phi_d, const Matrix& mu_s,
                       const Matrix& sigma_s) {
  detail::check_same_shape(y, phi_d, "nll_term");
  detail::check_same_shape(y, mu_s, "nll_term");
  detail::check_same_shape(y, sigma_s, "nll_term");
  detail::check_positive(sigma_s, "nll_term");
  if (y.rows() == 0) return 0.0;
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const auto r = (y - phi_d - mu_s).array();
  const auto s = sigma_s.array();
  const double sum = (r.square() / (2.0 * s.square()) + s.log() + half_log_2pi).sum();
  return sum / static_cast<double>(y.rows());
}

/// Mean squared step between consecutive rows; 0 for fewer than two rows.
inline double smoothness_term(const Matrix& phi_d) {
  const Eigen::Index t = phi_d.rows();
  if (t < 2) return 0.0;
  const Matrix diff = phi_d.bottomRows(t - 1) - phi_d.topRows(t - 1);
  return diff.squaredNorm() / static_cast<double>(t - 1);
}

/// KL(N(mu, diag sigma^2) || N(0, I)), averaged over rows.
inline double kl_term(const Matrix& mu_s, const Matrix& sigma_s) {
  detail::check_same_shape(mu_s, sigma_s, "kl_term");
  detail::check_positive(sigma_s, "kl_term");
  if (mu_s.rows() == 0) return 0.0;
  const auto m = mu_s.array();
  const auto s = sigma_s.array();
  const double sum = 0.5 * (m.square() + s.square() - 1.0 - 2.0 * s.log()).sum();
  return sum / static_cast<double>(mu_s.rows());
}

inline double orthogonality_term(const Matrix& phi_d, const Matrix& phi_s,
                                 OrthogonalityForm form = OrthogonalityForm::squared_cosine) {
  detail::check_same_shape(phi_d, phi_s, "orthogonality_term");
  if (phi_d.rows() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < phi_d.rows(); ++i) {
    const double dot = phi_d.row(i).dot(phi_s.row(i));
    if (form == OrthogonalityForm::dot_product) {
      sum += dot;
    } else {
      const double a = phi_d.row(i).squaredNorm() + kOrthogonalityEpsilon;
      const double b = phi_s.row(i).squaredNorm() + kOrthogonalityEpsilon;
      sum += dot * dot / (a * b);
    }
  }
  return sum / static_cast<double>(phi_d.rows());
}

inline const Matrix& orthogonality_partner(const EncodedBatch& e, const LossWeights& w) {
  return w.orthogonality_source == OrthogonalitySource::mean ? e.mu_s : e.phi_s;
}

inline LossBreakdown total_loss(const EncodedBatch& encoded, const Matrix& y,
                                const LossWeights& weights) {
  weights.validate();
  LossBreakdown out;
  out.orthogonality = orthogonality_term(encoded.phi_d, orthogonality_partner(encoded, weights),
                                         weights.orthogonality_form);
  out.nll = nll_term(y, encoded.phi_d, encoded.mu_s, encoded.sigma_s);
  out.smoothness = smoothness_term(encoded.phi_d);
  out.kl = kl_term(encoded.mu_s, encoded.sigma_s);
  out.total = weights.orthogonality * out.orthogonality + weights.nll * out.nll +
              weights.smoothness * out.smoothness + weights.kl * out.kl;
  return out;
}

// Per-term output gradients. Each returns d(term)/d(outputs) for the unweighted term.

inline EncodedGradients zero_gradients(const EncodedBatch& e) {
  const Matrix z = Matrix::Zero(e.phi_d.rows(), e.phi_d.cols());
  return {z, z, z, z};
}

inline EncodedGradients nll_gradients(const EncodedBatch& e, const Matrix& y) {
  EncodedGradients g = zero_gradients(e);
  if (y.rows() == 0) return g;
  const double n = static_cast<double>(y.rows());
  const auto r = (y - e.phi_d - e.mu_s).array();
  const auto s = e.sigma_s.array();
  g.phi_d = (-r / s.square() / n).matrix();
  g.mu_s = g.phi_d;
  g.sigma_s = ((1.0 / s - r.square() / s.cube()) / n).matrix();
  return g;
}

inline EncodedGradients smoothness_gradients(const EncodedBatch& e) {
  EncodedGradients g = zero_gradients(e);
  const Eigen::Index t = e.phi_d.rows();
  if (t < 2) return g;
  const Matrix diff = e.phi_d.bottomRows(t - 1) - e.phi_d.topRows(t - 1);
  const Matrix scaled = diff * (2.0 / static_cast<double>(t - 1));
  g.phi_d.bottomRows(t - 1) += scaled;
  g.phi_d.topRows(t - 1) -= scaled;
  return g;
}

inline EncodedGradients kl_gradients(const EncodedBatch& e) {
  EncodedGradients g = zero_gradients(e);
  if (e.mu_s.rows() == 0) return g;
  const double n = static_cast<double>(e.mu_s.rows());
  g.mu_s = e.mu_s / n;
  g.sigma_s = ((e.sigma_s.array() - 1.0 / e.sigma_s.array()) / n).matrix();
  return g;
}

inline EncodedGradients orthogonality_gradients(const EncodedBatch& e, const LossWeights& w) {
  EncodedGradients g = zero_gradients(e);
  const Matrix& partner = orthogonality_partner(e, w);
  const Eigen::Index rows = e.phi_d.rows();
  if (rows == 0) return g;
  const double n = static_cast<double>(rows);
  Matrix& d_partner = w.orthogonality_source == OrthogonalitySource::mean ? g.mu_s : g.phi_s;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto a = e.phi_d.row(i);
    const auto b = partner.row(i);
    if (w.orthogonality_form == OrthogonalityForm::dot_product) {
      g.phi_d.row(i) = b / n;
      d_partner.row(i) = a / n;
      continue;
    }
    const double dot = a.dot(b);
    const double na = a.squaredNorm() + kOrthogonalityEpsilon;
    const double nb = b.squaredNorm() + kOrthogonalityEpsilon;
    const double f = dot * dot / (na * nb);
    g.phi_d.row(i) = (2.0 * dot / (na * nb)) * b / n - (2.0 * f / na) * a / n;
    d_partner.row(i) = (2.0 * dot / (na * nb)) * a / n - (2.0 * f / nb) * b / n;
  }
  return g;
}

inline void add_scaled(EncodedGradients& dst, const EncodedGradients& src, double w) {
  dst.phi_d += w * src.phi_d;
  dst.mu_s += w * src.mu_s;
  dst.sigma_s += w * src.sigma_s;
  dst.phi_s += w * src.phi_s;
}

inline bool all_finite(const EncodedGradients& g) {
  return g.phi_d.allFinite() && g.mu_s.allFinite() && g.sigma_s.allFinite() && g.phi_s.allFinite();
}

/// Weighted output gradients of the total; throws NonFiniteError naming the term.
inline EncodedGradients total_output_gradients(const EncodedBatch& e, const Matrix& y,
                                               const LossWeights& w) {
  EncodedGradients total = zero_gradients(e);
  auto add = [&](const char* name, double weight, const EncodedGradients& g) {
    if (weight == 0.0) return;
    if (!all_finite(g)) throw NonFiniteError(std::string("non-finite gradient in ") + name + " term");
    add_scaled(total, g, weight);
  };
  add("orthogonality", w.orthogonality, orthogonality_gradients(e, w));
  add("nll", w.nll, nll_gradients(e, y));
  add("smoothness", w.smoothness, smoothness_gradients(e));
  add("kl", w.kl, kl_gradients(e));
  return total;
}

struct GradientResult {
  ModelParams gradients;  // shaped like the model parameters
  LossBreakdown loss;
};

/// Exact gradients of the weighted total with the reparameterization noise held fixed.
inline GradientResult total_loss_gradients(const ModelParams& params, const Matrix& y,
                                           const Matrix& noise, const LossWeights& weights) {
  weights.validate();
  ModelTrace trace;
  const EncodedBatch encoded = forward_batch(params, y, noise, &trace);
  GradientResult out;
  out.loss = total_loss(encoded, y, weights);
  const EncodedGradients g = total_output_gradients(encoded, y, weights);
  out.gradients = model_backward(params, trace, encoded, g);
  for (const auto& b : out.gradients.blocks()) {
    if (!all_finite(b.values)) throw NonFiniteError("non-finite parameter gradient in " + b.name);
  }
  return out;
}

}  // namespace fols
