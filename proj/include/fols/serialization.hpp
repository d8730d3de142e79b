#pragma once

// JSON mappings for configurations, losses and reports.

#include "fols/alarm.hpp"
#include "fols/loss.hpp"
#include "fols/training.hpp"

#include <json.hpp>

#include <string>

namespace fols {

using json = nlohmann::json;

inline void to_json(json& j, const ModelConfig& c) {
  j = json{{"input_dim", c.input_dim},
           {"shared_widths", c.shared_widths},
           {"deterministic_widths", c.deterministic_widths},
           {"stochastic_widths", c.stochastic_widths},
           {"seed", c.seed}};
}

// Missing keys keep the current value, so a partial document acts as overrides.
inline void from_json(const json& j, ModelConfig& c) {
  c.input_dim = j.value("input_dim", c.input_dim);
  c.shared_widths = j.value("shared_widths", c.shared_widths);
  c.deterministic_widths = j.value("deterministic_widths", c.deterministic_widths);
  c.stochastic_widths = j.value("stochastic_widths", c.stochastic_widths);
  c.seed = j.value("seed", c.seed);
}

NLOHMANN_JSON_SERIALIZE_ENUM(OrthogonalityForm, {{OrthogonalityForm::squared_cosine, "squared_cosine"},
                                                 {OrthogonalityForm::dot_product, "dot_product"}})
NLOHMANN_JSON_SERIALIZE_ENUM(OrthogonalitySource, {{OrthogonalitySource::sampled, "sampled"},
                                                   {OrthogonalitySource::mean, "mean"}})

inline void to_json(json& j, const LossWeights& w) {
  j = json{{"orthogonality", w.orthogonality},
           {"nll", w.nll},
           {"smoothness", w.smoothness},
           {"kl", w.kl},
           {"orthogonality_form", w.orthogonality_form},
           {"orthogonality_source", w.orthogonality_source}};
}

inline void from_json(const json& j, LossWeights& w) {
  w.orthogonality = j.value("orthogonality", w.orthogonality);
  w.nll = j.value("nll", w.nll);
  w.smoothness = j.value("smoothness", w.smoothness);
  w.kl = j.value("kl", w.kl);
  w.orthogonality_form = j.value("orthogonality_form", w.orthogonality_form);
  w.orthogonality_source = j.value("orthogonality_source", w.orthogonality_source);
}

inline void to_json(json& j, const TrainConfig& c) {
  j = json{{"epochs", c.epochs},
           {"window_length", c.window_length},
           {"learning_rate", c.learning_rate},
           {"weights", c.weights},
           {"validation_fraction", c.validation_fraction},
           {"seed", c.seed},
           {"mc_samples", c.mc_samples},
           {"patience", c.patience},
           {"min_improvement", c.min_improvement}};
}

inline void from_json(const json& j, TrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.window_length = j.value("window_length", c.window_length);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  if (j.contains("weights")) j.at("weights").get_to(c.weights);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.seed = j.value("seed", c.seed);
  c.mc_samples = j.value("mc_samples", c.mc_samples);
  c.patience = j.value("patience", c.patience);
  c.min_improvement = j.value("min_improvement", c.min_improvement);
}

inline void to_json(json& j, const LossBreakdown& l) {
  j = json{{"orthogonality", l.orthogonality},
           {"nll", l.nll},
           {"smoothness", l.smoothness},
           {"kl", l.kl},
           {"total", l.total}};
}

inline void to_json(json& j, const LatencyStats& s) {
  j = json{{"mean_seconds", s.mean}, {"p50_seconds", s.p50}, {"p99_seconds", s.p99}, {"samples", s.samples}};
}

inline void to_json(json& j, const DimensionReport& d) {
  j = json{{"far", d.far},
           {"mar", d.mar},
           {"threshold", d.threshold},
           {"direction", to_string(d.direction)},
           {"detection_delay", d.detection_delay ? json(*d.detection_delay) : json(nullptr)}};
}

inline void to_json(json& j, const AlarmReport& r) {
  j = json{{"far", r.far},
           {"mar", r.mar},
           {"onset", r.onset},
           {"pre_onset_samples", r.pre_onset_samples},
           {"post_onset_samples", r.post_onset_samples},
           {"dimensions", r.dimensions},
           {"latency", r.latency ? json(*r.latency) : json(nullptr)}};
}

inline void to_json(json& j, const Scaler& s) {
  j = json{{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
           {"std", std::vector<double>(s.std.data(), s.std.data() + s.std.size())}};
}

inline void from_json(const json& j, Scaler& s) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto std = j.at("std").get<std::vector<double>>();
  s.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  s.std = Eigen::Map<const Vector>(std.data(), static_cast<Eigen::Index>(std.size()));
}

}  // namespace fols
