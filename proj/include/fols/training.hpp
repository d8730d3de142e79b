#pragma once

// Seeded Adam training over shuffled contiguous windows, validation on a
// contiguous tail, and grid search over model/objective/optimizer settings.

#include "fols/data.hpp"
#include "fols/loss.hpp"
#include "fols/model.hpp"

#include <algorithm>
#include <atomic>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace fols {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t window_length = 64;
  double learning_rate = 1e-3;
  LossWeights weights;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  std::size_t mc_samples = 1;
  // Stop when the validation total has not improved by `min_improvement`
  // for `patience` epochs. patience = 0 disables early stopping.
  std::size_t patience = 20;
  double min_improvement = 1e-5;

  void validate() const {
    if (window_length < 2) throw DomainError("window_length must be >= 2");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw DomainError("validation_fraction must be in (0, 1)");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw DomainError("learning_rate must be > 0");
    if (mc_samples == 0) throw DomainError("mc_samples must be >= 1");
    weights.validate();
  }

  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown train;
  LossBreakdown validation;
};

struct LearningCurve {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  ModelParams params;  // parameters from the epoch with the lowest validation total
  LearningCurve curve;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

struct DataSplit {
  std::size_t train_rows = 0;
  std::size_t validation_rows = 0;
};

inline DataSplit split_rows(std::size_t length, double validation_fraction) {
  auto val = static_cast<std::size_t>(std::llround(static_cast<double>(length) * validation_fraction));
  val = std::clamp<std::size_t>(val, 1, length > 1 ? length - 1 : 1);
  return {length - val, val};
}

/// Start offsets of consecutive windows covering [0, rows). A trailing
/// remainder of at least two rows forms a shorter last window.
inline std::vector<std::pair<std::size_t, std::size_t>> make_windows(std::size_t rows,
                                                                     std::size_t window) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t start = 0;
  for (; start + window <= rows; start += window) out.emplace_back(start, window);
  if (rows - start >= 2) out.emplace_back(start, rows - start);
  return out;
}

inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline void check_finite(const LossBreakdown& l, std::size_t epoch, const char* phase) {
  const std::pair<const char*, double> terms[] = {{"orthogonality", l.orthogonality},
                                                  {"nll", l.nll},
                                                  {"smoothness", l.smoothness},
                                                  {"kl", l.kl},
                                                  {"total", l.total}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(std::string(phase) + " loss non-finite at epoch " + std::to_string(epoch) +
                           " in " + name + " term");
    }
  }
}

inline void accumulate(LossBreakdown& dst, const LossBreakdown& src, double w) {
  dst.orthogonality += w * src.orthogonality;
  dst.nll += w * src.nll;
  dst.smoothness += w * src.smoothness;
  dst.kl += w * src.kl;
  dst.total += w * src.total;
}

inline constexpr std::uint64_t kValidationStreamSalt = 0x9e3779b97f4a7c15ULL;

/// Validation loss on a fixed noise draw so numbers are comparable across epochs.
inline LossBreakdown evaluate_loss(const ModelParams& params, const Matrix& rows,
                                   const Matrix& noise, const LossWeights& weights) {
  return total_loss(forward_batch(params, rows, noise), rows, weights);
}

using EpochCallback = std::function<void(const EpochRecord&)>;

inline TrainResult train(const ModelConfig& model_config, const TrainConfig& config,
                         const TimeSeriesDataset& dataset, const EpochCallback& on_epoch = {}) {
  model_config.validate();
  config.validate();
  dataset.validate();
  if (dataset.dim() != model_config.input_dim) {
    throw ShapeError("dataset dim " + std::to_string(dataset.dim()) + " != model input_dim " +
                     std::to_string(model_config.input_dim));
  }
  const DataSplit split = split_rows(dataset.length(), config.validation_fraction);
  if (config.window_length > split.train_rows) {
    throw DomainError("window_length " + std::to_string(config.window_length) +
                      " exceeds training rows " + std::to_string(split.train_rows));
  }

  TrainResult result;
  result.params = init_params(model_config);
  if (config.epochs == 0) return result;

  const Matrix train_rows = dataset.values.topRows(static_cast<Eigen::Index>(split.train_rows));
  const Matrix val_rows = dataset.values.bottomRows(static_cast<Eigen::Index>(split.validation_rows));
  std::mt19937_64 rng(config.seed);
  std::mt19937_64 val_rng(config.seed ^ kValidationStreamSalt);
  const Matrix val_noise = standard_normal(val_rows.rows(), val_rows.cols(), val_rng);

  auto windows = make_windows(split.train_rows, config.window_length);
  ModelParams params = result.params;
  auto param_blocks = params.blocks();
  AdamState adam(param_blocks, config.learning_rate);

  double best = std::numeric_limits<double>::infinity();
  std::size_t since_improvement = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(windows.begin(), windows.end(), rng);
    EpochRecord record;
    record.epoch = epoch;
    double rows_seen = 0.0;
    for (const auto& [start, len] : windows) {
      const Matrix batch = train_rows.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len));
      GradientResult step;
      for (std::size_t s = 0; s < config.mc_samples; ++s) {
        const Matrix noise = standard_normal(batch.rows(), batch.cols(), rng);
        GradientResult g = total_loss_gradients(params, batch, noise, config.weights);
        if (s == 0) {
          step = std::move(g);
          continue;
        }
        auto dst = step.gradients.blocks();
        auto src = g.gradients.blocks();
        for (std::size_t b = 0; b < dst.size(); ++b)
          for (std::size_t i = 0; i < dst[b].values.size(); ++i) dst[b].values[i] += src[b].values[i];
        accumulate(step.loss, g.loss, 1.0);
      }
      if (config.mc_samples > 1) {
        const double inv = 1.0 / static_cast<double>(config.mc_samples);
        for (auto& b : step.gradients.blocks())
          for (double& v : b.values) v *= inv;
        LossBreakdown mean;
        accumulate(mean, step.loss, inv);
        step.loss = mean;
      }
      check_finite(step.loss, epoch, "training");
      adam_step(adam, param_blocks, step.gradients.blocks());
      accumulate(record.train, step.loss, static_cast<double>(len));
      rows_seen += static_cast<double>(len);
    }
    LossBreakdown train_mean;
    accumulate(train_mean, record.train, 1.0 / rows_seen);
    record.train = train_mean;
    record.validation = evaluate_loss(params, val_rows, val_noise, config.weights);
    check_finite(record.validation, epoch, "validation");
    result.curve.epochs.push_back(record);
    if (on_epoch) on_epoch(record);

    if (record.validation.total < best - config.min_improvement) {
      best = record.validation.total;
      result.params = params;
      result.best_epoch = epoch;
      since_improvement = 0;
    } else if (config.patience > 0 && ++since_improvement >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Grid search

struct GridSpec {
  std::vector<std::vector<std::size_t>> shared_widths;
  std::vector<std::vector<std::size_t>> deterministic_widths;
  std::vector<std::vector<std::size_t>> stochastic_widths;
  std::vector<LossWeights> loss_weights;
  std::vector<double> learning_rates;
  std::vector<std::size_t> window_lengths;

  std::size_t size() const {
    return shared_widths.size() * deterministic_widths.size() * stochastic_widths.size() *
           loss_weights.size() * learning_rates.size() * window_lengths.size();
  }
};

struct GridCandidate {
  std::size_t index = 0;
  ModelConfig model;
  TrainConfig train;
};

/// Cartesian product in fixed nesting order (shared outermost, window innermost).
/// Empty lists fall back to the base configuration's value.
inline std::vector<GridCandidate> enumerate_grid(const GridSpec& grid, const ModelConfig& base_model,
                                                 const TrainConfig& base_train) {
  auto or_base = [](const auto& list, const auto& fallback) {
    using T = std::decay_t<decltype(fallback)>;
    return list.empty() ? std::vector<T>{fallback} : list;
  };
  const auto shared = or_base(grid.shared_widths, base_model.shared_widths);
  const auto det = or_base(grid.deterministic_widths, base_model.deterministic_widths);
  const auto stoch = or_base(grid.stochastic_widths, base_model.stochastic_widths);
  const auto weights = or_base(grid.loss_weights, base_train.weights);
  const auto lrs = or_base(grid.learning_rates, base_train.learning_rate);
  const auto wins = or_base(grid.window_lengths, base_train.window_length);
  std::vector<GridCandidate> out;
  for (const auto& s : shared)
    for (const auto& d : det)
      for (const auto& st : stoch)
        for (const auto& w : weights)
          for (double lr : lrs)
            for (std::size_t win : wins) {
              GridCandidate c;
              c.index = out.size();
              c.model = base_model;
              c.model.shared_widths = s;
              c.model.deterministic_widths = d;
              c.model.stochastic_widths = st;
              c.train = base_train;
              c.train.weights = w;
              c.train.learning_rate = lr;
              c.train.window_length = win;
              out.push_back(std::move(c));
            }
  return out;
}

struct GridResult {
  GridCandidate candidate;
  double final_validation_total = std::numeric_limits<double>::infinity();
  std::size_t parameter_count = 0;
  std::size_t epochs_run = 0;
  std::optional<std::string> error;
};

/// Trains every candidate with the same seed and epoch budget and ranks them by
/// final validation total; ties go to fewer parameters, then enumeration order.
/// Failed candidates rank last with their error recorded.
inline std::vector<GridResult> grid_search(const GridSpec& grid, const TimeSeriesDataset& dataset,
                                           const ModelConfig& base_model, const TrainConfig& base_train,
                                           std::size_t budget_epochs = 50, std::size_t threads = 1) {
  const auto candidates = enumerate_grid(grid, base_model, base_train);
  if (candidates.empty()) throw DomainError("grid search: empty grid");
  std::vector<GridResult> results(candidates.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < candidates.size(); i = next++) {
      GridResult& r = results[i];
      r.candidate = candidates[i];
      r.candidate.train.epochs = budget_epochs;
      try {
        r.candidate.model.validate();
        r.parameter_count = init_params(r.candidate.model).parameter_count();
        const TrainResult tr = train(r.candidate.model, r.candidate.train, dataset);
        r.epochs_run = tr.curve.epochs.size();
        if (!tr.curve.epochs.empty()) r.final_validation_total = tr.curve.epochs.back().validation.total;
      } catch (const std::exception& e) {
        r.error = e.what();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, candidates.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  std::stable_sort(results.begin(), results.end(), [](const GridResult& a, const GridResult& b) {
    if (a.error.has_value() != b.error.has_value()) return !a.error.has_value();
    if (a.final_validation_total != b.final_validation_total)
      return a.final_validation_total < b.final_validation_total;
    if (a.parameter_count != b.parameter_count) return a.parameter_count < b.parameter_count;
    return a.candidate.index < b.candidate.index;
  });
  return results;
}

}  // namespace fols
