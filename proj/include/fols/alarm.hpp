#pragma once

// Decision layer: the deterministic representation is used as the residual
// and compared sample-wise against per-dimension thresholds.

#include "fols/data.hpp"
#include "fols/model.hpp"

#include <algorithm>
#include <chrono>
#include <iterator>
#include <limits>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace fols {

enum class AlarmDirection { high, low };

inline const char* to_string(AlarmDirection d) { return d == AlarmDirection::high ? "high" : "low"; }

inline std::optional<AlarmDirection> parse_direction(const std::string& s) {
  if (s == "high") return AlarmDirection::high;
  if (s == "low") return AlarmDirection::low;
  return std::nullopt;
}

struct ThresholdRule {
  std::vector<double> thresholds;
  std::vector<AlarmDirection> directions;

  static ThresholdRule uniform(std::size_t dim, double threshold,
                               AlarmDirection direction = AlarmDirection::high) {
    return {std::vector<double>(dim, threshold), std::vector<AlarmDirection>(dim, direction)};
  }

  std::size_t dim() const { return thresholds.size(); }

  // High alarms fire strictly above the threshold, low alarms strictly below.
  bool alarms(std::size_t d, double value) const {
    return directions[d] == AlarmDirection::high ? value > thresholds[d] : value < thresholds[d];
  }

  void validate(std::size_t signal_dim) const {
    if (thresholds.size() != directions.size())
      throw ShapeError("threshold rule: thresholds and directions differ in length");
    if (thresholds.size() != signal_dim)
      throw ShapeError("threshold rule has " + std::to_string(thresholds.size()) +
                       " thresholds for a " + std::to_string(signal_dim) + "-dim signal");
  }
};

struct LatencyStats {
  double mean = 0.0;  // seconds per sample
  double p50 = 0.0;
  double p99 = 0.0;
  std::size_t samples = 0;
};

struct DimensionReport {
  double far = 0.0;
  double mar = 0.0;
  double threshold = 0.0;
  AlarmDirection direction = AlarmDirection::high;
  std::optional<std::size_t> detection_delay;  // empty: never detected
};

struct AlarmReport {
  std::vector<DimensionReport> dimensions;
  double far = 0.0;  // mean over dimensions
  double mar = 0.0;
  std::size_t onset = 0;
  std::size_t pre_onset_samples = 0;
  std::size_t post_onset_samples = 0;
  std::optional<LatencyStats> latency;
};

/// Deterministic-encoder residual for every row. When the model was trained on
/// standardized data, pass the scaler: the output is mapped back to measurement units.
inline TimeSeriesDataset filter_signal(const ModelParams& params, const TimeSeriesDataset& dataset,
                                       const std::optional<Scaler>& scaler = std::nullopt) {
  TimeSeriesDataset out = dataset;
  if (scaler) {
    out.values = invert_scaler(*scaler, encode_deterministic(params, apply_scaler(*scaler, dataset.values)));
  } else {
    out.values = encode_deterministic(params, dataset.values);
  }
  return out;
}

/// Equal-variance Gaussian decision boundary: the midpoint of the two means.
inline double optimal_threshold(double normal_mean, double fault_mean) {
  return 0.5 * (normal_mean + fault_mean);
}

/// Cut point minimizing empirical FAR + MAR for a high alarm, searched over
/// midpoints of the sorted pooled values; ties go to the smaller threshold.
inline double empirical_threshold(std::span<const double> normal, std::span<const double> fault) {
  if (normal.empty() || fault.empty()) throw DomainError("empirical_threshold: empty sample");
  std::vector<double> a(normal.begin(), normal.end());
  std::vector<double> b(fault.begin(), fault.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> pooled;
  pooled.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(pooled));
  pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());
  if (pooled.size() == 1) return pooled.front();

  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t ia = 0;  // normal values <= cut
  std::size_t ib = 0;  // fault values <= cut
  double best_cost = std::numeric_limits<double>::infinity();
  double best_cut = pooled.front();
  for (std::size_t k = 0; k + 1 < pooled.size(); ++k) {
    const double cut = 0.5 * (pooled[k] + pooled[k + 1]);
    while (ia < a.size() && a[ia] <= cut) ++ia;
    while (ib < b.size() && b[ib] <= cut) ++ib;
    const double far = static_cast<double>(a.size() - ia) / na;
    const double mar = static_cast<double>(ib) / nb;
    if (far + mar < best_cost) {
      best_cost = far + mar;
      best_cut = cut;
    }
  }
  return best_cut;
}

inline AlarmReport evaluate(const TimeSeriesDataset& signal, const ThresholdRule& rule) {
  if (!signal.fault_onset) throw DataError("evaluate: signal has no fault onset");
  signal.validate();
  rule.validate(signal.dim());
  const std::size_t onset = *signal.fault_onset;
  const std::size_t t_len = signal.length();
  AlarmReport report;
  report.onset = onset;
  report.pre_onset_samples = onset;
  report.post_onset_samples = t_len - onset;
  for (std::size_t d = 0; d < signal.dim(); ++d) {
    DimensionReport dr;
    dr.threshold = rule.thresholds[d];
    dr.direction = rule.directions[d];
    std::size_t false_alarms = 0;
    std::size_t missed = 0;
    for (std::size_t t = 0; t < t_len; ++t) {
      const bool alarm = rule.alarms(d, signal.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)));
      if (t < onset) {
        false_alarms += alarm;
      } else {
        missed += !alarm;
        if (alarm && !dr.detection_delay) dr.detection_delay = t - onset;
      }
    }
    dr.far = static_cast<double>(false_alarms) / static_cast<double>(onset);
    dr.mar = static_cast<double>(missed) / static_cast<double>(t_len - onset);
    report.far += dr.far;
    report.mar += dr.mar;
    report.dimensions.push_back(dr);
  }
  report.far /= static_cast<double>(signal.dim());
  report.mar /= static_cast<double>(signal.dim());
  return report;
}

/// Per-sample alarm states: time, dimension, value, threshold, alarm.
inline void write_alarm_states(const TimeSeriesDataset& signal, const ThresholdRule& rule,
                               std::ostream& out) {
  rule.validate(signal.dim());
  const auto names = column_names(signal);
  out << "time,dimension,value,threshold,alarm\n";
  for (Eigen::Index t = 0; t < signal.values.rows(); ++t)
    for (std::size_t d = 0; d < signal.dim(); ++d) {
      const double v = signal.values(t, static_cast<Eigen::Index>(d));
      out << t << ',' << names[d] << ',' << format_double(v) << ',' << format_double(rule.thresholds[d])
          << ',' << (rule.alarms(d, v) ? 1 : 0) << '\n';
    }
}

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t pre_onset = 0;
  std::size_t post_onset = 0;
};

/// Pooled-value histogram of all dimensions, split at the onset.
inline std::vector<HistogramBin> onset_histogram(const TimeSeriesDataset& signal, std::size_t bins) {
  if (!signal.fault_onset) throw DataError("onset_histogram: signal has no fault onset");
  if (bins == 0 || signal.values.size() == 0) return {};
  const double lo = signal.values.minCoeff();
  double hi = signal.values.maxCoeff();
  if (hi <= lo) hi = lo + 1.0;
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<HistogramBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lo = lo + width * static_cast<double>(b);
    out[b].hi = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
  }
  for (Eigen::Index t = 0; t < signal.values.rows(); ++t)
    for (Eigen::Index d = 0; d < signal.values.cols(); ++d) {
      auto b = static_cast<std::size_t>((signal.values(t, d) - lo) / width);
      b = std::min(b, bins - 1);
      (static_cast<std::size_t>(t) < *signal.fault_onset ? out[b].pre_onset : out[b].post_onset)++;
    }
  return out;
}

/// Wall-clock seconds per sample for the deterministic encoder plus the limit
/// check, after one warm-up pass. Single-threaded.
inline LatencyStats latency_bench(const ModelParams& params, const TimeSeriesDataset& dataset,
                                  const ThresholdRule& rule, std::size_t repetitions) {
  if (repetitions == 0) throw DomainError("latency_bench: repetitions must be >= 1");
  rule.validate(dataset.dim());
  check_input(params, dataset.values.cols());
  using clock = std::chrono::steady_clock;
  std::vector<double> times;
  times.reserve(repetitions * dataset.length());
  std::size_t alarms = 0;
  for (std::size_t rep = 0; rep <= repetitions; ++rep) {
    for (Eigen::Index t = 0; t < dataset.values.rows(); ++t) {
      const auto start = clock::now();
      const Vector phi = encode_deterministic(params, Vector(dataset.values.row(t).transpose()));
      for (std::size_t d = 0; d < rule.dim(); ++d) alarms += rule.alarms(d, phi[static_cast<Eigen::Index>(d)]);
      const auto stop = clock::now();
      if (rep > 0) times.push_back(std::chrono::duration<double>(stop - start).count());
    }
  }
  // Keeps the comparisons observable so they are not optimized away.
  volatile std::size_t sink = alarms;
  (void)sink;
  LatencyStats stats;
  stats.samples = times.size();
  if (times.empty()) return stats;
  double sum = 0.0;
  for (double t : times) sum += t;
  stats.mean = sum / static_cast<double>(times.size());
  auto quantile = [&times](double q) {
    const auto k = static_cast<std::size_t>(q * static_cast<double>(times.size() - 1));
    std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(k), times.end());
    return times[k];
  };
  stats.p50 = quantile(0.5);
  stats.p99 = quantile(0.99);
  return stats;
}

}  // namespace fols
