#include "fols/alarm.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

namespace fols {
namespace {

double normal_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

TimeSeriesDataset scenario(double normal_mean, double fault_mean, std::size_t pre, std::size_t post,
                           std::uint64_t seed, std::size_t dim = 1) {
  auto normal = generate_gaussian(GaussianSpec::isotropic(dim, normal_mean, 1.0, pre + post, seed));
  return inject_fault(normal, GaussianSpec::isotropic(dim, fault_mean, 1.0, 0, seed + 1), pre);
}

// Threshold minimizing FAR + MAR by scanning every midpoint, quadratic time.
double brute_force_threshold(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());
  double best = std::numeric_limits<double>::infinity(), cut = pooled.front();
  for (std::size_t k = 0; k + 1 < pooled.size(); ++k) {
    if (pooled[k] == pooled[k + 1]) continue;
    const double c = 0.5 * (pooled[k] + pooled[k + 1]);
    double far = 0, mar = 0;
    for (double x : a) far += x > c;
    for (double x : b) mar += x <= c;
    const double cost = far / a.size() + mar / b.size();
    if (cost < best) {
      best = cost;
      cut = c;
    }
  }
  return cut;
}

TEST(Filter, ZeroParamsGiveZeros) {
  const ModelParams p = init_params(ModelConfig{}).zeros_like();
  const auto ds = scenario(2.0, 3.0, 20, 10, 1, 16);
  const auto out = filter_signal(p, ds);
  EXPECT_EQ(out.values, Matrix::Zero(30, 16));
  EXPECT_EQ(out.fault_onset, ds.fault_onset);
}

TEST(Filter, ScalerRoundsBackToMeasurementUnits) {
  const ModelParams p = init_params(ModelConfig{}).zeros_like();
  const auto ds = scenario(2.0, 3.0, 20, 10, 1, 16);
  Scaler s{Vector::Constant(16, 2.0), Vector::Constant(16, 0.5)};
  const auto out = filter_signal(p, ds, s);
  EXPECT_LT((out.values.array() - 2.0).abs().maxCoeff(), 1e-15);
}

TEST(Thresholds, OptimalMidpoint) {
  EXPECT_DOUBLE_EQ(optimal_threshold(2, 2.5), 2.25);
  EXPECT_DOUBLE_EQ(optimal_threshold(2, 3), 2.5);
  EXPECT_DOUBLE_EQ(optimal_threshold(2, 4), 3.0);
  EXPECT_DOUBLE_EQ(optimal_threshold(4, 2), optimal_threshold(2, 4));
}

TEST(Thresholds, EmpiricalSeparable) {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{6, 7, 8, 9, 10};
  EXPECT_DOUBLE_EQ(empirical_threshold(a, b), 5.5);
}

TEST(Thresholds, EmpiricalIdenticalSamples) {
  const std::vector<double> a{1, 2, 3}, b{1, 2, 3};
  // Every cut costs 1; the first (smallest) candidate wins.
  EXPECT_DOUBLE_EQ(empirical_threshold(a, b), 1.5);
  const std::vector<double> c{4, 4}, d{4};
  EXPECT_DOUBLE_EQ(empirical_threshold(c, d), 4.0);
  EXPECT_THROW(empirical_threshold(std::vector<double>{}, d), DomainError);
}

TEST(Thresholds, EmpiricalMatchesBruteForce) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> a(80), b(60);
    for (auto& x : a) x = 2 + n(rng);
    for (auto& x : b) x = 3 + n(rng);
    EXPECT_DOUBLE_EQ(empirical_threshold(a, b), brute_force_threshold(a, b)) << "trial " << trial;
  }
}

TEST(Thresholds, EmpiricalLargeSampleNearMidpoint) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> a(20000), b(20000);
  for (auto& x : a) x = 2 + n(rng);
  for (auto& x : b) x = 4 + n(rng);
  EXPECT_NEAR(empirical_threshold(a, b), 3.0, 0.1);
}

TEST(Evaluate, SeparableSignalHasNoFalseAlarms) {
  TimeSeriesDataset ds;
  ds.values = Matrix(6, 1);
  ds.values << 0, 0, 0, 5, 5, 5;
  ds.fault_onset = 3;
  const auto r = evaluate(ds, ThresholdRule::uniform(1, 1.0));
  EXPECT_EQ(r.far, 0.0);
  EXPECT_EQ(r.mar, 0.0);
  EXPECT_EQ(r.dimensions[0].detection_delay, 0u);
  EXPECT_EQ(r.pre_onset_samples, 3u);
  EXPECT_EQ(r.post_onset_samples, 3u);
}

TEST(Evaluate, LowDirectionAndStrictComparison) {
  TimeSeriesDataset ds;
  ds.values = Matrix(4, 1);
  ds.values << 1, 2, 1, 0;
  ds.fault_onset = 2;
  const auto high = evaluate(ds, ThresholdRule::uniform(1, 1.0));
  EXPECT_DOUBLE_EQ(high.far, 0.5);
  EXPECT_DOUBLE_EQ(high.mar, 1.0);
  EXPECT_FALSE(high.dimensions[0].detection_delay);
  const auto low = evaluate(ds, ThresholdRule::uniform(1, 1.0, AlarmDirection::low));
  EXPECT_DOUBLE_EQ(low.far, 0.0);
  EXPECT_DOUBLE_EQ(low.mar, 0.5);
  EXPECT_EQ(low.dimensions[0].detection_delay, 1u);
}

TEST(Evaluate, AnalyticGaussianTails) {
  const auto ds = scenario(2.0, 2.5, 20000, 20000, 31, 2);
  const auto r = evaluate(ds, ThresholdRule::uniform(2, 2.25));
  EXPECT_NEAR(normal_tail(0.25), 0.4013, 1e-4);
  EXPECT_NEAR(r.far, normal_tail(0.25), 0.02);
  EXPECT_NEAR(r.mar, normal_tail(0.25), 0.02);
}

TEST(Evaluate, SweepIsMonotone) {
  const auto ds = scenario(2.0, 3.0, 500, 500, 12);
  double prev_far = 2, prev_mar = -1;
  for (double c = 0.0; c <= 5.0; c += 0.25) {
    const auto r = evaluate(ds, ThresholdRule::uniform(1, c));
    EXPECT_LE(r.far, prev_far);
    EXPECT_GE(r.mar, prev_mar);
    prev_far = r.far;
    prev_mar = r.mar;
  }
}

TEST(Evaluate, RatesInvariantToRepeatingSamples) {
  const auto ds = scenario(2.0, 3.0, 40, 60, 13);
  TimeSeriesDataset doubled;
  doubled.values.resize(200, 1);
  for (Eigen::Index t = 0; t < 100; ++t) doubled.values.middleRows(2 * t, 2).setConstant(ds.values(t, 0));
  doubled.fault_onset = 80;
  const auto rule = ThresholdRule::uniform(1, 2.5);
  const auto a = evaluate(ds, rule);
  const auto b = evaluate(doubled, rule);
  EXPECT_DOUBLE_EQ(a.far, b.far);
  EXPECT_DOUBLE_EQ(a.mar, b.mar);
}

TEST(Evaluate, Errors) {
  auto ds = scenario(2.0, 3.0, 10, 10, 2, 2);
  EXPECT_THROW(evaluate(ds, ThresholdRule::uniform(3, 1.0)), ShapeError);
  ds.fault_onset.reset();
  EXPECT_THROW(evaluate(ds, ThresholdRule::uniform(2, 1.0)), DataError);
}

TEST(Evaluate, DetectionDelayCountsFromOnset) {
  TimeSeriesDataset ds;
  ds.values = Matrix(8, 1);
  ds.values << 0, 0, 0, 0, 0, 0, 9, 0;
  ds.fault_onset = 3;
  EXPECT_EQ(evaluate(ds, ThresholdRule::uniform(1, 1.0)).dimensions[0].detection_delay, 3u);
}

TEST(AlarmStates, CsvRows) {
  TimeSeriesDataset ds;
  ds.values = Matrix(2, 2);
  ds.values << 0.5, 3, 2, 1;
  ds.fault_onset = 1;
  std::ostringstream out;
  write_alarm_states(ds, ThresholdRule::uniform(2, 1.0), out);
  EXPECT_EQ(out.str(),
            "time,dimension,value,threshold,alarm\n"
            "0,x1,0.5,1,0\n0,x2,3,1,1\n1,x1,2,1,1\n1,x2,1,1,0\n");
}

TEST(Histogram, CountsSplitAtOnset) {
  const auto ds = scenario(2.0, 4.0, 300, 200, 3, 2);
  const auto h = onset_histogram(ds, 10);
  ASSERT_EQ(h.size(), 10u);
  std::size_t pre = 0, post = 0;
  for (const auto& b : h) {
    pre += b.pre_onset;
    post += b.post_onset;
  }
  EXPECT_EQ(pre, 600u);
  EXPECT_EQ(post, 400u);
  EXPECT_DOUBLE_EQ(h.front().lo, ds.values.minCoeff());
  EXPECT_DOUBLE_EQ(h.back().hi, ds.values.maxCoeff());
}

TEST(Latency, FiniteAndStable) {
  const ModelParams p = init_params(ModelConfig{.seed = 2});
  const auto ds = scenario(2.0, 3.0, 100, 100, 5, 16);
  const auto rule = ThresholdRule::uniform(16, 2.5);
  const auto a = latency_bench(p, ds, rule, 20);
  EXPECT_EQ(a.samples, 4000u);
  EXPECT_TRUE(std::isfinite(a.mean));
  EXPECT_GT(a.mean, 0.0);
  EXPECT_LE(a.p50, a.p99);
  // Warm-up already discarded, so more repetitions should barely move the mean.
  const auto b = latency_bench(p, ds, rule, 40);
  EXPECT_LT(std::abs(b.mean - a.mean) / a.mean, 0.2);
  EXPECT_THROW(latency_bench(p, ds, rule, 0), DomainError);
}

}  // namespace
}  // namespace fols
