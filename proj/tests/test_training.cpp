#include "fols/checkpoint.hpp"
#include "fols/training.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace fols {
namespace {

namespace fs = std::filesystem;

fs::path tmp_dir() {
  fs::path p = fs::path(FOLS_TEST_TMP) / "training";
  fs::create_directories(p);
  return p;
}

ModelConfig toy_model(std::uint64_t seed = 1) {
  ModelConfig c;
  c.input_dim = 3;
  c.shared_widths = {3, 8, 6};
  c.deterministic_widths = {6, 5, 3};
  c.stochastic_widths = {6, 5, 3};
  c.seed = seed;
  return c;
}

TrainConfig toy_train(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.window_length = 16;
  t.learning_rate = 5e-3;
  t.seed = 3;
  t.patience = 0;
  return t;
}

TimeSeriesDataset toy_data(std::size_t n = 200, std::uint64_t seed = 9) {
  return generate_gaussian(GaussianSpec::isotropic(3, 2.0, 1.0, n, seed));
}

std::vector<double> totals(const LearningCurve& c, bool validation) {
  std::vector<double> out;
  for (const auto& e : c.epochs) out.push_back(validation ? e.validation.total : e.train.total);
  return out;
}

TEST(Windows, CoverTrainingRows) {
  const auto w = make_windows(10, 4);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[2], (std::pair<std::size_t, std::size_t>{8, 2}));
  EXPECT_EQ(make_windows(9, 4).size(), 2u);  // a single leftover row is dropped
  const auto s = split_rows(100, 0.2);
  EXPECT_EQ(s.train_rows, 80u);
  EXPECT_EQ(s.validation_rows, 20u);
}

TEST(Train, BitIdenticalForFixedSeed) {
  const auto ds = toy_data();
  const auto a = train(toy_model(), toy_train(5), ds);
  const auto b = train(toy_model(), toy_train(5), ds);
  EXPECT_EQ(totals(a.curve, false), totals(b.curve, false));
  EXPECT_EQ(totals(a.curve, true), totals(b.curve, true));
  EXPECT_EQ(a.params.flatten(), b.params.flatten());
}

TEST(Train, LossDecreasesOnToyData) {
  const auto r = train(toy_model(), toy_train(50), toy_data());
  ASSERT_EQ(r.curve.epochs.size(), 50u);
  EXPECT_LT(r.curve.epochs.back().train.total, r.curve.epochs.front().train.total);
  EXPECT_LT(r.curve.epochs.back().validation.total, r.curve.epochs.front().validation.total);
}

TEST(Train, ZeroEpochsReturnsInitialParams) {
  const auto r = train(toy_model(), toy_train(0), toy_data());
  EXPECT_TRUE(r.curve.epochs.empty());
  EXPECT_EQ(r.params.flatten(), init_params(toy_model()).flatten());
}

TEST(Train, WindowLongerThanTrainingSplitRejected) {
  auto cfg = toy_train(1);
  cfg.window_length = 161;
  EXPECT_THROW(train(toy_model(), cfg, toy_data()), DomainError);
  cfg.window_length = 160;
  EXPECT_NO_THROW(train(toy_model(), cfg, toy_data()));
}

TEST(Train, DimensionMismatchRejected) {
  EXPECT_THROW(train(toy_model(), toy_train(1), generate_gaussian(GaussianSpec::isotropic(4, 0, 1, 50, 1))),
               ShapeError);
}

TEST(Train, ValidationTailNeverTouchesTraining) {
  const auto ds = toy_data();
  auto altered = ds;
  altered.values.bottomRows(40).array() += 7.0;
  const auto a = train(toy_model(), toy_train(6), ds);
  const auto b = train(toy_model(), toy_train(6), altered);
  EXPECT_EQ(totals(a.curve, false), totals(b.curve, false));
  EXPECT_NE(totals(a.curve, true), totals(b.curve, true));
}

TEST(Train, ReturnsBestValidationEpoch) {
  auto cfg = toy_train(30);
  cfg.patience = 3;
  cfg.min_improvement = 1e9;  // nothing after the first epoch counts as improvement
  const auto r = train(toy_model(), cfg, toy_data());
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.best_epoch, 1u);
  EXPECT_EQ(r.curve.epochs.size(), 4u);
}

TEST(Train, CallbackSeesEveryEpoch) {
  std::vector<std::size_t> seen;
  train(toy_model(), toy_train(4), toy_data(), [&](const EpochRecord& e) { seen.push_back(e.epoch); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3, 4}));
}

TEST(Grid, SingleCandidateRanksFirst) {
  const auto r = grid_search({}, toy_data(), toy_model(), toy_train(1), 3);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_FALSE(r[0].error);
  EXPECT_EQ(r[0].epochs_run, 3u);
}

TEST(Grid, DefaultShapesTrain) {
  GridSpec g;
  g.shared_widths = {{16, 100, 50}};
  g.deterministic_widths = {{50, 85, 16}};
  g.stochastic_widths = {{50, 65, 16}};
  const auto ds = generate_gaussian(GaussianSpec::isotropic(16, 2.0, 1.0, 300, 4));
  ModelConfig base;
  auto t = toy_train(1);
  t.window_length = 64;
  const auto r = grid_search(g, ds, base, t, 2);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_FALSE(r[0].error) << *r[0].error;
  EXPECT_TRUE(std::isfinite(r[0].final_validation_total));
}

TEST(Grid, LowerLossCandidateRanksFirst) {
  // Same model and data; halving every weight halves the validation total.
  GridSpec g;
  LossWeights heavy{.orthogonality = 2, .nll = 2, .smoothness = 2, .kl = 2};
  LossWeights light{.orthogonality = 1, .nll = 1, .smoothness = 1, .kl = 1};
  g.loss_weights = {heavy, light};
  auto t = toy_train(1);
  t.learning_rate = 1e-12;
  const auto r = grid_search(g, toy_data(), toy_model(), t, 2, 2);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].candidate.index, 1u);
  EXPECT_NEAR(r[1].final_validation_total, 2 * r[0].final_validation_total,
              1e-6 * std::abs(r[0].final_validation_total));
}

TEST(Grid, FailedCandidateRanksLast) {
  GridSpec g;
  g.window_lengths = {1000, 16};
  const auto r = grid_search(g, toy_data(), toy_model(), toy_train(1), 2);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_FALSE(r[0].error);
  ASSERT_TRUE(r[1].error);
  EXPECT_NE(r[1].error->find("window_length"), std::string::npos);
}

TEST(Grid, EnumerationOrder) {
  GridSpec g;
  g.learning_rates = {1e-3, 1e-2};
  g.window_lengths = {8, 16, 32};
  const auto c = enumerate_grid(g, toy_model(), toy_train(1));
  ASSERT_EQ(c.size(), 6u);
  EXPECT_EQ(c[1].train.window_length, 16u);
  EXPECT_DOUBLE_EQ(c[3].train.learning_rate, 1e-2);
  EXPECT_EQ(c[5].index, 5u);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto r = train(toy_model(), toy_train(3), toy_data());
  const auto path = (tmp_dir() / "ck.json").string();
  Scaler s{Vector::Constant(3, 2.0), Vector::Constant(3, 0.75)};
  save_checkpoint(r.params, toy_model(), path, s);
  const auto ck = load_checkpoint(path);
  EXPECT_EQ(ck.params.flatten(), r.params.flatten());
  EXPECT_EQ(ck.config, toy_model());
  ASSERT_TRUE(ck.scaler);
  EXPECT_EQ(*ck.scaler, s);
  const Matrix y = toy_data(20, 2).values;
  EXPECT_EQ(encode_deterministic(ck.params, y), encode_deterministic(r.params, y));
}

TEST(Checkpoint, TamperedValueFailsChecksum) {
  auto j = checkpoint_to_json(init_params(toy_model()), toy_model());
  j["parameters"][0]["values"][0] = j["parameters"][0]["values"][0].get<double>() + 1e-9;
  try {
    checkpoint_from_json(j);
    FAIL() << "expected checksum error";
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind, CheckpointError::Kind::checksum);
  }
}

TEST(Checkpoint, VersionAndShapeMismatch) {
  auto j = checkpoint_to_json(init_params(toy_model()), toy_model());
  auto bad_version = j;
  bad_version["format_version"] = 2;
  try {
    checkpoint_from_json(bad_version);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind, CheckpointError::Kind::version);
  }
  auto bad_shape = j;
  bad_shape["model_config"]["shared_widths"] = {3, 9, 6};
  try {
    checkpoint_from_json(bad_shape);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind, CheckpointError::Kind::shape);
  }
  EXPECT_THROW(save_checkpoint(init_params(toy_model(9)), ModelConfig{}, (tmp_dir() / "x.json").string()),
               ShapeError);
}

TEST(Checkpoint, MissingAndMalformedFiles) {
  try {
    load_checkpoint((tmp_dir() / "nope.json").string());
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind, CheckpointError::Kind::io);
  }
  const auto path = (tmp_dir() / "garbage.json").string();
  std::ofstream(path) << "{not json";
  try {
    load_checkpoint(path);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind, CheckpointError::Kind::format);
  }
}

}  // namespace
}  // namespace fols
