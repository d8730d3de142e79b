#include "fols/data.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace fols {
namespace {

namespace fs = std::filesystem;

fs::path tmp_dir() {
  fs::path p = fs::path(FOLS_TEST_TMP) / "data";
  fs::create_directories(p);
  return p;
}

std::string contains_msg(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

TEST(Generate, ShapeAndDeterminism) {
  const auto spec = GaussianSpec::isotropic(16, 2.0, 1.0, 10000, 42);
  const auto a = generate_gaussian(spec);
  EXPECT_EQ(a.length(), 10000u);
  EXPECT_EQ(a.dim(), 16u);
  EXPECT_EQ(a.values, generate_gaussian(spec).values);
  EXPECT_NE(a.values, generate_gaussian(GaussianSpec::isotropic(16, 2.0, 1.0, 10000, 43)).values);
}

TEST(Generate, SampleMeanWithinClt) {
  const auto ds = generate_gaussian(GaussianSpec::isotropic(16, 2.0, 1.0, 10000, 1));
  const Vector m = ds.values.colwise().mean().transpose();
  // 4 standard errors of a mean over 10^4 unit-variance draws.
  for (Eigen::Index i = 0; i < 16; ++i) EXPECT_NEAR(m[i], 2.0, 4.0 / std::sqrt(10000.0));
}

TEST(Generate, RejectsBadParameters) {
  EXPECT_THROW(generate_gaussian(GaussianSpec::isotropic(4, 0.0, -1.0, 10, 1)), DomainError);
  EXPECT_THROW(generate_gaussian(GaussianSpec::isotropic(4, 0.0, 0.0, 10, 1)), DomainError);
  EXPECT_THROW(generate_gaussian(GaussianSpec::isotropic(0, 0.0, 1.0, 10, 1)), DomainError);
  GaussianSpec ragged = GaussianSpec::isotropic(3, 0.0, 1.0, 10, 1);
  ragged.std = Vector::Ones(2);
  EXPECT_THROW(generate_gaussian(ragged), ShapeError);
}

TEST(InjectFault, KeepsPreOnsetRows) {
  const auto normal = generate_gaussian(GaussianSpec::isotropic(4, 2.0, 1.0, 300, 3));
  const auto faulty = inject_fault(normal, GaussianSpec::isotropic(4, 4.0, 1.0, 0, 9), 100);
  ASSERT_EQ(faulty.length(), 300u);
  EXPECT_EQ(faulty.fault_onset, 100u);
  EXPECT_EQ(faulty.values.topRows(100), normal.values.topRows(100));
  EXPECT_NE(faulty.values.row(100), normal.values.row(100));
}

TEST(InjectFault, OnsetBoundaries) {
  const auto normal = generate_gaussian(GaussianSpec::isotropic(2, 0.0, 1.0, 10, 3));
  const auto fault = GaussianSpec::isotropic(2, 5.0, 1.0, 0, 1);
  EXPECT_THROW(inject_fault(normal, fault, 0), DataError);
  EXPECT_THROW(inject_fault(normal, fault, 10), DataError);
  const auto last = inject_fault(normal, fault, 9);
  EXPECT_EQ(last.values.topRows(9), normal.values.topRows(9));
  EXPECT_THROW(inject_fault(normal, GaussianSpec::isotropic(3, 5.0, 1.0, 0, 1), 5), ShapeError);
}

TEST(InjectFault, PostOnsetMeanShifted) {
  const auto normal = generate_gaussian(GaussianSpec::isotropic(1, 2.0, 1.0, 4000, 5));
  const auto faulty = inject_fault(normal, GaussianSpec::isotropic(1, 3.0, 1.0, 0, 6), 2000);
  const double pre = faulty.values.topRows(2000).mean();
  const double post = faulty.values.bottomRows(2000).mean();
  // Two-sample z statistic for a unit shift with 2000 draws each is about 31.6.
  const double z = (post - pre) / std::sqrt(2.0 / 2000.0);
  EXPECT_GT(z, 20.0);
}

TEST(FaultPresets, Parse) {
  EXPECT_EQ(parse_fault_preset("F2"), FaultPreset::F2);
  EXPECT_FALSE(parse_fault_preset("F4"));
  EXPECT_DOUBLE_EQ(fault_shift(FaultPreset::F1), 0.5);
  EXPECT_DOUBLE_EQ(fault_shift(FaultPreset::F3), 2.0);
}

TEST(Scaler, RoundTrip) {
  const auto ds = generate_gaussian(GaussianSpec::isotropic(5, 2.0, 1.0, 10000, 8));
  const auto s = fit_scaler(ds);
  for (Eigen::Index i = 0; i < 5; ++i) {
    EXPECT_NEAR(s.mean[i], 2.0, 0.05);
    EXPECT_NEAR(s.std[i], 1.0, 0.05);
  }
  const Matrix z = apply_scaler(s, ds.values);
  EXPECT_LT(z.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((invert_scaler(s, z) - ds.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Scaler, ConstantColumnRejected) {
  TimeSeriesDataset ds;
  ds.values = Matrix::Random(20, 3);
  ds.values.col(1).setConstant(4.0);
  const std::string msg = contains_msg([&] { fit_scaler(ds); });
  EXPECT_NE(msg.find("dimension 1"), std::string::npos) << msg;
}

TEST(Csv, HeaderAndColumnSelection) {
  std::ostringstream text;
  for (int c = 1; c <= 52; ++c) text << (c > 1 ? "," : "") << "v" << c;
  text << '\n';
  for (int r = 0; r < 5; ++r) {
    for (int c = 1; c <= 52; ++c) text << (c > 1 ? "," : "") << r * 100 + c;
    text << '\n';
  }
  std::istringstream in(text.str());
  const auto ds = read_csv(in, {.columns = "1:22"});
  EXPECT_EQ(ds.length(), 5u);
  EXPECT_EQ(ds.dim(), 22u);
  EXPECT_EQ(ds.variable_names.front(), "v1");
  EXPECT_EQ(ds.variable_names.back(), "v22");
  EXPECT_DOUBLE_EQ(ds.values(3, 21), 322.0);

  std::istringstream by_name(text.str());
  const auto named = read_csv(by_name, {.columns = "v52,v2"});
  EXPECT_EQ(named.dim(), 2u);
  EXPECT_DOUBLE_EQ(named.values(0, 0), 52.0);
  EXPECT_DOUBLE_EQ(named.values(0, 1), 2.0);
}

TEST(Csv, NoHeader) {
  std::istringstream in("1,2\n3,4\n");
  const auto ds = read_csv(in, {.has_header = false});
  EXPECT_EQ(ds.length(), 2u);
  EXPECT_TRUE(ds.variable_names.empty());
  EXPECT_DOUBLE_EQ(ds.values(1, 0), 3.0);
}

TEST(Csv, NonNumericNamesLine) {
  std::istringstream in("a,b\n1,2\n3,NaN\n");
  const std::string msg = contains_msg([&] { read_csv(in); });
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  std::istringstream words("a,b\n1,2\n3,x\n");
  EXPECT_THROW(read_csv(words), DataError);
}

TEST(Csv, RaggedRowNamesLine) {
  std::istringstream in("a,b\n1,2\n3\n");
  const std::string msg = contains_msg([&] { read_csv(in); });
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST(Csv, MissingFileAndBadSelection) {
  EXPECT_THROW(load_csv((tmp_dir() / "does_not_exist.csv").string()), DataError);
  std::istringstream in("a,b\n1,2\n");
  EXPECT_THROW(read_csv(in, {.columns = "3"}), DataError);
  std::istringstream in2("a,b\n1,2\n");
  EXPECT_THROW(read_csv(in2, {.columns = "zz"}), DataError);
  std::istringstream in3("a,b\n1,2\n");
  EXPECT_THROW(read_csv(in3, {.columns = "2:1"}), DataError);
}

TEST(Csv, ExportRoundTripIsExact) {
  auto ds = generate_gaussian(GaussianSpec::isotropic(3, 2.0, 1.0, 50, 12));
  ds.values(0, 0) = 1e-300;
  ds.values(1, 1) = -0.1;
  const auto path = (tmp_dir() / "round_trip.csv").string();
  export_csv(ds, path);
  const auto back = load_csv(path);
  EXPECT_EQ(back.values, ds.values);
  EXPECT_EQ(back.variable_names, (std::vector<std::string>{"x1", "x2", "x3"}));
}

TEST(Csv, OnsetAndNoiseOptions) {
  std::istringstream in("a\n0\n0\n0\n0\n");
  const auto ds = read_csv(in, {.fault_onset = 2, .noise_std = 0.5, .noise_seed = 3});
  EXPECT_EQ(ds.fault_onset, 2u);
  EXPECT_GT(ds.values.cwiseAbs().maxCoeff(), 0.0);
  std::istringstream bad("a\n0\n0\n");
  EXPECT_THROW(read_csv(bad, {.fault_onset = 5}), DataError);
}

}  // namespace
}  // namespace fols
