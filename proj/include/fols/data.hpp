#pragma once

// Time-ordered measurement series: synthetic Gaussian scenarios, fault
// injection, standardization and CSV ingestion/export.

#include "fols/numerics.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fols {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TimeSeriesDataset {
  Matrix values;  // T x dim, one sample per row in time order
  std::optional<std::size_t> fault_onset;
  std::vector<std::string> variable_names;

  std::size_t length() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }

  void validate() const {
    if (fault_onset && (*fault_onset < 1 || *fault_onset + 1 > length())) {
      throw DataError("fault_onset " + std::to_string(*fault_onset) + " outside [1, " +
                      std::to_string(length() == 0 ? 0 : length() - 1) + "]");
    }
    if (!variable_names.empty() && variable_names.size() != dim()) {
      throw DataError("variable_names has " + std::to_string(variable_names.size()) +
                      " labels for " + std::to_string(dim()) + " columns");
    }
    if (!values.allFinite()) throw DataError("dataset contains non-finite values");
  }

  /// Rows [begin, end) with onset and names dropped.
  TimeSeriesDataset slice(std::size_t begin, std::size_t end) const {
    TimeSeriesDataset out;
    out.values = values.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
    out.variable_names = variable_names;
    return out;
  }
};

struct GaussianSpec {
  Vector mean;
  Vector std;
  std::size_t n = 0;
  std::uint64_t seed = 0;

  static GaussianSpec isotropic(std::size_t dim, double mean, double std, std::size_t n,
                                std::uint64_t seed) {
    const auto d = static_cast<Eigen::Index>(dim);
    return {Vector::Constant(d, mean), Vector::Constant(d, std), n, seed};
  }

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }

  void validate() const {
    if (mean.size() == 0) throw DomainError("gaussian spec: dim must be positive");
    if (std.size() != mean.size()) throw ShapeError("gaussian spec: mean and std lengths differ");
    for (Eigen::Index i = 0; i < std.size(); ++i) {
      if (!(std[i] > 0.0) || !std::isfinite(std[i]))
        throw DomainError("gaussian spec: std must be > 0 in every dimension");
      if (!std::isfinite(mean[i])) throw DomainError("gaussian spec: mean must be finite");
    }
  }
};

namespace detail {

inline Matrix draw_gaussian(const Vector& mean, const Vector& std, std::size_t n,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(static_cast<Eigen::Index>(n), mean.size());
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = mean[c] + std[c] * normal(rng);
  return out;
}

}  // namespace detail

inline TimeSeriesDataset generate_gaussian(const GaussianSpec& spec) {
  spec.validate();
  TimeSeriesDataset ds;
  ds.values = detail::draw_gaussian(spec.mean, spec.std, spec.n, spec.seed);
  return ds;
}

/// Keeps the first `onset` rows of `normal` and replaces the rest with draws
/// from `fault` (its mean, std and seed; its `n` is ignored).
inline TimeSeriesDataset inject_fault(const TimeSeriesDataset& normal, const GaussianSpec& fault,
                                      std::size_t onset) {
  fault.validate();
  if (fault.dim() != normal.dim()) {
    throw ShapeError("inject_fault: fault dim " + std::to_string(fault.dim()) +
                     " != dataset dim " + std::to_string(normal.dim()));
  }
  if (onset < 1 || onset + 1 > normal.length()) {
    throw DataError("inject_fault: onset " + std::to_string(onset) + " outside [1, " +
                    std::to_string(normal.length() == 0 ? 0 : normal.length() - 1) + "]");
  }
  TimeSeriesDataset out = normal;
  const std::size_t faulty = normal.length() - onset;
  out.values.bottomRows(static_cast<Eigen::Index>(faulty)) =
      detail::draw_gaussian(fault.mean, fault.std, faulty, fault.seed);
  out.fault_onset = onset;
  return out;
}

/// Mean-shift fault magnitudes: small, medium and large deviations.
enum class FaultPreset { F1, F2, F3 };

inline double fault_shift(FaultPreset p) {
  switch (p) {
    case FaultPreset::F1: return 0.5;
    case FaultPreset::F2: return 1.0;
    case FaultPreset::F3: return 2.0;
  }
  return 0.0;
}

inline std::optional<FaultPreset> parse_fault_preset(const std::string& s) {
  if (s == "F1") return FaultPreset::F1;
  if (s == "F2") return FaultPreset::F2;
  if (s == "F3") return FaultPreset::F3;
  return std::nullopt;
}

struct Scaler {
  Vector mean;
  Vector std;

  bool operator==(const Scaler&) const = default;
};

inline Scaler fit_scaler(const TimeSeriesDataset& normal) {
  if (normal.length() < 2) throw DataError("fit_scaler: need at least two samples");
  Scaler s;
  s.mean = normal.values.colwise().mean().transpose();
  const Matrix centered = normal.values.rowwise() - s.mean.transpose();
  s.std = (centered.colwise().squaredNorm() / static_cast<double>(normal.length() - 1))
              .cwiseSqrt()
              .transpose();
  for (Eigen::Index i = 0; i < s.std.size(); ++i) {
    if (!(s.std[i] > 0.0)) throw DataError("fit_scaler: zero-variance dimension " + std::to_string(i));
  }
  return s;
}

inline void check_scaler(const Scaler& s, const Matrix& values) {
  if (s.mean.size() != values.cols() || s.std.size() != values.cols())
    throw ShapeError("scaler width differs from dataset width");
}

inline Matrix apply_scaler(const Scaler& s, const Matrix& values) {
  check_scaler(s, values);
  return ((values.rowwise() - s.mean.transpose()).array().rowwise() / s.std.transpose().array()).matrix();
}

inline Matrix invert_scaler(const Scaler& s, const Matrix& values) {
  check_scaler(s, values);
  return ((values.array().rowwise() * s.std.transpose().array()).rowwise() + s.mean.transpose().array()).matrix();
}

inline TimeSeriesDataset apply_scaler(const Scaler& s, const TimeSeriesDataset& ds) {
  TimeSeriesDataset out = ds;
  out.values = apply_scaler(s, ds.values);
  return out;
}

inline TimeSeriesDataset invert_scaler(const Scaler& s, const TimeSeriesDataset& ds) {
  TimeSeriesDataset out = ds;
  out.values = invert_scaler(s, ds.values);
  return out;
}

/// Adds zero-mean white noise with per-dimension std (one entry broadcasts).
inline TimeSeriesDataset add_gaussian_noise(const TimeSeriesDataset& ds, const Vector& noise_std,
                                            std::uint64_t seed) {
  const Vector std = noise_std.size() == 1 ? Vector::Constant(static_cast<Eigen::Index>(ds.dim()), noise_std[0])
                                           : noise_std;
  if (static_cast<std::size_t>(std.size()) != ds.dim())
    throw ShapeError("noise std length differs from dataset dim");
  for (Eigen::Index i = 0; i < std.size(); ++i)
    if (!(std[i] >= 0.0) || !std::isfinite(std[i])) throw DomainError("noise std must be >= 0");
  TimeSeriesDataset out = ds;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index r = 0; r < out.values.rows(); ++r)
    for (Eigen::Index c = 0; c < out.values.cols(); ++c) out.values(r, c) += std[c] * normal(rng);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvOptions {
  bool has_header = true;
  // Comma-separated items: a column name, a 1-based index, or an inclusive
  // 1-based range "a:b". Empty selects every column.
  std::string columns;
  std::optional<std::size_t> fault_onset;
  std::optional<double> noise_std;
  std::uint64_t noise_seed = 0;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::optional<std::size_t> parse_index(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
  return static_cast<std::size_t>(std::stoull(s));
}

inline std::vector<std::size_t> select_columns(const std::string& spec,
                                               const std::vector<std::string>& names,
                                               std::size_t width) {
  std::vector<std::size_t> cols;
  if (trim(spec).empty()) {
    for (std::size_t i = 0; i < width; ++i) cols.push_back(i);
    return cols;
  }
  auto check = [&](std::size_t one_based, const std::string& item) {
    if (one_based < 1 || one_based > width)
      throw DataError("column selection '" + item + "' outside 1.." + std::to_string(width));
    return one_based - 1;
  };
  for (const auto& raw : split(spec, ',')) {
    const std::string item = trim(raw);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon != std::string::npos) {
      const auto lo = parse_index(trim(item.substr(0, colon)));
      const auto hi = parse_index(trim(item.substr(colon + 1)));
      if (!lo || !hi || *lo > *hi) throw DataError("bad column range '" + item + "'");
      for (std::size_t i = *lo; i <= *hi; ++i) cols.push_back(check(i, item));
    } else if (auto idx = parse_index(item)) {
      cols.push_back(check(*idx, item));
    } else {
      const auto it = std::find(names.begin(), names.end(), item);
      if (it == names.end()) throw DataError("unknown column '" + item + "'");
      cols.push_back(static_cast<std::size_t>(it - names.begin()));
    }
  }
  if (cols.empty()) throw DataError("column selection is empty");
  return cols;
}

inline bool parse_double(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(cell.c_str(), &end);
  return errno == 0 && end == cell.c_str() + cell.size() && std::isfinite(out);
}

}  // namespace detail

inline TimeSeriesDataset read_csv(std::istream& in, const CsvOptions& opts = {},
                                  const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split(line, ',');
    if (opts.has_header && header.empty() && rows.empty()) {
      header = std::move(cells);
      continue;
    }
    rows.push_back(std::move(cells));
    row_lines.push_back(line_no);
  }
  const std::size_t width = !header.empty() ? header.size() : (rows.empty() ? 0 : rows.front().size());
  if (width == 0) throw DataError(source + ": no columns");
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width) {
      throw DataError(source + ": ragged row at line " + std::to_string(row_lines[r]) + " (" +
                      std::to_string(rows[r].size()) + " cells, expected " + std::to_string(width) + ")");
    }
  }
  const auto cols = detail::select_columns(opts.columns, header, width);

  TimeSeriesDataset ds;
  ds.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::string& cell = rows[r][cols[c]];
      double v = 0.0;
      if (!detail::parse_double(cell, v)) {
        throw DataError(source + ": non-numeric cell '" + cell + "' at line " +
                        std::to_string(row_lines[r]) + ", column " + std::to_string(cols[c] + 1));
      }
      ds.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  if (!header.empty())
    for (auto c : cols) ds.variable_names.push_back(header[c]);
  ds.fault_onset = opts.fault_onset;
  if (opts.noise_std && *opts.noise_std > 0.0)
    ds = add_gaussian_noise(ds, Vector::Constant(1, *opts.noise_std), opts.noise_seed);
  ds.validate();
  return ds;
}

inline TimeSeriesDataset load_csv(const std::string& path, const CsvOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_csv(in, opts, path);
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> column_names(const TimeSeriesDataset& ds) {
  if (!ds.variable_names.empty()) return ds.variable_names;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < ds.dim(); ++i) names.push_back("x" + std::to_string(i + 1));
  return names;
}

/// Header row (variable names, or x1..xd) followed by 17-significant-digit values.
inline void write_csv(const TimeSeriesDataset& ds, std::ostream& out) {
  const auto names = column_names(ds);
  for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
  out << '\n';
  for (Eigen::Index r = 0; r < ds.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.values.cols(); ++c)
      out << (c ? "," : "") << format_double(ds.values(r, c));
    out << '\n';
  }
}

inline void export_csv(const TimeSeriesDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_csv(ds, out);
}

}  // namespace fols
