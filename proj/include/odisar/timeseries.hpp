// Multivariate state traces: schema, CSV ingestion, z-score normalization and
// sliding-window construction.

#ifndef ODISAR_TIMESERIES_HPP
#define ODISAR_TIMESERIES_HPP

#include "odisar/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace odisar {

struct FeatureSchema {
  std::vector<std::string> names;
  std::vector<std::string> units;  // empty, or one entry per feature

  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<std::string> feature_names,
                         std::vector<std::string> feature_units = {})
      : names(std::move(feature_names)), units(std::move(feature_units)) {
    validate();
  }

  std::size_t size() const { return names.size(); }

  std::optional<std::size_t> index_of(std::string_view name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  }

  void validate() const {
    if (names.empty()) throw ConfigError("feature schema needs at least one feature");
    std::set<std::string> seen;
    for (const auto& n : names) {
      if (n.empty()) throw ConfigError("feature schema contains an empty feature name");
      if (!seen.insert(n).second) throw ConfigError("duplicate feature name: " + n);
    }
    if (!units.empty() && units.size() != names.size()) {
      throw ConfigError("feature schema has " + std::to_string(units.size()) + " units for " +
                        std::to_string(names.size()) + " features");
    }
  }

  /// Surge/sway velocity, yaw rate, roll angle and roll rate.
  static FeatureSchema vessel() {
    return FeatureSchema({"Surge Speed", "Sway Speed", "Yaw Rate", "Roll Angle", "Roll Rate"},
                         {"m/s", "m/s", "deg/s", "deg", "deg/s"});
  }

  /// Planar pose of an omnidirectional base.
  static FeatureSchema robot() { return FeatureSchema({"x", "y", "theta"}, {"m", "m", "rad"}); }

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

/// A uniformly sampled T x D trace. Row t is the state at step origin_timestep + t.
struct MultivariateSeries {
  FeatureSchema schema;
  double sample_rate_hz = 1.0;
  Matrix values;
  long origin_timestep = 0;

  Eigen::Index steps() const { return values.rows(); }
  Eigen::Index features() const { return values.cols(); }

  void validate() const {
    schema.validate();
    if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
      throw ConfigError("sample rate must be positive");
    }
    if (values.rows() < 1) throw ConfigError("series must contain at least one row");
    if (static_cast<std::size_t>(values.cols()) != schema.size()) {
      throw ShapeError("series has " + std::to_string(values.cols()) + " columns but schema has " +
                       std::to_string(schema.size()) + " features");
    }
    if (!values.allFinite()) throw ConfigError("series contains non-finite values");
  }
};

/// Per-feature z-score transform.
struct Normalizer {
  RowVector mean;
  RowVector stddev;

  Matrix normalize(const Matrix& x) const {
    require_cols(x);
    return ((x.rowwise() - mean).array().rowwise() / stddev.array()).matrix();
  }

  Matrix denormalize(const Matrix& z) const {
    require_cols(z);
    return ((z.array().rowwise() * stddev.array()).rowwise() + mean.array()).matrix();
  }

  MultivariateSeries normalize(const MultivariateSeries& s) const {
    MultivariateSeries out = s;
    out.values = normalize(s.values);
    return out;
  }

  /// Identity transform for D features.
  static Normalizer identity(Eigen::Index d) {
    return Normalizer{RowVector::Zero(d), RowVector::Ones(d)};
  }

 private:
  void require_cols(const Matrix& x) const {
    if (x.cols() != mean.size()) {
      throw ShapeError("normalizer fitted on " + std::to_string(mean.size()) +
                       " features, got " + std::to_string(x.cols()));
    }
  }
};

/// Sample mean and sample standard deviation (ddof = 1) of every column.
inline Normalizer fit_normalizer(const Matrix& values, const FeatureSchema& schema) {
  const Eigen::Index t = values.rows();
  if (t < 2) throw ConfigError("normalizer needs at least 2 rows, got " + std::to_string(t));
  Normalizer n;
  n.mean = values.colwise().mean();
  n.stddev.resize(values.cols());
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    const double ss = (values.col(j).array() - n.mean(j)).square().sum();
    const double sd = std::sqrt(ss / static_cast<double>(t - 1));
    if (!(sd > 0.0)) {
      const std::string name = static_cast<std::size_t>(j) < schema.size()
                                   ? schema.names[static_cast<std::size_t>(j)]
                                   : "column " + std::to_string(j);
      throw ConfigError("feature \"" + name + "\" is constant; cannot normalize");
    }
    n.stddev(j) = sd;
  }
  return n;
}

inline Normalizer fit_normalizer(const MultivariateSeries& series) {
  return fit_normalizer(series.values, series.schema);
}

/// Fits on the vertical concatenation of several traces sharing one schema.
inline Normalizer fit_normalizer(const std::vector<MultivariateSeries>& series) {
  if (series.empty()) throw ConfigError("no series to fit a normalizer on");
  Eigen::Index total = 0;
  for (const auto& s : series) total += s.steps();
  Matrix all(total, series.front().features());
  Eigen::Index row = 0;
  for (const auto& s : series) {
    if (!(s.schema == series.front().schema)) throw ShapeError("series schemas differ");
    all.middleRows(row, s.steps()) = s.values;
    row += s.steps();
  }
  return fit_normalizer(all, series.front().schema);
}

/// One (past w steps, future h steps) sample.
struct WindowPair {
  Matrix input;   // w x D
  Matrix target;  // h x D
  long start_step = 0;  // first input step
  long end_step = 0;    // last forecast step

  long forecast_start() const { return end_step - static_cast<long>(target.rows()) + 1; }
};

inline std::size_t window_count(long t, long w, long h, long stride) {
  if (t < w + h) return 0;
  return static_cast<std::size_t>((t - w - h) / stride + 1);
}

inline std::vector<WindowPair> make_windows(const MultivariateSeries& series, long w, long h,
                                            long stride) {
  if (w < 1 || h < 1 || stride < 1) {
    throw ConfigError("window size, horizon and stride must be >= 1");
  }
  const long t = series.steps();
  if (t < w + h) {
    throw ConfigError("series has " + std::to_string(t) + " steps; windowing with w=" +
                      std::to_string(w) + ", h=" + std::to_string(h) +
                      " requires at least " + std::to_string(w + h));
  }
  std::vector<WindowPair> out;
  out.reserve(window_count(t, w, h, stride));
  for (long off = 0; off + w + h <= t; off += stride) {
    WindowPair p;
    p.input = series.values.middleRows(off, w);
    p.target = series.values.middleRows(off + w, h);
    p.start_step = series.origin_timestep + off;
    p.end_step = series.origin_timestep + off + w + h - 1;
    out.push_back(std::move(p));
  }
  return out;
}

struct ChronoSplit {
  std::vector<WindowPair> train;
  std::vector<WindowPair> val;
  std::vector<WindowPair> test;
};

/// Chronological split: floor(n * train_frac) windows to train, floor(n * val_frac) to
/// validation, the remainder to test.
inline ChronoSplit split_chrono(std::vector<WindowPair> windows, double train_frac,
                                double val_frac) {
  if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(train_frac + val_frac < 1.0)) {
    throw ConfigError("split fractions must satisfy 0 < train, 0 < val, train + val < 1");
  }
  std::stable_sort(windows.begin(), windows.end(),
                   [](const WindowPair& a, const WindowPair& b) { return a.start_step < b.start_step; });
  const double n = static_cast<double>(windows.size());
  // The epsilon absorbs representation error, e.g. 10 * 0.6.
  const auto n_train = static_cast<std::size_t>(std::floor(n * train_frac + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(n * val_frac + 1e-9));
  ChronoSplit s;
  auto it = std::make_move_iterator(windows.begin());
  s.train.assign(it, it + static_cast<long>(n_train));
  s.val.assign(it + static_cast<long>(n_train), it + static_cast<long>(n_train + n_val));
  s.test.assign(it + static_cast<long>(n_train + n_val), std::make_move_iterator(windows.end()));
  return s;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(',', pos);
    out.push_back(trim(line.substr(pos, next == std::string_view::npos ? next : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

}  // namespace detail

/// Parses CSV text. Columns are matched to the schema by name; extra columns are ignored.
inline MultivariateSeries parse_csv(std::istream& in, const FeatureSchema& schema,
                                    double sample_rate_hz, const std::string& source = "<csv>") {
  schema.validate();
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty()) {
    throw ParseError(source + ": empty file (no header row)");
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_commas(line);
  std::vector<std::size_t> column_of(schema.size());
  for (std::size_t f = 0; f < schema.size(); ++f) {
    auto it = std::find(header.begin(), header.end(), schema.names[f]);
    if (it == header.end()) {
      throw ParseError(source + ": missing column \"" + schema.names[f] + "\"");
    }
    column_of[f] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<double> data;
  long row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_commas(line);
    if (cells.size() < header.size()) {
      throw ParseError(source + ": row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(header.size()));
    }
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const auto cell = cells[column_of[f]];
      auto v = detail::parse_double(cell);
      if (!v) {
        throw ParseError(source + ": row " + std::to_string(row) + ", column \"" +
                         schema.names[f] + "\": not a finite number: \"" + std::string(cell) +
                         "\"");
      }
      data.push_back(*v);
    }
  }
  if (row == 0) throw ParseError(source + ": no data rows");

  MultivariateSeries s;
  s.schema = schema;
  s.sample_rate_hz = sample_rate_hz;
  s.values = Eigen::Map<const Matrix>(data.data(), row, static_cast<Eigen::Index>(schema.size()));
  s.validate();
  return s;
}

inline MultivariateSeries load_csv(const std::string& path, const FeatureSchema& schema,
                                   double sample_rate_hz) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  return parse_csv(in, schema, sample_rate_hz, path);
}

inline void write_csv(std::ostream& out, const MultivariateSeries& series) {
  for (std::size_t f = 0; f < series.schema.size(); ++f) {
    out << (f ? "," : "") << series.schema.names[f];
  }
  out << '\n';
  for (Eigen::Index t = 0; t < series.steps(); ++t) {
    for (Eigen::Index f = 0; f < series.features(); ++f) {
      out << (f ? "," : "") << format_double(series.values(t, f));
    }
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const MultivariateSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  write_csv(out, series);
  if (!out) throw Error("write failed: " + path);
}

}  // namespace odisar

#endif  // ODISAR_TIMESERIES_HPP
