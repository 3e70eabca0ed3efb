#pragma once

// Daily resampling, moment features, normalization and chronological splits.

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "exocast/date.hpp"
#include "exocast/error.hpp"
#include "exocast/ingest.hpp"
#include "exocast/log.hpp"
#include "exocast/stats.hpp"
#include "exocast/text.hpp"

namespace exocast {

struct StreamMoments {
  double mean = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;
};

enum class BarStream : std::size_t { Open, High, Low, Close, Volume };
inline constexpr std::size_t kBarStreams = 5;

struct DailyBarAggregate {
  Date date;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
  double volume = 0.0;
  std::array<StreamMoments, kBarStreams> intraday{};

  [[nodiscard]] const StreamMoments& stream(BarStream s) const { return intraday[static_cast<std::size_t>(s)]; }
};

/// Counts moments that fell back to 0.0 because the sample was too short or constant.
struct DegenerateTally {
  std::size_t skewness = 0;
  std::size_t kurtosis = 0;

  void report(const std::string& what) const {
    if (skewness + kurtosis == 0) return;
    log::warn(what + ": " + std::to_string(skewness) + " degenerate skewness and " + std::to_string(kurtosis) +
              " degenerate kurtosis values set to 0.0");
  }
};

/// Mean/skewness/kurtosis where undefined higher moments become 0.0.
inline StreamMoments tolerant_moments(std::span<const double> xs, DegenerateTally& tally) {
  StreamMoments m;
  m.mean = stats::mean(xs);
  try {
    m.skewness = stats::sample_skewness(xs);
  } catch (const Error&) {
    ++tally.skewness;
  }
  try {
    m.kurtosis = stats::excess_kurtosis(xs);
  } catch (const Error&) {
    ++tally.kurtosis;
  }
  return m;
}

inline std::vector<DailyBarAggregate> resample_daily(const AlignedRaw& aligned) {
  static constexpr std::array<const char*, kBarStreams> names = {"open", "high", "low", "close", "volume"};
  std::array<DegenerateTally, kBarStreams> tallies{};
  std::vector<DailyBarAggregate> out;
  out.reserve(aligned.day_count());
  std::array<std::vector<double>, kBarStreams> streams;
  for (std::size_t d = 0; d < aligned.day_count(); ++d) {
    const auto day = aligned.day(d);
    DailyBarAggregate agg;
    agg.date = day.date;
    agg.open = day.bars.front().open;
    agg.close = day.bars.back().close;
    agg.high = day.bars.front().high;
    agg.low = day.bars.front().low;
    for (auto& s : streams) s.clear();
    for (const auto& b : day.bars) {
      agg.high = std::max(agg.high, b.high);
      agg.low = std::min(agg.low, b.low);
      agg.volume += b.volume;
      streams[0].push_back(b.open);
      streams[1].push_back(b.high);
      streams[2].push_back(b.low);
      streams[3].push_back(b.close);
      streams[4].push_back(b.volume);
    }
    for (std::size_t s = 0; s < kBarStreams; ++s) agg.intraday[s] = tolerant_moments(streams[s], tallies[s]);
    out.push_back(agg);
  }
  for (std::size_t s = 0; s < kBarStreams; ++s) tallies[s].report(std::string("intraday ") + names[s]);
  return out;
}

enum class ColumnGroup { Market, Exogenous, Target };

inline std::string_view to_string(ColumnGroup g) {
  switch (g) {
    case ColumnGroup::Market: return "market";
    case ColumnGroup::Exogenous: return "exogenous";
    case ColumnGroup::Target: return "target";
  }
  return "";
}

inline ColumnGroup column_group_from_string(std::string_view s) {
  if (s == "market") return ColumnGroup::Market;
  if (s == "exogenous") return ColumnGroup::Exogenous;
  if (s == "target") return ColumnGroup::Target;
  fail(Errc::ColumnMismatch, "unknown column group '" + std::string(s) + "'");
}

struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  [[nodiscard]] std::size_t size() const { return end - begin; }
  friend bool operator==(const RowRange&, const RowRange&) = default;
};

/// Date-indexed dense matrix of named columns. The target column is always last.
struct FeatureFrame {
  std::vector<Date> dates;
  std::vector<std::string> column_names;
  std::vector<ColumnGroup> groups;
  Eigen::MatrixXd values;  // rows = days, cols = columns
  std::string target_name;

  [[nodiscard]] std::size_t rows() const { return dates.size(); }
  [[nodiscard]] std::size_t cols() const { return column_names.size(); }

  [[nodiscard]] std::optional<std::size_t> find_column(std::string_view name) const {
    for (std::size_t j = 0; j < column_names.size(); ++j)
      if (column_names[j] == name) return j;
    return std::nullopt;
  }

  [[nodiscard]] std::size_t column_index(std::string_view name) const {
    if (auto j = find_column(name)) return *j;
    fail(Errc::UnknownFeatureName, "no column named '" + std::string(name) + "'");
  }

  [[nodiscard]] std::size_t target_index() const { return column_index(target_name); }

  [[nodiscard]] std::vector<double> column(std::size_t j) const {
    std::vector<double> out(rows());
    for (std::size_t i = 0; i < rows(); ++i) out[i] = values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return out;
  }

  [[nodiscard]] std::vector<std::string> predictor_names() const {
    std::vector<std::string> out;
    for (std::size_t j = 0; j < cols(); ++j)
      if (groups[j] != ColumnGroup::Target) out.push_back(column_names[j]);
    return out;
  }

  [[nodiscard]] std::vector<std::string> names_in_group(ColumnGroup g) const {
    std::vector<std::string> out;
    for (std::size_t j = 0; j < cols(); ++j)
      if (groups[j] == g) out.push_back(column_names[j]);
    return out;
  }

  /// Keeps `names` (in this frame's column order) plus the target.
  [[nodiscard]] FeatureFrame with_predictors(std::span<const std::string> names) const {
    std::vector<std::size_t> keep;
    for (const auto& n : names) (void)column_index(n);
    for (std::size_t j = 0; j < cols(); ++j) {
      if (groups[j] == ColumnGroup::Target) continue;
      if (std::find(names.begin(), names.end(), column_names[j]) != names.end()) keep.push_back(j);
    }
    keep.push_back(target_index());
    FeatureFrame out;
    out.dates = dates;
    out.target_name = target_name;
    out.values.resize(values.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
      out.column_names.push_back(column_names[keep[k]]);
      out.groups.push_back(groups[keep[k]]);
      out.values.col(static_cast<Eigen::Index>(k)) = values.col(static_cast<Eigen::Index>(keep[k]));
    }
    return out;
  }

  [[nodiscard]] FeatureFrame slice_rows(RowRange r) const {
    if (r.end > rows() || r.begin > r.end) fail(Errc::TooFewRows, "row range outside frame");
    FeatureFrame out;
    out.dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(r.begin),
                     dates.begin() + static_cast<std::ptrdiff_t>(r.end));
    out.column_names = column_names;
    out.groups = groups;
    out.target_name = target_name;
    out.values = values.middleRows(static_cast<Eigen::Index>(r.begin), static_cast<Eigen::Index>(r.size()));
    return out;
  }

  /// Throws unless the frame satisfies its invariants.
  void validate() const {
    if (groups.size() != column_names.size() || static_cast<std::size_t>(values.cols()) != cols() ||
        static_cast<std::size_t>(values.rows()) != rows())
      fail(Errc::ColumnMismatch, "frame shape is inconsistent");
    if (cols() == 0 || column_names.back() != target_name || groups.back() != ColumnGroup::Target)
      fail(Errc::ColumnMismatch, "target column must be last");
    for (std::size_t j = 0; j < cols(); ++j)
      for (std::size_t k = j + 1; k < cols(); ++k)
        if (column_names[j] == column_names[k]) fail(Errc::ColumnMismatch, "duplicate column " + column_names[j]);
    for (std::size_t i = 1; i < rows(); ++i)
      if (!(dates[i - 1] < dates[i])) fail(Errc::ColumnMismatch, "dates are not strictly increasing");
    if (!values.allFinite()) fail(Errc::NonFiniteInput, "frame has non-finite cells");
  }

  friend bool operator==(const FeatureFrame& a, const FeatureFrame& b) {
    return a.dates == b.dates && a.column_names == b.column_names && a.groups == b.groups &&
           a.target_name == b.target_name && a.values.rows() == b.values.rows() &&
           a.values.cols() == b.values.cols() && a.values == b.values;
  }
};

/// Column layout options for `engineer_features`.
struct FeatureSchema {
  std::size_t epi_window = 7;
  bool include_high_low = true;
  bool include_moments = true;
  std::string target_name = "target_next_close";
};

/// Frame for supervised use plus the final day, which has predictors but no next-day target.
struct EngineeredFeatures {
  FeatureFrame frame;
  Date inference_date;
  std::vector<double> inference_predictors;
};

inline EngineeredFeatures engineer_features(std::span<const DailyBarAggregate> daily,
                                            std::span<const DailyEpiRecord> epi, const FeatureSchema& schema = {}) {
  if (schema.epi_window < 4)
    fail(Errc::WindowTooSmall, "epi_window must be >= 4, got " + std::to_string(schema.epi_window));
  if (daily.size() != epi.size())
    fail(Errc::CoverageMismatch, std::to_string(daily.size()) + " market days vs " + std::to_string(epi.size()) +
                                     " epi days");
  for (std::size_t i = 0; i < daily.size(); ++i)
    if (daily[i].date != epi[i].date)
      fail(Errc::CoverageMismatch, "market day " + daily[i].date.to_string() + " vs epi day " + epi[i].date.to_string());
  if (daily.size() < 2) fail(Errc::TooFewRows, "need at least two days to form a next-day target");

  struct Base {
    std::string name;
    ColumnGroup group;
    std::optional<BarStream> stream;  // market streams carry intraday moments
    std::vector<double> values;
  };
  std::vector<Base> bases;
  auto market = [&](const char* name, BarStream s, auto pick) {
    Base b{name, ColumnGroup::Market, s, {}};
    for (const auto& d : daily) b.values.push_back(pick(d));
    bases.push_back(std::move(b));
  };
  market("btc_open", BarStream::Open, [](const DailyBarAggregate& d) { return d.open; });
  if (schema.include_high_low) {
    market("btc_high", BarStream::High, [](const DailyBarAggregate& d) { return d.high; });
    market("btc_low", BarStream::Low, [](const DailyBarAggregate& d) { return d.low; });
  }
  market("btc_close", BarStream::Close, [](const DailyBarAggregate& d) { return d.close; });
  market("btc_volume", BarStream::Volume, [](const DailyBarAggregate& d) { return d.volume; });
  auto exo = [&](const char* name, auto pick) {
    Base b{name, ColumnGroup::Exogenous, std::nullopt, {}};
    for (const auto& r : epi) b.values.push_back(static_cast<double>(pick(r)));
    bases.push_back(std::move(b));
  };
  exo("new_cases", [](const DailyEpiRecord& r) { return r.new_cases; });
  exo("cumulative_cases", [](const DailyEpiRecord& r) { return r.cumulative_cases; });
  exo("new_deaths", [](const DailyEpiRecord& r) { return r.new_deaths; });
  exo("cumulative_deaths", [](const DailyEpiRecord& r) { return r.cumulative_deaths; });

  const std::size_t days = daily.size();
  std::vector<std::string> names;
  std::vector<ColumnGroup> groups;
  std::vector<std::vector<double>> columns;
  for (const auto& b : bases) {
    names.push_back(b.name);
    groups.push_back(b.group);
    columns.push_back(b.values);
  }
  if (schema.include_moments) {
    for (const auto& b : bases) {
      std::vector<double> mean(days), skew(days), kurt(days);
      DegenerateTally tally;
      for (std::size_t i = 0; i < days; ++i) {
        StreamMoments m;
        if (b.stream) {
          m = daily[i].stream(*b.stream);
        } else {
          const std::size_t first = i + 1 >= schema.epi_window ? i + 1 - schema.epi_window : 0;
          m = tolerant_moments(std::span<const double>(b.values).subspan(first, i + 1 - first), tally);
        }
        mean[i] = m.mean;
        skew[i] = m.skewness;
        kurt[i] = m.kurtosis;
      }
      if (!b.stream) tally.report("trailing " + b.name);
      for (auto [suffix, col] : {std::pair{"_mean", &mean}, std::pair{"_skew", &skew}, std::pair{"_kurt", &kurt}}) {
        names.push_back(b.name + suffix);
        groups.push_back(b.group);
        columns.push_back(std::move(*col));
      }
    }
  }

  EngineeredFeatures out;
  auto& frame = out.frame;
  frame.target_name = schema.target_name;
  frame.column_names = names;
  frame.column_names.push_back(schema.target_name);
  frame.groups = groups;
  frame.groups.push_back(ColumnGroup::Target);
  const std::size_t rows = days - 1;
  frame.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(columns.size() + 1));
  for (std::size_t i = 0; i < rows; ++i) {
    frame.dates.push_back(daily[i].date);
    for (std::size_t j = 0; j < columns.size(); ++j)
      frame.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = columns[j][i];
    frame.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(columns.size())) = daily[i + 1].close;
  }
  out.inference_date = daily.back().date;
  for (const auto& col : columns) out.inference_predictors.push_back(col.back());
  frame.validate();
  return out;
}

/// Per-column z-score parameters fitted on one row range.
struct Normalizer {
  std::vector<std::string> column_names;
  std::vector<double> means;
  std::vector<double> stds;

  [[nodiscard]] std::size_t index_of(std::string_view name) const {
    for (std::size_t j = 0; j < column_names.size(); ++j)
      if (column_names[j] == name) return j;
    fail(Errc::ColumnMismatch, "normalizer has no column '" + std::string(name) + "'");
  }

  [[nodiscard]] double normalize(std::string_view name, double x) const {
    const auto j = index_of(name);
    return (x - means[j]) / stds[j];
  }
  [[nodiscard]] double denormalize(std::string_view name, double z) const {
    const auto j = index_of(name);
    return z * stds[j] + means[j];
  }

  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

/// Sample mean and (n-1) standard deviation of every column over `rows`.
inline Normalizer fit_normalizer(const FeatureFrame& frame, RowRange rows) {
  if (rows.size() == 0 || rows.end > frame.rows()) fail(Errc::TooFewRows, "normalizer needs a nonempty row range");
  Normalizer n;
  n.column_names = frame.column_names;
  for (std::size_t j = 0; j < frame.cols(); ++j) {
    const auto col = frame.values.col(static_cast<Eigen::Index>(j))
                         .segment(static_cast<Eigen::Index>(rows.begin), static_cast<Eigen::Index>(rows.size()));
    const double mu = col.mean();
    const double ss = (col.array() - mu).square().sum();
    const double sd = rows.size() > 1 ? std::sqrt(ss / static_cast<double>(rows.size() - 1)) : 0.0;
    if (!(sd > 0.0) || stats::detail::negligible_variance(std::span<const double>(col.data(), col.size()), ss))
      fail(Errc::ZeroVarianceColumn, frame.column_names[j]);
    n.means.push_back(mu);
    n.stds.push_back(sd);
  }
  return n;
}

inline FeatureFrame apply_normalizer(const Normalizer& n, const FeatureFrame& frame) {
  if (n.column_names != frame.column_names) fail(Errc::ColumnMismatch, "normalizer columns differ from frame");
  FeatureFrame out = frame;
  for (std::size_t j = 0; j < frame.cols(); ++j) {
    auto col = out.values.col(static_cast<Eigen::Index>(j));
    col = (col.array() - n.means[j]) / n.stds[j];
  }
  return out;
}

inline FeatureFrame invert_normalizer(const Normalizer& n, const FeatureFrame& frame) {
  if (n.column_names != frame.column_names) fail(Errc::ColumnMismatch, "normalizer columns differ from frame");
  FeatureFrame out = frame;
  for (std::size_t j = 0; j < frame.cols(); ++j) {
    auto col = out.values.col(static_cast<Eigen::Index>(j));
    col = col.array() * n.stds[j] + n.means[j];
  }
  return out;
}

inline nlohmann::json to_json(const Normalizer& n) {
  nlohmann::json j;
  j["columns"] = n.column_names;
  j["means"] = n.means;
  j["stds"] = n.stds;
  return j;
}

inline Normalizer normalizer_from_json(const nlohmann::json& j) {
  Normalizer n;
  n.column_names = j.at("columns").get<std::vector<std::string>>();
  n.means = j.at("means").get<std::vector<double>>();
  n.stds = j.at("stds").get<std::vector<double>>();
  if (n.means.size() != n.column_names.size() || n.stds.size() != n.column_names.size())
    fail(Errc::ColumnMismatch, "normalizer arrays differ in length");
  return n;
}

enum class BlockOrder { TrainValidationTest, TrainTestValidation };

struct SplitSpec {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
  BlockOrder order = BlockOrder::TrainValidationTest;

  void validate() const {
    if (!(train > 0.0) || !(validation > 0.0) || !(test > 0.0))
      fail(Errc::InvalidArgument, "split fractions must all be > 0");
    if (std::abs(train + validation + test - 1.0) > 1e-9) fail(Errc::InvalidArgument, "split fractions must sum to 1");
  }
};

struct Splits {
  FeatureFrame train, validation, test;
  RowRange train_rows, validation_rows, test_rows;
};

/// Contiguous chronological blocks; floor sizes for the first two blocks, remainder to the last.
inline Splits split_chronological(const FeatureFrame& frame, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = frame.rows();
  if (n < 3) fail(Errc::TooFewRows, "split needs >= 3 rows, got " + std::to_string(n));
  auto floor_of = [n](double f) { return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)); };
  const std::size_t n_train = floor_of(spec.train);
  Splits s;
  if (spec.order == BlockOrder::TrainValidationTest) {
    const std::size_t n_val = floor_of(spec.validation);
    s.train_rows = {0, n_train};
    s.validation_rows = {n_train, n_train + n_val};
    s.test_rows = {n_train + n_val, n};
  } else {
    const std::size_t n_test = floor_of(spec.test);
    s.train_rows = {0, n_train};
    s.test_rows = {n_train, n_train + n_test};
    s.validation_rows = {n_train + n_test, n};
  }
  if (s.train_rows.size() == 0 || s.validation_rows.size() == 0 || s.test_rows.size() == 0 ||
      s.test_rows.end > n || s.validation_rows.end > n)
    fail(Errc::TooFewRows, std::to_string(n) + " rows leave an empty split block");
  s.train = frame.slice_rows(s.train_rows);
  s.validation = frame.slice_rows(s.validation_rows);
  s.test = frame.slice_rows(s.test_rows);
  return s;
}

/// CSV form: `date`, then the columns in frame order (target last).
inline void write_frame_csv(std::ostream& out, const FeatureFrame& frame) {
  out << "date";
  for (const auto& n : frame.column_names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < frame.rows(); ++i) {
    out << frame.dates[i].to_string();
    for (std::size_t j = 0; j < frame.cols(); ++j)
      out << ',' << text::format_double(frame.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    out << '\n';
  }
}

/// Sidecar JSON with column groups, schema options and (optionally) normalizer parameters.
inline nlohmann::json frame_sidecar(const FeatureFrame& frame, const FeatureSchema& schema,
                                    const std::optional<Normalizer>& normalizer) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["target"] = frame.target_name;
  j["epi_window"] = schema.epi_window;
  j["include_high_low"] = schema.include_high_low;
  j["include_moments"] = schema.include_moments;
  j["rows"] = frame.rows();
  auto& cols = j["columns"] = nlohmann::json::array();
  for (std::size_t k = 0; k < frame.cols(); ++k)
    cols.push_back({{"name", frame.column_names[k]}, {"group", to_string(frame.groups[k])}});
  if (normalizer) j["normalizer"] = to_json(*normalizer);
  return j;
}

/// Reads a frame CSV; column groups come from the sidecar's `columns` array.
inline FeatureFrame read_frame_csv(std::istream& in, const nlohmann::json& sidecar) {
  FeatureFrame frame;
  frame.target_name = sidecar.at("target").get<std::string>();
  for (const auto& c : sidecar.at("columns")) {
    frame.column_names.push_back(c.at("name").get<std::string>());
    frame.groups.push_back(column_group_from_string(c.at("group").get<std::string>()));
  }
  std::string line;
  if (!std::getline(in, line)) fail(Errc::EmptyInput, "frame CSV is empty");
  auto header = text::split_csv(text::trim_cr(line));
  if (!header || header->empty() || (*header)[0] != "date" ||
      std::vector<std::string>(header->begin() + 1, header->end()) != frame.column_names)
    fail(Errc::ColumnMismatch, "frame CSV header does not match sidecar");
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    auto row = text::trim_cr(line);
    if (row.empty()) continue;
    auto fields = text::split_csv(row);
    if (!fields || fields->size() != frame.cols() + 1) detail::malformed(line_no, "wrong field count");
    auto date = Date::parse((*fields)[0]);
    if (!date) detail::malformed(line_no, "bad date");
    frame.dates.push_back(*date);
    std::vector<double> values;
    for (std::size_t j = 1; j < fields->size(); ++j) {
      auto v = text::parse_double((*fields)[j]);
      if (!v) detail::malformed(line_no, "bad number");
      values.push_back(*v);
    }
    rows.push_back(std::move(values));
  }
  frame.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(frame.cols()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < frame.cols(); ++j)
      frame.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  frame.validate();
  return frame;
}

}  // namespace exocast
