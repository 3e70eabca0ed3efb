#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "exocast/features.hpp"
#include "exocast/fixture.hpp"
#include "support.hpp"

namespace {

using namespace exocast;
using exocast::testkit::random_vector;

struct RawInput {
  std::vector<MinuteBar> bars;
  std::vector<DailyEpiRecord> epi;
};

RawInput synthetic_raw(Date first, int days, int bars_per_day, std::uint64_t seed) {
  Rng rng(seed);
  RawInput raw;
  double price = 100.0;
  std::int64_t cum = 0;
  for (int d = 0; d < days; ++d) {
    for (int k = 0; k < bars_per_day; ++k) {
      const double open = price;
      price *= std::exp(0.01 * rng.normal());
      raw.bars.push_back({(first + d).epoch_ms() + k * 60'000, open, std::max(open, price) + 0.1,
                          std::min(open, price) - 0.1, price, 1.0 + rng.uniform()});
    }
    const auto add = static_cast<std::int64_t>(rng.below(50));
    cum += add;
    raw.epi.push_back({first + d, add, cum, add / 10, cum / 10});
  }
  return raw;
}

EngineeredFeatures engineer(const RawInput& raw, const FeatureSchema& schema = {}) {
  const auto aligned = align_date_range(raw.bars, raw.epi, raw.epi.front().date, raw.epi.back().date);
  return engineer_features(resample_daily(aligned), aligned.epi(), schema);
}

FeatureFrame toy_frame(std::size_t rows, std::uint64_t seed) {
  Rng rng(seed);
  FeatureFrame f;
  f.column_names = {"a", "b", "target_next_close"};
  f.groups = {ColumnGroup::Market, ColumnGroup::Exogenous, ColumnGroup::Target};
  f.target_name = "target_next_close";
  f.values.resize(static_cast<Eigen::Index>(rows), 3);
  for (std::size_t i = 0; i < rows; ++i) {
    f.dates.push_back(Date(2020, 1, 1) + static_cast<std::int64_t>(i));
    for (int j = 0; j < 3; ++j) f.values(static_cast<Eigen::Index>(i), j) = rng.normal() * (j + 1) + 10 * j;
  }
  return f;
}

TEST(Resample, DailyAggregateFromBars) {
  const Date day(2020, 1, 6);
  std::vector<MinuteBar> bars = {{day.epoch_ms(), 9, 10.5, 8, 10, 1},
                                 {day.epoch_ms() + 60'000, 10, 11.5, 9.5, 11, 2},
                                 {day.epoch_ms() + 120'000, 11, 12, 10.5, 12, 3}};
  std::vector<DailyEpiRecord> epi = {{day, 0, 0, 0, 0}};
  const auto daily = resample_daily(align_date_range(bars, epi, day, day));
  ASSERT_EQ(daily.size(), 1u);
  EXPECT_EQ(daily[0].open, 9);
  EXPECT_EQ(daily[0].high, 12);
  EXPECT_EQ(daily[0].low, 8);
  EXPECT_EQ(daily[0].close, 12);
  EXPECT_EQ(daily[0].volume, 6);
  EXPECT_DOUBLE_EQ(daily[0].stream(BarStream::Close).mean, 11);
}

TEST(Resample, SingleBarDayZeroesMomentsWithWarning) {
  const Date day(2020, 1, 6);
  std::vector<MinuteBar> bars = {{day.epoch_ms(), 9, 10.5, 8, 10, 1}};
  std::vector<DailyEpiRecord> epi = {{day, 0, 0, 0, 0}};
  std::vector<std::string> warnings;
  log::ScopedSink sink([&](log::Level level, const std::string& m) {
    if (level == log::Level::Warn) warnings.push_back(m);
  });
  const auto daily = resample_daily(align_date_range(bars, epi, day, day));
  EXPECT_EQ(daily[0].open, 9);
  EXPECT_EQ(daily[0].close, 10);
  for (const auto& m : daily[0].intraday) {
    EXPECT_EQ(m.skewness, 0.0);
    EXPECT_EQ(m.kurtosis, 0.0);
  }
  EXPECT_EQ(warnings.size(), kBarStreams);
}

TEST(Resample, IntradayStatsMatchStatsModule) {
  const auto raw = synthetic_raw(Date(2020, 1, 6), 1, 1440, 99);
  const auto daily = resample_daily(align_date_range(raw.bars, raw.epi, Date(2020, 1, 6), Date(2020, 1, 6)));
  std::vector<double> closes, volumes;
  for (const auto& b : raw.bars) {
    closes.push_back(b.close);
    volumes.push_back(b.volume);
  }
  const auto& c = daily[0].stream(BarStream::Close);
  EXPECT_EQ(c.mean, stats::mean(closes));
  EXPECT_EQ(c.skewness, stats::sample_skewness(closes));
  EXPECT_EQ(c.kurtosis, stats::excess_kurtosis(closes));
  EXPECT_EQ(daily[0].stream(BarStream::Volume).kurtosis, stats::excess_kurtosis(volumes));
}

TEST(Engineer, ThirtySevenColumnsAndTargetShift) {
  const auto raw = synthetic_raw(Date(2020, 1, 6), 30, 20, 1);
  const auto eng = engineer(raw);
  const auto& f = eng.frame;
  EXPECT_EQ(f.cols(), 37u);
  EXPECT_EQ(f.rows(), 29u);
  EXPECT_EQ(f.column_names.back(), "target_next_close");
  EXPECT_EQ(f.names_in_group(ColumnGroup::Market).size(), 20u);
  EXPECT_EQ(f.names_in_group(ColumnGroup::Exogenous).size(), 16u);
  EXPECT_EQ(f.column_names[8], "cumulative_deaths");
  EXPECT_EQ(f.column_names[9], "btc_open_mean");
  const auto close = f.column_index("btc_close");
  for (std::size_t i = 0; i + 1 < f.rows(); ++i)
    EXPECT_EQ(f.values(static_cast<Eigen::Index>(i), 36), f.values(static_cast<Eigen::Index>(i + 1), close));
  EXPECT_EQ(eng.inference_date, Date(2020, 2, 4));
  EXPECT_EQ(eng.inference_predictors.size(), 36u);
  EXPECT_EQ(f.values(28, 36), eng.inference_predictors[close]);
}

TEST(Engineer, TrailingEpiMean) {
  auto raw = synthetic_raw(Date(2020, 1, 6), 12, 5, 2);
  std::int64_t cum = 0;
  for (int d = 0; d < 12; ++d) {
    raw.epi[d].new_cases = d + 1;
    cum += d + 1;
    raw.epi[d].cumulative_cases = cum;
  }
  const auto f = engineer(raw).frame;
  const auto j = f.column_index("new_cases_mean");
  EXPECT_DOUBLE_EQ(f.values(9, static_cast<Eigen::Index>(j)), 7.0);  // mean of 4..10
  EXPECT_DOUBLE_EQ(f.values(0, static_cast<Eigen::Index>(j)), 1.0);  // expanding at the start
  EXPECT_DOUBLE_EQ(f.values(2, static_cast<Eigen::Index>(j)), 2.0);
}

TEST(Engineer, ConstantEpiMomentsAreZero) {
  auto raw = synthetic_raw(Date(2020, 1, 6), 15, 5, 3);
  for (auto& r : raw.epi) r = {r.date, 4, 100, 0, 7};
  const auto f = engineer(raw).frame;
  for (const char* base : {"new_cases", "cumulative_cases", "new_deaths", "cumulative_deaths"})
    for (const char* m : {"_skew", "_kurt"})
      for (std::size_t i = 0; i < f.rows(); ++i)
        EXPECT_EQ(f.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f.column_index(std::string(base) + m))),
                  0.0);
}

TEST(Engineer, Errors) {
  const auto raw = synthetic_raw(Date(2020, 1, 6), 10, 5, 4);
  FeatureSchema small;
  small.epi_window = 3;
  EXPECT_ERRC(Errc::WindowTooSmall, engineer(raw, small));
  const auto aligned = align_date_range(raw.bars, raw.epi, Date(2020, 1, 6), Date(2020, 1, 15));
  const auto daily = resample_daily(aligned);
  std::vector<DailyEpiRecord> shorter(aligned.epi().begin(), aligned.epi().end() - 1);
  EXPECT_ERRC(Errc::CoverageMismatch, engineer_features(daily, shorter));
}

TEST(Engineer, Deterministic) {
  const auto raw = synthetic_raw(Date(2020, 1, 6), 20, 30, 5);
  EXPECT_EQ(engineer(raw).frame, engineer(raw).frame);
}

TEST(Engineer, SchemaOptionsShrinkFrame) {
  const auto raw = synthetic_raw(Date(2020, 1, 6), 20, 10, 6);
  FeatureSchema no_moments;
  no_moments.include_moments = false;
  EXPECT_EQ(engineer(raw, no_moments).frame.cols(), 10u);
  FeatureSchema no_hl;
  no_hl.include_high_low = false;
  EXPECT_EQ(engineer(raw, no_hl).frame.cols(), 29u);
}

TEST(Engineer, ShippedFixtureGives243SupervisedRows) {
  std::ifstream bars_in(testkit::fixture_dir() / "btcusd_10m.csv");
  std::ifstream epi_in(testkit::fixture_dir() / "who_daily.csv");
  const auto bars = parse_minute_bars(bars_in);
  const auto epi = parse_epi_daily(epi_in);
  const auto aligned = align_date_range(bars, epi, Date(2020, 1, 6), Date(2020, 9, 5));
  const auto eng = engineer_features(resample_daily(aligned), aligned.epi());
  EXPECT_EQ(eng.frame.rows(), 243u);
  EXPECT_EQ(eng.frame.cols(), 37u);
  EXPECT_EQ(eng.inference_date, Date(2020, 9, 5));
  EXPECT_TRUE(eng.frame.values.allFinite());
}

TEST(Normalizer, Examples) {
  FeatureFrame f;
  f.column_names = {"x", "t"};
  f.groups = {ColumnGroup::Market, ColumnGroup::Target};
  f.target_name = "t";
  f.values.resize(3, 2);
  f.values << 1, 5, 2, 5, 3, 5;
  f.dates = {Date(2020, 1, 1), Date(2020, 1, 2), Date(2020, 1, 3)};
  EXPECT_ERRC(Errc::ZeroVarianceColumn, fit_normalizer(f, {0, 3}));
  f.values.col(1) << 1, 4, 7;
  const auto n = fit_normalizer(f, {0, 3});
  EXPECT_DOUBLE_EQ(n.means[0], 2.0);
  EXPECT_DOUBLE_EQ(n.stds[0], 1.0);
  EXPECT_DOUBLE_EQ(n.normalize("x", 2.0), 0.0);
  EXPECT_ERRC(Errc::ColumnMismatch, apply_normalizer(n, f.with_predictors(std::vector<std::string>{})));
}

TEST(Normalizer, TrainRowsBecomeStandard) {
  const auto f = toy_frame(50, 7);
  const RowRange train{0, 35};
  const auto z = apply_normalizer(fit_normalizer(f, train), f);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const auto col = z.values.col(j).head(35);
    const double mu = col.mean();
    EXPECT_NEAR(mu, 0.0, 1e-10);
    EXPECT_NEAR(std::sqrt((col.array() - mu).square().sum() / 34.0), 1.0, 1e-10);
  }
}

TEST(Normalizer, MatchesDirectFormulaAndRoundTrips) {
  const auto f = toy_frame(40, 8);
  const auto n = fit_normalizer(f, {0, 28});
  const auto z = apply_normalizer(n, f);
  for (Eigen::Index j = 0; j < 3; ++j) {
    double s = 0, ss = 0;
    for (Eigen::Index i = 0; i < 28; ++i) s += f.values(i, j);
    const double mu = s / 28;
    for (Eigen::Index i = 0; i < 28; ++i) ss += (f.values(i, j) - mu) * (f.values(i, j) - mu);
    const double sd = std::sqrt(ss / 27);
    for (Eigen::Index i = 0; i < 40; ++i) EXPECT_NEAR(z.values(i, j), (f.values(i, j) - mu) / sd, 1e-12);
  }
  const auto back = invert_normalizer(n, z);
  EXPECT_LT((back.values - f.values).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(normalizer_from_json(to_json(n)), n);
}

TEST(Normalizer, IgnoresRowsOutsideFitRange) {
  auto f = toy_frame(40, 9);
  const auto before = fit_normalizer(f, {0, 28});
  for (Eigen::Index i = 28; i < 40; ++i) f.values.row(i) *= 1000.0;
  EXPECT_EQ(fit_normalizer(f, {0, 28}), before);
}

TEST(Split, FloorSizes) {
  const auto s244 = split_chronological(toy_frame(244, 1), {});
  EXPECT_EQ(s244.train.rows(), 170u);
  EXPECT_EQ(s244.validation.rows(), 24u);
  EXPECT_EQ(s244.test.rows(), 50u);
  const auto s10 = split_chronological(toy_frame(10, 1), {});
  EXPECT_EQ(s10.train.rows(), 7u);
  EXPECT_EQ(s10.validation.rows(), 1u);
  EXPECT_EQ(s10.test.rows(), 2u);
  const auto s243 = split_chronological(toy_frame(243, 1), {});
  EXPECT_EQ(s243.train.rows(), 170u);
  EXPECT_EQ(s243.validation.rows(), 24u);
  EXPECT_EQ(s243.test.rows(), 49u);
  EXPECT_ERRC(Errc::TooFewRows, split_chronological(toy_frame(2, 1), {}));
  EXPECT_ERRC(Errc::InvalidArgument, split_chronological(toy_frame(10, 1), {0.5, 0.1, 0.1}));
}

TEST(Split, PartitionReassembles) {
  for (std::size_t n : {10u, 57u, 244u}) {
    const auto f = toy_frame(n, n);
    for (auto order : {BlockOrder::TrainValidationTest, BlockOrder::TrainTestValidation}) {
      SplitSpec spec;
      spec.order = order;
      const auto s = split_chronological(f, spec);
      std::vector<const FeatureFrame*> blocks = {&s.train, &s.validation, &s.test};
      if (order == BlockOrder::TrainTestValidation) std::swap(blocks[1], blocks[2]);
      std::vector<Date> dates;
      Eigen::MatrixXd values(static_cast<Eigen::Index>(n), 3);
      Eigen::Index at = 0;
      for (const auto* b : blocks) {
        dates.insert(dates.end(), b->dates.begin(), b->dates.end());
        values.middleRows(at, b->values.rows()) = b->values;
        at += b->values.rows();
      }
      EXPECT_EQ(dates, f.dates);
      EXPECT_EQ(values, f.values);
    }
  }
}

TEST(FrameCsv, RoundTripWithSidecar) {
  const auto raw = synthetic_raw(Date(2020, 1, 6), 12, 8, 10);
  const auto f = engineer(raw).frame;
  std::stringstream csv;
  write_frame_csv(csv, f);
  const auto sidecar = frame_sidecar(f, {}, fit_normalizer(f, {0, 8}));
  EXPECT_EQ(sidecar.at("epi_window"), 7);
  EXPECT_TRUE(sidecar.contains("normalizer"));
  EXPECT_EQ(read_frame_csv(csv, sidecar), f);
}

}  // namespace
