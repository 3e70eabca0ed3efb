#pragma once

// Raw data sources: minute candles and daily epidemiological counts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "exocast/date.hpp"
#include "exocast/error.hpp"
#include "exocast/text.hpp"

namespace exocast {

/// One exchange candle. `ts` is the bucket start in epoch milliseconds (UTC).
struct MinuteBar {
  std::int64_t ts = 0;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
  double volume = 0.0;

  [[nodiscard]] Date day() const { return Date::from_epoch_ms(ts); }
  friend bool operator==(const MinuteBar&, const MinuteBar&) = default;
};

struct DailyEpiRecord {
  Date date;
  std::int64_t new_cases = 0;
  std::int64_t cumulative_cases = 0;
  std::int64_t new_deaths = 0;
  std::int64_t cumulative_deaths = 0;

  friend bool operator==(const DailyEpiRecord&, const DailyEpiRecord&) = default;
};

enum class OrderPolicy { RejectUnsorted, Sort };

struct GlobalSum {};
struct CountryCode {
  std::string code;
};
using EpiScope = std::variant<GlobalSum, CountryCode>;

inline constexpr std::string_view kMinuteCsvHeader = "ts,open,close,high,low,volume";
inline constexpr std::string_view kEpiCsvHeader =
    "Date_reported,Country_code,Country,WHO_region,New_cases,Cumulative_cases,New_deaths,Cumulative_deaths";

namespace detail {
[[noreturn]] inline void malformed(std::size_t line, const std::string& why) {
  fail(Errc::MalformedRow, "line " + std::to_string(line) + ": " + why);
}
}  // namespace detail

/// Parses the minute CSV (`ts,open,close,high,low,volume`). The returned bars are in
/// strictly increasing `ts` order. With `OrderPolicy::Sort` out-of-order rows are accepted
/// and sorted; duplicates are always an error.
inline std::vector<MinuteBar> parse_minute_bars(std::istream& in, OrderPolicy policy = OrderPolicy::RejectUnsorted) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) fail(Errc::EmptyInput, "minute CSV has no header");
  ++line_no;
  if (text::trim_cr(line) != kMinuteCsvHeader)
    detail::malformed(line_no, "expected header '" + std::string(kMinuteCsvHeader) + "'");

  std::vector<MinuteBar> bars;
  while (std::getline(in, line)) {
    ++line_no;
    auto row = text::trim_cr(line);
    if (row.empty()) continue;
    auto fields = text::split_csv(row);
    if (!fields || fields->size() != 6) detail::malformed(line_no, "expected 6 fields");
    auto ts = text::parse_int((*fields)[0]);
    if (!ts) detail::malformed(line_no, "bad timestamp '" + (*fields)[0] + "'");
    double v[5];
    for (int i = 0; i < 5; ++i) {
      auto d = text::parse_double((*fields)[i + 1]);
      if (!d || !std::isfinite(*d)) detail::malformed(line_no, "bad number '" + (*fields)[i + 1] + "'");
      v[i] = *d;
    }
    MinuteBar bar{*ts, v[0], v[2], v[3], v[1], v[4]};
    if (bar.ts % 60'000 != 0) detail::malformed(line_no, "timestamp is not a whole minute");
    if (bar.low > std::min(bar.open, bar.close) || bar.high < std::max(bar.open, bar.close) || bar.low > bar.high)
      detail::malformed(line_no, "high/low do not bracket open/close");
    if (bar.volume < 0.0) detail::malformed(line_no, "negative volume");
    if (policy == OrderPolicy::RejectUnsorted && !bars.empty()) {
      if (bar.ts == bars.back().ts)
        fail(Errc::DuplicateTimestamp, "line " + std::to_string(line_no) + ": ts " + std::to_string(bar.ts));
      if (bar.ts < bars.back().ts)
        fail(Errc::NonMonotonicTimestamps, "line " + std::to_string(line_no) + ": ts " + std::to_string(bar.ts) +
                                               " follows " + std::to_string(bars.back().ts));
    }
    bars.push_back(bar);
  }
  if (bars.empty()) fail(Errc::EmptyInput, "minute CSV has no data rows");
  if (policy == OrderPolicy::Sort) {
    std::stable_sort(bars.begin(), bars.end(), [](const MinuteBar& a, const MinuteBar& b) { return a.ts < b.ts; });
    for (std::size_t i = 1; i < bars.size(); ++i)
      if (bars[i].ts == bars[i - 1].ts) fail(Errc::DuplicateTimestamp, "ts " + std::to_string(bars[i].ts));
  }
  return bars;
}

inline void write_minute_bars(std::ostream& out, std::span<const MinuteBar> bars) {
  out << kMinuteCsvHeader << '\n';
  for (const auto& b : bars) {
    out << b.ts << ',' << text::format_double(b.open) << ',' << text::format_double(b.close) << ','
        << text::format_double(b.high) << ',' << text::format_double(b.low) << ','
        << text::format_double(b.volume) << '\n';
  }
}

/// Parses the WHO daily layout. With `GlobalSum` every country is summed per date; with
/// `CountryCode` only matching rows are kept. Output has one record per consecutive date.
inline std::vector<DailyEpiRecord> parse_epi_daily(std::istream& in, const EpiScope& scope = GlobalSum{}) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) fail(Errc::MalformedRow, "epi CSV is empty");
  ++line_no;
  {
    auto header = std::string(text::trim_cr(line));
    if (header.rfind("\xEF\xBB\xBF", 0) == 0) header.erase(0, 3);
    if (header != kEpiCsvHeader) detail::malformed(line_no, "unexpected epi header");
  }

  const auto* country = std::get_if<CountryCode>(&scope);
  std::map<Date, DailyEpiRecord> by_date;
  while (std::getline(in, line)) {
    ++line_no;
    auto row = text::trim_cr(line);
    if (row.empty()) continue;
    auto fields = text::split_csv(row);
    if (!fields || fields->size() != 8) detail::malformed(line_no, "expected 8 fields");
    auto date = Date::parse((*fields)[0]);
    if (!date) detail::malformed(line_no, "bad date '" + (*fields)[0] + "'");
    if (country && (*fields)[1] != country->code) continue;
    std::int64_t counts[4];
    for (int i = 0; i < 4; ++i) {
      const auto& f = (*fields)[4 + i];
      auto v = f.empty() ? std::optional<std::int64_t>(0) : text::parse_int(f);
      if (!v) detail::malformed(line_no, "bad count '" + f + "'");
      if (*v < 0)
        fail(Errc::NegativeCount, "line " + std::to_string(line_no) + ": negative count on " + date->to_string());
      counts[i] = *v;
    }
    auto& rec = by_date[*date];
    rec.date = *date;
    rec.new_cases += counts[0];
    rec.cumulative_cases += counts[1];
    rec.new_deaths += counts[2];
    rec.cumulative_deaths += counts[3];
  }

  std::vector<DailyEpiRecord> out;
  out.reserve(by_date.size());
  for (auto& [date, rec] : by_date) {
    if (!out.empty()) {
      const auto& prev = out.back();
      if (date - prev.date != 1)
        fail(Errc::MissingDate, "no epi rows between " + prev.date.to_string() + " and " + date.to_string());
      if (rec.cumulative_cases < prev.cumulative_cases || rec.cumulative_deaths < prev.cumulative_deaths)
        fail(Errc::NegativeCount, "cumulative count decreases from " + prev.date.to_string() + " to " +
                                      date.to_string());
    }
    out.push_back(rec);
  }
  return out;
}

inline void write_epi_daily(std::ostream& out, std::span<const DailyEpiRecord> records,
                            std::string_view country_code = "XX", std::string_view country = "Global",
                            std::string_view region = "OTHER") {
  out << kEpiCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.date.to_string() << ',' << country_code << ',' << country << ',' << region << ',' << r.new_cases << ','
        << r.cumulative_cases << ',' << r.new_deaths << ',' << r.cumulative_deaths << '\n';
  }
}

/// One calendar day of aligned raw inputs.
struct RawDay {
  Date date;
  std::span<const MinuteBar> bars;
  DailyEpiRecord epi;
};

/// Market and epi data restricted to a date range in which every day has both.
class AlignedRaw {
 public:
  AlignedRaw() = default;

  [[nodiscard]] Date start_date() const { return start_; }
  [[nodiscard]] Date end_date() const { return end_; }
  [[nodiscard]] std::size_t day_count() const { return epi_.size(); }
  [[nodiscard]] std::span<const MinuteBar> bars() const { return bars_; }
  [[nodiscard]] std::span<const DailyEpiRecord> epi() const { return epi_; }

  [[nodiscard]] RawDay day(std::size_t i) const {
    return RawDay{epi_[i].date,
                  std::span<const MinuteBar>(bars_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]), epi_[i]};
  }

  [[nodiscard]] std::vector<std::size_t> bar_counts() const {
    std::vector<std::size_t> counts(day_count());
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] = offsets_[i + 1] - offsets_[i];
    return counts;
  }

 private:
  friend AlignedRaw align_date_range(std::span<const MinuteBar>, std::span<const DailyEpiRecord>, Date, Date);

  Date start_, end_;
  std::vector<MinuteBar> bars_;
  std::vector<std::size_t> offsets_;  // day_count()+1 entries into bars_
  std::vector<DailyEpiRecord> epi_;
};

/// Restricts both sorted inputs to [start, end]. Every day must have one epi record and
/// at least one bar.
inline AlignedRaw align_date_range(std::span<const MinuteBar> bars, std::span<const DailyEpiRecord> epi, Date start,
                                   Date end) {
  if (end < start) fail(Errc::EmptyRange, start.to_string() + " is after " + end.to_string());
  AlignedRaw out;
  out.start_ = start;
  out.end_ = end;

  auto epi_it = std::lower_bound(epi.begin(), epi.end(), start,
                                 [](const DailyEpiRecord& r, Date d) { return r.date < d; });
  auto bar_it = std::lower_bound(bars.begin(), bars.end(), start.epoch_ms(),
                                 [](const MinuteBar& b, std::int64_t ts) { return b.ts < ts; });
  out.offsets_.push_back(0);
  for (Date day = start; day <= end; ++day) {
    if (epi_it == epi.end() || epi_it->date != day) fail(Errc::MissingEpiDay, day.to_string());
    out.epi_.push_back(*epi_it++);
    const std::int64_t day_end = (day + 1).epoch_ms();
    const std::size_t before = out.bars_.size();
    while (bar_it != bars.end() && bar_it->ts < day_end) out.bars_.push_back(*bar_it++);
    if (out.bars_.size() == before) fail(Errc::MissingMarketDay, day.to_string());
    out.offsets_.push_back(out.bars_.size());
  }
  return out;
}

}  // namespace exocast
