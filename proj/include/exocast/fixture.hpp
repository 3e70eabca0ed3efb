#pragma once

// Deterministic synthetic data: the coupled/null frames used by ablation tests and a
// 2020-shaped market + epidemic data set used as the offline fixture.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "exocast/date.hpp"
#include "exocast/features.hpp"
#include "exocast/ingest.hpp"
#include "exocast/rng.hpp"

namespace exocast::fixture {

/// Market series p_t = persistence * p_{t-1} + coupling * e_{t-lag} + noise with an
/// exogenous white-noise driver e. Frame columns: `price` (market), `exog` (exogenous),
/// target = next-day price.
struct CoupledSpec {
  std::size_t days = 300;
  double persistence = 0.8;
  double coupling = 0.5;
  std::size_t lag = 3;
  double noise_sd = 0.1;
  std::uint64_t seed = 1;
};

inline FeatureFrame coupled_frame(const CoupledSpec& spec) {
  Rng rng(derive_seed(spec.seed, 0xC0));
  const std::size_t burn = 50;
  const std::size_t total = spec.days + burn;
  std::vector<double> e(total), p(total, 0.0);
  for (auto& v : e) v = rng.normal();
  for (std::size_t t = 1; t < total; ++t) {
    const double driver = t >= spec.lag ? e[t - spec.lag] : 0.0;
    p[t] = spec.persistence * p[t - 1] + spec.coupling * driver + spec.noise_sd * rng.normal();
  }
  FeatureFrame f;
  f.column_names = {"price", "exog", "target_next_close"};
  f.groups = {ColumnGroup::Market, ColumnGroup::Exogenous, ColumnGroup::Target};
  f.target_name = "target_next_close";
  const std::size_t rows = spec.days - 1;
  f.values.resize(static_cast<Eigen::Index>(rows), 3);
  const Date start(2021, 1, 1);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t t = burn + i;
    f.dates.push_back(start + static_cast<std::int64_t>(i));
    f.values(static_cast<Eigen::Index>(i), 0) = p[t];
    f.values(static_cast<Eigen::Index>(i), 1) = e[t];
    f.values(static_cast<Eigen::Index>(i), 2) = p[t + 1];
  }
  return f;
}

struct EpiCountryRow {
  Date date;
  std::string code, name, region;
  std::int64_t new_cases = 0, cumulative_cases = 0, new_deaths = 0, cumulative_deaths = 0;
};

struct MarketEpiData {
  std::vector<MinuteBar> bars;
  std::vector<EpiCountryRow> epi_rows;
};

struct Anchor {
  Date date;
  double value;
};

/// Piecewise log-linear interpolation through anchors (values must be > 0).
inline double log_interp(const std::vector<Anchor>& anchors, Date d) {
  if (d <= anchors.front().date) return anchors.front().value;
  if (d >= anchors.back().date) return anchors.back().value;
  for (std::size_t k = 1; k < anchors.size(); ++k) {
    if (d <= anchors[k].date) {
      const double w = static_cast<double>(d - anchors[k - 1].date) /
                       static_cast<double>(anchors[k].date - anchors[k - 1].date);
      return std::exp((1 - w) * std::log(anchors[k - 1].value) + w * std::log(anchors[k].value));
    }
  }
  return anchors.back().value;
}

struct Market2020Spec {
  Date first{2020, 1, 3};
  Date last{2020, 9, 6};
  int bar_minutes = 10;
  double daily_vol = 0.035;
  std::uint64_t seed = 2020;
};

/// Price path bridged through approximate 2020 BTC/USD closes; global case and death
/// totals bridged through approximate 2020 WHO totals and split over a few countries.
inline MarketEpiData market_2020(const Market2020Spec& spec = {}) {
  using D = Date;
  const std::vector<Anchor> price = {
      {D(2020, 1, 3), 7340},   {D(2020, 1, 6), 7760},   {D(2020, 1, 15), 8800},  {D(2020, 2, 1), 9380},
      {D(2020, 2, 13), 10350}, {D(2020, 3, 1), 8550},   {D(2020, 3, 8), 8040},   {D(2020, 3, 12), 4900},
      {D(2020, 3, 20), 6200},  {D(2020, 4, 1), 6640},   {D(2020, 4, 15), 6640},  {D(2020, 4, 30), 8650},
      {D(2020, 5, 10), 8750},  {D(2020, 5, 20), 9500},  {D(2020, 6, 1), 10200},  {D(2020, 6, 15), 9430},
      {D(2020, 7, 1), 9230},   {D(2020, 7, 20), 9170},  {D(2020, 7, 27), 11000}, {D(2020, 8, 1), 11800},
      {D(2020, 8, 17), 12300}, {D(2020, 9, 1), 11900},  {D(2020, 9, 3), 10200},  {D(2020, 9, 6), 10260}};
  const std::vector<Anchor> cases = {
      {D(2020, 1, 3), 2},          {D(2020, 1, 6), 59},         {D(2020, 1, 22), 580},
      {D(2020, 2, 1), 11950},      {D(2020, 2, 15), 67000},     {D(2020, 3, 1), 87000},
      {D(2020, 3, 15), 160000},    {D(2020, 4, 1), 870000},     {D(2020, 4, 15), 2000000},
      {D(2020, 5, 1), 3300000},    {D(2020, 5, 15), 4500000},   {D(2020, 6, 1), 6200000},
      {D(2020, 6, 15), 8000000},   {D(2020, 7, 1), 10500000},   {D(2020, 7, 15), 13300000},
      {D(2020, 8, 1), 17600000},   {D(2020, 8, 15), 21000000},  {D(2020, 9, 1), 25300000},
      {D(2020, 9, 6), 26800000}};
  const std::vector<Anchor> deaths = {
      {D(2020, 1, 3), 1},       {D(2020, 1, 10), 1},      {D(2020, 1, 22), 18},     {D(2020, 2, 1), 260},
      {D(2020, 2, 15), 1521},   {D(2020, 3, 1), 2981},    {D(2020, 3, 15), 6401},   {D(2020, 4, 1), 44001},
      {D(2020, 4, 15), 128001}, {D(2020, 5, 1), 235001},  {D(2020, 5, 15), 305001}, {D(2020, 6, 1), 372001},
      {D(2020, 6, 15), 435001}, {D(2020, 7, 1), 511001},  {D(2020, 7, 15), 578001}, {D(2020, 8, 1), 680001},
      {D(2020, 8, 15), 760001}, {D(2020, 9, 1), 848001},  {D(2020, 9, 6), 880001}};

  Rng rng(derive_seed(spec.seed, 0xB7C));
  const std::int64_t n_days = spec.last - spec.first + 1;

  // Daily log closes: anchor interpolation plus a random walk pinned to zero at every
  // anchor (a Brownian bridge per segment).
  std::vector<double> walk(static_cast<std::size_t>(n_days), 0.0);
  for (std::int64_t d = 1; d < n_days; ++d) walk[d] = walk[d - 1] + spec.daily_vol * rng.normal();
  auto walk_at = [&](Date day) { return walk[static_cast<std::size_t>(std::clamp<std::int64_t>(day - spec.first, 0, n_days - 1))]; };
  std::vector<double> log_close(static_cast<std::size_t>(n_days));
  for (std::int64_t d = 0; d < n_days; ++d) {
    const Date day = spec.first + d;
    std::size_t a = 0;
    while (a + 2 < price.size() && price[a + 1].date <= day) ++a;
    const Date from = price[a].date, to = price[a + 1].date;
    const double w = std::clamp(static_cast<double>(day - from) / static_cast<double>(to - from), 0.0, 1.0);
    const double pinned = walk[d] - ((1 - w) * walk_at(from) + w * walk_at(to));
    log_close[static_cast<std::size_t>(d)] = std::log(log_interp(price, day)) + pinned;
  }

  MarketEpiData out;
  const int bars_per_day = 1440 / spec.bar_minutes;
  const double bar_vol = spec.daily_vol / std::sqrt(static_cast<double>(bars_per_day));
  double prev_log = log_close.front() - spec.daily_vol * rng.normal();
  for (std::int64_t d = 0; d < n_days; ++d) {
    const double target = log_close[static_cast<std::size_t>(d)];
    std::vector<double> path(static_cast<std::size_t>(bars_per_day + 1), 0.0);
    for (int k = 1; k <= bars_per_day; ++k) path[k] = path[k - 1] + bar_vol * rng.normal();
    const double end_walk = path.back();
    for (int k = 0; k <= bars_per_day; ++k) {
      const double w = static_cast<double>(k) / bars_per_day;
      path[k] = prev_log + w * (target - prev_log) + path[k] - w * end_walk;
    }
    const std::int64_t day_ms = (spec.first + d).epoch_ms();
    for (int k = 0; k < bars_per_day; ++k) {
      MinuteBar b;
      b.ts = day_ms + static_cast<std::int64_t>(k) * spec.bar_minutes * 60'000;
      b.open = std::round(std::exp(path[k]) * 10.0) / 10.0;
      b.close = std::round(std::exp(path[k + 1]) * 10.0) / 10.0;
      const double wick_up = std::abs(rng.normal()) * bar_vol * 0.6;
      const double wick_dn = std::abs(rng.normal()) * bar_vol * 0.6;
      b.high = std::round(std::max(b.open, b.close) * (1.0 + wick_up) * 10.0) / 10.0;
      b.low = std::round(std::min(b.open, b.close) * (1.0 - wick_dn) * 10.0) / 10.0;
      b.high = std::max(b.high, std::max(b.open, b.close));
      b.low = std::min(b.low, std::min(b.open, b.close));
      const double move = std::abs(path[k + 1] - path[k]) / bar_vol;
      b.volume = std::round(std::exp(std::log(18.0) + 0.6 * rng.normal()) * (1.0 + 0.5 * move) * 1e4) / 1e4;
      out.bars.push_back(b);
    }
    prev_log = target;
  }

  struct Country {
    const char* code;
    const char* name;
    const char* region;
    Date onset;
    double weight;
  };
  const std::array<Country, 6> countries = {{{"CN", "China", "WPRO", D(2020, 1, 3), 1.0},
                                             {"IT", "Italy", "EURO", D(2020, 2, 20), 3.0},
                                             {"US", "United States of America", "AMRO", D(2020, 3, 1), 8.0},
                                             {"BR", "Brazil", "AMRO", D(2020, 4, 1), 6.0},
                                             {"IN", "India", "SEARO", D(2020, 4, 20), 9.0},
                                             {"BQ", "Bonaire, Sint Eustatius and Saba", "AMRO", D(2020, 4, 1), 0.01}}};
  auto shares = [&](Date d) {
    std::array<double, countries.size()> w{};
    double total = 0.0;
    for (std::size_t c = 0; c < countries.size(); ++c) {
      const double since = static_cast<double>(d - countries[c].onset);
      double s = since < 0 ? 0.0 : countries[c].weight * (1.0 - std::exp(-since / 25.0));
      if (c == 0) s = since < 40 ? 50.0 : 50.0 * std::exp(-(since - 40) / 10.0) + 0.02;
      w[c] = s;
      total += s;
    }
    for (auto& v : w) v /= total;
    return w;
  };
  // Largest-remainder split so country counts sum exactly to the global count.
  auto allocate = [&](std::int64_t total, const std::array<double, countries.size()>& w) {
    std::array<std::int64_t, countries.size()> parts{};
    std::array<std::pair<double, std::size_t>, countries.size()> rem{};
    std::int64_t used = 0;
    for (std::size_t c = 0; c < countries.size(); ++c) {
      const double exact = w[c] * static_cast<double>(total);
      parts[c] = static_cast<std::int64_t>(std::floor(exact));
      used += parts[c];
      rem[c] = {exact - std::floor(exact), c};
    }
    std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (std::int64_t k = 0; k < total - used; ++k) ++parts[rem[static_cast<std::size_t>(k) % rem.size()].second];
    return parts;
  };

  std::array<std::int64_t, countries.size()> cum_c{}, cum_d{};
  double prev_cases = 0.0, prev_deaths = 0.0;
  for (std::int64_t d = 0; d < n_days; ++d) {
    const Date day = spec.first + d;
    const double weekday_factor = [&] {
      const auto wd = std::chrono::weekday{day.sys_days()}.c_encoding();
      return wd == 0 ? 0.85 : wd == 1 ? 0.9 : 1.0;
    }();
    const double c_smooth = log_interp(cases, day), d_smooth = log_interp(deaths, day) - 1.0;
    auto draw_new = [&](double now, double before) {
      const double base = std::max(0.0, now - before);
      return static_cast<std::int64_t>(std::llround(base * weekday_factor * std::exp(0.08 * rng.normal())));
    };
    const std::int64_t new_c = d == 0 ? static_cast<std::int64_t>(c_smooth) : draw_new(c_smooth, prev_cases);
    const std::int64_t new_d = d == 0 ? static_cast<std::int64_t>(d_smooth) : draw_new(d_smooth, prev_deaths);
    prev_cases = c_smooth;
    prev_deaths = d_smooth;
    const auto w = shares(day);
    const auto pc = allocate(new_c, w);
    const auto pd = allocate(new_d, w);
    for (std::size_t c = 0; c < countries.size(); ++c) {
      cum_c[c] += pc[c];
      cum_d[c] += pd[c];
      out.epi_rows.push_back({day, countries[c].code, countries[c].name, countries[c].region, pc[c], cum_c[c], pd[c],
                              cum_d[c]});
    }
  }
  return out;
}

inline void write_who_rows(std::ostream& out, const std::vector<EpiCountryRow>& rows) {
  out << kEpiCsvHeader << '\n';
  for (const auto& r : rows) {
    const bool quote = r.name.find(',') != std::string::npos;
    out << r.date.to_string() << ',' << r.code << ',' << (quote ? "\"" : "") << r.name << (quote ? "\"" : "") << ','
        << r.region << ',' << r.new_cases << ',' << r.cumulative_cases << ',' << r.new_deaths << ','
        << r.cumulative_deaths << '\n';
  }
}

}  // namespace exocast::fixture
