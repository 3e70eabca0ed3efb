#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace exocast {

/// A UTC calendar day, stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::chrono::sys_days day) : day_(day) {}
  constexpr Date(int year, unsigned month, unsigned day)
      : day_(std::chrono::year{year} / std::chrono::month{month} / std::chrono::day{day}) {}

  /// Parses `YYYY-MM-DD`; nullopt on any deviation or an invalid calendar day.
  static std::optional<Date> parse(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    auto digits = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
      int v = 0;
      for (std::size_t i = pos; i < pos + len; ++i) {
        if (text[i] < '0' || text[i] > '9') return std::nullopt;
        v = v * 10 + (text[i] - '0');
      }
      return v;
    };
    auto y = digits(0, 4), m = digits(5, 2), d = digits(8, 2);
    if (!y || !m || !d) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{*y}, std::chrono::month{static_cast<unsigned>(*m)},
                                    std::chrono::day{static_cast<unsigned>(*d)}};
    if (!ymd.ok()) return std::nullopt;
    return Date(std::chrono::sys_days{ymd});
  }

  /// UTC day containing the given epoch-millisecond instant.
  static constexpr Date from_epoch_ms(std::int64_t ms) {
    std::int64_t days = ms / 86'400'000;
    if (ms % 86'400'000 < 0) --days;
    return Date(std::chrono::sys_days{std::chrono::days{days}});
  }

  [[nodiscard]] constexpr std::int64_t days_since_epoch() const { return day_.time_since_epoch().count(); }
  [[nodiscard]] constexpr std::int64_t epoch_ms() const { return days_since_epoch() * 86'400'000; }
  [[nodiscard]] constexpr std::chrono::sys_days sys_days() const { return day_; }

  [[nodiscard]] std::string to_string() const {
    std::chrono::year_month_day ymd{day_};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
  }

  constexpr Date operator+(std::int64_t n) const { return Date(day_ + std::chrono::days{n}); }
  constexpr Date operator-(std::int64_t n) const { return Date(day_ - std::chrono::days{n}); }
  constexpr std::int64_t operator-(Date other) const { return days_since_epoch() - other.days_since_epoch(); }
  constexpr Date& operator++() {
    day_ += std::chrono::days{1};
    return *this;
  }

  constexpr auto operator<=>(const Date&) const = default;

 private:
  std::chrono::sys_days day_{};
};

/// Inclusive day count of [start, end]; zero when end precedes start.
constexpr std::int64_t inclusive_day_span(Date start, Date end) {
  return end < start ? 0 : (end - start) + 1;
}

}  // namespace exocast
