#pragma once

// Descriptive statistics and Pearson significance.
//
// Moment estimators are the bias-adjusted ones used by common dataframe tooling:
// skewness is the adjusted Fisher-Pearson G1 and kurtosis is the bias-corrected
// excess G2. All functions are strict: degenerate input is an error here, and the
// feature-engineering layer decides how to tolerate it.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>

#include "exocast/error.hpp"

namespace exocast::stats {

struct SampleStats {
  std::size_t n = 0;
  double mean = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
};

namespace detail {

inline void require_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) fail(Errc::NonFiniteInput, "sample contains a non-finite value");
}

struct Central {
  double mean = 0.0;
  double m2 = 0.0;  // sum of squared deviations
  double m3 = 0.0;
  double m4 = 0.0;
};

inline Central central_sums(std::span<const double> xs) {
  Central c;
  double sum = 0.0;
  for (double x : xs) sum += x;
  c.mean = sum / static_cast<double>(xs.size());
  for (double x : xs) {
    const double d = x - c.mean;
    const double d2 = d * d;
    c.m2 += d2;
    c.m3 += d2 * d;
    c.m4 += d2 * d2;
  }
  return c;
}

// Zero variance up to rounding of the mean: the squared deviations are below what
// representation error of the values themselves could produce.
inline bool negligible_variance(std::span<const double> xs, double sum_sq_dev) {
  if (sum_sq_dev == 0.0) return true;
  double scale = 0.0;
  for (double x : xs) scale = std::max(scale, std::abs(x));
  const double eps = 64.0 * std::numeric_limits<double>::epsilon() * scale;
  return sum_sq_dev <= eps * eps * static_cast<double>(xs.size());
}

}  // namespace detail

inline double mean(std::span<const double> xs) {
  if (xs.empty()) fail(Errc::EmptySample, "mean of an empty sample");
  detail::require_finite(xs);
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

/// Adjusted Fisher-Pearson skewness: n^2/((n-1)(n-2)) * m3 / s^3, where m3 is the
/// third central moment (divisor n) and s the sample standard deviation (divisor n-1).
inline double sample_skewness(std::span<const double> xs) {
  if (xs.size() < 3)
    fail(Errc::InsufficientSamples, "skewness needs n >= 3, got " + std::to_string(xs.size()));
  detail::require_finite(xs);
  const auto c = detail::central_sums(xs);
  if (detail::negligible_variance(xs, c.m2)) fail(Errc::ZeroVariance, "skewness of a constant sample");
  const double n = static_cast<double>(xs.size());
  const double s = std::sqrt(c.m2 / (n - 1.0));
  const double third = c.m3 / n;
  return n * n / ((n - 1.0) * (n - 2.0)) * third / (s * s * s);
}

/// Bias-corrected excess kurtosis G2.
inline double excess_kurtosis(std::span<const double> xs) {
  if (xs.size() < 4)
    fail(Errc::InsufficientSamples, "kurtosis needs n >= 4, got " + std::to_string(xs.size()));
  detail::require_finite(xs);
  const auto c = detail::central_sums(xs);
  if (detail::negligible_variance(xs, c.m2)) fail(Errc::ZeroVariance, "kurtosis of a constant sample");
  const double n = static_cast<double>(xs.size());
  const double s2 = c.m2 / (n - 1.0);
  const double lead = n * (n + 1.0) / ((n - 1.0) * (n - 2.0) * (n - 3.0));
  const double tail = 3.0 * (n - 1.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0));
  return lead * c.m4 / (s2 * s2) - tail;
}

inline double pearson_r(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size())
    fail(Errc::LengthMismatch,
         "pearson_r lengths " + std::to_string(xs.size()) + " vs " + std::to_string(ys.size()));
  if (xs.size() < 2) fail(Errc::InsufficientSamples, "pearson_r needs n >= 2");
  detail::require_finite(xs);
  detail::require_finite(ys);
  const double mx = mean(xs), my = mean(ys);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (detail::negligible_variance(xs, sxx) || detail::negligible_variance(ys, syy))
    fail(Errc::ZeroVariance, "pearson_r of a constant sample");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace detail {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  constexpr int max_iter = 100000;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) <= eps) return h;
  }
  fail(Errc::DomainError, "incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double reg_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0) || !std::isfinite(a) || !std::isfinite(b))
    fail(Errc::DomainError, "reg_incomplete_beta requires a,b > 0 and 0 <= x <= 1");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// Two-sided p-value of a Pearson correlation r over n pairs under the null rho = 0,
/// via the Student t distribution with n-2 degrees of freedom.
inline double pearson_p_two_sided(double r, std::size_t n) {
  if (n < 3) fail(Errc::InsufficientSamples, "p-value needs n >= 3");
  if (!std::isfinite(r) || std::abs(r) > 1.0) fail(Errc::InvalidR, "|r| must be <= 1");
  if (std::abs(r) == 1.0) return 0.0;
  const double df = static_cast<double>(n) - 2.0;
  // df / (df + t^2) simplifies to 1 - r^2.
  const double x = (1.0 - r) * (1.0 + r);
  return std::clamp(reg_incomplete_beta(df / 2.0, 0.5, x), 0.0, 1.0);
}

/// Mean, G1 and G2 in one call; throws like the individual functions.
inline SampleStats describe(std::span<const double> xs) {
  return SampleStats{xs.size(), mean(xs), sample_skewness(xs), excess_kurtosis(xs)};
}

}  // namespace exocast::stats
