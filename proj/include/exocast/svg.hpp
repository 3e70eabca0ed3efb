#pragma once

// Minimal self-contained SVG line chart.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "exocast/error.hpp"
#include "exocast/text.hpp"

namespace exocast::svg {

struct Series {
  std::string label;
  std::vector<double> values;
  std::string color;
};

struct ChartOptions {
  std::string title;
  std::string x_label = "date";
  std::string y_label;
  int width = 960;
  int height = 480;
};

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

/// One polyline per series over shared x categories. All series must match `x_labels` in length.
inline std::string line_chart(const std::vector<std::string>& x_labels, const std::vector<Series>& series,
                              const ChartOptions& opt) {
  if (x_labels.empty() || series.empty()) fail(Errc::InvalidArgument, "nothing to plot");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series) {
    if (s.values.size() != x_labels.size()) fail(Errc::LengthMismatch, "series '" + s.label + "' length differs");
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo) || !std::isfinite(hi)) fail(Errc::NonFiniteInput, "non-finite value in chart data");
  if (hi - lo < 1e-12) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const double left = 90, right = 30, top = 50, bottom = 70;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;
  const std::size_t n = x_labels.size();
  auto px = [&](std::size_t i) { return left + (n == 1 ? pw / 2 : pw * static_cast<double>(i) / static_cast<double>(n - 1)); };
  auto py = [&](double v) { return top + ph * (1.0 - (v - lo) / (hi - lo)); };
  auto f2 = [](double v) { return text::format_fixed(v, 2); };

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
      << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << opt.width << "\" height=\"" << opt.height << "\" fill=\"white\"/>\n"
      << "<text x=\"" << f2(opt.width / 2.0) << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">"
      << escape(opt.title) << "</text>\n";

  // axes and grid
  out << "<g stroke=\"#333\" stroke-width=\"1\">\n"
      << "<line x1=\"" << f2(left) << "\" y1=\"" << f2(top + ph) << "\" x2=\"" << f2(left + pw) << "\" y2=\""
      << f2(top + ph) << "\"/>\n"
      << "<line x1=\"" << f2(left) << "\" y1=\"" << f2(top) << "\" x2=\"" << f2(left) << "\" y2=\"" << f2(top + ph)
      << "\"/>\n</g>\n";
  out << "<g fill=\"#333\">\n";
  constexpr int y_ticks = 5;
  for (int k = 0; k <= y_ticks; ++k) {
    const double v = lo + (hi - lo) * k / y_ticks;
    out << "<line x1=\"" << f2(left - 5) << "\" y1=\"" << f2(py(v)) << "\" x2=\"" << f2(left + pw) << "\" y2=\""
        << f2(py(v)) << "\" stroke=\"#ddd\"/>\n"
        << "<text x=\"" << f2(left - 8) << "\" y=\"" << f2(py(v) + 4) << "\" text-anchor=\"end\">" << f2(v)
        << "</text>\n";
  }
  const std::size_t x_ticks = std::min<std::size_t>(n, 6);
  for (std::size_t k = 0; k < x_ticks; ++k) {
    const std::size_t i = x_ticks == 1 ? 0 : k * (n - 1) / (x_ticks - 1);
    out << "<text x=\"" << f2(px(i)) << "\" y=\"" << f2(top + ph + 20) << "\" text-anchor=\"middle\">"
        << escape(x_labels[i]) << "</text>\n";
  }
  out << "<text x=\"" << f2(left + pw / 2) << "\" y=\"" << f2(opt.height - 20.0) << "\" text-anchor=\"middle\">"
      << escape(opt.x_label) << "</text>\n"
      << "<text x=\"20\" y=\"" << f2(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
      << f2(top + ph / 2) << ")\">" << escape(opt.y_label) << "</text>\n</g>\n";

  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << escape(s.color) << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < n; ++i) out << (i ? " " : "") << f2(px(i)) << ',' << f2(py(s.values[i]));
    out << "\"/>\n";
  }

  out << "<g font-size=\"12\">\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double ly = top + 10 + 18.0 * static_cast<double>(k);
    out << "<rect x=\"" << f2(left + 15) << "\" y=\"" << f2(ly - 8) << "\" width=\"18\" height=\"4\" fill=\""
        << escape(series[k].color) << "\"/>\n"
        << "<text x=\"" << f2(left + 40) << "\" y=\"" << f2(ly) << "\">" << escape(series[k].label) << "</text>\n";
  }
  out << "</g>\n</svg>\n";
  return out.str();
}

}  // namespace exocast::svg
