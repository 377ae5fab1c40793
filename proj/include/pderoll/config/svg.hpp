#pragma once

// Static SVG line chart: one <polyline> per series, one dashed vertical <line>
// marking the interpolation/extrapolation boundary. Axes and ticks are drawn
// with <path> and <text> only.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pderoll/eval/evaluate.hpp"

namespace pderoll::config {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct ChartLabels {
  std::string title = "Rollout error";
  std::string x = "frame";
  std::string y = "mean relative L2";
};

namespace svg_detail {

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace svg_detail

inline std::string render_line_chart(const std::vector<Series>& series, std::optional<double> rule_x,
                                     const ChartLabels& labels = {}) {
  using namespace svg_detail;
  if (series.empty()) throw std::invalid_argument("plot: no series");
  double x0 = INFINITY, x1 = -INFINITY, y1 = 0.0;
  for (const auto& s : series) {
    if (s.points.empty()) throw std::invalid_argument("plot: series '" + s.label + "' has no points");
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) {
        throw std::invalid_argument("plot: series '" + s.label + "' has a non-finite point");
      }
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (rule_x) {
    x0 = std::min(x0, *rule_x);
    x1 = std::max(x1, *rule_x);
  }
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == 0.0) y1 = 1.0;
  y1 *= 1.05;

  const double W = 720, H = 440, left = 70, right = 170, top = 40, bottom = 55;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + pw * (x - x0) / (x1 - x0); };
  auto py = [&](double y) { return top + ph * (1.0 - y / y1); };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << escape(labels.title) << "</text>\n";
  o << "<path d=\"M" << num(left) << ',' << num(top) << " V" << num(top + ph) << " H" << num(left + pw)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y1 * i / 4.0, xv = x0 + (x1 - x0) * i / 4.0;
    o << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
      << "</text>\n";
    o << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(top + ph + 18) << "\" text-anchor=\"middle\">" << tick(xv)
      << "</text>\n";
  }
  o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(H - 12) << "\" text-anchor=\"middle\">"
    << escape(labels.x) << "</text>\n";
  o << "<text transform=\"translate(18," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(labels.y) << "</text>\n";
  if (rule_x) {
    o << "<line class=\"boundary\" x1=\"" << num(px(*rule_x)) << "\" y1=\"" << num(top) << "\" x2=\""
      << num(px(*rule_x)) << "\" y2=\"" << num(top + ph) << "\" stroke=\"gray\" stroke-dasharray=\"5,4\"/>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = palette[i % (sizeof palette / sizeof *palette)];
    o << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < series[i].points.size(); ++k) {
      o << (k ? " " : "") << num(px(series[i].points[k].first)) << ',' << num(py(series[i].points[k].second));
    }
    o << "\"/>\n";
    const double ly = top + 10 + 18 * static_cast<double>(i);
    o << "<path d=\"M" << num(left + pw + 15) << ',' << num(ly) << " h22\" stroke=\"" << color
      << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(left + pw + 42) << "\" y=\"" << num(ly + 4) << "\">" << escape(series[i].label)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Series from curve.csv rows, and the boundary at the first extrapolation frame.
/// Without extrapolation rows the boundary sits one frame past the last step.
inline std::pair<Series, double> curve_series(const std::vector<eval::CurveRow>& rows, std::string label) {
  if (rows.empty()) throw std::invalid_argument("plot: curve '" + label + "' has no rows");
  Series s{std::move(label), {}};
  std::optional<double> boundary;
  for (const auto& r : rows) {
    s.points.emplace_back(static_cast<double>(r.step), r.mean_error);
    if (!boundary && r.region == "extrap") boundary = static_cast<double>(r.step);
  }
  return {s, boundary.value_or(static_cast<double>(rows.back().step + 1))};
}

}  // namespace pderoll::config
