#pragma once

// Minimal SVG charts: overlaid histograms, trajectories and metric sweeps.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "igct/io.hpp"

namespace igct {

enum class PlotKind { kHistogram, kTrajectory, kSweep };

inline PlotKind parse_plot_kind(const std::string& s) {
  if (s == "histogram") return PlotKind::kHistogram;
  if (s == "trajectory") return PlotKind::kTrajectory;
  if (s == "sweep") return PlotKind::kSweep;
  throw std::invalid_argument("unknown plot kind '" + s + "' (expected histogram | trajectory | sweep)");
}

struct Series {
  std::string label;
  std::vector<double> x, y;
  bool steps = false;  // draw as a histogram outline
};

struct Chart {
  std::string title, x_label, y_label;
  std::vector<Series> series;
};

namespace detail {

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  return colors[i % 7];
}

inline std::string xml_escape(const std::string& s) {
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

}  // namespace detail

/// Renders a chart. Throws if there is nothing to draw.
inline std::string render_svg(const Chart& chart) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  std::size_t points = 0;
  for (const auto& s : chart.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
      ++points;
    }
  }
  if (chart.series.empty() || points == 0) throw std::invalid_argument("plot: no data to draw");
  if (x1 == x0) { x0 -= 0.5; x1 += 0.5; }
  if (y1 == y0) { y0 -= 0.5; y1 += 0.5; }
  const double pad = 0.05 * (y1 - y0);
  y1 += pad;
  if (y0 != 0.0) y0 -= pad;

  const double W = 720, H = 440, L = 70, R = 170, T = 40, B = 55;
  const double pw = W - L - R, ph = H - T - B;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return T + ph - (y - y0) / (y1 - y0) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << detail::xml_escape(chart.title) << "</text>\n";
  os << "<g id=\"axes\" stroke=\"black\">\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T + ph << "\" x2=\"" << L + pw << "\" y2=\"" << T + ph << "\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << T + ph << "\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5.0, yv = y0 + (y1 - y0) * i / 5.0;
    os << "<line x1=\"" << detail::num(sx(xv)) << "\" y1=\"" << T + ph << "\" x2=\"" << detail::num(sx(xv))
       << "\" y2=\"" << T + ph + 5 << "\"/>\n";
    os << "<line x1=\"" << L - 5 << "\" y1=\"" << detail::num(sy(yv)) << "\" x2=\"" << L << "\" y2=\""
       << detail::num(sy(yv)) << "\"/>\n";
  }
  os << "</g>\n<g id=\"ticks\" stroke=\"none\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5.0, yv = y0 + (y1 - y0) * i / 5.0;
    os << "<text x=\"" << detail::num(sx(xv)) << "\" y=\"" << T + ph + 18 << "\" text-anchor=\"middle\">"
       << detail::tick(xv) << "</text>\n";
    os << "<text x=\"" << L - 8 << "\" y=\"" << detail::num(sy(yv) + 4) << "\" text-anchor=\"end\">"
       << detail::tick(yv) << "</text>\n";
  }
  os << "</g>\n";
  os << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
     << detail::xml_escape(chart.x_label) << "</text>\n";
  os << "<text transform=\"translate(18," << T + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << detail::xml_escape(chart.y_label) << "</text>\n";

  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const Series& s = chart.series[k];
    os << "<polyline class=\"series\" data-label=\"" << detail::xml_escape(s.label) << "\" fill=\"none\" stroke=\""
       << detail::palette(k) << "\" stroke-width=\"1.6\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (s.steps && i + 1 < s.x.size()) {
        os << detail::num(sx(s.x[i])) << ',' << detail::num(sy(s.y[i])) << ' ' << detail::num(sx(s.x[i + 1])) << ','
           << detail::num(sy(s.y[i])) << ' ';
      } else {
        os << detail::num(sx(s.x[i])) << ',' << detail::num(sy(s.y[i])) << ' ';
      }
    }
    os << "\"/>\n";
  }

  os << "<g id=\"legend\">\n";
  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const double y = T + 10 + 20.0 * static_cast<double>(k);
    os << "<line x1=\"" << L + pw + 15 << "\" y1=\"" << y << "\" x2=\"" << L + pw + 40 << "\" y2=\"" << y
       << "\" stroke=\"" << detail::palette(k) << "\" stroke-width=\"3\"/>\n";
    os << "<text x=\"" << L + pw + 46 << "\" y=\"" << y + 4 << "\">" << detail::xml_escape(chart.series[k].label)
       << "</text>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

/// Density histogram of a sample CSV's x_0 column, shared bin edges across
/// all inputs so the overlay is comparable.
inline Chart histogram_chart(const std::vector<CsvTable>& tables, const std::vector<std::string>& labels, int bins = 80) {
  if (tables.empty()) throw std::invalid_argument("plot: no inputs");
  std::vector<std::vector<double>> values;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& t : tables) {
    const int c = t.require_column("x_0");
    std::vector<double> v;
    for (std::size_t r = 0; r < t.rows.size(); ++r) v.push_back(t.number(r, c));
    if (v.empty()) throw std::invalid_argument(t.name + ": no samples");
    for (double x : v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    values.push_back(std::move(v));
  }
  if (hi == lo) { lo -= 0.5; hi += 0.5; }
  const double width = (hi - lo) / bins;
  Chart ch{"Sample histogram", "x", "density", {}};
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
    for (double x : values[k]) {
      const int b = std::clamp(static_cast<int>((x - lo) / width), 0, bins - 1);
      counts[static_cast<std::size_t>(b)] += 1.0;
    }
    Series s{labels[k], {}, {}, true};
    for (int b = 0; b <= bins; ++b) {
      s.x.push_back(lo + width * b);
      s.y.push_back(b < bins ? counts[static_cast<std::size_t>(b)] / (values[k].size() * width) : 0.0);
    }
    ch.series.push_back(std::move(s));
  }
  return ch;
}

/// Trajectories from a CSV with columns (index, t, x_0, ...): one polyline
/// per index, x_0 against t. At most `max_paths` indices are drawn.
inline Chart trajectory_chart(const CsvTable& t, const std::string& label, int max_paths = 32) {
  const int ci = t.require_column("index"), ct = t.require_column("t"), cx = t.require_column("x_0");
  std::map<long, Series> paths;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const long idx = static_cast<long>(t.number(r, ci));
    if (paths.size() >= static_cast<std::size_t>(max_paths) && !paths.count(idx)) continue;
    Series& s = paths[idx];
    s.label = label + " #" + std::to_string(idx);
    s.x.push_back(t.number(r, ct));
    s.y.push_back(t.number(r, cx));
  }
  Chart ch{"PF-ODE trajectories", "t", "x", {}};
  for (auto& [idx, s] : paths) ch.series.push_back(std::move(s));
  return ch;
}

/// Metric against w from EvalReport CSVs, one series per (method, nfe).
inline Chart sweep_chart(const std::vector<CsvTable>& tables, const std::string& metric) {
  Chart ch{metric + " vs guidance", "w", metric, {}};
  std::map<std::string, std::map<double, double>> by_series;
  for (const auto& t : tables) {
    const int cm = t.require_column("method"), cw = t.require_column("w"), cn = t.require_column("nfe");
    const int cv = t.require_column(metric);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::string key = t.rows[r][static_cast<std::size_t>(cm)] + " nfe=" + t.rows[r][static_cast<std::size_t>(cn)];
      by_series[key][t.number(r, cw)] = t.number(r, cv);
    }
  }
  for (const auto& [key, pts] : by_series) {
    Series s{key, {}, {}, false};
    for (const auto& [w, v] : pts) {
      s.x.push_back(w);
      s.y.push_back(v);
    }
    ch.series.push_back(std::move(s));
  }
  return ch;
}

}  // namespace igct
