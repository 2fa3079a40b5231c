#pragma once

// Minimal deterministic SVG line charts. Values arrive already transformed
// (the panels plot log10 of the metric); non-finite points break the line.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "loradyn/errors.hpp"

namespace loradyn::harness {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

enum class Panel { Loss, Alignment, Phase };

inline std::string_view to_string(Panel p) {
  switch (p) {
    case Panel::Loss: return "loss";
    case Panel::Alignment: return "alignment";
    case Panel::Phase: return "phase";
  }
  return "?";
}

inline std::string panel_title(Panel p) {
  switch (p) {
    case Panel::Loss: return "Training loss";
    case Panel::Alignment: return "Alignment of Z1 with gamma1";
    case Panel::Phase: return "Alignment phase, small init";
  }
  return {};
}

inline std::string panel_ylabel(Panel p) {
  switch (p) {
    case Panel::Loss: return "log10 loss";
    case Panel::Alignment: return "log10(1 - cos^2)";
    case Panel::Phase: return "log10 value";
  }
  return {};
}

namespace detail {

inline std::string fmt(double v, const char* spec = "%.2f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                           "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace detail

/// A standalone SVG with one polyline per series, axes with ticks, and a
/// legend. Throws PreconditionError when no series has a finite point.
inline std::string render_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<Series>& series) {
  using detail::fmt;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DimensionError("render_svg: x and y lengths differ in '" + s.label + "'");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!(x0 <= x1)) throw PreconditionError("render_svg: no finite data to plot");
  if (x1 == x0) x1 = x0 + 1.0;
  y0 = std::floor(y0);
  y1 = std::ceil(y1);
  if (y1 == y0) y1 = y0 + 1.0;

  const double W = 720, H = 460, L = 80, R = 190, T = 40, B = 60;
  const double pw = W - L - R, ph = H - T - B;
  const auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * pw; };
  const auto py = [&](double y) { return T + (y1 - y) / (y1 - y0) * ph; };

  std::string o;
  o += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W, "%.0f") + "\" height=\"" + fmt(H, "%.0f") +
       "\" viewBox=\"0 0 " + fmt(W, "%.0f") + " " + fmt(H, "%.0f") + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<text x=\"" + fmt(L + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
       detail::escape(title) + "</text>\n";
  o += "<rect x=\"" + fmt(L) + "\" y=\"" + fmt(T) + "\" width=\"" + fmt(pw) + "\" height=\"" + fmt(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";

  const double ystep = std::max(1.0, std::ceil((y1 - y0) / 10.0));
  for (double y = y0; y <= y1 + 1e-9; y += ystep) {
    o += "<line x1=\"" + fmt(L - 4) + "\" y1=\"" + fmt(py(y)) + "\" x2=\"" + fmt(L + pw) + "\" y2=\"" + fmt(py(y)) +
         "\" stroke=\"#dddddd\"/>\n";
    o += "<text x=\"" + fmt(L - 8) + "\" y=\"" + fmt(py(y) + 4) + "\" text-anchor=\"end\">" + fmt(y, "%.0f") +
         "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double x = x0 + (x1 - x0) * i / 5.0;
    o += "<line x1=\"" + fmt(px(x)) + "\" y1=\"" + fmt(T + ph) + "\" x2=\"" + fmt(px(x)) + "\" y2=\"" +
         fmt(T + ph + 4) + "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + fmt(px(x)) + "\" y=\"" + fmt(T + ph + 18) + "\" text-anchor=\"middle\">" + fmt(x, "%g") +
         "</text>\n";
  }
  o += "<text x=\"" + fmt(L + pw / 2) + "\" y=\"" + fmt(H - 16) + "\" text-anchor=\"middle\">" +
       detail::escape(xlabel) + "</text>\n";
  o += "<text x=\"20\" y=\"" + fmt(T + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " +
       fmt(T + ph / 2) + ")\">" + detail::escape(ylabel) + "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = detail::kPalette[k % std::size(detail::kPalette)];
    std::string pts;
    const auto flush = [&] {
      if (!pts.empty()) {
        o += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts +
             "\"/>\n";
      }
      pts.clear();
    };
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        flush();
        continue;
      }
      if (!pts.empty()) pts += ' ';
      pts += fmt(px(s.x[i])) + "," + fmt(py(s.y[i]));
    }
    flush();
    const double ly = T + 12 + 18.0 * static_cast<double>(k);
    o += "<line x1=\"" + fmt(L + pw + 12) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(L + pw + 36) + "\" y2=\"" +
         fmt(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    o += "<text x=\"" + fmt(L + pw + 42) + "\" y=\"" + fmt(ly + 4) + "\">" + detail::escape(s.label) + "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

/// log10 with a floor so exact zeros stay on the chart.
inline double log10_floor(double v, double floor = 1e-32) {
  if (std::isnan(v)) return v;
  return std::log10(std::max(v, floor));
}

}  // namespace loradyn::harness
