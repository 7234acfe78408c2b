#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "ppfe/error.hpp"

namespace ppfe::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // half-height of the error bar per point; empty = none
};

struct PlotMeta {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  double width = 640.0;
  double height = 420.0;
  double margin_left = 70.0;
  double margin_right = 160.0;
  double margin_top = 40.0;
  double margin_bottom = 55.0;
};

/// Data range of one axis, widened when degenerate.
struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

inline Range padded(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
  if (hi - lo <= 0.0) {
    const double pad = std::abs(lo) > 0.0 ? 0.05 * std::abs(lo) : 0.5;
    return {lo - pad, hi + pad};
  }
  return {lo, hi};
}

/// Affine maps from data space to pixel space.
struct Frame {
  Range xr, yr;
  double left, right, top, bottom;

  double map_x(double x) const { return left + (x - xr.lo) / (xr.hi - xr.lo) * (right - left); }
  double map_y(double y) const { return bottom - (y - yr.lo) / (yr.hi - yr.lo) * (bottom - top); }
};

inline Frame make_frame(const std::vector<Series>& series, const PlotMeta& meta) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double e = i < s.err.size() ? std::abs(s.err[i]) : 0.0;
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i] - e);
      yhi = std::max(yhi, s.y[i] + e);
    }
  }
  Frame f;
  f.xr = padded(xlo, xhi);
  f.yr = padded(ylo, yhi);
  f.left = meta.margin_left;
  f.right = meta.width - meta.margin_right;
  f.top = meta.margin_top;
  f.bottom = meta.height - meta.margin_bottom;
  return f;
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      case '\'': o += "&apos;"; break;
      default: o += c;
    }
  }
  return o;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[i % 10];
}

/// Line plot with markers, error bars, axes with ticks and a legend.
inline std::string plot_svg(const std::vector<Series>& series, const PlotMeta& meta = {}) {
  if (series.empty()) throw InvalidArgument("plot_svg: no series");
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DimensionError("plot_svg: series '" + s.name + "' has mismatched x and y");
    if (!s.err.empty() && s.err.size() != s.x.size()) {
      throw DimensionError("plot_svg: series '" + s.name + "' has mismatched error bars");
    }
    if (s.x.empty()) throw InvalidArgument("plot_svg: series '" + s.name + "' is empty");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        throw InvalidArgument("plot_svg: series '" + s.name + "' has a non-finite point");
      }
    }
  }
  const Frame f = make_frame(series, meta);
  std::string o;
  o += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(meta.width) + "\" height=\"" + fmt(meta.height) +
       "\" viewBox=\"0 0 " + fmt(meta.width) + " " + fmt(meta.height) + "\" font-family=\"sans-serif\">\n";
  o += "<rect x=\"0\" y=\"0\" width=\"" + fmt(meta.width) + "\" height=\"" + fmt(meta.height) + "\" fill=\"white\"/>\n";
  if (!meta.title.empty()) {
    o += "<text class=\"title\" x=\"" + fmt((f.left + f.right) / 2) + "\" y=\"" + fmt(f.top / 2 + 5) +
         "\" text-anchor=\"middle\" font-size=\"15\">" + escape(meta.title) + "</text>\n";
  }

  o += "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
  o += "<line class=\"x-axis\" x1=\"" + fmt(f.left) + "\" y1=\"" + fmt(f.bottom) + "\" x2=\"" + fmt(f.right) +
       "\" y2=\"" + fmt(f.bottom) + "\"/>\n";
  o += "<line class=\"y-axis\" x1=\"" + fmt(f.left) + "\" y1=\"" + fmt(f.bottom) + "\" x2=\"" + fmt(f.left) +
       "\" y2=\"" + fmt(f.top) + "\"/>\n";
  o += "</g>\n";

  o += "<g class=\"ticks\" font-size=\"11\">\n";
  constexpr int kTicks = 5;
  for (int i = 0; i < kTicks; ++i) {
    const double xv = f.xr.lo + (f.xr.hi - f.xr.lo) * i / (kTicks - 1);
    const double px = f.map_x(xv);
    o += "<line x1=\"" + fmt(px) + "\" y1=\"" + fmt(f.bottom) + "\" x2=\"" + fmt(px) + "\" y2=\"" +
         fmt(f.bottom + 5) + "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + fmt(px) + "\" y=\"" + fmt(f.bottom + 18) + "\" text-anchor=\"middle\">" + tick_label(xv) +
         "</text>\n";
    const double yv = f.yr.lo + (f.yr.hi - f.yr.lo) * i / (kTicks - 1);
    const double py = f.map_y(yv);
    o += "<line x1=\"" + fmt(f.left - 5) + "\" y1=\"" + fmt(py) + "\" x2=\"" + fmt(f.left) + "\" y2=\"" + fmt(py) +
         "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + fmt(f.left - 8) + "\" y=\"" + fmt(py + 4) + "\" text-anchor=\"end\">" + tick_label(yv) +
         "</text>\n";
  }
  o += "</g>\n";
  if (!meta.xlabel.empty()) {
    o += "<text class=\"xlabel\" x=\"" + fmt((f.left + f.right) / 2) + "\" y=\"" + fmt(meta.height - 12) +
         "\" text-anchor=\"middle\" font-size=\"13\">" + escape(meta.xlabel) + "</text>\n";
  }
  if (!meta.ylabel.empty()) {
    const double cy = (f.top + f.bottom) / 2;
    o += "<text class=\"ylabel\" x=\"16\" y=\"" + fmt(cy) + "\" text-anchor=\"middle\" font-size=\"13\" " +
         "transform=\"rotate(-90 16 " + fmt(cy) + ")\">" + escape(meta.ylabel) + "</text>\n";
  }

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const std::string color = palette(si);
    o += "<g class=\"series\" data-name=\"" + escape(s.name) + "\">\n";
    std::string d;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      d += (i == 0 ? "M " : " L ") + fmt(f.map_x(s.x[i])) + " " + fmt(f.map_y(s.y[i]));
    }
    o += "<path d=\"" + d + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double px = f.map_x(s.x[i]);
      if (!s.err.empty()) {
        const double e = std::abs(s.err[i]);
        o += "<line class=\"errorbar\" x1=\"" + fmt(px) + "\" y1=\"" + fmt(f.map_y(s.y[i] - e)) + "\" x2=\"" +
             fmt(px) + "\" y2=\"" + fmt(f.map_y(s.y[i] + e)) + "\" stroke=\"" + color + "\"/>\n";
      }
      o += "<circle cx=\"" + fmt(px) + "\" cy=\"" + fmt(f.map_y(s.y[i])) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    o += "</g>\n";
  }

  o += "<g class=\"legend\" font-size=\"12\">\n";
  const double lx = f.right + 15;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const double ly = f.top + 10 + 20.0 * static_cast<double>(si);
    o += "<line x1=\"" + fmt(lx) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(lx + 20) + "\" y2=\"" + fmt(ly) +
         "\" stroke=\"" + palette(si) + "\" stroke-width=\"2\"/>\n";
    o += "<text x=\"" + fmt(lx + 26) + "\" y=\"" + fmt(ly + 4) + "\">" + escape(series[si].name) + "</text>\n";
  }
  o += "</g>\n</svg>\n";
  return o;
}

}  // namespace ppfe::svg
