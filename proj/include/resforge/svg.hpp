#pragma once

// Self-contained SVG rendering: spectra as line plots with nm axes, field and
// Purcell maps as per-cell heatmaps with a 256-step colormap, and layout
// previews at 10 user units per um. Output is deterministic: fixed float
// formatting, no timestamps, no external assets.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "resforge/common.hpp"
#include "resforge/layout.hpp"
#include "resforge/spectrum.hpp"

namespace resforge::svg {

namespace detail {

inline std::string num(double v) { return format_double(v, 7); }

// "Nice" tick positions covering [lo, hi]. Exactly the two endpoints when the
// range is degenerate or only two samples exist.
inline std::vector<double> nice_ticks(double lo, double hi, int target = 6) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / std::max(target - 1, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> ticks;
  double t = std::ceil(lo / step - 1e-9) * step;
  for (; t <= hi + 1e-9 * step; t += step) ticks.push_back(t);
  if (ticks.size() < 2) ticks = {lo, hi};
  return ticks;
}

// 256-step colormap interpolated from dark blue through green to yellow
// (viridis-like anchor points).
inline std::array<int, 3> colormap(double t) {
  static constexpr double anchors[][3] = {
      {68, 1, 84},   {72, 40, 120},  {62, 74, 137},  {49, 104, 142},
      {38, 130, 142}, {31, 158, 137}, {53, 183, 121}, {109, 205, 89},
      {180, 222, 44}, {253, 231, 37},
  };
  constexpr int n = 10;
  t = std::clamp(t, 0.0, 1.0);
  const double q = std::floor(t * 255.0) / 255.0;  // 256 discrete steps
  const double u = q * (n - 1);
  const int k = std::min(static_cast<int>(u), n - 2);
  const double f = u - k;
  std::array<int, 3> rgb;
  for (int c = 0; c < 3; ++c)
    rgb[c] = static_cast<int>(std::lround(anchors[k][c] + f * (anchors[k + 1][c] - anchors[k][c])));
  return rgb;
}

inline std::string rgb_str(const std::array<int, 3>& c) {
  return "rgb(" + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," +
         std::to_string(c[2]) + ")";
}

inline std::string header(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n";
}

}  // namespace detail

struct PlotSeries {
  Spectrum data;
  std::string label;
  std::string color = "#1f77b4";
};

// Line plot with wavelength in nm on the x axis.
inline std::string render_spectrum(const std::vector<PlotSeries>& series,
                                   const std::string& y_label = "intensity",
                                   const std::string& title = "") {
  if (series.empty() || series[0].data.empty())
    throw DomainError("render_spectrum: empty data");
  double x_lo = 1e300, x_hi = -1e300, y_lo = 0.0, y_hi = -1e300;
  std::size_t n_points = 0;
  for (const auto& s : series) {
    s.data.validate();
    n_points = std::max(n_points, s.data.size());
    for (std::size_t i = 0; i < s.data.size(); ++i) {
      x_lo = std::min(x_lo, s.data.wavelength_um[i] * 1e3);
      x_hi = std::max(x_hi, s.data.wavelength_um[i] * 1e3);
      y_hi = std::max(y_hi, s.data.intensity[i]);
    }
  }
  if (!(y_hi > y_lo)) y_hi = y_lo + 1.0;

  const double width = 800, height = 500;
  const double ml = 70, mr = 20, mt = title.empty() ? 20 : 40, mb = 50;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto sx = [&](double v) { return ml + (v - x_lo) / (x_hi - x_lo) * pw; };
  auto sy = [&](double v) { return mt + ph - (v - y_lo) / (y_hi - y_lo) * ph; };

  std::string out = detail::header(width, height);
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty())
    out += "<text x=\"" + detail::num(width / 2) +
           "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" + title + "</text>\n";

  // axes
  out += "<line x1=\"" + detail::num(ml) + "\" y1=\"" + detail::num(mt + ph) + "\" x2=\"" +
         detail::num(ml + pw) + "\" y2=\"" + detail::num(mt + ph) +
         "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + detail::num(ml) + "\" y1=\"" + detail::num(mt) + "\" x2=\"" +
         detail::num(ml) + "\" y2=\"" + detail::num(mt + ph) + "\" stroke=\"black\"/>\n";

  const auto x_ticks = n_points == 2 && series.size() == 1
                           ? std::vector<double>{x_lo, x_hi}
                           : detail::nice_ticks(x_lo, x_hi);
  for (double t : x_ticks) {
    if (t < x_lo - 1e-9 || t > x_hi + 1e-9) continue;
    out += "<line class=\"tick\" x1=\"" + detail::num(sx(t)) + "\" y1=\"" + detail::num(mt + ph) +
           "\" x2=\"" + detail::num(sx(t)) + "\" y2=\"" + detail::num(mt + ph + 6) +
           "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + detail::num(sx(t)) + "\" y=\"" + detail::num(mt + ph + 20) +
           "\" text-anchor=\"middle\" font-size=\"12\">" + detail::num(t) + "</text>\n";
  }
  for (double t : detail::nice_ticks(y_lo, y_hi, 6)) {
    if (t < y_lo - 1e-9 || t > y_hi + 1e-9) continue;
    out += "<line class=\"tick\" x1=\"" + detail::num(ml - 6) + "\" y1=\"" + detail::num(sy(t)) +
           "\" x2=\"" + detail::num(ml) + "\" y2=\"" + detail::num(sy(t)) +
           "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + detail::num(ml - 10) + "\" y=\"" + detail::num(sy(t) + 4) +
           "\" text-anchor=\"end\" font-size=\"12\">" + detail::num(t) + "</text>\n";
  }
  out += "<text x=\"" + detail::num(ml + pw / 2) + "\" y=\"" + detail::num(height - 10) +
         "\" text-anchor=\"middle\" font-size=\"13\">wavelength (nm)</text>\n";
  out += "<text x=\"16\" y=\"" + detail::num(mt + ph / 2) +
         "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 " +
         detail::num(mt + ph / 2) + ")\">" + y_label + "</text>\n";

  for (const auto& s : series) {
    std::string pts;
    for (std::size_t i = 0; i < s.data.size(); ++i) {
      pts += detail::num(sx(s.data.wavelength_um[i] * 1e3)) + "," +
             detail::num(sy(s.data.intensity[i]));
      if (i + 1 < s.data.size()) pts += " ";
    }
    out += "<polyline class=\"series\" fill=\"none\" stroke=\"" + s.color +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
  }
  // legend
  double ly = mt + 14;
  for (const auto& s : series) {
    if (s.label.empty()) continue;
    out += "<line x1=\"" + detail::num(ml + pw - 130) + "\" y1=\"" + detail::num(ly) + "\" x2=\"" +
           detail::num(ml + pw - 105) + "\" y2=\"" + detail::num(ly) + "\" stroke=\"" + s.color +
           "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + detail::num(ml + pw - 100) + "\" y=\"" + detail::num(ly + 4) +
           "\" font-size=\"12\">" + s.label + "</text>\n";
    ly += 18;
  }
  out += "</svg>\n";
  return out;
}

struct HeatmapOptions {
  bool log_scale = false;
  double log_floor = 1e-6;  // fraction of the maximum shown on a log scale
  std::string colorbar_label = "";
  int max_cells_per_axis = 320;  // larger grids are block-decimated (max)
  double cell_aspect = 1.0;
};

// Per-cell rectangle heatmap with a colorbar.
inline std::string render_heatmap(const std::vector<double>& values, int nx, int ny,
                                  const HeatmapOptions& opts = {}) {
  if (nx < 1 || ny < 1 || values.size() != static_cast<std::size_t>(nx) * ny)
    throw DomainError("render_heatmap: empty or mismatched data");
  // block-decimate (max) to keep the file size bounded
  const int bx = std::max(1, (nx + opts.max_cells_per_axis - 1) / opts.max_cells_per_axis);
  const int by = std::max(1, (ny + opts.max_cells_per_axis - 1) / opts.max_cells_per_axis);
  const int mx = (nx + bx - 1) / bx, my = (ny + by - 1) / by;
  std::vector<double> dec(static_cast<std::size_t>(mx) * my, 0.0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      auto& slot = dec[static_cast<std::size_t>(j / by) * mx + i / bx];
      slot = std::max(slot, values[static_cast<std::size_t>(j) * nx + i]);
    }
  double vmax = 0.0;
  for (double v : dec) vmax = std::max(vmax, v);
  if (!(vmax > 0)) vmax = 1.0;

  auto scaled = [&](double v) {
    if (opts.log_scale) {
      const double floor_v = vmax * opts.log_floor;
      const double lv = std::log10(std::max(v, floor_v));
      const double l0 = std::log10(floor_v), l1 = std::log10(vmax);
      return (lv - l0) / (l1 - l0);
    }
    return v / vmax;
  };

  const double cell = std::max(2.0, 640.0 / std::max(mx, my));
  const double pw = mx * cell, ph = my * cell * opts.cell_aspect;
  const double ml = 20, mt = 20, cb_w = 70;
  const double width = ml + pw + cb_w + 60, height = mt + ph + 30;

  std::string out = detail::header(width, height);
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int j = 0; j < my; ++j)
    for (int i = 0; i < mx; ++i) {
      const double v = scaled(dec[static_cast<std::size_t>(j) * mx + i]);
      out += "<rect x=\"" + detail::num(ml + i * cell) + "\" y=\"" +
             detail::num(mt + (my - 1 - j) * cell * opts.cell_aspect) + "\" width=\"" +
             detail::num(cell) + "\" height=\"" + detail::num(cell * opts.cell_aspect) +
             "\" fill=\"" + detail::rgb_str(detail::colormap(v)) + "\"/>\n";
    }
  // colorbar: 32 bands
  const double cb_x = ml + pw + 20;
  for (int k = 0; k < 32; ++k) {
    const double t = (k + 0.5) / 32.0;
    out += "<rect x=\"" + detail::num(cb_x) + "\" y=\"" +
           detail::num(mt + ph - (k + 1) * ph / 32.0) + "\" width=\"16\" height=\"" +
           detail::num(ph / 32.0 + 0.5) + "\" fill=\"" + detail::rgb_str(detail::colormap(t)) +
           "\"/>\n";
  }
  out += "<text x=\"" + detail::num(cb_x + 20) + "\" y=\"" + detail::num(mt + 10) +
         "\" font-size=\"11\">" + detail::num(vmax) + "</text>\n";
  const std::string lo_label =
      opts.log_scale ? detail::num(vmax * opts.log_floor) : std::string("0");
  out += "<text x=\"" + detail::num(cb_x + 20) + "\" y=\"" + detail::num(mt + ph) +
         "\" font-size=\"11\">" + lo_label + "</text>\n";
  if (!opts.colorbar_label.empty())
    out += "<text x=\"" + detail::num(cb_x + 8) + "\" y=\"" + detail::num(mt - 6) +
           "\" font-size=\"12\">" + opts.colorbar_label + "</text>\n";
  out += "</svg>\n";
  return out;
}

// Layout preview: 1 um = 10 user units, one path per polygon, the layer tag
// as a CSS class.
inline std::string render_layout(const layout::LayoutDocument& doc) {
  if (doc.polygons.empty() && !(doc.bbox_w_um > 0))
    throw DomainError("render_layout: empty document");
  constexpr double scale = 10.0;
  const double width = doc.bbox_w_um * scale, height = doc.bbox_h_um * scale;
  std::string out = detail::header(width, height);
  out += "<style>path{fill:#3a6ea5;fill-opacity:0.75;stroke:#12324f;stroke-width:0.5;"
         "fill-rule:evenodd}</style>\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& poly : doc.polygons) {
    std::string d = "M";
    for (std::size_t i = 0; i < poly.points.size(); ++i) {
      const double x = poly.points[i][0] * scale;
      const double y = height - poly.points[i][1] * scale;
      d += detail::num(x) + "," + detail::num(y);
      d += i + 1 < poly.points.size() ? " L" : " Z";
    }
    out += "<path class=\"" + poly.layer + "\" d=\"" + d + "\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace resforge::svg
