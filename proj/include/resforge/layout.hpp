#pragma once

// Lithography-template layout export: device footprints as polygons with
// layer tags, serialized as JSON and rendered to SVG previews.

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "resforge/common.hpp"
#include "resforge/geometry.hpp"

namespace resforge::layout {

struct Placement {
  geometry::DeviceSpec device;
  double x_um = 0.0;  // device center
  double y_um = 0.0;
  double rotation_deg = 0.0;
  std::string layer = "device";
};

struct LayoutDocument {
  struct Polygon {
    std::string layer;
    std::vector<std::array<double, 2>> points;
  };
  std::vector<Polygon> polygons;
  double bbox_w_um = 0.0;
  double bbox_h_um = 0.0;
  WarningList warnings;
};

namespace detail {

inline constexpr int kCircleVertices = 256;  // circles are polygonized at >= 256 vertices

inline std::vector<std::array<double, 2>> rectangle(double x0, double y0, double x1, double y1) {
  return {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}};
}

// Annulus traced as a single even-odd path: outer ring counterclockwise, then
// the inner ring reversed.
inline std::vector<std::array<double, 2>> annulus(double r_in, double r_out) {
  std::vector<std::array<double, 2>> pts;
  pts.reserve(2 * kCircleVertices + 2);
  for (int k = 0; k <= kCircleVertices; ++k) {
    const double a = 2.0 * pi * k / kCircleVertices;
    pts.push_back({r_out * std::cos(a), r_out * std::sin(a)});
  }
  for (int k = kCircleVertices; k >= 0; --k) {
    const double a = 2.0 * pi * k / kCircleVertices;
    pts.push_back({r_in * std::cos(a), r_in * std::sin(a)});
  }
  return pts;
}

// Device footprint polygons in local coordinates (device centered at origin).
inline std::vector<std::vector<std::array<double, 2>>> device_polygons(
    const geometry::DeviceSpec& spec) {
  using Poly = std::vector<std::array<double, 2>>;
  return std::visit(
      [](const auto& s) -> std::vector<Poly> {
        using T = std::decay_t<decltype(s)>;
        std::vector<Poly> polys;
        if constexpr (std::is_same_v<T, geometry::EmptyDevice>) {
          return polys;
        } else if constexpr (std::is_same_v<T, geometry::RingSpec>) {
          const double r_out = s.radius_um + s.waveguide_width_um / 2;
          const double r_in = s.radius_um - s.waveguide_width_um / 2;
          polys.push_back(annulus(r_in, r_out));
          const double bus_len = 2.0 * (r_out + 2.0);  // buses overhang the ring
          const double b1_hi = -(r_out + s.gap_1_um);
          const double b2_lo = r_out + s.gap_2_um;
          polys.push_back(rectangle(-bus_len / 2, b1_hi - s.bus_width_um, bus_len / 2, b1_hi));
          polys.push_back(rectangle(-bus_len / 2, b2_lo, bus_len / 2, b2_lo + s.bus_width_um));
          return polys;
        } else if constexpr (std::is_same_v<T, geometry::PhcCavitySpec>) {
          const auto fins = geometry::phc_fin_positions(s);
          const double span = fins.empty() ? 2.0 : 2.0 * (fins.back() + s.fin_width_um / 2) + 2.0;
          polys.push_back(rectangle(-span / 2, -s.waveguide_width_um / 2, span / 2,
                                    s.waveguide_width_um / 2));
          for (double xc : fins)
            polys.push_back(rectangle(xc - s.fin_width_um / 2, -s.fin_length_um / 2,
                                      xc + s.fin_width_um / 2, s.fin_length_um / 2));
          return polys;
        } else {
          const double half = s.n_teeth * s.period_um / 2;
          const double tooth = s.duty_cycle * s.period_um;
          for (int k = 0; k < s.n_teeth; ++k) {
            const double x0 = -half + k * s.period_um;
            polys.push_back(rectangle(x0, -s.width_um / 2, x0 + tooth, s.width_um / 2));
          }
          return polys;
        }
      },
      spec);
}

inline double polygon_area(const std::vector<std::array<double, 2>>& pts) {
  double a = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    const auto& q = pts[(i + 1) % pts.size()];
    a += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * a;
}

struct Bounds {
  double xlo = 0, ylo = 0, xhi = 0, yhi = 0;
};

inline Bounds bounds_of(const std::vector<LayoutDocument::Polygon>& polys) {
  Bounds b{1e300, 1e300, -1e300, -1e300};
  for (const auto& poly : polys)
    for (const auto& p : poly.points) {
      b.xlo = std::min(b.xlo, p[0]);
      b.ylo = std::min(b.ylo, p[1]);
      b.xhi = std::max(b.xhi, p[0]);
      b.yhi = std::max(b.yhi, p[1]);
    }
  return b;
}

inline double degrees_to_radians(double deg) { return deg * pi / 180.0; }

}  // namespace detail

// Place devices into a [0, w] x [0, h] bounding box. Polygon count and vertex
// ordering are deterministic for identical input; rotation is applied about
// the device centroid (its placement point). Overlapping device extents are
// reported as warnings, placements outside the box are errors.
inline LayoutDocument export_layout(std::span<const Placement> placements, double bbox_w_um,
                                    double bbox_h_um) {
  if (!(bbox_w_um > 0 && bbox_h_um > 0))
    throw DomainError("export_layout: bounding box must be positive");
  LayoutDocument doc;
  doc.bbox_w_um = bbox_w_um;
  doc.bbox_h_um = bbox_h_um;

  std::vector<detail::Bounds> extents;
  for (std::size_t pi = 0; pi < placements.size(); ++pi) {
    const auto& pl = placements[pi];
    geometry::validate(pl.device);
    const double c = std::cos(detail::degrees_to_radians(pl.rotation_deg));
    const double s = std::sin(detail::degrees_to_radians(pl.rotation_deg));
    std::vector<LayoutDocument::Polygon> device_polys;
    for (const auto& local : detail::device_polygons(pl.device)) {
      LayoutDocument::Polygon poly;
      poly.layer = pl.layer;
      poly.points.reserve(local.size());
      for (const auto& p : local)
        poly.points.push_back(
            {pl.x_um + c * p[0] - s * p[1], pl.y_um + s * p[0] + c * p[1]});
      if (poly.points.size() < 3 || detail::polygon_area(poly.points) == 0.0)
        throw DomainError("export_layout: degenerate polygon from placement " +
                          std::to_string(pi));
      device_polys.push_back(std::move(poly));
    }
    const auto b = detail::bounds_of(device_polys);
    if (!device_polys.empty() &&
        (b.xlo < 0 || b.ylo < 0 || b.xhi > bbox_w_um || b.yhi > bbox_h_um))
      throw DomainError("export_layout: placement " + std::to_string(pi) +
                        " extends outside the bounding box");
    extents.push_back(b);
    for (auto& p : device_polys) doc.polygons.push_back(std::move(p));
  }

  for (std::size_t a = 0; a < extents.size(); ++a)
    for (std::size_t b = a + 1; b < extents.size(); ++b) {
      const bool disjoint = extents[a].xhi < extents[b].xlo || extents[b].xhi < extents[a].xlo ||
                            extents[a].yhi < extents[b].ylo || extents[b].yhi < extents[a].ylo;
      if (!disjoint)
        doc.warnings.push_back("device extents of placements " + std::to_string(a) + " and " +
                               std::to_string(b) + " overlap");
    }
  return doc;
}

}  // namespace resforge::layout
