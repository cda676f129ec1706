#pragma once

// Device parameterizations, layer stacks and rasterization onto uniform
// permittivity grids (the input currency of the FDTD and mode solvers).
//
// Coordinates: top view uses (x, y) in the device plane; cross sections use
// (x = transverse horizontal, y = vertical); 3D uses (x, y, z = vertical).
// Devices are centered at the origin of their plane. The bottom stack layer
// extends to the lower grid edge (semi-infinite substrate convention).

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "resforge/common.hpp"
#include "resforge/materials.hpp"

namespace resforge::geometry {

struct LayerStack {
  struct Layer {
    Material material;
    double thickness_um = 0.0;
  };
  std::vector<Layer> layers;  // bottom -> top
  Material ambient{"air", 1.0, {}};

  void validate() const {
    for (const auto& l : layers) {
      l.material.validate();
      if (!(l.thickness_um > 0.0))
        throw DomainError("layer '" + l.material.name + "': thickness must be > 0");
    }
    ambient.validate();
  }

  double total_thickness() const {
    double t = 0.0;
    for (const auto& l : layers) t += l.thickness_um;
    return t;
  }
};

// Add-drop ring: circular loop with one straight bus on each side.
struct RingSpec {
  double radius_um = 5.0;
  double waveguide_width_um = 0.3;
  double waveguide_height_um = 0.25;
  double gap_1_um = 0.375;  // edge gap, bottom bus
  double gap_2_um = 0.375;  // edge gap, top bus
  double bus_width_um = 0.3;

  void validate() const {
    if (!(radius_um > 0 && waveguide_width_um > 0 && waveguide_height_um > 0 && bus_width_um > 0))
      throw DomainError("RingSpec: all lengths must be > 0");
    if (gap_1_um < 0 || gap_2_um < 0) throw DomainError("RingSpec: gaps must be >= 0");
  }
};

// 1D photonic-crystal cavity: central waveguide with transverse fins whose
// pitch tapers down toward the cavity center.
struct PhcCavitySpec {
  double waveguide_width_um = 0.15;
  double waveguide_height_um = 0.25;
  double fin_width_um = 0.10;   // along propagation
  double fin_length_um = 0.45;  // transverse extent
  double mirror_pitch_um = 0.28;
  int n_mirror_fins = 25;  // per side
  double taper_fraction = 0.10;
  int n_taper_fins = 5;  // per side

  void validate() const {
    if (!(waveguide_width_um > 0 && waveguide_height_um > 0 && fin_width_um > 0 && fin_length_um > 0))
      throw DomainError("PhcCavitySpec: all lengths must be > 0");
    if (!(taper_fraction > 0 && taper_fraction < 1))
      throw DomainError("PhcCavitySpec: taper_fraction must be in (0, 1)");
    if (n_mirror_fins < 0) throw DomainError("PhcCavitySpec: n_mirror_fins must be >= 0");
    if (n_taper_fins < 1) throw DomainError("PhcCavitySpec: n_taper_fins must be >= 1");
    if (!(mirror_pitch_um > fin_width_um))
      throw DomainError("PhcCavitySpec: mirror_pitch must exceed fin_width");
  }
};

struct GratingSpec {
  double period_um = 0.48;
  double duty_cycle = 0.5;
  int n_teeth = 20;
  double width_um = 4.0;
  double height_um = 0.25;

  void validate() const {
    if (!(duty_cycle > 0 && duty_cycle < 1))
      throw DomainError("GratingSpec: duty_cycle must be in (0, 1)");
    if (n_teeth < 1) throw DomainError("GratingSpec: n_teeth must be >= 1");
    if (!(period_um > 0 && width_um > 0 && height_um > 0))
      throw DomainError("GratingSpec: all lengths must be > 0");
  }
};

struct EmptyDevice {
  void validate() const {}
};

using DeviceSpec = std::variant<EmptyDevice, RingSpec, PhcCavitySpec, GratingSpec>;

inline void validate(const DeviceSpec& spec) {
  std::visit([](const auto& s) { s.validate(); }, spec);
}

// Per-fin local pitch sequence, ordered left to right across the cavity and
// palindromic about the center. Reading one side inward: n_mirror_fins
// entries at mirror_pitch, then n_taper_fins entries decreasing linearly to
// (1 - taper_fraction) * mirror_pitch. Placement rule: the innermost pitch is
// the center-to-center spacing across the cavity middle; the spacing between
// consecutive fins equals the local pitch of the outer one of the pair.
inline std::vector<double> generate_taper(const PhcCavitySpec& spec) {
  spec.validate();
  const double p = spec.mirror_pitch_um;
  const double f = spec.taper_fraction;
  const int nm = spec.n_mirror_fins;
  const int nt = spec.n_taper_fins;

  std::vector<double> side;  // outer -> inner
  side.reserve(nm + nt);
  for (int i = 0; i < nm; ++i) side.push_back(p);
  for (int k = 1; k <= nt; ++k) side.push_back(p * (1.0 - f * static_cast<double>(k) / nt));

  std::vector<double> out;
  out.reserve(2 * side.size());
  out.insert(out.end(), side.begin(), side.end());
  out.insert(out.end(), side.rbegin(), side.rend());
  return out;
}

// Fin center x positions (ascending) for a PhC cavity centered at x = 0.
inline std::vector<double> phc_fin_positions(const PhcCavitySpec& spec) {
  const auto pitches = generate_taper(spec);
  const int per_side = static_cast<int>(pitches.size()) / 2;
  // inner -> outer on the right-hand side
  std::vector<double> right(per_side);
  double x = pitches[per_side] / 2.0;  // innermost pitch spans the center
  right[0] = x;
  for (int j = 1; j < per_side; ++j) {
    x += pitches[per_side + j];
    right[j] = x;
  }
  std::vector<double> all;
  all.reserve(2 * per_side);
  for (int j = per_side - 1; j >= 0; --j) all.push_back(-right[j]);
  for (int j = 0; j < per_side; ++j) all.push_back(right[j]);
  return all;
}

struct PermittivityGrid {
  double dx = 0.0;                        // uniform spacing, um
  std::array<int, 3> dims{0, 0, 1};       // nz == 1 for 2D grids
  std::array<double, 3> origin{0, 0, 0};  // physical coordinate of grid corner
  std::vector<double> eps;                // relative permittivity, x fastest

  bool is2d() const { return dims[2] == 1; }
  std::size_t n_cells() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int i, int j, int k = 0) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(j) +
                                                static_cast<std::size_t>(dims[1]) * k);
  }
  double& at(int i, int j, int k = 0) { return eps[index(i, j, k)]; }
  double at(int i, int j, int k = 0) const { return eps[index(i, j, k)]; }

  double cell_center(int axis, int idx) const { return origin[axis] + (idx + 0.5) * dx; }

  double max_eps() const {
    double m = 1.0;
    for (double e : eps) m = std::max(m, e);
    return m;
  }

  void validate() const {
    if (!(dx > 0)) throw DomainError("PermittivityGrid: dx must be > 0");
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
      throw DomainError("PermittivityGrid: dims must be >= 1");
    if (eps.size() != n_cells()) throw DomainError("PermittivityGrid: eps size mismatch");
    for (double e : eps)
      if (!(e >= 1.0)) throw DomainError("PermittivityGrid: relative permittivity must be >= 1");
  }
};

// Rasterized scene: the permittivity grid plus a per-cell region label so
// downstream analyses (confinement fractions, per-layer Purcell maxima) can
// attribute cells to materials.
struct RasterScene {
  PermittivityGrid grid;
  std::vector<std::uint8_t> region;      // per cell, index into region_names
  std::vector<std::string> region_names; // [ambient, stack layers..., device]
  WarningList warnings;

  std::uint8_t device_region_id() const {
    return static_cast<std::uint8_t>(region_names.size() - 1);
  }
};

enum class RasterView {
  TopView2D,       // device footprint at mid-height; ambient elsewhere
  CrossSection2D,  // transverse cut: stack below, device rectangle on top
  Volume3D,
};

struct RasterOptions {
  Material device_material{"TiO2", 2.35, {}};
  double wavelength_um = 0.737;      // evaluation wavelength for indices
  double min_wavelength_um = 0.0;    // if > 0, warn when dx is too coarse
  std::size_t cell_budget = 50'000'000;
  bool cross_section_through_fin = false;  // PhC: cut through a fin instead of the bare waveguide
};

namespace detail {

struct Extent2 {
  double xlo, xhi, ylo, yhi;
};

// Device footprint bounding box in the top-view plane (device at origin).
inline Extent2 footprint_bbox(const DeviceSpec& spec) {
  return std::visit(
      [](const auto& s) -> Extent2 {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EmptyDevice>) {
          return {0.0, 0.0, 0.0, 0.0};
        } else if constexpr (std::is_same_v<T, RingSpec>) {
          const double r_out = s.radius_um + s.waveguide_width_um / 2.0;
          const double ylo = -(r_out + s.gap_1_um + s.bus_width_um);
          const double yhi = r_out + s.gap_2_um + s.bus_width_um;
          return {-r_out, r_out, ylo, yhi};
        } else if constexpr (std::is_same_v<T, PhcCavitySpec>) {
          const auto pos = phc_fin_positions(s);
          const double half_span = pos.empty() ? s.mirror_pitch_um
                                               : pos.back() + s.fin_width_um / 2.0;
          const double half_y = std::max(s.fin_length_um, s.waveguide_width_um) / 2.0;
          return {-half_span, half_span, -half_y, half_y};
        } else {
          const double half_x = s.n_teeth * s.period_um / 2.0;
          return {-half_x, half_x, -s.width_um / 2.0, s.width_um / 2.0};
        }
      },
      spec);
}

// Predicate: is (x, y) inside the device footprint? Bus waveguides and the
// PhC through-waveguide run across the whole grid, so the grid x extent is
// part of the geometry.
inline std::function<bool(double, double)> footprint_predicate(const DeviceSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::function<bool(double, double)> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EmptyDevice>) {
          return [](double, double) { return false; };
        } else if constexpr (std::is_same_v<T, RingSpec>) {
          const double r_in = s.radius_um - s.waveguide_width_um / 2.0;
          const double r_out = s.radius_um + s.waveguide_width_um / 2.0;
          const double bus1_hi = -(r_out + s.gap_1_um);
          const double bus1_lo = bus1_hi - s.bus_width_um;
          const double bus2_lo = r_out + s.gap_2_um;
          const double bus2_hi = bus2_lo + s.bus_width_um;
          return [=](double x, double y) {
            const double r2 = x * x + y * y;
            if (r2 >= r_in * r_in && r2 <= r_out * r_out) return true;
            if (y >= bus1_lo && y <= bus1_hi) return true;
            if (y >= bus2_lo && y <= bus2_hi) return true;
            return false;
          };
        } else if constexpr (std::is_same_v<T, PhcCavitySpec>) {
          const auto pos = phc_fin_positions(s);
          const double half_wg = s.waveguide_width_um / 2.0;
          const double half_fin_y = s.fin_length_um / 2.0;
          const double half_fin_x = s.fin_width_um / 2.0;
          return [=](double x, double y) {
            if (std::fabs(y) <= half_wg) return true;  // through waveguide
            if (std::fabs(y) <= half_fin_y) {
              for (double xc : pos)
                if (std::fabs(x - xc) <= half_fin_x) return true;
            }
            return false;
          };
        } else {
          const double half_x = s.n_teeth * s.period_um / 2.0;
          const double tooth = s.duty_cycle * s.period_um;
          const double half_y = s.width_um / 2.0;
          const GratingSpec g = s;
          return [=](double x, double y) {
            if (std::fabs(y) > half_y) return false;
            const double u = x + half_x;
            if (u < 0 || u > g.n_teeth * g.period_um) return false;
            const double frac = u - std::floor(u / g.period_um) * g.period_um;
            return frac <= tooth;
          };
        }
      },
      spec);
}

inline double device_height(const DeviceSpec& spec) {
  return std::visit(
      [](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EmptyDevice>)
          return 0.0;
        else if constexpr (std::is_same_v<T, GratingSpec>)
          return s.height_um;
        else
          return s.waveguide_height_um;
      },
      spec);
}

// Cross-section half-width of the guiding core.
inline double cross_section_half_width(const DeviceSpec& spec, bool through_fin) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EmptyDevice>)
          return 0.0;
        else if constexpr (std::is_same_v<T, RingSpec>)
          return s.waveguide_width_um / 2.0;
        else if constexpr (std::is_same_v<T, PhcCavitySpec>)
          return (through_fin ? s.fin_length_um : s.waveguide_width_um) / 2.0;
        else
          return s.width_um / 2.0;
      },
      spec);
}

inline int cells_for(double span, double dx) {
  return std::max(1, static_cast<int>(std::ceil(span / dx - 1e-9)));
}

}  // namespace detail

// Rasterize a device + stack onto a uniform grid. Staircase assignment: each
// cell takes the permittivity of the material containing its center. The
// grid covers the device bounding box plus `padding_um` on every side.
inline RasterScene rasterize(const DeviceSpec& spec, const LayerStack& stack, double dx,
                             double padding_um, RasterView view,
                             const RasterOptions& opts = {}) {
  validate(spec);
  stack.validate();
  if (!(dx > 0)) throw DomainError("rasterize: dx must be > 0");
  if (padding_um < 0) throw DomainError("rasterize: padding must be >= 0");

  RasterScene scene;
  auto& g = scene.grid;
  g.dx = dx;

  scene.region_names.push_back(stack.ambient.name);
  for (const auto& l : stack.layers) scene.region_names.push_back(l.material.name);
  scene.region_names.push_back("device");
  const std::uint8_t ambient_id = 0;
  const std::uint8_t device_id = scene.device_region_id();

  const double lam = opts.wavelength_um;
  const double n_ambient = stack.ambient.index_at(lam);
  std::vector<double> layer_eps;
  for (const auto& l : stack.layers) {
    const double n = l.material.index_at(lam);
    layer_eps.push_back(n * n);
  }
  const double n_dev = opts.device_material.index_at(lam);
  const double eps_dev = n_dev * n_dev;
  const double eps_ambient = n_ambient * n_ambient;

  const auto bbox = detail::footprint_bbox(spec);
  const double h_dev = detail::device_height(spec);
  const double t_stack = stack.total_thickness();

  // Vertical material lookup for cross sections and 3D: y (or z) measured
  // from the stack bottom; below it the bottom layer continues.
  auto vertical_region = [&](double v) -> std::uint8_t {
    if (stack.layers.empty()) return ambient_id;
    if (v < 0.0) return 1;  // bottom layer extension
    double acc = 0.0;
    for (std::size_t li = 0; li < stack.layers.size(); ++li) {
      acc += stack.layers[li].thickness_um;
      if (v < acc) return static_cast<std::uint8_t>(1 + li);
    }
    return ambient_id;
  };
  auto region_eps = [&](std::uint8_t id) -> double {
    if (id == ambient_id) return eps_ambient;
    if (id == device_id) return eps_dev;
    return layer_eps[id - 1];
  };

  const bool is_empty = std::holds_alternative<EmptyDevice>(spec);

  if (view == RasterView::TopView2D) {
    const double xlo = bbox.xlo - padding_um, xhi = bbox.xhi + padding_um;
    const double ylo = bbox.ylo - padding_um, yhi = bbox.yhi + padding_um;
    g.dims = {detail::cells_for(xhi - xlo, dx), detail::cells_for(yhi - ylo, dx), 1};
    g.origin = {xlo, ylo, 0.0};
    if (g.n_cells() > opts.cell_budget)
      throw DomainError("rasterize: grid of " + std::to_string(g.n_cells()) +
                        " cells exceeds the cell budget");
    g.eps.assign(g.n_cells(), eps_ambient);
    scene.region.assign(g.n_cells(), ambient_id);
    auto inside = detail::footprint_predicate(spec);
    for (int j = 0; j < g.dims[1]; ++j) {
      const double y = g.cell_center(1, j);
      for (int i = 0; i < g.dims[0]; ++i) {
        const double x = g.cell_center(0, i);
        if (inside(x, y)) {
          const std::size_t c = g.index(i, j);
          g.eps[c] = eps_dev;
          scene.region[c] = device_id;
        }
      }
    }
  } else if (view == RasterView::CrossSection2D) {
    const double half_w = detail::cross_section_half_width(spec, opts.cross_section_through_fin);
    const double xlo = -half_w - padding_um, xhi = half_w + padding_um;
    const double ylo = -padding_um;  // below stack bottom (bottom-layer fill)
    const double yhi = t_stack + h_dev + padding_um;
    g.dims = {detail::cells_for(xhi - xlo, dx), detail::cells_for(yhi - ylo, dx), 1};
    g.origin = {xlo, ylo, 0.0};
    if (g.n_cells() > opts.cell_budget)
      throw DomainError("rasterize: grid exceeds the cell budget");
    g.eps.assign(g.n_cells(), eps_ambient);
    scene.region.assign(g.n_cells(), ambient_id);
    for (int j = 0; j < g.dims[1]; ++j) {
      const double v = g.cell_center(1, j);
      for (int i = 0; i < g.dims[0]; ++i) {
        const double x = g.cell_center(0, i);
        std::uint8_t id;
        if (!is_empty && v >= t_stack && v <= t_stack + h_dev && std::fabs(x) <= half_w)
          id = device_id;
        else if (v <= t_stack)
          id = vertical_region(v);
        else
          id = ambient_id;
        const std::size_t c = g.index(i, j);
        g.eps[c] = region_eps(id);
        scene.region[c] = id;
      }
    }
  } else {  // Volume3D
    const double xlo = bbox.xlo - padding_um, xhi = bbox.xhi + padding_um;
    const double ylo = bbox.ylo - padding_um, yhi = bbox.yhi + padding_um;
    const double zlo = -padding_um, zhi = t_stack + h_dev + padding_um;
    g.dims = {detail::cells_for(xhi - xlo, dx), detail::cells_for(yhi - ylo, dx),
              detail::cells_for(zhi - zlo, dx)};
    g.origin = {xlo, ylo, zlo};
    if (g.n_cells() > opts.cell_budget)
      throw DomainError("rasterize: grid of " + std::to_string(g.n_cells()) +
                        " cells exceeds the cell budget");
    g.eps.assign(g.n_cells(), eps_ambient);
    scene.region.assign(g.n_cells(), ambient_id);
    auto inside = detail::footprint_predicate(spec);
    for (int k = 0; k < g.dims[2]; ++k) {
      const double z = g.cell_center(2, k);
      const bool in_device_band = !is_empty && z >= t_stack && z <= t_stack + h_dev;
      const std::uint8_t below_id = z <= t_stack ? vertical_region(z) : ambient_id;
      for (int j = 0; j < g.dims[1]; ++j) {
        const double y = g.cell_center(1, j);
        for (int i = 0; i < g.dims[0]; ++i) {
          const double x = g.cell_center(0, i);
          std::uint8_t id = below_id;
          if (in_device_band && inside(x, y)) id = device_id;
          const std::size_t c = g.index(i, j, k);
          g.eps[c] = region_eps(id);
          scene.region[c] = id;
        }
      }
    }
  }

  if (opts.min_wavelength_um > 0.0) {
    const double n_max = std::sqrt(g.max_eps());
    const double dx_limit = opts.min_wavelength_um / (20.0 * n_max);
    if (dx > dx_limit)
      scene.warnings.push_back("dx = " + format_double(dx) + " um exceeds lambda_min/(20*n_max) = " +
                               format_double(dx_limit) + " um; expect under-resolved simulations");
  }
  return scene;
}

}  // namespace resforge::geometry
