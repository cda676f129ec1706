#pragma once

// Analytic resonator models: add-drop ring coupled-mode theory, free spectral
// range, Q composition, the multilayer transfer matrix (exact oracle for the
// FDTD solver), 1D Bloch bands, mode volume, Purcell maps and cooperativity.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "resforge/common.hpp"
#include "resforge/geometry.hpp"
#include "resforge/spectrum.hpp"

namespace resforge::resonator {

// ---------------------------------------------------------------- ring CMT

struct RingModel {
  double t1 = 0.98;  // self-coupling amplitude, bus 1
  double t2 = 0.98;  // self-coupling amplitude, bus 2
  double round_trip_amplitude = 1.0;
  double circumference_um = 2.0 * pi * 5.0;
  std::function<double(double)> n_eff = [](double) { return 1.8; };
  double n_g = 1.8;

  void validate() const {
    if (t1 < 0 || t1 > 1 || t2 < 0 || t2 > 1)
      throw DomainError("RingModel: self-coupling amplitudes must be in [0, 1]");
    if (!(round_trip_amplitude > 0) || round_trip_amplitude > 1)
      throw DomainError("RingModel: round-trip amplitude must be in (0, 1]");
    if (!(circumference_um > 0)) throw DomainError("RingModel: circumference must be > 0");
  }
};

inline double ring_through_power(const RingModel& m, double lambda_um) {
  const double phi = 2.0 * pi * m.n_eff(lambda_um) * m.circumference_um / lambda_um;
  const double a = m.round_trip_amplitude;
  const double t1 = m.t1, t2 = m.t2;
  const double c = std::cos(phi);
  const double num = t2 * a * t2 * a - 2.0 * t1 * t2 * a * c + t1 * t1;
  const double den = 1.0 - 2.0 * t1 * t2 * a * c + t1 * t2 * a * t1 * t2 * a;
  return num / den;
}

inline double ring_drop_power(const RingModel& m, double lambda_um) {
  const double phi = 2.0 * pi * m.n_eff(lambda_um) * m.circumference_um / lambda_um;
  const double a = m.round_trip_amplitude;
  const double t1 = m.t1, t2 = m.t2;
  const double s = std::sin(phi / 2.0);
  const double num = (1.0 - t1 * t1) * (1.0 - t2 * t2) * a;
  const double den = (1.0 - t1 * t2 * a) * (1.0 - t1 * t2 * a) + 4.0 * t1 * t2 * a * s * s;
  return num / den;
}

struct RingSpectra {
  Spectrum through;
  Spectrum drop;
};

inline RingSpectra ring_spectra(const RingModel& model, double lambda_lo_um, double lambda_hi_um,
                                int n_samples = 2001) {
  model.validate();
  if (!(lambda_hi_um > lambda_lo_um) || n_samples < 2)
    throw DomainError("ring_spectra: invalid wavelength range");
  RingSpectra out;
  for (int i = 0; i < n_samples; ++i) {
    const double lam =
        lambda_lo_um + (lambda_hi_um - lambda_lo_um) * static_cast<double>(i) / (n_samples - 1);
    out.through.push_back(lam, ring_through_power(model, lam));
    out.drop.push_back(lam, ring_drop_power(model, lam));
  }
  return out;
}

// FSR = lambda^2 / (n_g * 2 pi R)
inline double fsr(double lambda_um, double n_g, double radius_um) {
  if (!(lambda_um > 0 && n_g > 0 && radius_um > 0))
    throw DomainError("fsr: all inputs must be > 0");
  return lambda_um * lambda_um / (n_g * 2.0 * pi * radius_um);
}

// 1/Q_loaded = sum of 1/Q_i; absent channels are passed as +infinity.
inline double q_compose(double q_intrinsic, double q_couple_1, double q_couple_2) {
  for (double q : {q_intrinsic, q_couple_1, q_couple_2})
    if (!(q > 0)) throw DomainError("q_compose: quality factors must be > 0");
  const double inv = 1.0 / q_intrinsic + 1.0 / q_couple_1 + 1.0 / q_couple_2;
  return 1.0 / inv;
}

// ------------------------------------------------- multilayer transfer matrix

struct LayerNd {
  double n;
  double thickness_um;
};

struct ReflectanceResult {
  double reflectance;
  double transmittance;
};

// Normal-incidence characteristic-matrix method for a lossless stack between
// semi-infinite incidence and substrate media. Exact; used as the FDTD
// oracle and for the planar membrane stacks.
inline ReflectanceResult transfer_matrix(double n_incident, const std::vector<LayerNd>& layers,
                                         double n_substrate, double lambda_um) {
  if (!(n_incident >= 1.0 && n_substrate >= 1.0))
    throw DomainError("transfer_matrix: bounding indices must be >= 1");
  if (!(lambda_um > 0)) throw DomainError("transfer_matrix: wavelength must be > 0");
  using cd = std::complex<double>;
  cd m11 = 1.0, m12 = 0.0, m21 = 0.0, m22 = 1.0;
  for (const auto& l : layers) {
    if (!(l.thickness_um > 0) || !(l.n >= 1.0))
      throw DomainError("transfer_matrix: layers need n >= 1 and thickness > 0");
    const double delta = 2.0 * pi * l.n * l.thickness_um / lambda_um;
    const cd c = std::cos(delta);
    const cd s = cd(0.0, 1.0) * std::sin(delta);
    const cd a11 = c, a12 = s / l.n, a21 = s * l.n, a22 = c;
    const cd b11 = m11 * a11 + m12 * a21;
    const cd b12 = m11 * a12 + m12 * a22;
    const cd b21 = m21 * a11 + m22 * a21;
    const cd b22 = m21 * a12 + m22 * a22;
    m11 = b11;
    m12 = b12;
    m21 = b21;
    m22 = b22;
  }
  const cd b = m11 + m12 * n_substrate;
  const cd c = m21 + m22 * n_substrate;
  const cd r = (n_incident * b - c) / (n_incident * b + c);
  const cd t = 2.0 * n_incident / (n_incident * b + c);
  ReflectanceResult res;
  res.reflectance = std::norm(r);
  res.transmittance = n_substrate / n_incident * std::norm(t);
  return res;
}

// ------------------------------------------------------------ 1D Bloch bands

struct BlochSegment {
  double n;
  double length_um;
};

struct BlochBand {
  std::vector<double> wavelength_um;
  std::vector<double> cos_kl;  // cos(K Lambda); |value| > 1 inside a gap
  std::vector<std::pair<double, double>> gaps;  // [lo, hi] wavelength intervals
};

inline double bloch_cos_kl(const BlochSegment& a, const BlochSegment& b, double lambda_um) {
  const double ka = 2.0 * pi * a.n / lambda_um;
  const double kb = 2.0 * pi * b.n / lambda_um;
  return std::cos(ka * a.length_um) * std::cos(kb * b.length_um) -
         0.5 * (ka / kb + kb / ka) * std::sin(ka * a.length_um) * std::sin(kb * b.length_um);
}

inline bool bloch_in_gap(const BlochSegment& a, const BlochSegment& b, double lambda_um) {
  return std::fabs(bloch_cos_kl(a, b, lambda_um)) > 1.0;
}

inline BlochBand bloch_band_1d(const BlochSegment& a, const BlochSegment& b, double lambda_lo_um,
                               double lambda_hi_um, int n_samples = 4001) {
  if (!(a.n >= 1 && b.n >= 1 && a.length_um > 0 && b.length_um > 0))
    throw DomainError("bloch_band_1d: segments need n >= 1 and length > 0");
  if (!(lambda_hi_um > lambda_lo_um) || n_samples < 2)
    throw DomainError("bloch_band_1d: invalid wavelength range");
  BlochBand band;
  band.wavelength_um.resize(n_samples);
  band.cos_kl.resize(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    const double lam =
        lambda_lo_um + (lambda_hi_um - lambda_lo_um) * static_cast<double>(i) / (n_samples - 1);
    band.wavelength_um[i] = lam;
    band.cos_kl[i] = bloch_cos_kl(a, b, lam);
  }
  // Gap edges where |cos(KL)| crosses 1, refined by bisection.
  auto excess = [&](double lam) { return std::fabs(bloch_cos_kl(a, b, lam)) - 1.0; };
  auto refine = [&](double lo, double hi) {
    while (hi - lo > 1e-10) {
      const double mid = 0.5 * (lo + hi);
      if (excess(lo) * excess(mid) <= 0.0)
        hi = mid;
      else
        lo = mid;
    }
    return 0.5 * (lo + hi);
  };
  std::optional<double> gap_start;
  if (excess(band.wavelength_um[0]) > 0) gap_start = band.wavelength_um[0];
  for (int i = 1; i < n_samples; ++i) {
    const double e0 = excess(band.wavelength_um[i - 1]);
    const double e1 = excess(band.wavelength_um[i]);
    if (e0 <= 0 && e1 > 0) gap_start = refine(band.wavelength_um[i - 1], band.wavelength_um[i]);
    if (e0 > 0 && e1 <= 0 && gap_start) {
      band.gaps.emplace_back(*gap_start, refine(band.wavelength_um[i - 1], band.wavelength_um[i]));
      gap_start.reset();
    }
  }
  if (gap_start) band.gaps.emplace_back(*gap_start, band.wavelength_um.back());
  return band;
}

// ------------------------------------------------------ mode volume, Purcell

struct ModeVolume {
  double v_um = 0.0;        // um^2 for 2D fields, um^3 for 3D
  double v_normalized = 0.0;  // in (lambda0/n_ref)^d units
  double n_ref = 1.0;         // index at the eps|E|^2 maximum
  std::size_t argmax = 0;
  WarningList warnings;
};

// V = integral(eps |E|^2) / max(eps |E|^2), midpoint rule. `e2` holds |E|^2
// per cell; `pml_margin` cells at every face are excluded as valid peak
// locations (a peak there means the snapshot is invalid).
inline ModeVolume mode_volume(const geometry::PermittivityGrid& grid,
                              const std::vector<double>& e2, double lambda0_um,
                              int pml_margin = 0) {
  grid.validate();
  if (e2.size() != grid.n_cells()) throw DomainError("mode_volume: field size mismatch");
  if (!(lambda0_um > 0)) throw DomainError("mode_volume: wavelength must be > 0");
  const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
  const int dim = grid.is2d() ? 2 : 3;

  double peak = -1.0;
  std::size_t arg = 0;
  double integral = 0.0;
  double boundary_peak = 0.0;
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const std::size_t c = grid.index(i, j, k);
        const double u = grid.eps[c] * e2[c];
        integral += u;
        if (u > peak) {
          peak = u;
          arg = c;
        }
        const bool on_boundary = i == 0 || i == nx - 1 || j == 0 || j == ny - 1 ||
                                 (dim == 3 && (k == 0 || k == nz - 1));
        if (on_boundary) boundary_peak = std::max(boundary_peak, u);
      }
  if (!(peak > 0)) throw DomainError("mode_volume: field is identically zero");

  // Reject snapshots whose maximum sits inside the absorbing boundary.
  if (pml_margin > 0) {
    const int i = static_cast<int>(arg % nx);
    const int j = static_cast<int>((arg / nx) % ny);
    const int k = static_cast<int>(arg / (static_cast<std::size_t>(nx) * ny));
    const bool in_pml = i < pml_margin || i >= nx - pml_margin || j < pml_margin ||
                        j >= ny - pml_margin ||
                        (dim == 3 && (k < pml_margin || k >= nz - pml_margin));
    if (in_pml) throw DomainError("mode_volume: field maximum lies in the PML region");
  }

  ModeVolume mv;
  const double cell = dim == 2 ? grid.dx * grid.dx : grid.dx * grid.dx * grid.dx;
  mv.v_um = integral * cell / peak;
  mv.n_ref = std::sqrt(grid.eps[arg]);
  mv.argmax = arg;
  const double unit = std::pow(lambda0_um / mv.n_ref, dim);
  mv.v_normalized = mv.v_um / unit;
  if (boundary_peak > 0.01 * peak)
    mv.warnings.push_back("field not decayed below 1% of its maximum at the domain boundary; "
                          "mode volume may be truncated");
  return mv;
}

struct PurcellMap {
  std::vector<double> f;           // per cell, local-index convention
  std::vector<double> f_fieldref;  // per cell, n fixed at the field maximum
  double f_max = 0.0;              // max over the local-index array
  double f_at_field_max = 0.0;     // (3/4pi^2)(lambda/n_ref)^3 Q / V
  std::map<std::string, double> f_in_layer;  // region -> max local-index F
  ModeVolume volume;
};

// F(r) = (3/4pi^2) (lambda0/n(r))^3 Q eps(r)|E(r)|^2 / integral(eps|E|^2 dV).
// Two normalizations are reported: the per-position local-index form and the
// fixed-index form referenced to the field maximum (proportional to
// eps|E|^2). Requires a 3D grid.
inline PurcellMap purcell_map(const geometry::PermittivityGrid& grid,
                              const std::vector<double>& e2, double q, double lambda0_um,
                              int pml_margin = 0,
                              const std::vector<std::uint8_t>* region = nullptr,
                              const std::vector<std::string>* region_names = nullptr) {
  if (grid.is2d())
    throw DomainError("purcell_map: needs a 3D field snapshot (compose 2D x vertical first)");
  if (!(q > 0)) throw DomainError("purcell_map: Q must be > 0");
  PurcellMap map;
  map.volume = mode_volume(grid, e2, lambda0_um, pml_margin);

  const double cell = grid.dx * grid.dx * grid.dx;
  double integral = 0.0;
  for (std::size_t c = 0; c < e2.size(); ++c) integral += grid.eps[c] * e2[c];
  integral *= cell;

  const double pref = 3.0 / (4.0 * pi * pi) * q / integral;
  const double n_ref3 = std::pow(lambda0_um / map.volume.n_ref, 3);
  map.f.resize(e2.size());
  map.f_fieldref.resize(e2.size());
  for (std::size_t c = 0; c < e2.size(); ++c) {
    const double u = grid.eps[c] * e2[c];
    const double n_local = std::sqrt(grid.eps[c]);
    map.f[c] = pref * std::pow(lambda0_um / n_local, 3) * u;
    map.f_fieldref[c] = pref * n_ref3 * u;
    map.f_max = std::max(map.f_max, map.f[c]);
    if (region && region_names) {
      const auto& name = (*region_names)[(*region)[c]];
      auto& slot = map.f_in_layer[name];
      slot = std::max(slot, map.f[c]);
    }
  }
  map.f_at_field_max = 3.0 / (4.0 * pi * pi) * q / map.volume.v_normalized;
  return map;
}

// ------------------------------------------------------------- cooperativity

// C = F * xi_DW * eta / (gamma_total/gamma_radiative). All parameters are
// user supplied; defaults follow typical SiV literature values.
inline double cooperativity(double purcell_f, double debye_waller = 0.7,
                            double quantum_efficiency = 0.1, double dephasing_ratio = 1.0) {
  if (purcell_f < 0) throw DomainError("cooperativity: F must be >= 0");
  if (!(debye_waller > 0 && debye_waller <= 1))
    throw DomainError("cooperativity: Debye-Waller factor must be in (0, 1]");
  if (!(quantum_efficiency > 0 && quantum_efficiency <= 1))
    throw DomainError("cooperativity: quantum efficiency must be in (0, 1]");
  if (!(dephasing_ratio >= 1)) throw DomainError("cooperativity: dephasing ratio must be >= 1");
  return purcell_f * debye_waller * quantum_efficiency / dephasing_ratio;
}

// ------------------------------------------------------- coupling calibration

struct CouplingFit {
  double kappa0 = 0.0;
  double decay_length_um = 0.0;  // g0 in kappa(gap) = kappa0 exp(-gap/g0)
  double r_squared = 0.0;
  double kappa(double gap_um) const { return kappa0 * std::exp(-gap_um / decay_length_um); }
};

// Least-squares fit of ln kappa = ln kappa0 - gap/g0 from (gap, cross-coupled
// power) samples; kappa = sqrt(power). R^2 < 0.9 rejects non-exponential or
// non-monotonic sweeps.
inline CouplingFit calibrate_coupling(const std::vector<std::pair<double, double>>& gap_power) {
  if (gap_power.size() < 3) throw DomainError("calibrate_coupling: need at least 3 gap samples");
  std::vector<double> x, y;
  for (const auto& [gap, power] : gap_power) {
    if (!(power > 0) || power > 1)
      throw DomainError("calibrate_coupling: coupled power must be in (0, 1]");
    x.push_back(gap);
    y.push_back(std::log(std::sqrt(power)));
  }
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double det = n * sxx - sx * sx;
  if (std::fabs(det) < 1e-300) throw DomainError("calibrate_coupling: degenerate gap samples");
  const double slope = (n * sxy - sx * sy) / det;
  const double inter = (sy - slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / n;
  for (std::size_t i = 0; i < n; ++i) {
    const double fit = inter + slope * x[i];
    ss_res += (y[i] - fit) * (y[i] - fit);
    ss_tot += (y[i] - mean_y) * (y[i] - mean_y);
  }
  CouplingFit out;
  out.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  if (!(slope < 0) || out.r_squared < 0.9)
    throw DomainError("calibrate_coupling: sweep is not a decaying exponential (R^2 < 0.9)");
  out.kappa0 = std::exp(inter);
  out.decay_length_um = -1.0 / slope;
  return out;
}

}  // namespace resforge::resonator
