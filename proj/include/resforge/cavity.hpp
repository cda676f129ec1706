#pragma once

// Desk-scale photonic-crystal cavity pipeline: 2D effective-index collapse of
// the vertical stack, FDTD ringdown, resonance extraction (padded-FFT peak +
// Lorentzian fit cross-checked against the exponential ringdown fit), and the
// composed membrane Purcell summary.
//
// Conventions: top-view simulations run the Ez polarization (E vertical), so
// the vertical collapse solves the TM-form slab profile of the stack and the
// lateral segment indices for the Bloch model use the TE slab form (Ez is
// tangential to all in-plane walls).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "resforge/analysis.hpp"
#include "resforge/common.hpp"
#include "resforge/fdtd.hpp"
#include "resforge/fft.hpp"
#include "resforge/geometry.hpp"
#include "resforge/modes.hpp"
#include "resforge/resonator.hpp"
#include "resforge/spectrum.hpp"

namespace resforge::resonator {

class NoResonanceError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Vertical collapse of the device-on-stack column to a single effective
// index, with the vertical mode profile retained for layer attribution.
struct EimCollapse {
  double n_slab = 0.0;        // guided vertical effective index
  double n_background = 1.0;  // collapse index away from the device
  double lambda_um = 0.0;
  geometry::RasterScene vertical_scene;  // 1-cell-wide column, y = vertical
  modes::ModeSolution vertical_mode;
};

inline EimCollapse vertical_collapse(const geometry::DeviceSpec& device,
                                     const geometry::LayerStack& stack, double lambda_um,
                                     const geometry::RasterOptions& ropts = {},
                                     double dz = 0.005, double padding_um = 1.0) {
  geometry::RasterOptions opts = ropts;
  opts.wavelength_um = lambda_um;
  auto scene = geometry::rasterize(device, stack, dz, padding_um,
                                   geometry::RasterView::CrossSection2D, opts);
  // Reduce to a single column through the device center.
  const auto& g = scene.grid;
  const int i0 = g.dims[0] / 2;
  geometry::RasterScene column;
  column.grid.dx = dz;
  column.grid.dims = {1, g.dims[1], 1};
  column.grid.origin = {0.0, g.origin[1], 0.0};
  column.grid.eps.resize(g.dims[1]);
  column.region.resize(g.dims[1]);
  column.region_names = scene.region_names;
  for (int j = 0; j < g.dims[1]; ++j) {
    column.grid.eps[j] = g.at(i0, j);
    column.region[j] = scene.region[g.index(i0, j)];
  }

  EimCollapse out;
  out.lambda_um = lambda_um;
  out.vertical_scene = column;
  auto sols = modes::cross_section_modes(column, lambda_um, 1, modes::ModePolarization::TMLike);
  out.vertical_mode = std::move(sols[0]);
  out.n_slab = out.vertical_mode.n_eff;

  // Background: the bare stack guides nothing at the collapse level; use the
  // larger of the ambient and the top stack layer index.
  double n_bg = stack.ambient.index_at(lambda_um);
  if (!stack.layers.empty())
    n_bg = std::max(n_bg, stack.layers.back().material.index_at(lambda_um));
  out.n_background = n_bg;
  return out;
}

// 2D effective-index scene of a PhC cavity plus the matching 1D Bloch
// segments for the mirror unit cell.
struct PhcEimScene {
  geometry::RasterScene scene;  // top view, collapsed permittivities
  EimCollapse collapse;
  BlochSegment fin_segment;   // effective index and length of the fin slice
  BlochSegment gap_segment;   // ... and of the bare-waveguide slice
  geometry::PhcCavitySpec spec;
};

inline PhcEimScene build_phc_eim_scene(const geometry::PhcCavitySpec& spec,
                                       const geometry::LayerStack& stack, double lambda_um,
                                       double dx, double padding_um,
                                       const geometry::RasterOptions& ropts = {}) {
  spec.validate();
  PhcEimScene out;
  out.spec = spec;
  out.collapse = vertical_collapse(geometry::DeviceSpec{spec}, stack, lambda_um, ropts);

  geometry::RasterOptions opts = ropts;
  opts.wavelength_um = lambda_um;
  out.scene = geometry::rasterize(geometry::DeviceSpec{spec}, stack, dx, padding_um,
                                  geometry::RasterView::TopView2D, opts);
  const double eps_dev = out.collapse.n_slab * out.collapse.n_slab;
  const double eps_bg = out.collapse.n_background * out.collapse.n_background;
  for (std::size_t c = 0; c < out.scene.grid.eps.size(); ++c)
    out.scene.grid.eps[c] =
        out.scene.region[c] == out.scene.device_region_id() ? eps_dev : eps_bg;

  // Lateral slab reductions for the Bloch mirror model (TE form: Ez is the
  // continuous in-plane-tangential component).
  const double n_fin = modes::slab_dispersion(out.collapse.n_slab, out.collapse.n_background,
                                              out.collapse.n_background, spec.fin_length_um,
                                              lambda_um, modes::SlabPolarization::TE, 0);
  const double n_gap = modes::slab_dispersion(out.collapse.n_slab, out.collapse.n_background,
                                              out.collapse.n_background, spec.waveguide_width_um,
                                              lambda_um, modes::SlabPolarization::TE, 0);
  out.fin_segment = {n_fin, spec.fin_width_um};
  out.gap_segment = {n_gap, spec.mirror_pitch_um - spec.fin_width_um};
  return out;
}

// Mirror band gap of the cavity's Bloch model around a target wavelength.
// Returns the gap interval containing (or nearest to) the target.
inline std::pair<double, double> mirror_gap(const PhcEimScene& scene, double lambda_lo,
                                            double lambda_hi) {
  const auto band = bloch_band_1d(scene.fin_segment, scene.gap_segment, lambda_lo, lambda_hi);
  if (band.gaps.empty())
    throw DomainError("mirror_gap: the Bloch model shows no band gap in the range");
  // widest gap wins
  auto best = band.gaps.front();
  for (const auto& g : band.gaps)
    if (g.second - g.first > best.second - best.first) best = g;
  return best;
}

struct CavitySimSettings {
  double dx = 0.02;
  double padding_um = 1.2;   // beyond the device bbox; must clear the PML
  int pml_thickness = 12;
  double courant = 0.5;
  long max_steps = 3'000'000;
  double decay_threshold = 1e-2;  // envelope fraction of the post-source peak
  int workers = 0;
  bool want_field_snapshot = false;
  int snapshot_candidates = 5;  // DFT wavelengths spread across the band
};

struct CavityResult {
  double lambda0_um = 0.0;
  double q = 0.0;           // spectral (Lorentzian) estimate
  double q_ringdown = 0.0;  // from the exponential field decay
  bool q_consistent = false;  // the two estimates agree within 20%
  analysis::ResonanceFit spectral_fit;
  double ringdown_tau = 0.0;
  double ringdown_r2 = 0.0;
  Spectrum spectrum;  // padded-FFT power spectrum over the search band
  // optional DFT field snapshot nearest the resonance
  double snapshot_wavelength_um = 0.0;
  std::vector<double> e2;  // |Ez|^2 over the scene grid
  long steps = 0;
  double runtime_seconds = 0.0;
  WarningList warnings;
};

namespace detail {

// Log-linear least squares on the envelope maxima of a ringdown series.
struct RingdownFit {
  double tau = 0.0;
  double r_squared = 0.0;
};

inline RingdownFit fit_ringdown_envelope(const std::vector<double>& series, double dt) {
  // local maxima of |s|
  std::vector<std::pair<double, double>> peaks;  // (t, log|s|)
  for (std::size_t i = 1; i + 1 < series.size(); ++i) {
    const double a = std::fabs(series[i]);
    if (a > std::fabs(series[i - 1]) && a >= std::fabs(series[i + 1]) && a > 0.0)
      peaks.emplace_back(static_cast<double>(i) * dt, std::log(a));
  }
  if (peaks.size() < 8) throw DomainError("ringdown fit: too few envelope peaks");
  // Drop the leading decile (source transient) and the trailing noise floor.
  const std::size_t skip = peaks.size() / 10;
  const double floor_log = peaks.front().second + std::log(1e-5);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  std::vector<std::pair<double, double>> used;
  for (std::size_t i = skip; i < peaks.size(); ++i) {
    if (peaks[i].second < floor_log) break;
    used.push_back(peaks[i]);
    sx += peaks[i].first;
    sy += peaks[i].second;
    sxx += peaks[i].first * peaks[i].first;
    sxy += peaks[i].first * peaks[i].second;
    ++n;
  }
  if (n < 8) throw DomainError("ringdown fit: too few usable envelope peaks");
  const double det = static_cast<double>(n) * sxx - sx * sx;
  const double slope = (static_cast<double>(n) * sxy - sx * sy) / det;
  const double inter = (sy - slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / n;
  for (const auto& [t, ly] : used) {
    ss_res += std::pow(ly - (inter + slope * t), 2);
    ss_tot += std::pow(ly - mean_y, 2);
  }
  RingdownFit fit;
  if (!(slope < 0)) throw DomainError("ringdown fit: envelope is not decaying");
  fit.tau = -1.0 / slope;
  fit.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
  return fit;
}

}  // namespace detail

// Ringdown-driven resonance extraction on a 2D effective-index scene.
inline CavityResult cavity_resonance(const PhcEimScene& eim, double band_lo_um,
                                     double band_hi_um, const CavitySimSettings& settings = {}) {
  if (!(band_hi_um > band_lo_um)) throw DomainError("cavity_resonance: invalid search band");
  const auto t_start = std::chrono::steady_clock::now();

  fdtd::SimulationDomain domain;
  domain.grid = eim.scene.grid;
  domain.polarization = fdtd::Polarization2D::TM;
  domain.courant = settings.courant;
  domain.pml.thickness = settings.pml_thickness;

  fdtd::Simulation sim(domain, settings.workers);

  const double lam_c = 0.5 * (band_lo_um + band_hi_um);
  const auto& g = eim.scene.grid;
  auto cell_at = [&](double x, double y) {
    return std::array<int, 3>{
        std::clamp(static_cast<int>((x - g.origin[0]) / g.dx), 0, g.dims[0] - 1),
        std::clamp(static_cast<int>((y - g.origin[1]) / g.dx), 0, g.dims[1] - 1), 0};
  };

  // Source and probe at low-symmetry points inside the waveguide core.
  fdtd::SourceSpec src;
  src.kind = fdtd::SourceSpec::Kind::DipoleSoft;
  src.component = fdtd::Component::Ez;
  src.position = cell_at(0.23 * eim.spec.mirror_pitch_um, 0.27 * eim.spec.waveguide_width_um);
  src.pulse.center_wavelength_um = lam_c;
  src.pulse.fractional_bandwidth =
      std::max(0.10, 1.2 * (band_hi_um - band_lo_um) / lam_c);
  sim.add_source(src);

  const auto probe_cell =
      cell_at(0.61 * eim.spec.mirror_pitch_um, -0.19 * eim.spec.waveguide_width_um);
  const int probe = sim.add_probe({probe_cell, fdtd::Component::Ez});

  int dft_id = -1;
  if (settings.want_field_snapshot) {
    fdtd::DftRegion region;
    region.lo = {0, 0, 0};
    region.hi = {g.dims[0] - 1, g.dims[1] - 1, 0};
    region.components = {fdtd::Component::Ez};
    for (int k = 0; k < settings.snapshot_candidates; ++k)
      region.wavelengths_um.push_back(
          band_lo_um + (band_hi_um - band_lo_um) * (k + 0.5) / settings.snapshot_candidates);
    region.stride = 2;  // Nyquist margin is ample at 0.5 courant
    dft_id = sim.add_dft(region);
  }

  sim.run_until_ringdown_decayed(probe, settings.decay_threshold, settings.max_steps);
  const auto rec = sim.finish();

  CavityResult out;
  out.steps = rec.steps;
  out.warnings = rec.warnings;

  const long source_steps = static_cast<long>(std::ceil(sim.source_cutoff_time() / rec.dt));
  if (source_steps >= rec.steps)
    throw NoResonanceError("cavity_resonance: run ended during the source pulse");
  const auto& full = rec.probe_series[probe];
  std::vector<double> tail(full.begin() + source_steps, full.end());

  double in_peak = 0.0, tail_peak = 0.0;
  for (long i = 0; i < source_steps; ++i) in_peak = std::max(in_peak, std::fabs(full[i]));
  for (double v : tail) tail_peak = std::max(tail_peak, std::fabs(v));
  if (!(tail_peak > 1e-8 * in_peak))
    throw NoResonanceError("cavity_resonance: nothing rings after the source turn-off");

  // Work on a widened band so low-Q peaks do not pollute their own baseline;
  // the peak itself must land inside the requested band.
  const double widen = 0.5 * (band_hi_um - band_lo_um);
  out.spectrum =
      ringdown_power_spectrum(tail, rec.dt, std::max(band_lo_um - widen, 0.05 * band_lo_um),
                              band_hi_um + widen, 8);

  std::size_t k_peak = 0;
  std::vector<double> sorted = out.spectrum.intensity;
  for (std::size_t i = 0; i < out.spectrum.size(); ++i)
    if (out.spectrum.intensity[i] > out.spectrum.intensity[k_peak]) k_peak = i;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  const bool towering = out.spectrum.intensity[k_peak] > 30.0 * std::max(median, 1e-300);
  const bool inside_band = out.spectrum.wavelength_um[k_peak] >= band_lo_um &&
                           out.spectrum.wavelength_um[k_peak] <= band_hi_um;
  if (!towering || !inside_band)
    throw NoResonanceError("cavity_resonance: no resonant peak in the search band");

  // Lorentzian fit over a window around the peak (half-max based width).
  const double peak_lam = out.spectrum.wavelength_um[k_peak];
  const double half_level = 0.5 * out.spectrum.intensity[k_peak];
  double w_lo = out.spectrum.wavelength_um.front(), w_hi = out.spectrum.wavelength_um.back();
  for (std::size_t i = k_peak; i-- > 0;)
    if (out.spectrum.intensity[i] < half_level) {
      w_lo = out.spectrum.wavelength_um[i];
      break;
    }
  for (std::size_t i = k_peak + 1; i < out.spectrum.size(); ++i)
    if (out.spectrum.intensity[i] < half_level) {
      w_hi = out.spectrum.wavelength_um[i];
      break;
    }
  const double half_width = std::max({peak_lam - w_lo, w_hi - peak_lam, 4e-6});
  const double fit_lo = std::max(out.spectrum.wavelength_um.front(), peak_lam - 6.0 * half_width);
  const double fit_hi = std::min(out.spectrum.wavelength_um.back(), peak_lam + 6.0 * half_width);
  out.spectral_fit = analysis::fit_lorentzian(out.spectrum, fit_lo, fit_hi,
                                              analysis::LineOrientation::Peak);
  out.lambda0_um = out.spectral_fit.lambda0_um;
  out.q = out.spectral_fit.q;

  const auto ring = detail::fit_ringdown_envelope(tail, rec.dt);
  out.ringdown_tau = ring.tau;
  out.ringdown_r2 = ring.r_squared;
  // field amplitude ~ exp(-t/tau): Q = pi * tau * c / lambda0
  out.q_ringdown = pi * ring.tau / out.lambda0_um;
  out.q_consistent = std::fabs(out.q - out.q_ringdown) <= 0.2 * out.q;
  if (!out.q_consistent)
    out.warnings.push_back("spectral and ringdown Q estimates disagree by more than 20%");

  if (dft_id >= 0) {
    // keep the snapshot nearest the fitted resonance
    const auto& region = rec.dft[dft_id].region;
    std::size_t best = 0;
    for (std::size_t li = 0; li < region.wavelengths_um.size(); ++li)
      if (std::fabs(region.wavelengths_um[li] - out.lambda0_um) <
          std::fabs(region.wavelengths_um[best] - out.lambda0_um))
        best = li;
    out.snapshot_wavelength_um = region.wavelengths_um[best];
    const auto& data = rec.dft[dft_id].data[0][best];
    out.e2.resize(data.size());
    for (std::size_t c = 0; c < data.size(); ++c) out.e2[c] = std::norm(data[c]);
    if (std::fabs(out.snapshot_wavelength_um - out.lambda0_um) > out.lambda0_um / out.q)
      out.warnings.push_back("field snapshot wavelength is more than a linewidth away from "
                             "the fitted resonance");
  }

  out.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

// ---- membrane Purcell composition (2D field x vertical profile) ----

struct MembranePurcell {
  // Slice across the cavity center: index 0 = transverse (y), 1 = vertical.
  std::array<int, 2> slice_dims{0, 0};
  std::vector<double> f_slice;       // local-index convention
  std::vector<double> f_slice_ref;   // fixed-index convention (eps|E|^2 shape)
  double f_max = 0.0;                // max over the composed volume, local-index
  double f_max_ref = 0.0;            // same, fixed-index convention
  std::map<std::string, double> f_in_layer;      // local-index per region
  std::map<std::string, double> f_in_layer_ref;  // fixed-index per region
  double v_um3 = 0.0;
  double v_normalized = 0.0;  // in (lambda0/n_ref)^3
  double n_ref = 1.0;
  WarningList warnings;
};

// Separable composition |E(x,y,z)|^2 = e2(x,y) * ev(z)^2 with the column
// permittivity profile eps_v(z). Desk-scale stand-in for a 3D mode volume and
// Purcell map; both index conventions are reported.
inline MembranePurcell membrane_purcell(const geometry::RasterScene& scene2d,
                                        const std::vector<double>& e2, const EimCollapse& collapse,
                                        double q, double lambda0_um, int probe_column = -1) {
  if (e2.size() != scene2d.grid.n_cells())
    throw DomainError("membrane_purcell: field size mismatch");
  if (!(q > 0)) throw DomainError("membrane_purcell: Q must be > 0");
  const auto& g2 = scene2d.grid;
  const auto& gv = collapse.vertical_scene.grid;
  const auto& prof = collapse.vertical_mode.profile;
  const int nz = gv.dims[1];

  MembranePurcell out;

  // vertical factor: eps_v(z) * ev(z)^2, peak location defines n_ref with the
  // in-plane maximum
  std::vector<double> vert(nz);
  double vert_peak = 0.0;
  int z_peak = 0;
  double vert_integral = 0.0;
  for (int z = 0; z < nz; ++z) {
    const double ev = prof.at(0, z);
    vert[z] = gv.eps[z] * ev * ev;
    vert_integral += vert[z];
    if (vert[z] > vert_peak) {
      vert_peak = vert[z];
      z_peak = z;
    }
  }
  vert_integral *= gv.dx;

  double plane_peak = 0.0;
  double plane_integral = 0.0;
  for (double v : e2) {
    plane_integral += v;
    plane_peak = std::max(plane_peak, v);
  }
  plane_integral *= g2.dx * g2.dx;
  if (!(plane_peak > 0) || !(vert_peak > 0))
    throw DomainError("membrane_purcell: empty field");

  out.n_ref = std::sqrt(gv.eps[gv.index(0, z_peak)]);
  out.v_um3 = plane_integral * vert_integral / (plane_peak * vert_peak);
  out.v_normalized = out.v_um3 / std::pow(lambda0_um / out.n_ref, 3);

  const double pref = 3.0 / (4.0 * pi * pi) * q / (plane_integral * vert_integral);
  const double unit_ref = std::pow(lambda0_um / out.n_ref, 3);

  // Slice across the cavity center: a fixed x column of the 2D field.
  const int i0 = probe_column >= 0 ? probe_column : g2.dims[0] / 2;
  out.slice_dims = {g2.dims[1], nz};
  out.f_slice.resize(static_cast<std::size_t>(g2.dims[1]) * nz);
  out.f_slice_ref.resize(out.f_slice.size());
  for (int z = 0; z < nz; ++z) {
    const double n_local = std::sqrt(gv.eps[gv.index(0, z)]);
    const double unit_local = std::pow(lambda0_um / n_local, 3);
    const auto region = collapse.vertical_scene.region[gv.index(0, z)];
    const auto& name = collapse.vertical_scene.region_names[region];
    for (int j = 0; j < g2.dims[1]; ++j) {
      const double u = e2[g2.index(i0, j)] * vert[z];
      const std::size_t c = static_cast<std::size_t>(z) * g2.dims[1] + j;
      out.f_slice[c] = pref * unit_local * u;
      out.f_slice_ref[c] = pref * unit_ref * u;
    }
    // layer maxima use the global in-plane peak, not just the slice column
    const double u_best = plane_peak * vert[z];
    auto& slot = out.f_in_layer[name];
    slot = std::max(slot, pref * unit_local * u_best);
    auto& slot_ref = out.f_in_layer_ref[name];
    slot_ref = std::max(slot_ref, pref * unit_ref * u_best);
  }
  for (const auto& [name, val] : out.f_in_layer) out.f_max = std::max(out.f_max, val);
  for (const auto& [name, val] : out.f_in_layer_ref) out.f_max_ref = std::max(out.f_max_ref, val);
  return out;
}

}  // namespace resforge::resonator
