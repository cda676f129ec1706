#pragma once

// From-scratch FDTD Maxwell solver on the Yee grid: 2D TM (Ez, Hx, Hy),
// 2D TE (Hz, Ex, Ey) and small 3D, with CPML absorbing boundaries, soft
// pulsed sources, time probes, on-the-fly DFT monitors and flux planes.
//
// Units: c = 1, lengths in um, frequency = 1/lambda. dt = courant * dx.
//
// Determinism contract: every update writes only its own cell and reads only
// fields from the previous half-step, so results are bitwise identical for
// any worker count; reductions (flux sums, instability checks) run in fixed
// index order or are order-independent (max).

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "resforge/common.hpp"
#include "resforge/geometry.hpp"

namespace resforge::fdtd {

enum class Polarization2D { TM, TE };
enum class Boundary { Pml, Periodic, Pec };

enum class Component : int { Ex = 0, Ey, Ez, Hx, Hy, Hz };

struct PmlParams {
  int thickness = 12;        // cells
  double order = 3.0;        // polynomial grading exponent m
  double sigma_scale = 0.8;  // sigma_max = sigma_scale * (m + 1) / dx
  double kappa_max = 1.0;

  void validate() const {
    if (thickness < 0) throw DomainError("PmlParams: thickness must be >= 0");
    if (order < 2.0 || order > 4.0) throw DomainError("PmlParams: order must be in [2, 4]");
    if (kappa_max < 1.0) throw DomainError("PmlParams: kappa_max must be >= 1");
  }
};

struct SimulationDomain {
  geometry::PermittivityGrid grid;
  Polarization2D polarization = Polarization2D::TM;
  double courant = 0.5;
  PmlParams pml;
  std::array<Boundary, 3> boundaries{Boundary::Pml, Boundary::Pml, Boundary::Pml};

  double dt() const { return courant * grid.dx; }
  bool is2d() const { return grid.is2d(); }

  // Courant violations are reported, not rejected: the stepper's instability
  // detector is the contract for what happens when you run anyway.
  WarningList validate() const {
    grid.validate();
    pml.validate();
    WarningList warnings;
    const double limit = 1.0 / std::sqrt(is2d() ? 2.0 : 3.0);
    if (courant > limit + 1e-12)
      warnings.push_back("courant factor " + format_double(courant) +
                         " exceeds the stability limit " + format_double(limit));
    return warnings;
  }
};

// Gaussian-modulated sinusoid. fractional_bandwidth is the FWHM of the pulse
// power spectrum divided by the center frequency; the source switches off at
// t = 2 * delay_factor * tau where its envelope is below ~1e-8.
struct GaussianPulse {
  double center_wavelength_um = 0.737;
  double fractional_bandwidth = 0.15;
  double amplitude = 1.0;
  double delay_factor = 6.0;
  bool cw = false;  // continuous wave with a smooth turn-on ramp

  double omega0() const { return 2.0 * pi / center_wavelength_um; }
  double tau() const {
    const double f0 = 1.0 / center_wavelength_um;
    return std::sqrt(std::log(4.0)) / (pi * fractional_bandwidth * f0);
  }
  double cutoff_time() const {
    return cw ? std::numeric_limits<double>::infinity() : 2.0 * delay_factor * tau();
  }
  double value(double t) const {
    if (cw) {
      const double ramp = std::min(1.0, t / (5.0 * tau()));
      return amplitude * ramp * std::sin(omega0() * t);
    }
    if (t <= 0.0 || t >= cutoff_time()) return 0.0;
    const double u = (t - delay_factor * tau()) / tau();
    return amplitude * std::exp(-0.5 * u * u) * std::sin(omega0() * (t - delay_factor * tau()));
  }
  void validate() const {
    if (!(center_wavelength_um > 0)) throw DomainError("GaussianPulse: wavelength must be > 0");
    if (!cw && !(fractional_bandwidth > 0))
      throw DomainError("GaussianPulse: pulsed sources need bandwidth > 0");
    if (!(amplitude != 0.0)) throw DomainError("GaussianPulse: amplitude must be nonzero");
  }
};

struct SourceSpec {
  enum class Kind { DipoleSoft, ModeInjection, PlaneWave };
  Kind kind = Kind::DipoleSoft;
  Component component = Component::Ez;
  std::array<int, 3> position{0, 0, 0};  // dipole cell, or anchor of the span
  int span_axis = 1;                     // line/plane spans this axis from position
  int span_count = 0;                    // number of cells along span_axis
  std::vector<double> profile;           // ModeInjection weights (size span_count)
  GaussianPulse pulse;
};

struct TimeProbe {
  std::array<int, 3> cell{0, 0, 0};
  Component component = Component::Ez;
};

struct DftRegion {
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{0, 0, 0};  // inclusive
  std::vector<Component> components;
  std::vector<double> wavelengths_um;
  int stride = 1;  // accumulate every n-th step
};

struct FluxPlane {
  int axis = 0;        // plane normal
  int index = 0;       // cell index of the plane along `axis`
  std::array<int, 3> lo{0, 0, 0};  // transverse range (inclusive); axis entry ignored
  std::array<int, 3> hi{0, 0, 0};
  std::vector<double> wavelengths_um;
};

struct FieldRecord {
  double dt = 0.0;
  long steps = 0;
  std::vector<std::vector<double>> probe_series;

  struct DftField {
    DftRegion region;
    // data[component_idx][wavelength_idx][cell] over the region, x fastest
    std::vector<std::vector<std::vector<std::complex<double>>>> data;
  };
  std::vector<DftField> dft;

  struct FluxData {
    FluxPlane plane;
    // Tangential DFT fields per wavelength over the plane cells, arranged so
    // that power along +axis is sign * 1/2 Re(e1 h1* - e2 h2*) * cell_measure
    // summed over cells (e2/h2 empty for 2D runs).
    std::vector<std::vector<std::complex<double>>> e1, h1, e2, h2;
    double sign = 1.0;
    double cell_measure = 1.0;  // dx for 2D planes, dx^2 for 3D
    std::vector<double> flux;   // power through the plane, per wavelength
  };
  std::vector<FluxData> flux;
  WarningList warnings;
};

class InstabilityError : public DomainError {
 public:
  InstabilityError(long step, double magnitude)
      : DomainError("FDTD instability detected at step " + std::to_string(step) +
                    " (field magnitude " + format_double(magnitude) + ")") {}
};

namespace detail {

// Persistent worker pool. run(fn) executes fn(worker_index) on every worker
// and returns when all are done. With one worker everything runs inline.
class WorkerPool {
 public:
  explicit WorkerPool(int n) : n_(std::max(1, n)) {
    for (int t = 1; t < n_; ++t)
      threads_.emplace_back([this, t] { worker_loop(t); });
  }
  WorkerPool(const WorkerPool&) = delete;
  ~WorkerPool() {
    {
      std::unique_lock lk(mu_);
      stop_ = true;
      ++generation_;
    }
    cv_.notify_all();
    for (auto& th : threads_) th.join();
  }

  int size() const { return n_; }

  void run(const std::function<void(int)>& fn) {
    if (n_ == 1) {
      fn(0);
      return;
    }
    {
      std::unique_lock lk(mu_);
      fn_ = &fn;
      pending_ = n_ - 1;
      ++generation_;
    }
    cv_.notify_all();
    fn(0);
    std::unique_lock lk(mu_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
  }

 private:
  void worker_loop(int t) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(int)>* fn = nullptr;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return generation_ != seen; });
        seen = generation_;
        if (stop_) return;
        fn = fn_;
      }
      (*fn)(t);
      {
        std::unique_lock lk(mu_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  int n_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(int)>* fn_ = nullptr;
  int pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

// CPML grading per axis: b, c and 1/kappa at integer and half positions.
struct AxisPml {
  bool active = false;
  int thickness = 0;
  std::vector<double> b_int, c_int, ik_int;    // at integer positions
  std::vector<double> b_half, c_half, ik_half; // at +1/2 positions

  void build(int n, const PmlParams& p, double dx, double dt, bool enabled) {
    active = enabled && p.thickness > 0 && n > 2 * p.thickness;
    thickness = active ? p.thickness : 0;
    b_int.assign(n, 1.0);
    c_int.assign(n, 0.0);
    ik_int.assign(n, 1.0);
    b_half.assign(n, 1.0);
    c_half.assign(n, 0.0);
    ik_half.assign(n, 1.0);
    if (!active) return;
    const double sigma_max = p.sigma_scale * (p.order + 1.0) / dx;
    auto fill = [&](double u, double& b, double& c, double& ik) {
      const double t = static_cast<double>(p.thickness);
      double d = 0.0;
      if (u < t)
        d = (t - u) / t;
      else if (u > n - 1 - t)
        d = (u - (n - 1 - t)) / t;
      d = std::clamp(d, 0.0, 1.0);
      if (d == 0.0) return;
      const double sigma = sigma_max * std::pow(d, p.order);
      const double kappa = 1.0 + (p.kappa_max - 1.0) * std::pow(d, p.order);
      b = std::exp(-sigma * dt / kappa);
      c = (b - 1.0) / kappa;
      ik = 1.0 / kappa;
    };
    for (int i = 0; i < n; ++i) {
      fill(static_cast<double>(i), b_int[i], c_int[i], ik_int[i]);
      fill(static_cast<double>(i) + 0.5, b_half[i], c_half[i], ik_half[i]);
    }
  }
};

struct PreparedSource {
  SourceSpec spec;
  std::vector<std::size_t> cells;
  std::vector<double> weights;
};

}  // namespace detail

class Simulation {
 public:
  explicit Simulation(SimulationDomain domain, int workers = 0)
      : domain_(std::move(domain)),
        nx_(domain_.grid.dims[0]),
        ny_(domain_.grid.dims[1]),
        nz_(domain_.grid.dims[2]),
        dt_(domain_.dt()),
        pool_(resolve_worker_count(workers)) {
    warnings_ = domain_.validate();
    const std::size_t n = domain_.grid.n_cells();
    if (domain_.is2d()) {
      if (domain_.polarization == Polarization2D::TM) {
        alloc({Component::Ez, Component::Hx, Component::Hy}, n);
        psi_.assign(4, std::vector<double>(n, 0.0));
      } else {
        alloc({Component::Hz, Component::Ex, Component::Ey}, n);
        psi_.assign(4, std::vector<double>(n, 0.0));
      }
    } else {
      alloc({Component::Ex, Component::Ey, Component::Ez, Component::Hx, Component::Hy,
             Component::Hz},
            n);
      psi_.assign(12, std::vector<double>(n, 0.0));
    }
    build_eps_coefficients();
    pml_[0].build(nx_, domain_.pml, domain_.grid.dx, dt_, domain_.boundaries[0] == Boundary::Pml);
    pml_[1].build(ny_, domain_.pml, domain_.grid.dx, dt_, domain_.boundaries[1] == Boundary::Pml);
    if (!domain_.is2d())
      pml_[2].build(nz_, domain_.pml, domain_.grid.dx, dt_,
                    domain_.boundaries[2] == Boundary::Pml);
    partition_rows();
  }

  const SimulationDomain& domain() const { return domain_; }
  double dt() const { return dt_; }
  long step_count() const { return step_; }
  double time() const { return static_cast<double>(step_) * dt_; }
  const WarningList& warnings() const { return warnings_; }

  void add_source(const SourceSpec& s) {
    s.pulse.validate();
    detail::PreparedSource ps;
    ps.spec = s;
    auto add_cell = [&](std::array<int, 3> c, double w) {
      check_inside_active_region(c);
      ps.cells.push_back(domain_.grid.index(c[0], c[1], c[2]));
      ps.weights.push_back(w);
    };
    if (s.kind == SourceSpec::Kind::DipoleSoft) {
      add_cell(s.position, 1.0);
    } else {
      if (s.span_count < 1) throw DomainError("source: span_count must be >= 1");
      if (s.kind == SourceSpec::Kind::ModeInjection &&
          static_cast<int>(s.profile.size()) != s.span_count)
        throw DomainError("source: mode profile size must match span_count");
      for (int k = 0; k < s.span_count; ++k) {
        auto c = s.position;
        c[s.span_axis] += k;
        add_cell(c, s.kind == SourceSpec::Kind::ModeInjection ? s.profile[k] : 1.0);
      }
    }
    source_amplitude_scale_ = std::max(source_amplitude_scale_, std::fabs(s.pulse.amplitude));
    sources_.push_back(std::move(ps));
  }

  int add_probe(const TimeProbe& p) {
    check_cell(p.cell);
    probes_.push_back(p);
    probe_series_.emplace_back();
    return static_cast<int>(probes_.size()) - 1;
  }

  int add_dft(const DftRegion& r) {
    check_cell(r.lo);
    check_cell(r.hi);
    if (r.wavelengths_um.empty()) throw DomainError("dft monitor: need wavelengths");
    if (r.stride < 1) throw DomainError("dft monitor: stride must be >= 1");
    warn_resolution(r.wavelengths_um);
    DftAccum acc;
    acc.region = r;
    const std::size_t cells = region_cell_count(r.lo, r.hi);
    acc.data.assign(r.components.size(),
                    std::vector<std::vector<std::complex<double>>>(
                        r.wavelengths_um.size(), std::vector<std::complex<double>>(cells)));
    dft_.push_back(std::move(acc));
    return static_cast<int>(dft_.size()) - 1;
  }

  int add_flux(const FluxPlane& p) {
    if (p.wavelengths_um.empty()) throw DomainError("flux monitor: need wavelengths");
    if (p.axis < 0 || p.axis >= (domain_.is2d() ? 2 : 3))
      throw DomainError("flux monitor: invalid plane axis");
    if (p.index < 1 || p.index >= domain_.grid.dims[p.axis] - 1)
      throw DomainError("flux monitor: plane must be interior to the grid");
    auto lo = p.lo, hi = p.hi;
    lo[p.axis] = hi[p.axis] = p.index;
    check_cell(lo);
    check_cell(hi);
    warn_resolution(p.wavelengths_um);
    FluxAccum acc;
    acc.plane = p;
    if (domain_.is2d()) {
      // 2D TM: S_x = -1/2 Re(Ez Hy*), S_y = +1/2 Re(Ez Hx*)
      // 2D TE: S_x = +1/2 Re(Ey Hz*), S_y = -1/2 Re(Ex Hz*)
      const bool tm = domain_.polarization == Polarization2D::TM;
      acc.sign = (p.axis == 0) == tm ? -1.0 : 1.0;
    } else {
      acc.sign = 1.0;  // S_a = 1/2 Re(E_b H_c* - E_c H_b*), (a,b,c) cyclic
    }
    const std::size_t cells = region_cell_count(lo, hi);
    const std::size_t nl = p.wavelengths_um.size();
    acc.e1.assign(nl, std::vector<std::complex<double>>(cells));
    acc.h1.assign(nl, std::vector<std::complex<double>>(cells));
    if (!domain_.is2d()) {
      acc.e2.assign(nl, std::vector<std::complex<double>>(cells));
      acc.h2.assign(nl, std::vector<std::complex<double>>(cells));
    }
    flux_.push_back(std::move(acc));
    return static_cast<int>(flux_.size()) - 1;
  }

  // One full leapfrog update: H to t+dt/2, E to t+dt, sources, monitors.
  void step() {
    pool_.run([this](int t) { update_h(t); });
    pool_.run([this](int t) { update_e(t); });
    apply_sources();
    if (domain_.is2d() && domain_.polarization == Polarization2D::TM) enforce_pec_2d_tm();
    if (domain_.is2d() && domain_.polarization == Polarization2D::TE) enforce_pec_2d_te();
    if (!domain_.is2d()) enforce_pec_3d();
    ++step_;
    accumulate_monitors();
    if (step_ % instability_check_interval == 0) check_stability();
  }

  void run(long steps) {
    for (long i = 0; i < steps; ++i) step();
  }

  // Steps until the trailing-window peak of |probe| falls below
  // rel_threshold times the post-source peak (or max_steps). Returns the
  // total number of steps taken.
  long run_until_ringdown_decayed(int probe_idx, double rel_threshold, long max_steps,
                                  long window = 2048) {
    const double t_off = source_cutoff_time();
    double peak = 0.0;
    double window_max = 0.0;
    long in_window = 0;
    while (step_ < max_steps) {
      step();
      if (time() <= t_off) continue;
      const double v = std::fabs(probe_series_[probe_idx].back());
      peak = std::max(peak, v);
      window_max = std::max(window_max, v);
      if (++in_window >= window) {
        if (peak > 0.0 && window_max < rel_threshold * peak) break;
        window_max = 0.0;
        in_window = 0;
      }
    }
    return step_;
  }

  double source_cutoff_time() const {
    double t = 0.0;
    for (const auto& s : sources_) t = std::max(t, s.spec.pulse.cutoff_time());
    return t;
  }

  FieldRecord finish() const {
    FieldRecord rec;
    rec.dt = dt_;
    rec.steps = step_;
    rec.probe_series = probe_series_;
    rec.warnings = warnings_;
    for (const auto& acc : dft_) {
      FieldRecord::DftField f;
      f.region = acc.region;
      f.data = acc.data;
      for (auto& per_comp : f.data)
        for (auto& per_lambda : per_comp)
          for (auto& v : per_lambda) v *= dt_ * acc.region.stride;
      rec.dft.push_back(std::move(f));
    }
    for (const auto& acc : flux_) {
      FieldRecord::FluxData f;
      f.plane = acc.plane;
      f.e1 = acc.e1;
      f.h1 = acc.h1;
      f.e2 = acc.e2;
      f.h2 = acc.h2;
      f.sign = acc.sign;
      f.cell_measure = domain_.is2d() ? domain_.grid.dx : domain_.grid.dx * domain_.grid.dx;
      auto scale = [&](auto& arrs) {
        for (auto& per_lambda : arrs)
          for (auto& v : per_lambda) v *= dt_;
      };
      scale(f.e1);
      scale(f.h1);
      scale(f.e2);
      scale(f.h2);
      f.flux = compute_flux(f, nullptr);
      rec.flux.push_back(std::move(f));
    }
    return rec;
  }

  // Power through the plane per wavelength; when `incident` is given its
  // tangential DFT fields are subtracted first (reflected-power workflow).
  static std::vector<double> compute_flux(const FieldRecord::FluxData& total,
                                          const FieldRecord::FluxData* incident) {
    const std::size_t nl = total.e1.size();
    std::vector<double> out(nl, 0.0);
    const bool have2 = !total.e2.empty();
    for (std::size_t l = 0; l < nl; ++l) {
      double p = 0.0;
      for (std::size_t c = 0; c < total.e1[l].size(); ++c) {
        std::complex<double> e1 = total.e1[l][c];
        std::complex<double> h1 = total.h1[l][c];
        if (incident) {
          e1 -= incident->e1[l][c];
          h1 -= incident->h1[l][c];
        }
        double s = 0.5 * (e1 * std::conj(h1)).real();
        if (have2) {
          std::complex<double> e2 = total.e2[l][c];
          std::complex<double> h2 = total.h2[l][c];
          if (incident) {
            e2 -= incident->e2[l][c];
            h2 -= incident->h2[l][c];
          }
          s -= 0.5 * (e2 * std::conj(h2)).real();
        }
        p += s;
      }
      out[l] = p * total.sign * total.cell_measure;
    }
    return out;
  }

  std::vector<double>& field(Component c) { return fields_[static_cast<int>(c)]; }
  const std::vector<double>& field(Component c) const { return fields_[static_cast<int>(c)]; }

  // ---- checkpointing (versioned little-endian binary blob) ----

  void save_checkpoint(const std::string& path) const {
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint format is little-endian");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("checkpoint: cannot open '" + path + "' for writing");
    const char magic[4] = {'R', 'F', 'C', 'P'};
    out.write(magic, 4);
    write_pod<std::uint32_t>(out, 1);  // version
    write_pod<std::uint8_t>(out, domain_.is2d() ? 2 : 3);
    write_pod<std::uint8_t>(out, domain_.polarization == Polarization2D::TM ? 0 : 1);
    for (int a = 0; a < 3; ++a) write_pod<std::int32_t>(out, domain_.grid.dims[a]);
    write_pod<double>(out, domain_.grid.dx);
    write_pod<std::int64_t>(out, step_);
    auto write_array = [&](const std::vector<double>& v) {
      write_pod<std::uint64_t>(out, v.size());
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(active_components_.size()));
    for (int c : active_components_) write_array(fields_[c]);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(psi_.size()));
    for (const auto& p : psi_) write_array(p);
    if (!out) throw DomainError("checkpoint: write failed");
  }

  void load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (std::memcmp(magic, "RFCP", 4) != 0) throw DomainError("checkpoint: bad magic");
    if (read_pod<std::uint32_t>(in) != 1) throw DomainError("checkpoint: unsupported version");
    const int dim = read_pod<std::uint8_t>(in);
    const int pol = read_pod<std::uint8_t>(in);
    if (dim != (domain_.is2d() ? 2 : 3) ||
        pol != (domain_.polarization == Polarization2D::TM ? 0 : 1))
      throw DomainError("checkpoint: dimensionality/polarization mismatch");
    for (int a = 0; a < 3; ++a)
      if (read_pod<std::int32_t>(in) != domain_.grid.dims[a])
        throw DomainError("checkpoint: grid dims mismatch");
    if (std::fabs(read_pod<double>(in) - domain_.grid.dx) > 1e-15)
      throw DomainError("checkpoint: dx mismatch");
    step_ = read_pod<std::int64_t>(in);
    auto read_array = [&](std::vector<double>& v) {
      const auto n = read_pod<std::uint64_t>(in);
      if (n != v.size()) throw DomainError("checkpoint: array size mismatch");
      in.read(reinterpret_cast<char*>(v.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
    };
    const auto nf = read_pod<std::uint32_t>(in);
    if (nf != active_components_.size()) throw DomainError("checkpoint: component count mismatch");
    for (int c : active_components_) read_array(fields_[c]);
    const auto np = read_pod<std::uint32_t>(in);
    if (np != psi_.size()) throw DomainError("checkpoint: pml state count mismatch");
    for (auto& p : psi_) read_array(p);
    if (!in) throw DomainError("checkpoint: truncated file");
  }

  int instability_check_interval = 256;

 private:
  template <typename T>
  static void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  template <typename T>
  static T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }

  void alloc(std::initializer_list<Component> comps, std::size_t n) {
    fields_.assign(6, {});
    for (Component c : comps) {
      fields_[static_cast<int>(c)].assign(n, 0.0);
      active_components_.push_back(static_cast<int>(c));
    }
  }

  std::size_t idx(int i, int j, int k = 0) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(nx_) * (static_cast<std::size_t>(j) +
                                            static_cast<std::size_t>(ny_) * k);
  }

  void check_cell(const std::array<int, 3>& c) const {
    if (c[0] < 0 || c[0] >= nx_ || c[1] < 0 || c[1] >= ny_ || c[2] < 0 || c[2] >= nz_)
      throw DomainError("monitor/source cell outside the grid");
  }

  void check_inside_active_region(const std::array<int, 3>& c) const {
    check_cell(c);
    for (int a = 0; a < (domain_.is2d() ? 2 : 3); ++a) {
      if (!pml_[a].active) continue;
      const int n = domain_.grid.dims[a];
      if (c[a] < pml_[a].thickness || c[a] >= n - pml_[a].thickness)
        throw DomainError("source position inside the PML region");
    }
  }

  void warn_resolution(const std::vector<double>& wavelengths) {
    const double n_max = std::sqrt(domain_.grid.max_eps());
    for (double lam : wavelengths) {
      if (lam / (n_max * domain_.grid.dx) < 10.0) {
        warnings_.push_back("wavelength " + format_double(lam) +
                            " um has fewer than 10 grid points per wavelength in the densest "
                            "material");
        break;
      }
    }
  }

  std::size_t region_cell_count(const std::array<int, 3>& lo, const std::array<int, 3>& hi) const {
    std::size_t n = 1;
    for (int a = 0; a < 3; ++a) {
      if (hi[a] < lo[a]) throw DomainError("monitor region: hi < lo");
      n *= static_cast<std::size_t>(hi[a] - lo[a] + 1);
    }
    return n;
  }

  void build_eps_coefficients() {
    const auto& g = domain_.grid;
    const std::size_t n = g.n_cells();
    auto avg2 = [&](std::size_t a, std::size_t b) { return 0.5 * (g.eps[a] + g.eps[b]); };
    if (domain_.is2d() && domain_.polarization == Polarization2D::TM) {
      coef_.assign(1, std::vector<double>(n));
      for (std::size_t c = 0; c < n; ++c) coef_[0][c] = dt_ / g.eps[c];
    } else if (domain_.is2d()) {
      // TE: Ex at (i+1/2, j), Ey at (i, j+1/2); average the touching cells.
      coef_.assign(2, std::vector<double>(n));
      for (int j = 0; j < ny_; ++j)
        for (int i = 0; i < nx_; ++i) {
          const std::size_t c = idx(i, j);
          const std::size_t cx = idx(std::min(i + 1, nx_ - 1), j);
          const std::size_t cy = idx(i, std::min(j + 1, ny_ - 1));
          coef_[0][c] = dt_ / avg2(c, cx);  // Ex
          coef_[1][c] = dt_ / avg2(c, cy);  // Ey
        }
    } else {
      coef_.assign(3, std::vector<double>(n));
      for (int k = 0; k < nz_; ++k)
        for (int j = 0; j < ny_; ++j)
          for (int i = 0; i < nx_; ++i) {
            const std::size_t c = idx(i, j, k);
            coef_[0][c] = dt_ / avg2(c, idx(std::min(i + 1, nx_ - 1), j, k));
            coef_[1][c] = dt_ / avg2(c, idx(i, std::min(j + 1, ny_ - 1), k));
            coef_[2][c] = dt_ / avg2(c, idx(i, j, std::min(k + 1, nz_ - 1)));
          }
    }
  }

  // Rows (2D: j, 3D: k) are split across workers; each cell is written by
  // exactly one worker and all reads are from the previous half-step.
  void partition_rows() {
    const int rows = domain_.is2d() ? ny_ : nz_;
    const int workers = pool_.size();
    row_ranges_.clear();
    for (int t = 0; t < workers; ++t) {
      const int lo = static_cast<int>(static_cast<long>(rows) * t / workers);
      const int hi = static_cast<int>(static_cast<long>(rows) * (t + 1) / workers);
      row_ranges_.push_back({lo, hi});
    }
    // Quasi-1D grids (a single row) split the x axis instead.
    split_x_ = domain_.is2d() && ny_ == 1 && workers > 1;
    if (split_x_) {
      row_ranges_.clear();
      for (int t = 0; t < workers; ++t) {
        const int lo = static_cast<int>(static_cast<long>(nx_) * t / workers);
        const int hi = static_cast<int>(static_cast<long>(nx_) * (t + 1) / workers);
        row_ranges_.push_back({lo, hi});
      }
    }
  }

  bool periodic(int axis) const { return domain_.boundaries[axis] == Boundary::Periodic; }

  // ---- 2D TM updates ----

  void update_h_2d_tm(int jlo, int jhi, int ilo, int ihi) {
    const double inv_dx = 1.0 / domain_.grid.dx;
    auto& ez = fields_[static_cast<int>(Component::Ez)];
    auto& hx = fields_[static_cast<int>(Component::Hx)];
    auto& hy = fields_[static_cast<int>(Component::Hy)];
    auto& p_hxy = psi_[0];
    auto& p_hyx = psi_[1];
    const auto& px = pml_[0];
    const auto& py = pml_[1];
    const bool per_x = periodic(0), per_y = periodic(1);
    for (int j = jlo; j < jhi; ++j) {
      const std::size_t row = idx(0, j);
      const int jp = j + 1 < ny_ ? j + 1 : (per_y ? 0 : -1);
      const double* ez_up = jp >= 0 ? &ez[idx(0, jp)] : nullptr;
      const double by = py.b_half[j], cy = py.c_half[j], iky = py.ik_half[j];
      const bool y_pml_row = cy != 0.0;
      // Hx -= dt * dEz/dy
      for (int i = ilo; i < ihi; ++i) {
        const std::size_t c = row + i;
        const double dey = (ez_up ? ez_up[i] - ez[c] : -ez[c]) * inv_dx;
        if (y_pml_row) {
          p_hxy[c] = by * p_hxy[c] + cy * dey;
          hx[c] -= dt_ * (dey * iky + p_hxy[c]);
        } else {
          hx[c] -= dt_ * dey;
        }
      }
      // Hy += dt * dEz/dx
      for (int i = ilo; i < ihi; ++i) {
        const std::size_t c = row + i;
        const int ip = i + 1 < nx_ ? i + 1 : (per_x ? 0 : -1);
        const double dex = ((ip >= 0 ? ez[row + ip] : 0.0) - ez[c]) * inv_dx;
        const double cx = px.c_half[i];
        if (cx != 0.0) {
          p_hyx[c] = px.b_half[i] * p_hyx[c] + cx * dex;
          hy[c] += dt_ * (dex * px.ik_half[i] + p_hyx[c]);
        } else {
          hy[c] += dt_ * dex;
        }
      }
    }
  }

  void update_e_2d_tm(int jlo, int jhi, int ilo, int ihi) {
    const double inv_dx = 1.0 / domain_.grid.dx;
    auto& ez = fields_[static_cast<int>(Component::Ez)];
    auto& hx = fields_[static_cast<int>(Component::Hx)];
    auto& hy = fields_[static_cast<int>(Component::Hy)];
    auto& p_ezx = psi_[2];
    auto& p_ezy = psi_[3];
    const auto& px = pml_[0];
    const auto& py = pml_[1];
    const bool per_x = periodic(0), per_y = periodic(1);
    const auto& coef = coef_[0];
    for (int j = jlo; j < jhi; ++j) {
      const std::size_t row = idx(0, j);
      const int jm = j > 0 ? j - 1 : (per_y ? ny_ - 1 : -1);
      const double* hx_dn = jm >= 0 ? &hx[idx(0, jm)] : nullptr;
      const double by = py.b_int[j], cy = py.c_int[j], iky = py.ik_int[j];
      const bool y_pml_row = cy != 0.0;
      for (int i = ilo; i < ihi; ++i) {
        const std::size_t c = row + i;
        const int im = i > 0 ? i - 1 : (per_x ? nx_ - 1 : -1);
        const double dhy = (hy[c] - (im >= 0 ? hy[row + im] : 0.0)) * inv_dx;
        const double dhx = (hx[c] - (hx_dn ? hx_dn[i] : 0.0)) * inv_dx;
        double curl;
        const double cx = px.c_int[i];
        if (cx != 0.0 || y_pml_row) {
          double tx = dhy, ty = dhx;
          if (cx != 0.0) {
            p_ezx[c] = px.b_int[i] * p_ezx[c] + cx * dhy;
            tx = dhy * px.ik_int[i] + p_ezx[c];
          }
          if (y_pml_row) {
            p_ezy[c] = by * p_ezy[c] + cy * dhx;
            ty = dhx * iky + p_ezy[c];
          }
          curl = tx - ty;
        } else {
          curl = dhy - dhx;
        }
        ez[c] += coef[c] * curl;
      }
    }
  }

  // ---- 2D TE updates ----

  void update_h_2d_te(int jlo, int jhi, int ilo, int ihi) {
    const double inv_dx = 1.0 / domain_.grid.dx;
    auto& hz = fields_[static_cast<int>(Component::Hz)];
    auto& ex = fields_[static_cast<int>(Component::Ex)];
    auto& ey = fields_[static_cast<int>(Component::Ey)];
    auto& p_hzx = psi_[0];
    auto& p_hzy = psi_[1];
    const auto& px = pml_[0];
    const auto& py = pml_[1];
    const bool per_x = periodic(0), per_y = periodic(1);
    for (int j = jlo; j < jhi; ++j) {
      const std::size_t row = idx(0, j);
      const int jp = j + 1 < ny_ ? j + 1 : (per_y ? 0 : -1);
      const double* ex_up = jp >= 0 ? &ex[idx(0, jp)] : nullptr;
      const double by = py.b_half[j], cy = py.c_half[j], iky = py.ik_half[j];
      const bool y_pml_row = cy != 0.0;
      for (int i = ilo; i < ihi; ++i) {
        const std::size_t c = row + i;
        const int ip = i + 1 < nx_ ? i + 1 : (per_x ? 0 : -1);
        const double dey = ((ip >= 0 ? ey[row + ip] : 0.0) - ey[c]) * inv_dx;
        const double dex = ((ex_up ? ex_up[i] : 0.0) - ex[c]) * inv_dx;
        double tx = dey, ty = dex;
        const double cx = px.c_half[i];
        if (cx != 0.0) {
          p_hzx[c] = px.b_half[i] * p_hzx[c] + cx * dey;
          tx = dey * px.ik_half[i] + p_hzx[c];
        }
        if (y_pml_row) {
          p_hzy[c] = by * p_hzy[c] + cy * dex;
          ty = dex * iky + p_hzy[c];
        }
        hz[c] -= dt_ * (tx - ty);
      }
    }
  }

  void update_e_2d_te(int jlo, int jhi, int ilo, int ihi) {
    const double inv_dx = 1.0 / domain_.grid.dx;
    auto& hz = fields_[static_cast<int>(Component::Hz)];
    auto& ex = fields_[static_cast<int>(Component::Ex)];
    auto& ey = fields_[static_cast<int>(Component::Ey)];
    auto& p_exy = psi_[2];
    auto& p_eyx = psi_[3];
    const auto& px = pml_[0];
    const auto& py = pml_[1];
    const bool per_x = periodic(0), per_y = periodic(1);
    for (int j = jlo; j < jhi; ++j) {
      const std::size_t row = idx(0, j);
      const int jm = j > 0 ? j - 1 : (per_y ? ny_ - 1 : -1);
      const double* hz_dn = jm >= 0 ? &hz[idx(0, jm)] : nullptr;
      const double by = py.b_int[j], cy = py.c_int[j], iky = py.ik_int[j];
      const bool y_pml_row = cy != 0.0;
      for (int i = ilo; i < ihi; ++i) {
        const std::size_t c = row + i;
        // Ex += dt/eps * dHz/dy
        const double dhzy = (hz[c] - (hz_dn ? hz_dn[i] : 0.0)) * inv_dx;
        if (y_pml_row) {
          p_exy[c] = by * p_exy[c] + cy * dhzy;
          ex[c] += coef_[0][c] * (dhzy * iky + p_exy[c]);
        } else {
          ex[c] += coef_[0][c] * dhzy;
        }
        // Ey -= dt/eps * dHz/dx
        const int im = i > 0 ? i - 1 : (per_x ? nx_ - 1 : -1);
        const double dhzx = (hz[c] - (im >= 0 ? hz[row + im] : 0.0)) * inv_dx;
        const double cx = px.c_int[i];
        if (cx != 0.0) {
          p_eyx[c] = px.b_int[i] * p_eyx[c] + cx * dhzx;
          ey[c] -= coef_[1][c] * (dhzx * px.ik_int[i] + p_eyx[c]);
        } else {
          ey[c] -= coef_[1][c] * dhzx;
        }
      }
    }
  }

  // ---- 3D updates (small domains; uniform loops with precomputed grading) ----

  double neighbor(const std::vector<double>& f, int i, int j, int k, int axis, int dir) const {
    int c[3] = {i, j, k};
    c[axis] += dir;
    const int n = domain_.grid.dims[axis];
    if (c[axis] < 0 || c[axis] >= n) {
      if (!periodic(axis)) return 0.0;
      c[axis] = (c[axis] + n) % n;
    }
    return f[idx(c[0], c[1], c[2])];
  }

  void update_h_3d(int klo, int khi) {
    const double inv_dx = 1.0 / domain_.grid.dx;
    auto& ex = fields_[static_cast<int>(Component::Ex)];
    auto& ey = fields_[static_cast<int>(Component::Ey)];
    auto& ez = fields_[static_cast<int>(Component::Ez)];
    auto& hx = fields_[static_cast<int>(Component::Hx)];
    auto& hy = fields_[static_cast<int>(Component::Hy)];
    auto& hz = fields_[static_cast<int>(Component::Hz)];
    for (int k = klo; k < khi; ++k)
      for (int j = 0; j < ny_; ++j)
        for (int i = 0; i < nx_; ++i) {
          const std::size_t c = idx(i, j, k);
          const double dez_dy = (neighbor(ez, i, j, k, 1, +1) - ez[c]) * inv_dx;
          const double dey_dz = (neighbor(ey, i, j, k, 2, +1) - ey[c]) * inv_dx;
          const double dex_dz = (neighbor(ex, i, j, k, 2, +1) - ex[c]) * inv_dx;
          const double dez_dx = (neighbor(ez, i, j, k, 0, +1) - ez[c]) * inv_dx;
          const double dey_dx = (neighbor(ey, i, j, k, 0, +1) - ey[c]) * inv_dx;
          const double dex_dy = (neighbor(ex, i, j, k, 1, +1) - ex[c]) * inv_dx;
          // psi layout: [hx:dy, hx:dz, hy:dz, hy:dx, hz:dx, hz:dy]
          const double t_ez_dy = pml_term(psi_[0], c, pml_[1], j, true, dez_dy);
          const double t_ey_dz = pml_term(psi_[1], c, pml_[2], k, true, dey_dz);
          const double t_ex_dz = pml_term(psi_[2], c, pml_[2], k, true, dex_dz);
          const double t_ez_dx = pml_term(psi_[3], c, pml_[0], i, true, dez_dx);
          const double t_ey_dx = pml_term(psi_[4], c, pml_[0], i, true, dey_dx);
          const double t_ex_dy = pml_term(psi_[5], c, pml_[1], j, true, dex_dy);
          hx[c] -= dt_ * (t_ez_dy - t_ey_dz);
          hy[c] -= dt_ * (t_ex_dz - t_ez_dx);
          hz[c] -= dt_ * (t_ey_dx - t_ex_dy);
        }
  }

  void update_e_3d(int klo, int khi) {
    const double inv_dx = 1.0 / domain_.grid.dx;
    auto& ex = fields_[static_cast<int>(Component::Ex)];
    auto& ey = fields_[static_cast<int>(Component::Ey)];
    auto& ez = fields_[static_cast<int>(Component::Ez)];
    auto& hx = fields_[static_cast<int>(Component::Hx)];
    auto& hy = fields_[static_cast<int>(Component::Hy)];
    auto& hz = fields_[static_cast<int>(Component::Hz)];
    for (int k = klo; k < khi; ++k)
      for (int j = 0; j < ny_; ++j)
        for (int i = 0; i < nx_; ++i) {
          const std::size_t c = idx(i, j, k);
          const double dhz_dy = (hz[c] - neighbor(hz, i, j, k, 1, -1)) * inv_dx;
          const double dhy_dz = (hy[c] - neighbor(hy, i, j, k, 2, -1)) * inv_dx;
          const double dhx_dz = (hx[c] - neighbor(hx, i, j, k, 2, -1)) * inv_dx;
          const double dhz_dx = (hz[c] - neighbor(hz, i, j, k, 0, -1)) * inv_dx;
          const double dhy_dx = (hy[c] - neighbor(hy, i, j, k, 0, -1)) * inv_dx;
          const double dhx_dy = (hx[c] - neighbor(hx, i, j, k, 1, -1)) * inv_dx;
          // psi layout: [ex:dy, ex:dz, ey:dz, ey:dx, ez:dx, ez:dy]
          const double t_hz_dy = pml_term(psi_[6], c, pml_[1], j, false, dhz_dy);
          const double t_hy_dz = pml_term(psi_[7], c, pml_[2], k, false, dhy_dz);
          const double t_hx_dz = pml_term(psi_[8], c, pml_[2], k, false, dhx_dz);
          const double t_hz_dx = pml_term(psi_[9], c, pml_[0], i, false, dhz_dx);
          const double t_hy_dx = pml_term(psi_[10], c, pml_[0], i, false, dhy_dx);
          const double t_hx_dy = pml_term(psi_[11], c, pml_[1], j, false, dhx_dy);
          ex[c] += coef_[0][c] * (t_hz_dy - t_hy_dz);
          ey[c] += coef_[1][c] * (t_hx_dz - t_hz_dx);
          ez[c] += coef_[2][c] * (t_hy_dx - t_hx_dy);
        }
  }

  double pml_term(std::vector<double>& psi, std::size_t c, const detail::AxisPml& ax, int pos,
                  bool half, double d) const {
    const double cc = half ? ax.c_half[pos] : ax.c_int[pos];
    if (cc == 0.0) return d;
    const double b = half ? ax.b_half[pos] : ax.b_int[pos];
    const double ik = half ? ax.ik_half[pos] : ax.ik_int[pos];
    psi[c] = b * psi[c] + cc * d;
    return d * ik + psi[c];
  }

  void update_h(int worker) {
    const auto [lo, hi] = row_ranges_[worker];
    if (!domain_.is2d()) {
      update_h_3d(lo, hi);
    } else if (split_x_) {
      if (domain_.polarization == Polarization2D::TM)
        update_h_2d_tm(0, 1, lo, hi);
      else
        update_h_2d_te(0, 1, lo, hi);
    } else {
      if (domain_.polarization == Polarization2D::TM)
        update_h_2d_tm(lo, hi, 0, nx_);
      else
        update_h_2d_te(lo, hi, 0, nx_);
    }
  }

  void update_e(int worker) {
    const auto [lo, hi] = row_ranges_[worker];
    if (!domain_.is2d()) {
      update_e_3d(lo, hi);
    } else if (split_x_) {
      if (domain_.polarization == Polarization2D::TM)
        update_e_2d_tm(0, 1, lo, hi);
      else
        update_e_2d_te(0, 1, lo, hi);
    } else {
      if (domain_.polarization == Polarization2D::TM)
        update_e_2d_tm(lo, hi, 0, nx_);
      else
        update_e_2d_te(lo, hi, 0, nx_);
    }
  }

  void apply_sources() {
    const double t = (static_cast<double>(step_) + 1.0) * dt_;
    for (auto& s : sources_) {
      const double v = s.spec.pulse.value(t);
      if (v == 0.0) continue;
      auto& f = fields_[static_cast<int>(s.spec.component)];
      for (std::size_t k = 0; k < s.cells.size(); ++k) f[s.cells[k]] += dt_ * v * s.weights[k];
    }
  }

  // PEC boundaries pin tangential E on the outermost nodes.
  void enforce_pec_2d_tm() {
    auto& ez = fields_[static_cast<int>(Component::Ez)];
    if (domain_.boundaries[0] == Boundary::Pec)
      for (int j = 0; j < ny_; ++j) ez[idx(0, j)] = ez[idx(nx_ - 1, j)] = 0.0;
    if (domain_.boundaries[1] == Boundary::Pec)
      for (int i = 0; i < nx_; ++i) ez[idx(i, 0)] = ez[idx(i, ny_ - 1)] = 0.0;
  }

  void enforce_pec_2d_te() {
    auto& ex = fields_[static_cast<int>(Component::Ex)];
    auto& ey = fields_[static_cast<int>(Component::Ey)];
    if (domain_.boundaries[0] == Boundary::Pec)
      for (int j = 0; j < ny_; ++j) ey[idx(0, j)] = ey[idx(nx_ - 1, j)] = 0.0;
    if (domain_.boundaries[1] == Boundary::Pec)
      for (int i = 0; i < nx_; ++i) ex[idx(i, 0)] = ex[idx(i, ny_ - 1)] = 0.0;
  }

  void enforce_pec_3d() {
    auto pin = [&](Component comp, int axis) {
      auto& f = fields_[static_cast<int>(comp)];
      const int n = domain_.grid.dims[axis];
      for (int k = 0; k < nz_; ++k)
        for (int j = 0; j < ny_; ++j)
          for (int i = 0; i < nx_; ++i) {
            int c[3] = {i, j, k};
            if (c[axis] == 0 || c[axis] == n - 1) f[idx(i, j, k)] = 0.0;
          }
    };
    for (int axis = 0; axis < 3; ++axis) {
      if (domain_.boundaries[axis] != Boundary::Pec) continue;
      if (axis != 0) pin(Component::Ex, axis);
      if (axis != 1) pin(Component::Ey, axis);
      if (axis != 2) pin(Component::Ez, axis);
    }
  }

  bool is_h_component(Component c) const {
    return c == Component::Hx || c == Component::Hy || c == Component::Hz;
  }

  void accumulate_monitors() {
    const double te = static_cast<double>(step_) * dt_;  // E fields live at t = n*dt
    const double th = te - 0.5 * dt_;                    // H fields at half steps
    for (std::size_t p = 0; p < probes_.size(); ++p) {
      const auto& pr = probes_[p];
      probe_series_[p].push_back(
          fields_[static_cast<int>(pr.component)][idx(pr.cell[0], pr.cell[1], pr.cell[2])]);
    }
    for (auto& acc : dft_) {
      if (step_ % acc.region.stride != 0) continue;
      for (std::size_t ci = 0; ci < acc.region.components.size(); ++ci) {
        const Component comp = acc.region.components[ci];
        const double t = is_h_component(comp) ? th : te;
        const auto& f = fields_[static_cast<int>(comp)];
        for (std::size_t li = 0; li < acc.region.wavelengths_um.size(); ++li) {
          const double w = 2.0 * pi / acc.region.wavelengths_um[li];
          const std::complex<double> ph(std::cos(w * t), std::sin(w * t));
          auto& dst = acc.data[ci][li];
          std::size_t out = 0;
          for (int k = acc.region.lo[2]; k <= acc.region.hi[2]; ++k)
            for (int j = acc.region.lo[1]; j <= acc.region.hi[1]; ++j)
              for (int i = acc.region.lo[0]; i <= acc.region.hi[0]; ++i)
                dst[out++] += f[idx(i, j, k)] * ph;
        }
      }
    }
    for (auto& acc : flux_) accumulate_flux(acc, te, th);
  }

  struct DftAccum {
    DftRegion region;
    std::vector<std::vector<std::vector<std::complex<double>>>> data;
  };
  struct FluxAccum {
    FluxPlane plane;
    std::vector<std::vector<std::complex<double>>> e1, h1, e2, h2;
    double sign = 1.0;
  };

  // Tangential E components live on the flux plane; the matching tangential
  // H components are interpolated onto it along the plane normal.
  void accumulate_flux(FluxAccum& acc, double te, double th) {
    const auto& p = acc.plane;
    auto lo = p.lo, hi = p.hi;
    lo[p.axis] = hi[p.axis] = p.index;
    Component ec1, hc1, ec2 = Component::Ex, hc2 = Component::Hx;
    bool have2 = false;
    if (domain_.is2d()) {
      if (domain_.polarization == Polarization2D::TM) {
        ec1 = Component::Ez;
        hc1 = p.axis == 0 ? Component::Hy : Component::Hx;
      } else {
        ec1 = p.axis == 0 ? Component::Ey : Component::Ex;
        hc1 = Component::Hz;
      }
    } else {
      const int b = (p.axis + 1) % 3, c = (p.axis + 2) % 3;
      const Component e_by_axis[3] = {Component::Ex, Component::Ey, Component::Ez};
      const Component h_by_axis[3] = {Component::Hx, Component::Hy, Component::Hz};
      ec1 = e_by_axis[b];
      hc1 = h_by_axis[c];
      ec2 = e_by_axis[c];
      hc2 = h_by_axis[b];
      have2 = true;
    }
    const auto& fe1 = fields_[static_cast<int>(ec1)];
    const auto& fh1 = fields_[static_cast<int>(hc1)];
    const auto& fe2 = fields_[static_cast<int>(ec2)];
    const auto& fh2 = fields_[static_cast<int>(hc2)];

    auto h_interp = [&](const std::vector<double>& f, int i, int j, int k) {
      int cm[3] = {i, j, k};
      cm[p.axis] -= 1;
      return 0.5 * (f[idx(cm[0], cm[1], cm[2])] + f[idx(i, j, k)]);
    };

    for (std::size_t li = 0; li < p.wavelengths_um.size(); ++li) {
      const double w = 2.0 * pi / p.wavelengths_um[li];
      const std::complex<double> phe(std::cos(w * te), std::sin(w * te));
      const std::complex<double> phh(std::cos(w * th), std::sin(w * th));
      std::size_t out = 0;
      for (int k = lo[2]; k <= hi[2]; ++k)
        for (int j = lo[1]; j <= hi[1]; ++j)
          for (int i = lo[0]; i <= hi[0]; ++i, ++out) {
            const std::size_t c = idx(i, j, k);
            acc.e1[li][out] += fe1[c] * phe;
            acc.h1[li][out] += h_interp(fh1, i, j, k) * phh;
            if (have2) {
              acc.e2[li][out] += fe2[c] * phe;
              acc.h2[li][out] += h_interp(fh2, i, j, k) * phh;
            }
          }
    }
  }

  void check_stability() {
    const double limit = 1e6 * std::max(source_amplitude_scale_, 1e-300);
    double peak = 0.0;
    for (int ci : active_components_) {
      const auto comp = static_cast<Component>(ci);
      if (comp == Component::Hx || comp == Component::Hy || comp == Component::Hz)
        continue;  // E magnitude is the reference for the source amplitude
      for (double v : fields_[ci]) {
        if (!std::isfinite(v)) throw InstabilityError(step_, v);
        peak = std::max(peak, std::fabs(v));
      }
    }
    if (!(peak <= limit)) throw InstabilityError(step_, peak);
  }

  SimulationDomain domain_;
  int nx_, ny_, nz_;
  double dt_;
  detail::WorkerPool pool_;
  bool split_x_ = false;
  std::vector<std::array<int, 2>> row_ranges_;
  std::vector<std::vector<double>> fields_;  // indexed by Component
  std::vector<int> active_components_;
  std::vector<std::vector<double>> coef_;  // dt/eps per E component
  std::vector<std::vector<double>> psi_;   // CPML recursive accumulators
  detail::AxisPml pml_[3];
  std::vector<detail::PreparedSource> sources_;
  double source_amplitude_scale_ = 0.0;
  std::vector<TimeProbe> probes_;
  std::vector<std::vector<double>> probe_series_;
  std::vector<DftAccum> dft_;
  std::vector<FluxAccum> flux_;
  long step_ = 0;
  WarningList warnings_;
};

struct MonitorSet {
  std::vector<TimeProbe> probes;
  std::vector<DftRegion> dft;
  std::vector<FluxPlane> flux;
};

struct RunPlan {
  long steps = 0;     // explicit step count, or...
  double time = 0.0;  // ...physical duration in um/c (used when steps == 0)
  int workers = 0;    // 0 -> RESFORGE_THREADS / hardware
};

inline FieldRecord run(const SimulationDomain& domain, const std::vector<SourceSpec>& sources,
                       const MonitorSet& monitors, const RunPlan& plan) {
  Simulation sim(domain, plan.workers);
  for (const auto& s : sources) sim.add_source(s);
  for (const auto& p : monitors.probes) sim.add_probe(p);
  for (const auto& d : monitors.dft) sim.add_dft(d);
  for (const auto& f : monitors.flux) sim.add_flux(f);
  const long steps = plan.steps > 0
                         ? plan.steps
                         : static_cast<long>(std::llround(plan.time / sim.dt()));
  if (steps < 1) throw DomainError("run: plan must cover at least one step");
  const double cutoff = sim.source_cutoff_time();
  if (std::isfinite(cutoff) && static_cast<double>(steps) * sim.dt() < cutoff)
    throw DomainError("run: duration shorter than the source turn-off time");
  sim.run(steps);
  return sim.finish();
}

struct RingdownResult {
  std::vector<double> series;  // post-settle probe samples
  double dt = 0.0;             // sample interval
  double start_time = 0.0;     // time of the first returned sample
};

// Run with a pulsed source and return the probe series after both the source
// turn-off and `settle_steps` have passed.
inline RingdownResult ringdown_probe(const SimulationDomain& domain,
                                     const std::vector<SourceSpec>& sources,
                                     const TimeProbe& probe, long settle_steps, long total_steps,
                                     int workers = 0) {
  Simulation sim(domain, workers);
  for (const auto& s : sources) sim.add_source(s);
  const int pi = sim.add_probe(probe);
  if (settle_steps >= total_steps)
    throw DomainError("ringdown_probe: settle_steps exceeds the run duration");
  const double cutoff = sim.source_cutoff_time();
  if (!std::isfinite(cutoff)) throw DomainError("ringdown_probe: needs pulsed sources");
  const long source_steps = static_cast<long>(std::ceil(cutoff / sim.dt()));
  const long start = std::max(settle_steps, source_steps);
  if (start >= total_steps)
    throw DomainError("ringdown_probe: run duration ends before the source turns off");
  sim.run(total_steps);
  const auto rec = sim.finish();
  RingdownResult out;
  out.dt = rec.dt;
  out.start_time = static_cast<double>(start + 1) * rec.dt;
  out.series.assign(rec.probe_series[pi].begin() + start, rec.probe_series[pi].end());
  return out;
}

}  // namespace resforge::fdtd
