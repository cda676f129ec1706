#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "resforge/fdtd.hpp"
#include "resforge/fft.hpp"
#include "resforge/resonator.hpp"

using namespace resforge;
using namespace resforge::fdtd;

namespace {

geometry::PermittivityGrid vacuum_grid(int nx, int ny, double dx) {
  geometry::PermittivityGrid g;
  g.dx = dx;
  g.dims = {nx, ny, 1};
  g.eps.assign(g.n_cells(), 1.0);
  return g;
}

SimulationDomain quasi_1d_domain(int nx, double dx) {
  SimulationDomain d;
  d.grid = vacuum_grid(nx, 1, dx);
  d.boundaries = {Boundary::Pml, Boundary::Periodic, Boundary::Periodic};
  return d;
}

SourceSpec dipole(int i, int j, double lambda0, double fbw, double amp = 1.0) {
  SourceSpec s;
  s.kind = SourceSpec::Kind::DipoleSoft;
  s.component = Component::Ez;
  s.position = {i, j, 0};
  s.pulse.center_wavelength_um = lambda0;
  s.pulse.fractional_bandwidth = fbw;
  s.pulse.amplitude = amp;
  return s;
}

// quadratic interpolation of the peak location of a sampled series
double peak_time(const std::vector<double>& s, double dt) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (std::fabs(s[i]) > std::fabs(s[k])) k = i;
  if (k == 0 || k + 1 == s.size()) return k * dt;
  const double a = std::fabs(s[k - 1]), b = std::fabs(s[k]), c = std::fabs(s[k + 1]);
  const double denom = a - 2 * b + c;
  const double shift = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
  return (static_cast<double>(k) + shift) * dt;
}

}  // namespace

TEST_CASE("null evolution: zero fields stay zero") {
  SimulationDomain d = quasi_1d_domain(200, 0.02);
  Simulation sim(d, 1);
  sim.run(200);
  for (double v : sim.field(Component::Ez)) CHECK(v == 0.0);
  for (double v : sim.field(Component::Hy)) CHECK(v == 0.0);
}

TEST_CASE("vacuum pulse travels at c = 1") {
  const double dx = 0.02;  // 35 px per wavelength at 0.7 um
  SimulationDomain d = quasi_1d_domain(1200, dx);
  Simulation sim(d, 1);
  sim.add_source(dipole(200, 0, 0.7, 0.3));
  const int p1 = sim.add_probe({{500, 0, 0}, Component::Ez});
  const int p2 = sim.add_probe({{900, 0, 0}, Component::Ez});
  sim.run(2600);  // source delay + transit to the far probe
  const auto rec = sim.finish();
  const double t1 = peak_time(rec.probe_series[p1], rec.dt);
  const double t2 = peak_time(rec.probe_series[p2], rec.dt);
  const double speed = 400 * dx / (t2 - t1);
  CHECK(speed == Catch::Approx(1.0).epsilon(0.01));
}

TEST_CASE("CFL violation is detected as an instability") {
  SimulationDomain d;
  d.grid = vacuum_grid(120, 120, 0.02);
  d.courant = 1.05 / std::sqrt(2.0);
  const auto warnings = d.validate();
  CHECK_FALSE(warnings.empty());
  Simulation sim(d, 1);
  sim.add_source(dipole(60, 60, 0.7, 0.2));
  CHECK_THROWS_AS(sim.run(4000), InstabilityError);
}

TEST_CASE("DFT fields are linear in the source amplitude") {
  auto run_amp = [](double amp) {
    SimulationDomain d = quasi_1d_domain(400, 0.02);
    MonitorSet mon;
    DftRegion r;
    r.lo = {250, 0, 0};
    r.hi = {260, 0, 0};
    r.components = {Component::Ez, Component::Hy};
    r.wavelengths_um = {0.68, 0.70, 0.72};
    mon.dft.push_back(r);
    RunPlan plan;
    plan.steps = 3000;
    plan.workers = 1;
    return run(d, {dipole(100, 0, 0.7, 0.25, amp)}, mon, plan);
  };
  const auto a = run_amp(1.0);
  const auto b = run_amp(2.0);
  for (std::size_t ci = 0; ci < 2; ++ci)
    for (std::size_t li = 0; li < 3; ++li)
      for (std::size_t c = 0; c < a.dft[0].data[ci][li].size(); ++c) {
        const auto va = a.dft[0].data[ci][li][c];
        const auto vb = b.dft[0].data[ci][li][c];
        CHECK(std::abs(vb - 2.0 * va) <= 1e-12 * std::abs(vb));
      }
}

TEST_CASE("bitwise determinism across worker counts") {
  auto run_workers = [](int workers) {
    SimulationDomain d;
    d.grid = vacuum_grid(220, 64, 0.02);
    // a lossless dielectric block in the middle
    for (int j = 20; j < 44; ++j)
      for (int i = 100; i < 140; ++i) d.grid.at(i, j) = 4.0;
    MonitorSet mon;
    mon.probes.push_back({{160, 32, 0}, Component::Ez});
    FluxPlane f;
    f.axis = 0;
    f.index = 180;
    f.lo = {0, 14, 0};
    f.hi = {0, 50, 0};
    f.wavelengths_um = {0.66, 0.70, 0.74};
    mon.flux.push_back(f);
    RunPlan plan;
    plan.steps = 1500;
    plan.workers = workers;
    return run(d, {dipole(40, 32, 0.7, 0.3)}, mon, plan);
  };
  const auto r1 = run_workers(1);
  const auto r2 = run_workers(2);
  const auto r4 = run_workers(4);
  for (std::size_t i = 0; i < r1.probe_series[0].size(); ++i) {
    CHECK(r1.probe_series[0][i] == r2.probe_series[0][i]);
    CHECK(r1.probe_series[0][i] == r4.probe_series[0][i]);
  }
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(r1.flux[0].flux[l] == r2.flux[0].flux[l]);
    CHECK(r1.flux[0].flux[l] == r4.flux[0].flux[l]);
  }
}

TEST_CASE("PEC box conserves the discrete field energy") {
  SimulationDomain d;
  d.grid = vacuum_grid(81, 81, 0.05);
  d.boundaries = {Boundary::Pec, Boundary::Pec, Boundary::Pec};
  Simulation sim(d, 1);
  sim.add_source(dipole(27, 31, 2.0, 0.3));
  const long src_steps = static_cast<long>(sim.source_cutoff_time() / sim.dt()) + 10;
  sim.run(src_steps);

  auto energy_next = [&]() {
    // product-form energy: E at step n, H at the surrounding half steps
    const auto ez = sim.field(Component::Ez);
    const auto hx_prev = sim.field(Component::Hx);
    const auto hy_prev = sim.field(Component::Hy);
    sim.step();
    const auto& hx = sim.field(Component::Hx);
    const auto& hy = sim.field(Component::Hy);
    double u = 0.0;
    const auto& eps = sim.domain().grid.eps;
    for (std::size_t c = 0; c < ez.size(); ++c)
      u += eps[c] * ez[c] * ez[c] + hx_prev[c] * hx[c] + hy_prev[c] * hy[c];
    return 0.5 * u;
  };

  const double u0 = energy_next();
  REQUIRE(u0 > 0.0);
  double u_min = u0, u_max = u0;
  for (int block = 0; block < 10; ++block) {
    sim.run(99);
    const double u = energy_next();
    u_min = std::min(u_min, u);
    u_max = std::max(u_max, u);
  }
  CHECK((u_max - u_min) / u0 < 1e-6);
}

TEST_CASE("PEC box eigenfrequency matches the analytic (1,1) mode") {
  const int n = 41;
  const double dx = 0.05;
  const double box = (n - 1) * dx;  // the PEC ring sits on the outermost nodes
  SimulationDomain d;
  d.grid = vacuum_grid(n, n, dx);
  d.boundaries = {Boundary::Pec, Boundary::Pec, Boundary::Pec};

  const double omega_analytic = pi * std::sqrt(2.0) / box;
  const double lam11 = 2.0 * pi / omega_analytic;

  Simulation sim(d, 1);
  sim.add_source(dipole(13, 17, lam11, 0.25));
  const int probe = sim.add_probe({{29, 23, 0}, Component::Ez});
  sim.run(40000);
  const auto rec = sim.finish();

  const long start = static_cast<long>(sim.source_cutoff_time() / rec.dt) + 1;
  std::vector<double> tail(rec.probe_series[probe].begin() + start,
                           rec.probe_series[probe].end());
  for (std::size_t i = 0; i < tail.size(); ++i)
    tail[i] *= 0.5 - 0.5 * std::cos(2.0 * pi * i / (tail.size() - 1));
  const auto spec = ringdown_power_spectrum(tail, rec.dt, lam11 * 0.7, lam11 * 1.4, 8);
  std::size_t k = 0;
  for (std::size_t i = 0; i < spec.size(); ++i)
    if (spec.intensity[i] > spec.intensity[k]) k = i;
  const double omega_measured = 2.0 * pi / spec.wavelength_um[k];
  CHECK(omega_measured == Catch::Approx(omega_analytic).epsilon(0.005));
}

TEST_CASE("PML absorbs a normally incident pulse") {
  const double dx = 0.02;
  const int nx = 2200;
  SimulationDomain d = quasi_1d_domain(nx, dx);
  d.pml.thickness = 12;
  d.pml.order = 3.0;
  Simulation sim(d, 1);
  sim.add_source(dipole(400, 0, 0.7, 0.3));
  const int probe = sim.add_probe({{nx - 40, 0, 0}, Component::Ez});
  const double t_pass = (nx - 40 - 400) * dx + sim.source_cutoff_time();
  const long steps_pass = static_cast<long>(t_pass / sim.dt());
  sim.run(steps_pass + 3000);
  const auto rec = sim.finish();
  const auto& series = rec.probe_series[probe];

  double e_inc = 0.0, e_ref = 0.0;
  for (long i = 0; i < steps_pass; ++i) e_inc += series[i] * series[i];
  for (std::size_t i = steps_pass; i < series.size(); ++i) e_ref += series[i] * series[i];
  REQUIRE(e_inc > 0.0);
  CHECK(e_ref / e_inc < 1e-4);
}

TEST_CASE("ringdown of an empty domain decays to nothing") {
  SimulationDomain d = quasi_1d_domain(800, 0.02);
  SourceSpec s = dipole(400, 0, 0.7, 0.3);
  RingdownResult r = ringdown_probe(d, {s}, {{420, 0, 0}, Component::Ez}, 0, 9000, 1);

  SimulationDomain d2 = quasi_1d_domain(800, 0.02);
  Simulation sim(d2, 1);
  sim.add_source(s);
  const int p = sim.add_probe({{420, 0, 0}, Component::Ez});
  sim.run(9000);
  const auto rec = sim.finish();
  double full_peak = 0.0;
  for (double v : rec.probe_series[p]) full_peak = std::max(full_peak, std::fabs(v));

  double tail_peak = 0.0;
  for (std::size_t i = r.series.size() / 2; i < r.series.size(); ++i)
    tail_peak = std::max(tail_peak, std::fabs(r.series[i]));
  CHECK(tail_peak < 1e-6 * full_peak);
}

TEST_CASE("ringdown_probe input validation") {
  SimulationDomain d = quasi_1d_domain(300, 0.02);
  SourceSpec s = dipole(150, 0, 0.7, 0.3);
  CHECK_THROWS_AS(ringdown_probe(d, {s}, {{160, 0, 0}, Component::Ez}, 5000, 4000, 1),
                  DomainError);
  CHECK_THROWS_AS(ringdown_probe(d, {s}, {{160, 0, 0}, Component::Ez}, 0, 50, 1), DomainError);
}

TEST_CASE("monitor and source placement validation") {
  SimulationDomain d = quasi_1d_domain(300, 0.02);
  Simulation sim(d, 1);
  CHECK_THROWS_AS(sim.add_probe({{400, 0, 0}, Component::Ez}), DomainError);
  CHECK_THROWS_AS(sim.add_source(dipole(5, 0, 0.7, 0.3)), DomainError);  // inside PML
  DftRegion r;
  r.lo = {10, 0, 0};
  r.hi = {5, 0, 0};
  r.components = {Component::Ez};
  r.wavelengths_um = {0.7};
  CHECK_THROWS_AS(sim.add_dft(r), DomainError);
}

TEST_CASE("coarse-grid wavelengths trigger a resolution warning") {
  SimulationDomain d = quasi_1d_domain(300, 0.05);
  for (auto& e : d.grid.eps) e = 2.35 * 2.35;
  Simulation sim(d, 1);
  DftRegion r;
  r.lo = {100, 0, 0};
  r.hi = {100, 0, 0};
  r.components = {Component::Ez};
  r.wavelengths_um = {0.70};  // about 6 px per wavelength in the material
  sim.add_dft(r);
  CHECK_FALSE(sim.warnings().empty());
}

TEST_CASE("flux through nested closed boxes agrees (energy conservation)") {
  SimulationDomain d;
  d.grid = vacuum_grid(180, 180, 0.02);
  Simulation sim(d, 1);
  sim.add_source(dipole(90, 90, 0.7, 0.25));
  const std::vector<double> lams = {0.68, 0.70, 0.72};

  auto add_box = [&](int half) {
    std::vector<int> ids;
    for (int axis : {0, 1}) {
      for (int side : {-1, +1}) {
        FluxPlane f;
        f.axis = axis;
        f.index = 90 + side * half;
        f.lo = {90 - half, 90 - half, 0};
        f.hi = {90 + half, 90 + half, 0};
        f.wavelengths_um = lams;
        ids.push_back(sim.add_flux(f));
      }
    }
    return ids;  // [x-lo, x-hi, y-lo, y-hi]
  };
  const auto inner = add_box(25);
  const auto outer = add_box(50);
  sim.run(4000);
  const auto rec = sim.finish();

  auto outward = [&](const std::vector<int>& ids) {
    std::vector<double> total(lams.size(), 0.0);
    for (std::size_t l = 0; l < lams.size(); ++l) {
      total[l] -= rec.flux[ids[0]].flux[l];  // low-x side: outward is -x
      total[l] += rec.flux[ids[1]].flux[l];
      total[l] -= rec.flux[ids[2]].flux[l];
      total[l] += rec.flux[ids[3]].flux[l];
    }
    return total;
  };
  const auto p_in = outward(inner);
  const auto p_out = outward(outer);
  for (std::size_t l = 0; l < lams.size(); ++l) {
    CHECK(p_in[l] > 0.0);
    CHECK(p_out[l] == Catch::Approx(p_in[l]).epsilon(0.01));
  }
}

TEST_CASE("TE polarization conserves energy in a PEC box") {
  SimulationDomain d;
  d.grid = vacuum_grid(61, 61, 0.05);
  d.polarization = Polarization2D::TE;
  d.boundaries = {Boundary::Pec, Boundary::Pec, Boundary::Pec};
  Simulation sim(d, 1);
  SourceSpec s;
  s.kind = SourceSpec::Kind::DipoleSoft;
  s.component = Component::Hz;
  s.position = {21, 25, 0};
  s.pulse.center_wavelength_um = 1.5;
  s.pulse.fractional_bandwidth = 0.3;
  sim.add_source(s);
  sim.run(static_cast<long>(sim.source_cutoff_time() / sim.dt()) + 20);

  auto energy_next = [&]() {
    const auto hz_prev = sim.field(Component::Hz);
    const auto ex = sim.field(Component::Ex);
    const auto ey = sim.field(Component::Ey);
    sim.step();
    const auto& hz = sim.field(Component::Hz);
    double u = 0.0;
    for (std::size_t c = 0; c < hz.size(); ++c)
      u += ex[c] * ex[c] + ey[c] * ey[c] + hz_prev[c] * hz[c];
    return 0.5 * u;
  };
  const double u0 = energy_next();
  REQUIRE(u0 > 0.0);
  double u_min = u0, u_max = u0;
  for (int block = 0; block < 10; ++block) {
    sim.run(99);
    const double u = energy_next();
    u_min = std::min(u_min, u);
    u_max = std::max(u_max, u);
  }
  CHECK((u_max - u_min) / u0 < 1e-6);
}

TEST_CASE("3D vacuum pulse propagates at c = 1 along the axis") {
  SimulationDomain d;
  d.grid.dx = 0.04;
  d.grid.dims = {220, 7, 7};
  d.grid.eps.assign(d.grid.n_cells(), 1.0);
  d.boundaries = {Boundary::Pml, Boundary::Periodic, Boundary::Periodic};
  Simulation sim(d, 1);
  SourceSpec s;
  s.kind = SourceSpec::Kind::PlaneWave;
  s.component = Component::Ey;
  s.position = {30, 0, 3};
  s.span_axis = 1;
  s.span_count = 7;
  s.pulse.center_wavelength_um = 1.2;
  s.pulse.fractional_bandwidth = 0.3;
  sim.add_source(s);
  const int p1 = sim.add_probe({{80, 3, 3}, Component::Ey});
  const int p2 = sim.add_probe({{180, 3, 3}, Component::Ey});
  sim.run(2500);
  const auto rec = sim.finish();
  const double t1 = peak_time(rec.probe_series[p1], rec.dt);
  const double t2 = peak_time(rec.probe_series[p2], rec.dt);
  CHECK(100 * d.grid.dx / (t2 - t1) == Catch::Approx(1.0).epsilon(0.02));
}

TEST_CASE("checkpoint round-trip restores the exact state") {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "resforge_ckpt_test.bin";

  SimulationDomain d = quasi_1d_domain(600, 0.02);
  for (int i = 300; i < 350; ++i) d.grid.eps[i] = 2.1 * 2.1;

  Simulation a(d, 1);
  a.add_source(dipole(100, 0, 0.7, 0.3));
  a.run(400);
  a.save_checkpoint(path.string());
  a.run(300);

  Simulation b(d, 1);
  b.add_source(dipole(100, 0, 0.7, 0.3));
  b.load_checkpoint(path.string());
  CHECK(b.step_count() == 400);
  b.run(300);

  const auto& ea = a.field(Component::Ez);
  const auto& eb = b.field(Component::Ez);
  for (std::size_t c = 0; c < ea.size(); ++c) CHECK(ea[c] == eb[c]);
  fs::remove(path);

  SECTION("mismatched domain is rejected") {
    SimulationDomain other = quasi_1d_domain(500, 0.02);
    Simulation c(other, 1);
    a.save_checkpoint(path.string());
    CHECK_THROWS_AS(c.load_checkpoint(path.string()), DomainError);
    fs::remove(path);
  }
}

TEST_CASE("slab reflectance matches the transfer matrix (quick check)") {
  // air | TiO2 250 nm | silica substrate; normal incidence via a quasi-1D run
  const double dx = 0.0125;
  const int pml = 12;
  const int n_tio2 = 20;  // 250 nm
  const int i_src = pml + 40;
  const int i_refl = pml + 100;
  const int i_stack = pml + 260;
  const int i_trans = i_stack + n_tio2 + 120;
  const int nx = i_trans + 160 + pml;

  auto make_domain = [&](bool with_stack) {
    SimulationDomain d = quasi_1d_domain(nx, dx);
    if (with_stack) {
      for (int i = 0; i < n_tio2; ++i) d.grid.eps[i_stack + i] = 2.35 * 2.35;
      for (int i = i_stack + n_tio2; i < nx; ++i) d.grid.eps[i] = 1.45 * 1.45;
    }
    return d;
  };
  std::vector<double> lams;
  for (int k = 0; k < 21; ++k) lams.push_back(0.64 + 0.006 * k);

  MonitorSet mon;
  FluxPlane fr;
  fr.axis = 0;
  fr.index = i_refl;
  fr.lo = {0, 0, 0};
  fr.hi = {0, 0, 0};
  fr.wavelengths_um = lams;
  FluxPlane ft = fr;
  ft.index = i_trans;
  mon.flux = {fr, ft};

  SourceSpec src = dipole(i_src, 0, 0.70, 0.35);
  RunPlan plan;
  plan.steps = 26000;
  plan.workers = 1;

  auto vac = make_domain(false);
  const auto ref_rec = run(vac, {src}, mon, plan);
  auto dev = make_domain(true);
  const auto dev_rec = run(dev, {src}, mon, plan);

  const auto p_inc = ref_rec.flux[1].flux;  // incident power at the far plane
  const auto p_trans = dev_rec.flux[1].flux;
  const auto p_refl = Simulation::compute_flux(dev_rec.flux[0], &ref_rec.flux[0]);

  double rms = 0.0;
  for (std::size_t l = 0; l < lams.size(); ++l) {
    const auto oracle = resonator::transfer_matrix(1.0, {{2.35, n_tio2 * dx}}, 1.45, lams[l]);
    const double r_fdtd = -p_refl[l] / p_inc[l];
    const double t_fdtd = p_trans[l] / p_inc[l];
    rms += std::pow(r_fdtd - oracle.reflectance, 2);
    CHECK(t_fdtd == Catch::Approx(oracle.transmittance).epsilon(0.02));
  }
  rms = std::sqrt(rms / lams.size());
  CHECK(rms < 0.01);
}
