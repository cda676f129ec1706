#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <sstream>

#include "resforge/analysis.hpp"
#include "resforge/spectrum.hpp"

using namespace resforge;
using namespace resforge::analysis;

TEST_CASE("noiseless Table-1 device recovered to 1e-6") {
  // 710.341 nm, Q = 9,070
  const double lam0 = 0.710341;
  const double q = 9070.0;
  const auto s = synth_lorentzian_spectrum(lam0, q, 401, 10.0, 0.8, 0.05);
  const auto fit = fit_lorentzian(s, s.wavelength_um.front(), s.wavelength_um.back());
  CHECK(fit.lambda0_um == Catch::Approx(lam0).epsilon(1e-6));
  CHECK(fit.q == Catch::Approx(q).epsilon(1e-6));
  CHECK(fit.fwhm_um == Catch::Approx(lam0 / q).epsilon(1e-6));
  CHECK(fit.amplitude == Catch::Approx(0.8).epsilon(1e-6));
  CHECK(fit.baseline == Catch::Approx(0.05).margin(1e-6));
  CHECK(fit.rms_residual < 1e-9);
  CHECK_FALSE(fit.lower_bound_only);
}

TEST_CASE("Q = 33,260 with 5% multiplicative noise recovered within 2%") {
  const double lam0 = 0.700;
  const double q = 33260.0;
  auto s = synth_lorentzian_spectrum(lam0, q, 601, 8.0, 1.0, 0.02);
  s = with_multiplicative_noise(std::move(s), 0.05, 20220137);
  const auto fit = fit_lorentzian(s, s.wavelength_um.front(), s.wavelength_um.back());
  CHECK(fit.q == Catch::Approx(q).epsilon(0.02));
  CHECK(fit.lambda0_um == Catch::Approx(lam0).epsilon(1e-5));
}

TEST_CASE("dip orientation fits inverted lines") {
  const auto s = synth_lorentzian_spectrum(0.737, 4400.0, 301, 8.0, 0.9, 1.0,
                                           LineOrientation::Dip);
  const auto fit = fit_lorentzian(s, s.wavelength_um.front(), s.wavelength_um.back(),
                                  LineOrientation::Dip);
  CHECK(fit.q == Catch::Approx(4400.0).epsilon(1e-6));
  CHECK(fit.amplitude < 0.0);
}

TEST_CASE("flat spectrum has no extremum") {
  Spectrum s;
  for (int i = 0; i < 64; ++i) s.push_back(0.7 + 1e-4 * i, 1.0);
  CHECK_THROWS_AS(fit_lorentzian(s, 0.7, 0.71), DomainError);
}

TEST_CASE("multiple peaks in the window are rejected") {
  Spectrum s;
  const int n = 401;
  for (int i = 0; i < n; ++i) {
    const double lam = 0.700 + 0.0001 * i;
    const double y = lorentzian(lam, 0.710, 0.0002, 1.0, 0.01) +
                     lorentzian(lam, 0.730, 0.0002, 1.0, 0.0);
    s.push_back(lam, y);
  }
  CHECK_THROWS_AS(fit_lorentzian(s, s.wavelength_um.front(), s.wavelength_um.back()),
                  DomainError);
}

TEST_CASE("fit needs at least 8 samples") {
  Spectrum s;
  for (int i = 0; i < 6; ++i) s.push_back(0.7 + 1e-4 * i, 1.0);
  CHECK_THROWS_AS(fit_lorentzian(s, 0.69, 0.71), DomainError);
}

TEST_CASE("fit equivariance under intensity scaling and wavelength shift") {
  const double lam0 = 0.700;
  auto s = synth_lorentzian_spectrum(lam0, 12000.0, 257, 8.0, 0.7, 0.1);
  const auto base = fit_lorentzian(s, s.wavelength_um.front(), s.wavelength_um.back());

  SECTION("intensity scale") {
    Spectrum scaled = s;
    for (double& v : scaled.intensity) v *= 3.5;
    const auto fit = fit_lorentzian(scaled, s.wavelength_um.front(), s.wavelength_um.back());
    CHECK(fit.lambda0_um == Catch::Approx(base.lambda0_um).epsilon(1e-9));
    CHECK(fit.fwhm_um == Catch::Approx(base.fwhm_um).epsilon(1e-9));
    CHECK(fit.q == Catch::Approx(base.q).epsilon(1e-9));
    CHECK(fit.amplitude == Catch::Approx(3.5 * base.amplitude).epsilon(1e-9));
    CHECK(fit.baseline == Catch::Approx(3.5 * base.baseline).epsilon(1e-8));
  }

  SECTION("wavelength shift") {
    const double delta = 0.013;
    Spectrum shifted = s;
    for (double& lam : shifted.wavelength_um) lam += delta;
    const auto fit = fit_lorentzian(shifted, s.wavelength_um.front() + delta,
                                    s.wavelength_um.back() + delta);
    CHECK(fit.lambda0_um == Catch::Approx(base.lambda0_um + delta).epsilon(1e-10));
    CHECK(fit.fwhm_um == Catch::Approx(base.fwhm_um).epsilon(1e-8));
  }
}

TEST_CASE("under-resolved linewidth flagged as lower bound") {
  // FWHM well below the sample spacing
  const double lam0 = 0.606;
  const double q = 600000.0;
  Spectrum s;
  const int n = 101;
  const double span = 0.002;
  for (int i = 0; i < n; ++i) {
    const double lam = lam0 - span / 2 + span * i / (n - 1);
    s.push_back(lam, lorentzian(lam, lam0, lam0 / q, 1.0, 0.01));
  }
  const auto fit = fit_lorentzian(s, s.wavelength_um.front(), s.wavelength_um.back());
  CHECK(fit.lower_bound_only);
}

TEST_CASE("ensemble statistics") {
  SECTION("fixed-seed Table-1 row 1 ensemble") {
    const auto fits = synth_ensemble(606.499, 0.623, 10, 606499, 6040.0, true);
    const auto stats = ensemble_stats(fits);
    CHECK(stats.n_devices == 10);
    CHECK(std::fabs(stats.mean_lambda0_nm - 606.499) < 0.4);
    CHECK(stats.std_lambda0_nm > 0.0);
    CHECK(std::fabs(stats.std_lambda0_nm - 0.623) < 0.5 * 0.623 + 0.2);
    CHECK(stats.q_lower_bound);
    const auto table = format_stats_table({stats});
    CHECK(table.find("lower bounds") != std::string::npos);
  }

  SECTION("single fit uses the n = 1 convention") {
    ResonanceFit f;
    f.lambda0_um = 0.7;
    f.q = 1000;
    const auto stats = ensemble_stats({f});
    CHECK(stats.std_lambda0_nm == 0.0);
    CHECK(stats.single_sample);
  }

  SECTION("identical fits give exactly zero spread") {
    ResonanceFit f;
    f.lambda0_um = 0.655804;
    f.q = 7210;
    const auto stats = ensemble_stats({f, f, f, f});
    CHECK(stats.std_lambda0_nm == 0.0);
    CHECK(stats.mean_q == 7210.0);
    CHECK_FALSE(stats.q_lower_bound);
  }

  SECTION("permutation invariance") {
    auto fits = synth_ensemble(655.804, 0.561, 10, 42, 7210.0, false);
    const auto a = ensemble_stats(fits);
    std::reverse(fits.begin(), fits.end());
    std::swap(fits[2], fits[7]);
    const auto b = ensemble_stats(fits);
    CHECK(a.mean_lambda0_nm == b.mean_lambda0_nm);
    CHECK(a.std_lambda0_nm == Catch::Approx(b.std_lambda0_nm).epsilon(1e-12));
  }

  SECTION("empty input rejected") {
    CHECK_THROWS_AS(ensemble_stats({}), DomainError);
  }
}

TEST_CASE("scattering loss scaling") {
  CHECK(scattering_loss_ratio(1.0, 602.0, 1.0, 737.0) ==
        Catch::Approx(std::pow(737.0 / 602.0, 3)).epsilon(1e-12));
  CHECK(std::fabs(scattering_loss_ratio(1.0, 602.0, 1.0, 737.0) - 1.835) < 1e-3);
  CHECK(scattering_loss_ratio(2.0, 700.0, 1.0, 700.0) == Catch::Approx(4.0));
  CHECK(scattering_loss_ratio(0.3, 640.0, 0.3, 640.0) == 1.0);
  const double fwd = scattering_loss_ratio(1.3, 602.0, 0.8, 737.0);
  const double rev = scattering_loss_ratio(0.8, 737.0, 1.3, 602.0);
  CHECK(fwd * rev == Catch::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(scattering_loss_ratio(-1.0, 602.0, 1.0, 737.0), DomainError);
}

TEST_CASE("process planner arithmetic") {
  const auto plan = process_plan(250.0, 150.0, 500.0, 50.0);
  CHECK(plan.ald_cycles == 6667);
  CHECK(plan.pmma_descum_removal_nm == Catch::Approx(7.5));
  CHECK(plan.tio2_etch_time_min_s == Catch::Approx(150.0 / 1.7));
  CHECK(plan.tio2_etch_time_max_s == Catch::Approx(150.0 / 1.5));
  CHECK(plan.membrane_etch_time_min_s == Catch::Approx(450.0 / 1.4).epsilon(1e-12));
  CHECK(plan.membrane_etch_time_max_s == Catch::Approx(375.0).epsilon(1e-12));
  CHECK(plan.membrane_etch_time_min_s == Catch::Approx(321.4).margin(0.05));

  // exact multiples of the per-cycle rate do not round up an extra cycle
  CHECK(process_plan(0.0, 0.6).ald_cycles == 10);

  CHECK_THROWS_AS(process_plan(-1.0, 0.0), DomainError);
  CHECK_THROWS_AS(process_plan(100.0, 0.0, 50.0, 500.0), DomainError);
}

TEST_CASE("spectrum CSV ingestion") {
  std::istringstream in(
      "# transmission scan\n"
      "wavelength_nm,intensity\n"
      "709.50,0.91\n"
      "709.60,0.87\n"
      "# mid comment\n"
      "709.70,0.12\n"
      "709.80,0.86\n");
  const auto s = read_spectrum_csv(in);
  REQUIRE(s.size() == 4);
  CHECK(s.wavelength_um[0] == Catch::Approx(0.7095));
  CHECK(s.intensity[2] == Catch::Approx(0.12));

  std::istringstream bad("wavelength_nm,intensity\n700,1\n699,1\n698,1\n");
  CHECK_THROWS_AS(read_spectrum_csv(bad), DomainError);
}

TEST_CASE("deterministic rng streams are seed-stable") {
  DeterministicRng a(1234), b(1234), c(99);
  for (int i = 0; i < 100; ++i) {
    const double va = a.normal();
    CHECK(va == b.normal());
    (void)c.normal();
  }
}
