#pragma once

// Measurement-side analysis: Lorentzian resonance fitting (damped
// least-squares, 4 parameters), ensemble statistics, the sigma^2/lambda^3
// scattering-loss scaling and the fabrication process planner.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "resforge/common.hpp"
#include "resforge/spectrum.hpp"

namespace resforge::analysis {

struct ResonanceFit {
  double lambda0_um = 0.0;
  double fwhm_um = 0.0;
  double q = 0.0;
  double amplitude = 0.0;  // negative for dips
  double baseline = 0.0;
  double rms_residual = 0.0;
  bool lower_bound_only = false;  // linewidth under-resolved by the sampling
  int iterations = 0;
};

enum class LineOrientation { Peak, Dip };

inline double lorentzian(double lam, double lam0, double gamma, double amp, double base) {
  const double hw = gamma / 2.0;
  const double d = lam - lam0;
  return base + amp * hw * hw / (d * d + hw * hw);
}

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) throw DomainError("median of empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
    m = 0.5 * (m + v[mid - 1]);
  }
  return m;
}

// Robust noise floor: 1.4826 * MAD of the linearly detrended window.
inline double noise_floor(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = y.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double det = n * sxx - sx * sx;
  const double b = det != 0.0 ? (n * sxy - sx * sy) / det : 0.0;
  const double a = (sy - b * sx) / n;
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = y[i] - (a + b * x[i]);
  const double med = median(d);
  for (double& v : d) v = std::fabs(v - med);
  return 1.4826 * median(d);
}

// Solve the 4x4 normal equations with partial pivoting.
inline bool solve4(std::array<std::array<double, 4>, 4> m, std::array<double, 4>& rhs) {
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::fabs(m[r][col]) > std::fabs(m[piv][col])) piv = r;
    if (std::fabs(m[piv][col]) < 1e-300) return false;
    std::swap(m[piv], m[col]);
    std::swap(rhs[piv], rhs[col]);
    for (int r = col + 1; r < 4; ++r) {
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < 4; ++c) m[r][c] -= f * m[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  for (int r = 3; r >= 0; --r) {
    double acc = rhs[r];
    for (int c = r + 1; c < 4; ++c) acc -= m[r][c] * rhs[c];
    rhs[r] = acc / m[r][r];
  }
  return true;
}

}  // namespace detail

// Fit L(lam) = B + A*(G/2)^2 / ((lam-lam0)^2 + (G/2)^2) over the window.
// Initialization: lam0 at the extremum, G from the half-max width, B from the
// window-edge median. Damped least squares, convergence at relative parameter
// change < 1e-8.
inline ResonanceFit fit_lorentzian(const Spectrum& spectrum, double window_lo_um,
                                   double window_hi_um,
                                   LineOrientation orientation = LineOrientation::Peak) {
  spectrum.validate();
  const Spectrum w = spectrum.window(window_lo_um, window_hi_um);
  if (w.size() < 8) throw DomainError("fit_lorentzian: need at least 8 samples in the window");
  const auto& x = w.wavelength_um;
  const auto& y = w.intensity;
  const std::size_t n = w.size();
  const bool dip = orientation == LineOrientation::Dip;

  // Baseline guess: median of the outermost samples on each side.
  const std::size_t edge = std::max<std::size_t>(2, n / 10);
  std::vector<double> edges;
  for (std::size_t i = 0; i < edge; ++i) {
    edges.push_back(y[i]);
    edges.push_back(y[n - 1 - i]);
  }
  double base = detail::median(edges);

  std::size_t ext = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (dip ? y[i] < y[ext] : y[i] > y[ext]) ext = i;
  }
  const double noise = detail::noise_floor(x, y);
  const double height = std::fabs(y[ext] - base);
  if (!(height > 3.0 * noise))
    throw DomainError("fit_lorentzian: no extremum exceeding 3x the noise floor");

  // Exactly one extremum: count contiguous runs above the 3-sigma threshold.
  {
    int runs = 0;
    bool in_run = false;
    for (std::size_t i = 0; i < n; ++i) {
      const double excess = dip ? base - y[i] : y[i] - base;
      const bool above = excess > std::max(3.0 * noise, 0.5 * height);
      if (above && !in_run) ++runs;
      in_run = above;
    }
    if (runs > 1) throw DomainError("fit_lorentzian: multiple candidate extrema in window");
  }

  // Half-max width from crossings around the extremum.
  const double half_level = base + (y[ext] - base) / 2.0;
  double lo_x = x.front(), hi_x = x.back();
  for (std::size_t i = ext; i-- > 0;) {
    const bool crossed = dip ? y[i] > half_level : y[i] < half_level;
    if (crossed) {
      lo_x = x[i];
      break;
    }
  }
  for (std::size_t i = ext + 1; i < n; ++i) {
    const bool crossed = dip ? y[i] > half_level : y[i] < half_level;
    if (crossed) {
      hi_x = x[i];
      break;
    }
  }
  double spacing_sum = 0.0;
  for (std::size_t i = 1; i < n; ++i) spacing_sum += x[i] - x[i - 1];
  const double mean_spacing = spacing_sum / static_cast<double>(n - 1);

  // p = (lam0, Gamma, A, B)
  std::array<double, 4> p{x[ext], std::max(hi_x - lo_x, mean_spacing), y[ext] - base, base};

  auto cost_of = [&](const std::array<double, 4>& q) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = lorentzian(x[i], q[0], q[1], q[2], q[3]) - y[i];
      c += r * r;
    }
    return c;
  };

  double mu = 1e-3;
  double cost = cost_of(p);
  int iter = 0;
  bool converged = false;
  const int max_iter = 400;
  while (iter < max_iter) {
    ++iter;
    std::array<std::array<double, 4>, 4> jtj{};
    std::array<double, 4> jtr{};
    for (std::size_t i = 0; i < n; ++i) {
      const double hw = p[1] / 2.0;
      const double d = x[i] - p[0];
      const double den = d * d + hw * hw;
      const double model = p[3] + p[2] * hw * hw / den;
      const double r = model - y[i];
      const std::array<double, 4> j{
          p[2] * hw * hw * 2.0 * d / (den * den),
          p[2] * hw * d * d / (den * den),
          hw * hw / den,
          1.0,
      };
      for (int a = 0; a < 4; ++a) {
        jtr[a] += j[a] * r;
        for (int b = 0; b < 4; ++b) jtj[a][b] += j[a] * j[b];
      }
    }
    bool accepted = false;
    for (int attempt = 0; attempt < 24 && !accepted; ++attempt) {
      auto m = jtj;
      for (int a = 0; a < 4; ++a) m[a][a] += mu * std::max(jtj[a][a], 1e-300);
      std::array<double, 4> delta{-jtr[0], -jtr[1], -jtr[2], -jtr[3]};
      if (!detail::solve4(m, delta)) {
        mu *= 4.0;
        continue;
      }
      std::array<double, 4> trial{p[0] + delta[0], p[1] + delta[1], p[2] + delta[2],
                                  p[3] + delta[3]};
      if (!(trial[1] > 0.0)) {
        mu *= 4.0;
        continue;
      }
      const double trial_cost = cost_of(trial);
      if (trial_cost <= cost) {
        double rel = 0.0;
        const std::array<double, 4> scale{std::fabs(p[0]) + 1e-12, std::fabs(p[1]) + 1e-15,
                                          std::fabs(p[2]) + 1e-15, std::fabs(p[3]) + 1e-15};
        for (int a = 0; a < 4; ++a) rel = std::max(rel, std::fabs(delta[a]) / scale[a]);
        p = trial;
        cost = trial_cost;
        mu = std::max(mu / 3.0, 1e-14);
        accepted = true;
        if (rel < 1e-8) converged = true;
      } else {
        mu *= 4.0;
      }
    }
    if (!accepted || converged) break;
  }
  if (!converged && iter >= max_iter)
    throw DomainError("fit_lorentzian: no convergence after iteration cap");

  ResonanceFit fit;
  fit.lambda0_um = p[0];
  fit.fwhm_um = p[1];
  fit.q = p[0] / p[1];
  fit.amplitude = p[2];
  fit.baseline = p[3];
  fit.rms_residual = std::sqrt(cost / static_cast<double>(n));
  fit.iterations = iter;
  fit.lower_bound_only = p[1] < 2.0 * mean_spacing;
  if (fit.lambda0_um < window_lo_um || fit.lambda0_um > window_hi_um)
    throw DomainError("fit_lorentzian: fitted center left the window");
  if (!(fit.fwhm_um > 0)) throw DomainError("fit_lorentzian: non-positive linewidth");
  return fit;
}

struct EnsembleStats {
  double mean_lambda0_nm = 0.0;
  double std_lambda0_nm = 0.0;
  double mean_q = 0.0;
  int n_devices = 0;
  bool q_lower_bound = false;  // any input carried the under-resolved flag
  bool single_sample = false;
};

inline EnsembleStats ensemble_stats(const std::vector<ResonanceFit>& fits) {
  if (fits.empty()) throw DomainError("ensemble_stats: empty input");
  EnsembleStats s;
  s.n_devices = static_cast<int>(fits.size());
  double sum = 0.0, sum_q = 0.0;
  for (const auto& f : fits) {
    sum += f.lambda0_um * 1e3;
    sum_q += f.q;
    s.q_lower_bound = s.q_lower_bound || f.lower_bound_only;
  }
  s.mean_lambda0_nm = sum / fits.size();
  s.mean_q = sum_q / fits.size();
  if (fits.size() == 1) {
    s.std_lambda0_nm = 0.0;
    s.single_sample = true;
  } else {
    double ss = 0.0;
    for (const auto& f : fits) {
      const double d = f.lambda0_um * 1e3 - s.mean_lambda0_nm;
      ss += d * d;
    }
    s.std_lambda0_nm = std::sqrt(ss / (fits.size() - 1));
  }
  return s;
}

// (sigma1^2/lambda1^3) / (sigma2^2/lambda2^3); units cancel.
inline double scattering_loss_ratio(double sigma1_nm, double lambda1_nm, double sigma2_nm,
                                    double lambda2_nm) {
  if (!(sigma1_nm > 0 && lambda1_nm > 0 && sigma2_nm > 0 && lambda2_nm > 0))
    throw DomainError("scattering_loss_ratio: all inputs must be > 0");
  const double a = sigma1_nm * sigma1_nm / (lambda1_nm * lambda1_nm * lambda1_nm);
  const double b = sigma2_nm * sigma2_nm / (lambda2_nm * lambda2_nm * lambda2_nm);
  return a / b;
}

// Fabrication process planner built on the typical rates: TiO2 ALD at
// 0.6 A/cycle, TiO2 ICP etch 1.5-1.7 nm/s, PMMA descum 2.5 nm/s for 3 s,
// membrane thinning 1.2-1.4 nm/s.
struct ProcessPlan {
  long ald_cycles = 0;
  double tio2_etch_time_min_s = 0.0;
  double tio2_etch_time_max_s = 0.0;
  double pmma_descum_removal_nm = 0.0;
  double membrane_etch_time_min_s = 0.0;
  double membrane_etch_time_max_s = 0.0;
};

inline constexpr double kAldRateNmPerCycle = 0.06;
inline constexpr double kTio2EtchRateMin = 1.5, kTio2EtchRateMax = 1.7;   // nm/s
inline constexpr double kPmmaEtchRate = 2.5;                             // nm/s
inline constexpr double kDescumSeconds = 3.0;
inline constexpr double kMembraneEtchRateMin = 1.2, kMembraneEtchRateMax = 1.4;  // nm/s

inline ProcessPlan process_plan(double target_tio2_nm, double overfill_nm,
                                double membrane_thin_from_nm = 0.0,
                                double membrane_thin_to_nm = 0.0) {
  if (target_tio2_nm < 0 || overfill_nm < 0 || membrane_thin_from_nm < 0 ||
      membrane_thin_to_nm < 0)
    throw DomainError("process_plan: thicknesses must be >= 0");
  if (membrane_thin_from_nm < membrane_thin_to_nm)
    throw DomainError("process_plan: membrane thinning must go from thick to thin");
  ProcessPlan plan;
  plan.ald_cycles =
      static_cast<long>(std::ceil((target_tio2_nm + overfill_nm) / kAldRateNmPerCycle - 1e-9));
  plan.tio2_etch_time_min_s = overfill_nm / kTio2EtchRateMax;
  plan.tio2_etch_time_max_s = overfill_nm / kTio2EtchRateMin;
  plan.pmma_descum_removal_nm = kDescumSeconds * kPmmaEtchRate;
  const double removal = membrane_thin_from_nm - membrane_thin_to_nm;
  plan.membrane_etch_time_min_s = removal / kMembraneEtchRateMax;
  plan.membrane_etch_time_max_s = removal / kMembraneEtchRateMin;
  return plan;
}

// ---- synthetic test-data generators (deterministic) ----

// Uniform doubles in [0,1) from mt19937_64; Box-Muller for normals. Hand
// rolled so that fixed seeds give identical streams on every platform.
class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed) : gen_(seed) {}
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * pi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * pi * u2);
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline Spectrum synth_lorentzian_spectrum(double lambda0_um, double q, std::size_t n_samples,
                                          double half_window_fwhm = 10.0, double amplitude = 1.0,
                                          double baseline = 0.0,
                                          LineOrientation orientation = LineOrientation::Peak) {
  if (n_samples < 8) throw DomainError("synth_lorentzian_spectrum: need >= 8 samples");
  const double fwhm = lambda0_um / q;
  const double half = half_window_fwhm * fwhm;
  Spectrum s;
  const double amp = orientation == LineOrientation::Dip ? -amplitude : amplitude;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double lam = lambda0_um - half + 2.0 * half * static_cast<double>(i) / (n_samples - 1);
    s.push_back(lam, lorentzian(lam, lambda0_um, fwhm, amp, baseline));
  }
  return s;
}

inline Spectrum with_multiplicative_noise(Spectrum s, double fraction, std::uint64_t seed) {
  DeterministicRng rng(seed);
  for (double& v : s.intensity) {
    v *= 1.0 + fraction * rng.normal();
    if (v < 0.0) v = 0.0;
  }
  return s;
}

// Synthetic device ensemble: resonance centers drawn from N(mu, sigma).
inline std::vector<ResonanceFit> synth_ensemble(double mu_nm, double sigma_nm, int n,
                                                std::uint64_t seed, double mean_q = 6000.0,
                                                bool lower_bound = true) {
  if (n < 1) throw DomainError("synth_ensemble: need n >= 1");
  DeterministicRng rng(seed);
  std::vector<ResonanceFit> fits(n);
  for (auto& f : fits) {
    f.lambda0_um = (mu_nm + sigma_nm * rng.normal()) * 1e-3;
    f.q = mean_q;
    f.fwhm_um = f.lambda0_um / f.q;
    f.amplitude = 1.0;
    f.lower_bound_only = lower_bound;
  }
  return fits;
}

// Table-style text report of ensemble statistics.
inline std::string format_stats_table(const std::vector<EnsembleStats>& rows) {
  std::string out = "Mean lambda (nm)\tStd. dev. lambda (nm)\tMean Q\n";
  bool flagged = false;
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.3f\t%.3f\t%.0f%s\n", r.mean_lambda0_nm, r.std_lambda0_nm,
                  r.mean_q, r.q_lower_bound ? " (a)" : "");
    out += buf;
    flagged = flagged || r.q_lower_bound;
  }
  if (flagged)
    out += "(a) under-resolved linewidths: quality factors are lower bounds only\n";
  return out;
}

}  // namespace resforge::analysis
