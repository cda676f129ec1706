#pragma once

// Minimal iterative radix-2 FFT plus the padded power-spectrum helper used
// for ringdown analysis.

#include <complex>
#include <vector>

#include "resforge/common.hpp"
#include "resforge/spectrum.hpp"

namespace resforge {

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place radix-2 Cooley-Tukey; data.size() must be a power of two.
inline void fft(std::vector<std::complex<double>>& data) {
  const std::size_t n = data.size();
  if (n == 0 || (n & (n - 1)) != 0) throw DomainError("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * pi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = data[i + k];
        const auto v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Power spectrum of a real time series sampled at interval dt, zero-padded by
// `pad_factor`, restricted to wavelengths in [lambda_lo, lambda_hi] and
// returned on a strictly increasing wavelength axis (lambda = 1/f, c = 1).
inline Spectrum ringdown_power_spectrum(const std::vector<double>& series, double dt,
                                        double lambda_lo, double lambda_hi,
                                        int pad_factor = 8) {
  if (series.empty()) throw DomainError("ringdown_power_spectrum: empty series");
  if (!(dt > 0)) throw DomainError("ringdown_power_spectrum: dt must be > 0");
  if (!(lambda_lo > 0 && lambda_hi > lambda_lo))
    throw DomainError("ringdown_power_spectrum: invalid wavelength band");
  const std::size_t n = next_pow2(series.size() * static_cast<std::size_t>(pad_factor));
  std::vector<std::complex<double>> buf(n, {0.0, 0.0});
  for (std::size_t i = 0; i < series.size(); ++i) buf[i] = {series[i], 0.0};
  fft(buf);
  const double df = 1.0 / (static_cast<double>(n) * dt);
  // Positive-frequency bins with 1/f inside the band, high f -> low lambda,
  // so iterate from high bin index down to get increasing wavelength.
  Spectrum s;
  const std::size_t half = n / 2;
  for (std::size_t k = half; k >= 1; --k) {
    const double f = static_cast<double>(k) * df;
    const double lam = 1.0 / f;
    if (lam < lambda_lo) continue;
    if (lam > lambda_hi) break;
    s.push_back(lam, std::norm(buf[k]));
  }
  return s;
}

}  // namespace resforge
