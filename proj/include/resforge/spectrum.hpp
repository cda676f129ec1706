#pragma once

// Spectrum: ordered (wavelength, intensity) samples. The common currency
// between simulation output, measurement ingestion and fitting.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "resforge/common.hpp"

namespace resforge {

struct Spectrum {
  std::vector<double> wavelength_um;
  std::vector<double> intensity;

  std::size_t size() const { return wavelength_um.size(); }
  bool empty() const { return wavelength_um.empty(); }

  void push_back(double lam, double val) {
    wavelength_um.push_back(lam);
    intensity.push_back(val);
  }

  void validate() const {
    if (wavelength_um.size() != intensity.size())
      throw DomainError("Spectrum: wavelength/intensity size mismatch");
    for (std::size_t i = 1; i < wavelength_um.size(); ++i)
      if (!(wavelength_um[i] > wavelength_um[i - 1]))
        throw DomainError("Spectrum: wavelengths must be strictly increasing");
    for (double v : intensity)
      if (v < 0.0) throw DomainError("Spectrum: intensities must be >= 0");
  }

  // Sub-spectrum with wavelength_um in [lo, hi].
  Spectrum window(double lo, double hi) const {
    Spectrum s;
    for (std::size_t i = 0; i < size(); ++i)
      if (wavelength_um[i] >= lo && wavelength_um[i] <= hi)
        s.push_back(wavelength_um[i], intensity[i]);
    return s;
  }
};

// CSV ingestion: two columns `wavelength_nm,intensity`; optional header row;
// lines starting with '#' are comments. Wavelengths convert to um.
inline Spectrum read_spectrum_csv(std::istream& in) {
  Spectrum s;
  std::string line;
  bool first_data = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::string a, b;
    std::istringstream row(line);
    if (!std::getline(row, a, ',') || !std::getline(row, b)) continue;
    try {
      const double lam_nm = std::stod(a);
      const double val = std::stod(b);
      s.push_back(lam_nm * 1e-3, val);
      first_data = false;
    } catch (const std::exception&) {
      if (first_data) continue;  // header row
      throw DomainError("spectrum CSV: malformed row '" + line + "'");
    }
  }
  s.validate();
  return s;
}

inline Spectrum read_spectrum_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open spectrum CSV '" + path + "'");
  return read_spectrum_csv(in);
}

inline void write_spectrum_csv(std::ostream& out, const Spectrum& s) {
  out << "wavelength_nm,intensity\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    out << format_double(s.wavelength_um[i] * 1e3, 12) << "," << format_double(s.intensity[i], 12)
        << "\n";
}

}  // namespace resforge
