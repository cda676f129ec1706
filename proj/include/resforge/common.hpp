#pragma once

// Shared conventions and small utilities.
//
// Units: lengths in micrometers, c = 1 (time is measured in um of light
// travel), frequency = 1 / wavelength (um^-1). Permeability is 1 everywhere.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace resforge {

// Violations of an operation's preconditions or invariants. The CLI maps
// these to exit code 1.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using WarningList = std::vector<std::string>;

inline constexpr double pi = 3.14159265358979323846;

// Deterministic formatting for doubles embedded in SVG/JSON text output.
// snprintf with a fixed precision is locale-independent and reproducible.
inline std::string format_double(double v, int precision = 9) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
  return std::string(buf);
}

// FNV-1a 64-bit; used for config hashes, stable across platforms.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Worker count for the FDTD stepper. `requested` <= 0 defers to the
// RESFORGE_THREADS environment variable, then to the hardware concurrency.
inline int resolve_worker_count(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RESFORGE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0 && v < 1024) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

inline bool nearly_equal(double a, double b, double rel = 1e-12, double abs_tol = 0.0) {
  const double d = std::fabs(a - b);
  return d <= abs_tol || d <= rel * std::max(std::fabs(a), std::fabs(b));
}

}  // namespace resforge
