#pragma once

// Waveguide eigenmodes: the analytic asymmetric-slab dispersion relation
// (bisection; serves as the oracle) and a semivectorial finite-difference
// solver for 2D cross sections.
//
// The FD solver works on w = sqrt(eps) * E_p, where E_p is the dominant
// transverse E component (p = horizontal for TE-like, vertical for TM-like).
// In that variable the discrete operator is symmetric, so eigenvectors are
// plain-orthogonal in w, which is exactly eps-weighted orthogonality of the
// E profiles. Along p the operator reduces to the TM slab equation, along
// the other axis to the TE slab equation, giving the slab-equivalence checks
// their analytic counterpart.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "resforge/common.hpp"
#include "resforge/geometry.hpp"

namespace resforge::modes {

enum class SlabPolarization { TE, TM };
enum class ModePolarization { TELike, TMLike };  // dominant E horizontal / vertical

namespace detail {

struct SlabParams {
  double n_core, n_top, n_bot, thickness, lambda;
  SlabPolarization pol;
  int order;
};

// Phase mismatch of the transverse resonance condition; positive below the
// mode index, negative above, monotone decreasing.
inline double slab_phase(const SlabParams& s, double n) {
  const double k0 = 2.0 * pi / s.lambda;
  const double a2 = s.n_core * s.n_core - n * n;
  const double a = std::sqrt(std::max(a2, 0.0));
  const double bt = std::sqrt(std::max(n * n - s.n_top * s.n_top, 0.0));
  const double bb = std::sqrt(std::max(n * n - s.n_bot * s.n_bot, 0.0));
  const double eta_t =
      s.pol == SlabPolarization::TE ? 1.0 : (s.n_core * s.n_core) / (s.n_top * s.n_top);
  const double eta_b =
      s.pol == SlabPolarization::TE ? 1.0 : (s.n_core * s.n_core) / (s.n_bot * s.n_bot);
  const double kx = k0 * a;
  const double at_t = a > 0.0 ? std::atan2(eta_t * bt, a) : pi / 2.0;
  const double at_b = a > 0.0 ? std::atan2(eta_b * bb, a) : pi / 2.0;
  return kx * s.thickness - at_t - at_b - s.order * pi;
}

}  // namespace detail

// Effective index of slab mode `order` (0 = fundamental), solved by bisection
// to |dn| < 1e-10. Throws when the requested order is below cutoff.
inline double slab_dispersion(double n_core, double n_clad_top, double n_clad_bottom,
                              double thickness_um, double lambda_um, SlabPolarization pol,
                              int order = 0) {
  if (!(thickness_um > 0)) throw DomainError("slab_dispersion: thickness must be > 0");
  if (!(lambda_um > 0)) throw DomainError("slab_dispersion: wavelength must be > 0");
  if (order < 0) throw DomainError("slab_dispersion: order must be >= 0");
  const double n_clad = std::max(n_clad_top, n_clad_bottom);
  if (!(n_core > n_clad))
    throw DomainError("slab_dispersion: core index must exceed both cladding indices");
  detail::SlabParams s{n_core, n_clad_top, n_clad_bottom, thickness_um, lambda_um, pol, order};

  double lo = n_clad, hi = n_core;
  if (!(detail::slab_phase(s, lo) > 0.0))
    throw DomainError("slab_dispersion: mode order " + std::to_string(order) +
                      " is below cutoff for this slab");
  // slab_phase(hi) <= -pi/2 always, so the root is bracketed.
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (detail::slab_phase(s, mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Group index of a slab mode via implicit differentiation of the dispersion
// relation (no finite differences).
inline double slab_group_index(double n_core, double n_clad_top, double n_clad_bottom,
                               double thickness_um, double lambda_um, SlabPolarization pol,
                               int order = 0) {
  const double n = slab_dispersion(n_core, n_clad_top, n_clad_bottom, thickness_um, lambda_um,
                                   pol, order);
  const double k0 = 2.0 * pi / lambda_um;
  const double a = std::sqrt(n_core * n_core - n * n);
  const double phase_lambda = -(2.0 * pi / (lambda_um * lambda_um)) * a * thickness_um;

  double phase_n = -k0 * thickness_um * n / a;
  auto clad_term = [&](double n_clad) {
    const double b2 = n * n - n_clad * n_clad;
    const double b = std::sqrt(std::max(b2, 1e-300));
    const double eta = pol == SlabPolarization::TE ? 1.0 : (n_core * n_core) / (n_clad * n_clad);
    return eta * n * (a * a + b * b) / (a * b * (a * a + eta * eta * b * b));
  };
  phase_n -= clad_term(n_clad_top);
  phase_n -= clad_term(n_clad_bottom);

  const double dn_dlambda = -phase_lambda / phase_n;
  return n - lambda_um * dn_dlambda;
}

struct Profile2D {
  std::array<int, 2> dims{0, 0};
  std::vector<double> values;  // x fastest
  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * dims[0] + i]; }
};

struct ModeSolution {
  double n_eff = 0.0;
  double wavelength_um = 0.0;
  ModePolarization polarization = ModePolarization::TELike;
  Profile2D profile;  // dominant E component, normalized to max |E| = 1
  std::map<std::string, double> confinement;  // region -> fraction of eps|E|^2
  double residual = 0.0;
  std::vector<double> weight;  // sqrt(eps)*E, used for overlap checks
};

struct ModeSolverOptions {
  int max_iterations = 800;
  double eigen_tol = 1e-12;      // relative eigenvalue change
  double residual_tol = 1e-8;    // |A w - l w| / |A w|
  std::uint64_t start_seed = 20260809;
};

namespace detail {

// Largest cladding index on the Dirichlet boundary. Singleton axes mean "no
// variation along this axis" (slab-equivalent scenes), so their faces do not
// count as boundary.
inline double boundary_clad_index(const geometry::PermittivityGrid& g) {
  double m = 1.0;
  const int nx = g.dims[0], ny = g.dims[1];
  if (ny > 1) {
    for (int i = 0; i < nx; ++i) m = std::max({m, g.at(i, 0), g.at(i, ny - 1)});
  }
  if (nx > 1) {
    for (int j = 0; j < ny; ++j) m = std::max({m, g.at(0, j), g.at(nx - 1, j)});
  }
  return std::sqrt(m);
}

}  // namespace detail

// Semivectorial finite-difference eigenmodes of a 2D cross section, in
// descending n_eff order. Dirichlet boundary; the scene must be padded with
// cladding well past the mode tails.
inline std::vector<ModeSolution> cross_section_modes(const geometry::RasterScene& scene,
                                                     double lambda_um, int n_modes,
                                                     ModePolarization pol = ModePolarization::TELike,
                                                     const ModeSolverOptions& opts = {}) {
  const auto& g = scene.grid;
  g.validate();
  if (!g.is2d()) throw DomainError("cross_section_modes: cross section must be a 2D grid");
  if (n_modes < 1) throw DomainError("cross_section_modes: n_modes must be >= 1");
  const int nx = g.dims[0], ny = g.dims[1];
  const std::size_t n = static_cast<std::size_t>(nx) * ny;
  const double k0 = 2.0 * pi / lambda_um;
  const double inv_dx2 = 1.0 / (g.dx * g.dx);
  const double n_clad = detail::boundary_clad_index(g);
  const double n_max = std::sqrt(g.max_eps());
  if (!(n_max > n_clad + 1e-12))
    throw DomainError("cross_section_modes: no guided mode (no index contrast over the cladding)");

  // p axis carries the dominant E component: x for TE-like, y for TM-like.
  const int p_axis = pol == ModePolarization::TELike ? 0 : 1;

  auto eps_at = [&](int i, int j) { return g.at(i, j); };
  auto idx = [&](int i, int j) { return static_cast<std::size_t>(j) * nx + i; };

  using Trip = Eigen::Triplet<double>;
  std::vector<Trip> trips;
  trips.reserve(5 * n);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double ec = eps_at(i, j);
      double diag = k0 * k0 * ec;
      auto couple = [&](int ii, int jj, bool along_p) {
        const bool inside = ii >= 0 && ii < nx && jj >= 0 && jj < ny;
        const double en = inside ? eps_at(ii, jj) : ec;
        double off;
        if (along_p) {
          // Flux-consistent coefficient at the half node: harmonic mean of
          // 1/eps, i.e. 1 over the cell-average permittivity.
          const double inv_half = 2.0 / (ec + en);
          off = std::sqrt(ec * en) * inv_half * inv_dx2;
          diag -= ec * inv_half * inv_dx2;
        } else {
          off = inv_dx2;
          diag -= inv_dx2;
        }
        if (inside) trips.emplace_back(idx(i, j), idx(ii, jj), off);
      };
      // Singleton axes carry no variation at all (slab-equivalent scenes).
      if (nx > 1) {
        couple(i - 1, j, p_axis == 0);
        couple(i + 1, j, p_axis == 0);
      }
      if (ny > 1) {
        couple(i, j - 1, p_axis == 1);
        couple(i, j + 1, p_axis == 1);
      }
      trips.emplace_back(idx(i, j), idx(i, j), diag);
    }
  }
  Eigen::SparseMatrix<double> a_op(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  a_op.setFromTriplets(trips.begin(), trips.end());

  // sigma*I - A is positive definite for sigma above the spectrum; inverse
  // iteration on it converges to the largest beta^2 first. Slowly separating
  // modes get a Rayleigh-shifted SparseLU refinement.
  const double sigma = k0 * k0 * n_max * n_max * (1.0 + 1e-9) + 1e-9;
  Eigen::SparseMatrix<double> shifted = -a_op;
  for (std::size_t i = 0; i < n; ++i) shifted.coeffRef(i, i) += sigma;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> factor;
  factor.compute(shifted);
  if (factor.info() != Eigen::Success)
    throw DomainError("cross_section_modes: factorization failed");

  std::mt19937_64 rng(opts.start_seed);
  std::vector<Eigen::VectorXd> found;
  std::vector<double> eigenvalues;

  for (int m = 0; m < n_modes; ++m) {
    Eigen::VectorXd w(n);
    for (std::size_t i = 0; i < n; ++i)
      w[i] = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
    for (const auto& prev : found) w -= prev.dot(w) * prev;
    w.normalize();

    std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> refined;
    auto solve_step = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
      if (refined) return refined->solve(v);
      return factor.solve(v);
    };
    auto reshift = [&](double target) {
      Eigen::SparseMatrix<double> s = a_op;
      for (std::size_t i = 0; i < n; ++i) s.coeffRef(i, i) -= target;
      auto lu = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
      lu->analyzePattern(s);
      lu->factorize(s);
      if (lu->info() == Eigen::Success) refined = std::move(lu);
    };

    double lam_prev = 0.0;
    double lam = 0.0;
    double resid = 0.0;
    bool converged = false;
    // Converge each mode well below the public tolerance: its leftover error
    // lives in the deflated subspace and floors the residual of later modes.
    const double polish_tol = opts.residual_tol * 0.02;
    const int reshift_every = 48;
    int stall = 0;
    double best_resid = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opts.max_iterations; ++it) {
      Eigen::VectorXd z = solve_step(w);
      for (const auto& prev : found) z -= prev.dot(z) * prev;
      const double nz = z.norm();
      if (!(nz > 0) || !std::isfinite(nz)) break;
      w = z / nz;
      Eigen::VectorXd aw = a_op * w;
      lam = w.dot(aw);
      const double aw_norm = aw.norm();
      resid = (aw - lam * w).norm() / std::max(aw_norm, 1e-300);
      stall = resid > 0.9 * best_resid ? stall + 1 : 0;
      best_resid = std::min(best_resid, resid);
      const bool settled = it > 2 && std::fabs(lam - lam_prev) <= opts.eigen_tol * std::fabs(lam);
      if (settled && (resid <= polish_tol || (resid <= opts.residual_tol && stall > 15))) {
        converged = true;
        break;
      }
      if (it > 0 && it % reshift_every == 0)
        reshift(lam * (1.0 + 1e-9) + 1e-11);  // nudge off the eigenvalue itself
      lam_prev = lam;
    }
    if (!converged)
      throw DomainError("cross_section_modes: eigensolver did not converge for mode " +
                        std::to_string(m));
    if (!(lam > 0)) break;
    const double n_eff = std::sqrt(lam) / k0;
    if (m == 0 && !(n_eff > n_clad + 1e-9))
      throw DomainError("cross_section_modes: no guided mode (fundamental n_eff <= cladding)");
    if (!(n_eff > n_clad + 1e-9)) break;  // remaining modes are unguided
    found.push_back(w);
    eigenvalues.push_back(lam);
  }
  if (found.empty()) throw DomainError("cross_section_modes: no guided mode");

  std::vector<ModeSolution> out;
  for (std::size_t m = 0; m < found.size(); ++m) {
    ModeSolution mode;
    mode.wavelength_um = lambda_um;
    mode.polarization = pol;
    mode.n_eff = std::sqrt(eigenvalues[m]) / k0;
    const auto& w = found[m];

    Eigen::VectorXd aw = a_op * w;
    mode.residual = (aw - eigenvalues[m] * w).norm() / std::max(aw.norm(), 1e-300);

    // E = w / sqrt(eps); normalize to max |E| = 1 with a positive peak.
    mode.profile.dims = {nx, ny};
    mode.profile.values.resize(n);
    double peak = 0.0;
    std::size_t peak_at = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const double e = w[c] / std::sqrt(g.eps[c]);
      mode.profile.values[c] = e;
      if (std::fabs(e) > peak) {
        peak = std::fabs(e);
        peak_at = c;
      }
    }
    const double sign = mode.profile.values[peak_at] < 0 ? -1.0 : 1.0;
    for (auto& e : mode.profile.values) e = sign * e / peak;

    // Confinement: eps|E|^2 shares, which in w variables is just w^2.
    mode.weight.resize(n);
    double total = 0.0;
    std::map<std::string, double> conf;
    for (std::size_t c = 0; c < n; ++c) {
      const double val = w[c] * w[c];
      mode.weight[c] = sign * w[c];
      total += val;
      if (!scene.region.empty()) conf[scene.region_names[scene.region[c]]] += val;
    }
    for (auto& [name, val] : conf) val /= total;
    mode.confinement = std::move(conf);
    out.push_back(std::move(mode));
  }
  return out;
}

// Profile overlap between two solutions on identical grids (plain normalized
// inner product of the sqrt(eps)-weighted fields).
inline double mode_overlap(const ModeSolution& a, const ModeSolution& b) {
  if (a.weight.size() != b.weight.size())
    throw DomainError("mode_overlap: profiles live on different grids");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.weight.size(); ++i) {
    dot += a.weight[i] * b.weight[i];
    na += a.weight[i] * a.weight[i];
    nb += b.weight[i] * b.weight[i];
  }
  return dot / std::sqrt(na * nb);
}

// Group index n_g = n_eff - lambda * dn_eff/dlambda by central difference.
// The fundamental mode is re-solved at lambda +/- dlambda; a profile overlap
// below 0.9 signals a mode identity swap.
inline double group_index(const geometry::RasterScene& scene, double lambda_um,
                          double dlambda_um = 0.001,
                          ModePolarization pol = ModePolarization::TELike,
                          const ModeSolverOptions& opts = {}) {
  if (!(dlambda_um > 0)) throw DomainError("group_index: dlambda must be > 0");
  const auto center = cross_section_modes(scene, lambda_um, 1, pol, opts);
  const auto lo = cross_section_modes(scene, lambda_um - dlambda_um, 1, pol, opts);
  const auto hi = cross_section_modes(scene, lambda_um + dlambda_um, 1, pol, opts);
  if (std::fabs(mode_overlap(center[0], lo[0])) < 0.9 ||
      std::fabs(mode_overlap(center[0], hi[0])) < 0.9)
    throw DomainError("group_index: mode identity changed across dlambda; use a smaller step");
  const double slope = (hi[0].n_eff - lo[0].n_eff) / (2.0 * dlambda_um);
  return center[0].n_eff - lambda_um * slope;
}

}  // namespace resforge::modes
