#pragma once

// Uniform cell-centered phase-space grids, densities on them, the
// stationary density f_inf = exp(-U(x) - v^2/2) / Z and basic functionals.

#include <span>
#include <string>
#include <vector>

#include "hypoot/potential.hpp"
#include "hypoot/twist_algebra.hpp"

namespace hypoot {

/// [-Lx, Lx] x [-Lv, Lv] split into nx x nv cells; flat index i * nv + j (x-major).
struct PhaseGrid {
  double Lx = 8.0;
  double Lv = 8.0;
  int nx = 128;
  int nv = 128;

  /// Throws invalid_parameter unless Lx, Lv > 0 and nx, nv >= 4.
  static PhaseGrid make(double Lx, double Lv, int nx, int nv);

  double dx() const { return 2.0 * Lx / nx; }
  double dv() const { return 2.0 * Lv / nv; }
  double cell_area() const { return dx() * dv(); }
  double x(int i) const { return -Lx + (i + 0.5) * dx(); }
  double v(int j) const { return -Lv + (j + 0.5) * dv(); }
  Vec2 center(int i, int j) const { return {x(i), v(j)}; }
  std::size_t cells() const { return static_cast<std::size_t>(nx) * nv; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * nv + j; }

  friend bool operator==(const PhaseGrid&, const PhaseGrid&) = default;
};

/// Lx = R + 8 / sqrt(alpha), Lv = 8, n x n cells.
PhaseGrid default_grid(const Potential& U, int n = 128);

/// Pairwise (fixed tree) sum, so reductions do not depend on traversal order.
double pairwise_sum(std::span<const double> xs);

class DensityGrid {
 public:
  /// Nonnegative finite values with positive mass; rescaled to unit mass.
  /// The mass before rescaling is kept in raw_mass().
  static DensityGrid normalized(const PhaseGrid& grid, std::vector<double> values);
  /// Nonnegative values taken as-is (solver internals; mass may drift by leakage).
  static DensityGrid unnormalized(const PhaseGrid& grid, std::vector<double> values);

  const PhaseGrid& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  double operator()(int i, int j) const { return values_[grid_.index(i, j)]; }
  double mass() const;
  double raw_mass() const { return raw_mass_; }

 private:
  DensityGrid(PhaseGrid g, std::vector<double> v, double raw)
      : grid_(g), values_(std::move(v)), raw_mass_(raw) {}
  PhaseGrid grid_;
  std::vector<double> values_;
  double raw_mass_ = 1.0;
};

/// Z = sqrt(2 pi) * int exp(-U): Romberg integration over the window where the
/// integrand exceeds 1e-16 of its maximum, split at +-R. Throws no_convergence.
double partition_z(const Potential& U, double tol = 1e-10);

/// Discretized f_inf, normalized on the grid. Throws domain_too_small when a
/// boundary cell carries more than 1e-12 of the peak value.
DensityGrid equilibrium_density(const Potential& U, const PhaseGrid& grid);

struct Moments {
  Vec2 mean;
  Sym2 cov;
};

/// Midpoint quadrature of the mean and covariance.
Moments moments(const DensityGrid& f);

/// N(mean, cov) sampled at cell centers and normalized. Throws not_spd, or
/// domain_too_small when the grid does not cover +-6 standard deviations.
DensityGrid gaussian_density(Vec2 mean, Sym2 cov, const PhaseGrid& grid);

/// sum f ln(f/g) dx dv with 0 ln 0 = 0. Throws support_mismatch for different
/// grids or where f > 0 and g = 0.
double relative_entropy(const DensityGrid& f, const DensityGrid& g);

/// Text snapshot:
///   # hypoot-density v1
///   Lx Lv nx nv time
///   nx*nv values, x-major, one per line (%.17g)
void write_density(const std::string& path, const DensityGrid& f, double time);
struct DensitySnapshot {
  DensityGrid density;
  double time;
};
DensitySnapshot read_density(const std::string& path);

}  // namespace hypoot
