#pragma once

// Euler-Maruyama particles for dX = V dt, dV = -U'(X) dt - V dt + sqrt(2) dW.
// Gaussian increments come from a counter-based generator keyed by
// (seed, particle, step), so results do not depend on the evaluation order.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hypoot/equilibrium.hpp"
#include "hypoot/potential.hpp"
#include "hypoot/twist_algebra.hpp"

namespace hypoot {

/// Philox4x32-10 (Salmon et al. 2011).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Two independent standard normals for (seed, particle, step, stream).
std::pair<double, double> gaussian_pair(std::uint64_t seed, std::uint64_t particle,
                                        std::uint64_t step, std::uint32_t stream);

struct InitSpec {
  enum class Kind { point, gaussian, equilibrium };
  Kind kind = Kind::equilibrium;
  Vec2 mean;  ///< point location, or Gaussian mean
  Sym2 cov = Sym2::identity();

  static InitSpec point(Vec2 z) { return {Kind::point, z, Sym2::identity()}; }
  static InitSpec gaussian(Vec2 m, Sym2 s) { return {Kind::gaussian, m, s}; }
  /// Samples f_inf: x ~ N(0, 1/alpha) accepted with probability exp(-(psi - min psi)), v ~ N(0, 1).
  static InitSpec equilibrium() { return {}; }
};

struct ParticleEnsemble {
  std::vector<Vec2> states;
  std::uint64_t seed = 0;
  double time = 0.0;

  std::size_t size() const { return states.size(); }
};

/// Initial draw for particle k (stream 1 of the generator).
Vec2 sample_initial(const InitSpec& init, const Potential& U, std::uint64_t seed, std::uint64_t k);

/// n particles from init, advanced round(t_end / dt) steps.
/// Throws invalid_parameter for dt <= 0, n < 1 or t_end < 0.
ParticleEnsemble simulate(const Potential& U, std::size_t n, double dt, double t_end,
                          std::uint64_t seed, const InitSpec& init);

struct PairedRun {
  ParticleEnsemble f;
  ParticleEnsemble g;
  std::vector<std::pair<double, double>> msd;  ///< (t, (1/n) sum |z_f - z_g|_A^2)
};

/// Two ensembles driven by identical increments; particle k of both starts from
/// the same underlying normal draws, so equal init specs give identical paths.
/// The distance is recorded every record_every steps and at the end.
PairedRun synchronous_pair(const Potential& U, std::size_t n, double dt, double t_end,
                           std::uint64_t seed, const InitSpec& init_f, const InitSpec& init_g,
                           const TwistMatrix& A, int record_every = 1);

struct EmpiricalDensity {
  DensityGrid density;  ///< normalized histogram; all zeros if no particle is inside
  std::size_t outside = 0;
  double outside_fraction = 0.0;
};

EmpiricalDensity empirical_density(const ParticleEnsemble& e, const PhaseGrid& grid);

/// # hypoot-ensemble v1 / "n time seed" / rows "x v"
void write_ensemble(const std::string& path, const ParticleEnsemble& e);
/// CSV with header t,msd_A
void write_paired_csv(const std::string& path, const std::vector<std::pair<double, double>>& msd);

}  // namespace hypoot
