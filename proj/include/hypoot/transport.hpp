#pragma once

// Discrete optimal transport for the cost |z - z'|_A^2: measures, couplings,
// the exact network-simplex solver, a permutation oracle for tiny instances,
// the Gaussian closed form and grid-level distances.

#include <cstdint>
#include <string>
#include <vector>

#include "hypoot/equilibrium.hpp"
#include "hypoot/twist_algebra.hpp"

namespace hypoot {

struct DiscreteMeasure {
  std::vector<Vec2> atoms;
  std::vector<double> weights;

  std::size_t size() const { return atoms.size(); }
};

/// Validates (finite atoms, positive weights) and rescales weights to sum 1.
DiscreteMeasure make_measure(std::vector<Vec2> atoms, std::vector<double> weights);
DiscreteMeasure uniform_measure(std::vector<Vec2> atoms);

struct GridMeasure {
  DiscreteMeasure measure;
  std::vector<std::uint32_t> cell;  ///< grid cell of each atom
  double dropped_mass = 0.0;        ///< fraction of mass below the floor
};

/// Atoms at cell centers carrying cell masses; cells below mass_floor * max
/// are dropped and the rest renormalized. mass_floor in [0, 1e-6].
GridMeasure from_density(const DensityGrid& f, double mass_floor = 0.0);

struct PlanEntry {
  std::uint32_t i;
  std::uint32_t j;
  double mass;
};

/// Sparse transport plan between a source with m atoms and a target with n atoms.
struct Coupling {
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<PlanEntry> entries;

  /// L1 norm of row-sum and column-sum deviations from the given weights.
  double marginal_violation(const DiscreteMeasure& mu, const DiscreteMeasure& nu) const;
  bool nonnegative() const;
};

/// Integral of |z - z'|_A^2 against the plan.
double plan_cost(const Coupling& P, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                 const TwistMatrix& A);

struct ExactResult {
  double cost = 0.0;  ///< W_A^2
  Coupling plan;
  double dual_value = 0.0;
  double duality_gap = 0.0;
  bool certified = false;  ///< gap <= 1e-9 cost (+ integer cost resolution)
  std::uint64_t pivots = 0;
};

/// Network simplex on the complete bipartite graph; costs integerized at 1e-12
/// of the largest cost. Throws size_exceeded when m n > 2e7.
ExactResult exact_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const TwistMatrix& A);

/// Enumerates all permutations; equal-weight measures of equal size <= 8.
/// Throws size_exceeded otherwise.
ExactResult brute_force_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                           const TwistMatrix& A);

/// W_A between N(m1, S1) and N(m2, S2): Bures formula after z -> A^{1/2} z.
double gaussian_wa(Vec2 m1, Sym2 S1, Vec2 m2, Sym2 S2, const TwistMatrix& A);

/// Sums kx x kv blocks of cells (nx, nv must be divisible).
DensityGrid coarsen_density(const DensityGrid& f, int kx, int kv);

enum class OtMethod { exact, sinkhorn };

struct DistanceOptions {
  OtMethod method = OtMethod::exact;
  double mass_floor = 0.0;
  /// Block-sum the densities until both have at most this many cells (0 = never).
  std::size_t max_cells = 0;
  double eps_rel = 1e-3;  ///< sinkhorn: target eps as a fraction of diam_A^2
};

/// W_A(f, g) (square root of the optimal cost); W_2 when A is the identity.
/// Throws support_mismatch for different grid extents.
double w_distance(const DensityGrid& f, const DensityGrid& g, const TwistMatrix& A,
                  const DistanceOptions& opt = {});

/// Plan export, one "i j mass" triple per line after a "# m n" header.
void write_plan(const std::string& path, const Coupling& P);

// ---------------------------------------------------------------------------
// Entropic transport

struct SinkhornOptions {
  double factor = 0.7;        ///< geometric eps schedule from diam_A^2
  double tol = 1e-9;          ///< L1 marginal violation at the target and checkpoints
  double level_tol = 1e-5;    ///< same, on intermediate levels
  int max_sweeps = 10000;     ///< per level
  double truncation = 30.0;   ///< kernel entries below exp(-truncation) are dropped
  std::size_t dense_limit = 4'000'000;   ///< m n above this starts on binned measures
  std::size_t nnz_budget = 30'000'000;   ///< kernel size at which the binned stage hands over
  bool keep_plan = true;
};

/// Converged entropic problem at one eps. Potentials follow
/// P_ij = a_i b_j exp((f_i + g_j - C_ij) / eps).
struct EntropicSolution {
  double eps = 0.0;
  double ot_eps = 0.0;          ///< min <C, P> + eps KL(P | mu x nu)
  double transport_cost = 0.0;  ///< <C, P>
  double marginal_violation = 0.0;
  int sweeps = 0;
  std::vector<double> f, g;
  std::vector<Vec2> barycentric;  ///< E_P[y | x_i], original coordinates
  Coupling plan;                  ///< empty unless keep_plan
};

struct SinkhornResult {
  double cost_est = 0.0;  ///< OT_eps(mu, nu) - (OT_eps(mu, mu) + OT_eps(nu, nu)) / 2
  double raw = 0.0;       ///< OT_eps(mu, nu)
  EntropicSolution solution;
  std::vector<double> schedule;  ///< every eps visited on the (mu, nu) run
};

/// Squared A-diameter of the bounding box of both supports.
double diameter_sq(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const TwistMatrix& A);

/// One eps-scaling run reporting a converged solution at each of eps_desc
/// (strictly decreasing). Throws no_convergence after max_sweeps on a level.
std::vector<EntropicSolution> sinkhorn_ladder(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                              const TwistMatrix& A, const std::vector<double>& eps_desc,
                                              const SinkhornOptions& opt = {},
                                              std::vector<double>* schedule = nullptr);

/// Debiased entropic estimate of W_A^2 at eps_target.
SinkhornResult sinkhorn(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const TwistMatrix& A,
                        double eps_target, const SinkhornOptions& opt = {});

// ---------------------------------------------------------------------------
// Brenier field

/// Map from g toward f on g's grid: T = barycentric projection of the entropic
/// plan, grad phi = A T, hessian = symmetrized finite differences of grad phi.
struct BrenierField {
  PhaseGrid grid;
  std::vector<Vec2> map_values;
  std::vector<Sym2> hessian;
  std::vector<std::uint8_t> clamped;     ///< d_v^2 phi or det below delta_floor
  std::vector<std::uint8_t> in_support;  ///< cell carried an atom of g
  double regularization = 0.0;
  double delta_floor = 1e-8;
  double clamp_fraction = 0.0;  ///< g-mass of clamped cells

  /// Bilinear interpolation of the map between support cells.
  Vec2 map_at(Vec2 z) const;
};

struct BrenierOptions {
  double mass_floor = 1e-12;
  double delta_floor = 1e-8;
  SinkhornOptions sinkhorn;
};

BrenierField brenier_field(const DensityGrid& f, const DensityGrid& g, const TwistMatrix& A, double eps,
                           const BrenierOptions& opt = {});

/// Fields at each eps of eps_desc from a single scaling run.
std::vector<BrenierField> brenier_ladder(const DensityGrid& f, const DensityGrid& g,
                                         const TwistMatrix& A, const std::vector<double>& eps_desc,
                                         const BrenierOptions& opt = {});

/// Grid header, then per cell "Tx Tv hxx hxv hvv clamped".
void write_brenier(const std::string& path, const BrenierField& field);

}  // namespace hypoot
