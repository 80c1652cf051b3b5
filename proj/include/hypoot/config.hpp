#pragma once

// Versioned JSON experiment configuration. Every object rejects unknown keys;
// all failures surface as Error(parse_error) naming the offending path.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hypoot/equilibrium.hpp"
#include "hypoot/kfp_solver.hpp"
#include "hypoot/lemma_suite.hpp"
#include "hypoot/potential.hpp"
#include "hypoot/sde_particles.hpp"
#include "hypoot/transport.hpp"
#include "hypoot/twist_algebra.hpp"

namespace hypoot {

inline constexpr int kConfigSchemaVersion = 1;

struct PotentialSpec {
  enum class Kind { none, novoid, novoid_search, table };
  double alpha = 1.0;
  Kind kind = Kind::none;
  double scale = 0.0;  ///< novoid
  std::string path;    ///< table
};

struct MatrixSpec {
  enum class Kind { theorem, explicit_abc, identity };
  Kind kind = Kind::theorem;
  std::optional<double> c_scale;     ///< theorem: A = c_scale [[alpha + 1/2, 1/2], [1/2, 1]]
  std::optional<double> c_fraction;  ///< theorem: c = 2 b* + c_fraction (c* - 2 b*)
  double a = 1.0, b = 0.0, c = 1.0;  ///< explicit
};

struct GridSpec {
  int n = 64;          ///< default_grid(U, n) unless both extents are given
  int nx = 0, nv = 0;  ///< override n per axis
  double Lx = 0.0, Lv = 0.0;
};

struct InitialSpec {
  enum class Kind { gaussian, equilibrium, shifted_equilibrium, slow_mode, point };
  Kind kind = Kind::gaussian;
  Vec2 mean{1.0, 0.0};
  Sym2 cov = Sym2::identity();
  Vec2 shift;              ///< shifted_equilibrium
  double amplitude = 1.0;  ///< slow_mode: shift = amplitude (1, lambda_slow)
};

struct SolverSpec {
  double dt = 0.0;  ///< 0 -> cfl_fraction * cfl_dt
  double cfl_fraction = 1.0;
  double t_end = 5.0;
  std::vector<double> snapshot_times;  ///< empty -> every snapshot_every
  double snapshot_every = 0.5;
  Splitting splitting = Splitting::strang;
  VelocityScheme velocity = VelocityScheme::exponential;
};

struct TransportSpec {
  OtMethod method = OtMethod::sinkhorn;
  double eps_rel = 1e-3;
  std::size_t max_cells = 64 * 64;
  double mass_floor = 1e-12;
  bool compute_j = true;
  int j_levels = 3;
  double eps_cells = 0.5;
};

struct DecaySpec {
  double fit_from = 1.0;
  double fit_to = 1e300;
  double monotone_tol = 1e-6;  ///< relative increase tolerated between snapshots
  double min_r_squared = 0.95;
  bool write_snapshots = false;
};

struct DissipationSpec {
  OtMethod method = OtMethod::exact;
  std::size_t max_cells = 64 * 64;
  double tol_factor = 1.0;
  bool gaussian_oracle = true;  ///< closed-form J when psi = 0 and the start is Gaussian
  bool key_check = false;       ///< also run the key inequality at every snapshot
};

struct SdeSpec {
  std::size_t particles = 10000;
  double dt = 1e-3;
  double t_end = 1.0;
  std::optional<InitialSpec> paired_initial;
  int record_every = 10;
  bool histogram = true;
};

struct VerifySpec {
  std::uint64_t samples = 100000;
  std::uint64_t strict_samples = 1000000;
  Key1Reading reading = Key1Reading::proof_consistent;
  bool printed_diagnostic = true;
};

struct OracleCase {
  Vec2 mean;
  Sym2 cov;
};

struct OracleSpec {
  std::vector<OracleCase> cases;
  double wa_tolerance = 0.02;
  double j_tolerance = 0.05;
  std::size_t wa_max_cells = 64 * 64;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::string name = "experiment";
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  PotentialSpec potential;
  MatrixSpec matrix;
  GridSpec grid;
  InitialSpec initial;
  SolverSpec solver;
  TransportSpec transport;
  DecaySpec decay;
  DissipationSpec dissipation;
  SdeSpec sde;
  VerifySpec verify;
  OracleSpec oracle;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
/// Canonical JSON of a config (all fields, fixed key order).
std::string config_to_json(const ExperimentConfig& cfg);

/// Resolved objects. novoid_search runs the parameter sweep.
Potential build_potential(const PotentialSpec& spec);
TwistMatrix build_matrix(const MatrixSpec& spec, const Potential& U);
PhaseGrid build_grid(const GridSpec& spec, const Potential& U);
/// Grid density of the initial condition (point is rejected here).
DensityGrid build_initial_density(const InitialSpec& spec, const Potential& U, const PhaseGrid& grid);
InitSpec build_particle_init(const InitialSpec& spec, const Potential& U);
SolverConfig build_solver(const SolverSpec& spec, const PhaseGrid& grid, const Potential& U);

}  // namespace hypoot
