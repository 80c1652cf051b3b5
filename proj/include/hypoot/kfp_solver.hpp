#pragma once

// Splitting solver for d_t f + v d_x f - U'(x) d_v f = d_v (v f + d_v f) on a
// truncated phase-space grid.
//
// Transport part: unsplit finite-volume upwind fluxes, SSP-RK2 in time, zero
// inflow. The MC-limited linear reconstruction is applied to f / f_inf and
// multiplied back by f_inf at the face, so f_inf is preserved up to O(h^2)
// without the limiter clipping at its peak. Velocity part: Scharfetter-Gummel
// (Chang-Cooper type) flux, whose discrete kernel is exactly exp(-v_j^2/2),
// advanced either by the exact exponential of the nv x nv generator (default)
// or by backward Euler (tridiagonal).

#include <Eigen/Dense>
#include <vector>

#include "hypoot/equilibrium.hpp"
#include "hypoot/potential.hpp"

namespace hypoot {

enum class Splitting { lie, strang };
enum class VelocityScheme { exponential, implicit_euler };

struct SolverConfig {
  double dt = 0.0;
  double t_end = 0.0;
  std::vector<double> snapshot_times;  ///< sorted, within [0, t_end]
  Splitting splitting = Splitting::strang;
  VelocityScheme velocity = VelocityScheme::exponential;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<DensityGrid> snapshots;
  std::vector<double> requested_times;
  SolverConfig config;
  double dt_used = 0.0;                 ///< t_end / number of steps (<= config.dt)
  std::vector<double> mass_deviation;   ///< per step, |dm + leakage|
  std::vector<double> leakage;          ///< per step, mass lost through the boundary
  double total_leakage = 0.0;
  double max_time_mismatch = 0.0;
};

/// 0.5 * min(dx / max|v|, dv / max|U'(x) + v|, dv^2 / 2) over cell centers.
double cfl_dt(const PhaseGrid& grid, const Potential& U);

class KfpStepper {
 public:
  /// Throws cfl_violation when dt > cfl_dt(grid, U), invalid_parameter when dt < 0.
  KfpStepper(const Potential& U, const PhaseGrid& grid, double dt,
             Splitting splitting = Splitting::strang,
             VelocityScheme velocity = VelocityScheme::exponential);

  /// One full step in place. Returns the mass that left through the boundary.
  double advance(std::vector<double>& f) const;

  double dt() const { return dt_; }
  const PhaseGrid& grid() const { return grid_; }

 private:
  double transport(std::vector<double>& f, double tau) const;
  void velocity(std::vector<double>& f, double tau) const;
  double transport_rhs(const std::vector<double>& f, std::vector<double>& rhs) const;

  Potential U_;
  PhaseGrid grid_;
  double dt_;
  Splitting splitting_;
  VelocityScheme scheme_;
  std::vector<double> xspeed_;  ///< v_j
  std::vector<double> vspeed_;  ///< -U'(x_i)
  // unnormalized f_inf factors at centers and faces; the reconstruction acts on f / f_inf
  std::vector<double> ex_c_, ex_f_;  ///< exp(-U + Umin) at x_i, x_{i-1/2}
  std::vector<double> ev_c_, ev_f_;  ///< exp(-v^2/2) at v_j, v_{j-1/2}
  double face_ratio_ = 1.0;          ///< max f_inf(face) / f_inf(adjacent center)
  std::vector<double> upper_, lower_, diag_;  ///< velocity generator (tridiagonal)
  Eigen::MatrixXd propagator_;                ///< exp(tau L) for the velocity sub-step
  double velocity_tau_ = 0.0;
};

/// One step of the scheme applied to f. dt = 0 returns f unchanged.
DensityGrid step(const DensityGrid& f, const Potential& U, double dt);

/// Runs to cfg.t_end and records the snapshot nearest to each requested time.
/// Snapshots are not renormalized; their mass reflects the logged leakage.
Trajectory evolve(const DensityGrid& f0, const Potential& U, const SolverConfig& cfg);

struct OuMoments {
  Vec2 mean;
  Sym2 cov;
};

/// Mean and covariance of the psi = 0 Langevin dynamics:
///   m(t) = e^{Mt} m0,  S(t) = S_inf + e^{Mt} (S0 - S_inf) e^{M^T t},
///   M = [[0, 1], [-alpha, -1]],  S_inf = diag(1/alpha, 1).
OuMoments ou_moments(double alpha, Vec2 m0, Sym2 cov0, double t);

/// Drift matrix M of the linear dynamics.
Eigen::Matrix2d ou_drift_matrix(double alpha);

/// sup |step(f_inf) - f_inf| / (dt sup f_inf) with dt = cfl_dt.
double stationarity_residual(const Potential& U, const PhaseGrid& grid);

}  // namespace hypoot
