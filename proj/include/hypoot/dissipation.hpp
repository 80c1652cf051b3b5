#pragma once

// The dissipation functional J_A(f | g), its closed form in the Gaussian
// sector, and the numerical checks of the dissipation inequality, the key
// functional inequality and the exponential decay rate.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hypoot/equilibrium.hpp"
#include "hypoot/kfp_solver.hpp"
#include "hypoot/potential.hpp"
#include "hypoot/transport.hpp"
#include "hypoot/twist_algebra.hpp"

namespace hypoot {

struct DissipationReport {
  double term1 = 0.0;  ///< drift term
  double term2 = 0.0;  ///< Hessian term
  double j_total = 0.0;
  double wa_sq = 0.0;  ///< int |T - id|_A^2 g, the transport cost of the map used
  double ratio = 0.0;  ///< j_total / wa_sq, NaN when wa_sq <= 1e-14
  double clamp_fraction = 0.0;
  double min_term2_integrand = 0.0;
  std::vector<std::pair<double, double>> eps_ladder;  ///< (eps, j_total) per level
  double j_extrapolated = 0.0;  ///< equals j_total without a ladder
};

/// term2 integrand for a Hessian H of phi: h22^-1 [(h22 - c)^2 + (b (h22 - c) - c (h12 - b))^2 / det H].
double term2_integrand(const Sym2& H, const TwistMatrix& A);

/// Midpoint quadrature of J_A(f | g) against g with a map from g toward f.
/// Clamped cells use max(h22, floor) and max(det, floor). Throws field_mismatch
/// when the field lives on another grid than g.
DissipationReport j_functional(const DensityGrid& f, const DensityGrid& g, const TwistMatrix& A,
                               const Potential& U, const BrenierField& field);

struct JOptions {
  int levels = 3;
  /// Finest eps as a multiple of the squared A-size of a grid cell
  /// (dx^2 a + dv^2 c); ignored when eps_finest > 0.
  double eps_cells = 0.5;
  double eps_finest = 0.0;
  BrenierOptions brenier;
};

/// J_A on the ladder eps_finest * 2^k, k = levels-1 .. 0, with repeated
/// Richardson extrapolation (first-order bias, then second order).
DissipationReport j_extrapolated(const DensityGrid& f, const DensityGrid& g, const TwistMatrix& A,
                                 const Potential& U, const JOptions& opt = {});

struct GaussianJ {
  Mat2 L;  ///< Brenier map z -> m + L z from f_inf to N(m, S)
  double term1 = 0.0;
  double term2 = 0.0;
  double total = 0.0;
  double wa_sq = 0.0;
};

/// Closed form of J_A(N(m, S) | f_inf) for psi = 0 (derivation in docs/gaussian_sector.md).
GaussianJ gaussian_j_terms(Vec2 mean, Sym2 S, double alpha, const TwistMatrix& A);
double gaussian_j_oracle(Vec2 mean, Sym2 S, double alpha, const TwistMatrix& A);

struct DissipationCheck {
  double t = 0.0;
  double lhs = 0.0;  ///< central difference of W_A^2 / 2
  double rhs = 0.0;  ///< -J_A at the midpoint snapshot
  double tol_time = 0.0;
  double tol_ot = 0.0;
  double tol_eps = 0.0;
  bool pass = false;
};

/// Callback giving J_A(f_t | sigma) and an entropic-bias estimate for a snapshot.
struct JEstimate {
  double j = 0.0;
  double eps_bias = 0.0;
};

struct DissipationOptions {
  OtMethod method = OtMethod::exact;
  std::size_t max_cells = 64 * 64;  ///< W_A is computed on block-summed densities
  double tol_factor = 1.0;          ///< C in tol = C (time + OT + eps)
  JOptions j;
};

/// lhs by central differences of W_A^2(f_t, sigma) / 2, rhs = -J_A at the
/// middle snapshot. With `oracle` set, rhs and its eps bias come from it.
std::vector<DissipationCheck> verify_dissipation(
    const Trajectory& traj, const TwistMatrix& A, const Potential& U, const DensityGrid& sigma,
    const DissipationOptions& opt = {},
    const std::function<JEstimate(const DensityGrid&, double)>& oracle = nullptr);

struct KeyCheck {
  double kappa_required = 0.0;
  double j = 0.0;
  double wa_sq = 0.0;
  double ratio = 0.0;  ///< NaN when wa_sq is numerically zero (vacuous pass)
  bool vacuous = false;
  bool pass = false;
};

/// ratio = J_A(f | f_inf) / W_A^2(f, f_inf) against kappa from rate_constants.
KeyCheck verify_key_inequality(const DensityGrid& f, const TwistMatrix& A, const Potential& U,
                               const JOptions& opt = {});
/// Closed-form version for psi = 0 and f = N(m, S).
KeyCheck verify_key_gaussian(Vec2 mean, Sym2 S, double alpha, const TwistMatrix& A, double kappa);

struct RateFit {
  std::vector<double> times;
  std::vector<double> distances;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double kappa_observed() const { return -slope; }
};

/// Least squares on (t, ln d). Throws degenerate_input for < 5 points,
/// non-increasing times or nonpositive distances.
RateFit fit_decay_rate(const std::vector<double>& times, const std::vector<double>& distances);

/// Slowest decay rate of the psi = 0 moment dynamics: -max Re eig(M).
double ou_contraction_rate(double alpha);

void write_report_json(const std::string& path, const DissipationReport& r);

struct DecayRow {
  double t, wa, w2, j_raw, j_extrapolated, h_rel, mass;
};
/// CSV with columns t,W_A,W_2,J_A_raw,J_A_extrapolated,H_rel_entropy,mass.
void write_decay_csv(const std::string& path, const std::vector<DecayRow>& rows);

}  // namespace hypoot
