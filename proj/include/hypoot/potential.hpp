#pragma once

// Confinement potential U(x) = alpha x^2 / 2 + psi(x), the admissibility
// condition on (alpha, psi), the drift field B and the contraction constants.

#include <functional>
#include <memory>
#include <string>
#include <variant>

#include "hypoot/twist_algebra.hpp"

namespace hypoot {

/// Compactly supported perturbation psi on [-R, R].
class Perturbation {
 public:
  using Fn = std::function<double(double)>;

  /// psi = 0 (support radius 0).
  static Perturbation none();
  /// scale * (x - 1)^4 (x + 1)^4 on [-1, 1], zero outside; R = 1.
  static Perturbation novoid(double scale);
  /// User-supplied psi, psi', psi''; the functions are only evaluated on (-R, R).
  static Perturbation custom(Fn value, Fn d1, Fn d2, double radius, std::string label = "custom");

  double value(double x) const;
  double d1(double x) const;
  double d2(double x) const;
  double support_radius() const { return radius_; }

  bool is_none() const { return std::holds_alternative<None>(kind_); }
  bool is_novoid() const { return std::holds_alternative<Novoid>(kind_); }
  /// Scale of a novoid perturbation (0 for other kinds).
  double novoid_scale() const;
  const std::string& label() const { return label_; }

 private:
  struct None {};
  struct Novoid {
    double scale;
  };
  struct Custom {
    Fn value, d1, d2;
  };

  Perturbation(std::variant<None, Novoid, Custom> kind, double radius, std::string label)
      : kind_(std::move(kind)), radius_(radius), label_(std::move(label)) {}

  std::variant<None, Novoid, Custom> kind_;
  double radius_ = 0.0;
  std::string label_;
};

/// Loads a tabulated perturbation: whitespace-separated columns
///   x psi                  natural cubic spline supplies psi' and psi''
///   x psi dpsi             psi linear, psi' spline, psi'' = spline derivative
///   x psi dpsi ddpsi       each column interpolated linearly
/// Lines starting with '#' are ignored. The support radius is max(|x_0|, |x_n|),
/// and psi vanishes outside the tabulated range. Spline-derived derivatives are
/// lower fidelity than closed forms; sup norms computed from them are approximate.
Perturbation load_perturbation_table(const std::string& path);

struct Potential {
  double alpha = 1.0;
  Perturbation psi = Perturbation::none();

  double U(double x) const { return 0.5 * alpha * x * x + psi.value(x); }
  double dU(double x) const { return alpha * x + psi.d1(x); }
  double d2U(double x) const { return alpha + psi.d2(x); }
};

struct SupNorms {
  double psi = 0.0;
  double dpsi = 0.0;
  double ddpsi = 0.0;

  SupNorms scaled(double s) const { return {s * psi, s * dpsi, s * ddpsi}; }
};

/// Sup norms of |psi|, |psi'|, |psi''| over [-R, R] by dense sampling on a
/// symmetric grid of 16 * 2^n_refine intervals, doubled until every norm
/// changes by < 1e-6 relative. Throws no_convergence after 20 doublings.
SupNorms sup_norms(const Perturbation& psi, int n_refine = 4);

struct AdmissibilityReport {
  double alpha = 0.0;
  double radius = 0.0;
  double norm_psi = 0.0;
  double norm_dpsi = 0.0;
  double norm_ddpsi = 0.0;
  double gamma = 0.0;
  double b_star = 0.0;
  double c_star = 0.0;
  double c_low = 0.0;   ///< 2 b_star
  double c_high = 0.0;  ///< c_star

  bool dpsi_below_alpha = false;   ///< 2 ||psi'|| < alpha
  bool alpha_below_ddpsi = false;  ///< alpha < ||psi''||
  bool ddpsi_below_tenth = false;  ///< ||psi''|| < 1/10
  bool sqrt_defined = false;       ///< 1 - 2 (gamma + ||psi''||) >= 0
  bool c_window_open = false;      ///< c_star > 2 b_star
  bool gamma_below_ddpsi_sq = false;  ///< extra constraint used when constructing examples
  bool admissible = false;
  std::string reason;
};

/// Evaluates every inequality of the admissibility condition from precomputed norms.
AdmissibilityReport admissibility_from_norms(double alpha, const SupNorms& norms, double radius);

/// Throws invalid_parameter when alpha <= 0. A negative argument under the
/// square root in b_star yields admissible = false with a reason (b_star = NaN).
AdmissibilityReport check_admissibility(double alpha, const Perturbation& psi);

struct NovoidSearchResult {
  double a_param = 0.0;  ///< alpha / scale
  double scale = 0.0;
  double alpha = 0.0;
  AdmissibilityReport report;
  long candidates = 0;
};

/// Deterministic coarse-to-fine sweep over (a_param, scale) with
/// a_param in (2||Psi'||, ||Psi''||) and scale in ((||Psi''|| - a_param)/||Psi''||^2, 1/(10 ||Psi''||)),
/// alpha = scale * a_param, psi = scale * Psi. Returns the first admissible pair.
/// Throws not_found after 1e6 candidates.
NovoidSearchResult novoid_search();

/// B(x, v) = (v, -U'(x) - v).
Vec2 drift(const Potential& U, Vec2 z);

struct RateConstants {
  double kappa1 = 0.0;
  double kappa2 = 0.0;
  double kappa3 = 0.0;
  double kappa = 0.0;
  double rho_base = 0.0;  ///< spectral radius of [[alpha + 1/2, 1/2], [1/2, 1]]
  double b = 0.0;
  double gamma = 0.0;
};

/// Constants for A = [[b + 2b alpha, b], [b, 2b]]. Throws hypothesis_violated if
/// b <= (||psi''|| + b)^2 / (1 + 4b) + gamma or any constant is nonpositive.
RateConstants rate_constants(double alpha, const SupNorms& norms, double b);
RateConstants rate_constants(double alpha, const Perturbation& psi, double b);

}  // namespace hypoot
