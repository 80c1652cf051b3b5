#include "hypoot/potential.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_interp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "hypoot/errors.hpp"

namespace hypoot {

Perturbation Perturbation::none() { return Perturbation(None{}, 0.0, "none"); }

Perturbation Perturbation::novoid(double scale) {
  if (!std::isfinite(scale) || scale < 0.0) {
    throw Error(ErrorKind::invalid_parameter, "novoid scale must be finite and nonnegative");
  }
  return Perturbation(Novoid{scale}, 1.0, "novoid");
}

Perturbation Perturbation::custom(Fn value, Fn d1, Fn d2, double radius, std::string label) {
  if (!(radius > 0.0) || !value || !d1 || !d2) {
    throw Error(ErrorKind::invalid_parameter, "custom perturbation needs R > 0 and three functions");
  }
  return Perturbation(Custom{std::move(value), std::move(d1), std::move(d2)}, radius,
                      std::move(label));
}

double Perturbation::novoid_scale() const {
  if (const auto* n = std::get_if<Novoid>(&kind_)) return n->scale;
  return 0.0;
}

double Perturbation::value(double x) const {
  if (!(std::abs(x) < radius_)) return 0.0;
  return std::visit(
      [x](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, None>) {
          return 0.0;
        } else if constexpr (std::is_same_v<K, Novoid>) {
          const double q = x * x - 1.0;
          return k.scale * q * q * q * q;
        } else {
          return k.value(x);
        }
      },
      kind_);
}

double Perturbation::d1(double x) const {
  if (!(std::abs(x) < radius_)) return 0.0;
  return std::visit(
      [x](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, None>) {
          return 0.0;
        } else if constexpr (std::is_same_v<K, Novoid>) {
          const double q = x * x - 1.0;
          return k.scale * 8.0 * x * q * q * q;
        } else {
          return k.d1(x);
        }
      },
      kind_);
}

double Perturbation::d2(double x) const {
  if (!(std::abs(x) < radius_)) return 0.0;
  return std::visit(
      [x](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, None>) {
          return 0.0;
        } else if constexpr (std::is_same_v<K, Novoid>) {
          const double q = x * x - 1.0;
          return k.scale * 8.0 * q * q * (7.0 * x * x - 1.0);
        } else {
          return k.d2(x);
        }
      },
      kind_);
}

namespace {

struct GslInterpDeleter {
  void operator()(gsl_interp* p) const { gsl_interp_free(p); }
};

/// Shared, immutable table + interpolant so the closures stay cheap to copy.
struct Table {
  std::vector<double> x;
  std::vector<double> y;
  std::unique_ptr<gsl_interp, GslInterpDeleter> spline;

  Table(std::vector<double> xs, std::vector<double> ys, const gsl_interp_type* type)
      : x(std::move(xs)), y(std::move(ys)), spline(gsl_interp_alloc(type, x.size())) {
    gsl_interp_init(spline.get(), x.data(), y.data(), x.size());
  }

  bool inside(double t) const { return t >= x.front() && t <= x.back(); }
  double eval(double t) const {
    return inside(t) ? gsl_interp_eval(spline.get(), x.data(), y.data(), t, nullptr) : 0.0;
  }
  double deriv(double t) const {
    return inside(t) ? gsl_interp_eval_deriv(spline.get(), x.data(), y.data(), t, nullptr) : 0.0;
  }
  double deriv2(double t) const {
    return inside(t) ? gsl_interp_eval_deriv2(spline.get(), x.data(), y.data(), t, nullptr) : 0.0;
  }
};

}  // namespace

Perturbation load_perturbation_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_error, "cannot open perturbation table " + path);
  std::vector<std::vector<double>> cols;
  std::string line;
  std::size_t ncols = 0;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::vector<double> row;
    double val = 0.0;
    while (ls >> val) row.push_back(val);
    if (ncols == 0) {
      ncols = row.size();
      if (ncols < 2 || ncols > 4) {
        throw Error(ErrorKind::parse_error, "perturbation table needs 2 to 4 columns");
      }
      cols.resize(ncols);
    }
    if (row.size() != ncols) throw Error(ErrorKind::parse_error, "ragged perturbation table");
    for (std::size_t k = 0; k < ncols; ++k) cols[k].push_back(row[k]);
  }
  if (cols.empty() || cols[0].size() < 4) {
    throw Error(ErrorKind::parse_error, "perturbation table needs at least 4 rows");
  }
  for (std::size_t i = 1; i < cols[0].size(); ++i) {
    if (!(cols[0][i] > cols[0][i - 1])) {
      throw Error(ErrorKind::parse_error, "perturbation table x column must be increasing");
    }
  }
  gsl_set_error_handler_off();
  const double radius = std::max(std::abs(cols[0].front()), std::abs(cols[0].back()));
  const auto& xs = cols[0];
  if (ncols == 2) {
    auto t = std::make_shared<Table>(xs, cols[1], gsl_interp_cspline);
    return Perturbation::custom([t](double x) { return t->eval(x); },
                                [t](double x) { return t->deriv(x); },
                                [t](double x) { return t->deriv2(x); }, radius, "table-spline");
  }
  if (ncols == 3) {
    auto v = std::make_shared<Table>(xs, cols[1], gsl_interp_linear);
    auto d = std::make_shared<Table>(xs, cols[2], gsl_interp_cspline);
    return Perturbation::custom([v](double x) { return v->eval(x); },
                                [d](double x) { return d->eval(x); },
                                [d](double x) { return d->deriv(x); }, radius, "table-d1");
  }
  auto v = std::make_shared<Table>(xs, cols[1], gsl_interp_linear);
  auto d = std::make_shared<Table>(xs, cols[2], gsl_interp_linear);
  auto dd = std::make_shared<Table>(xs, cols[3], gsl_interp_linear);
  return Perturbation::custom([v](double x) { return v->eval(x); },
                              [d](double x) { return d->eval(x); },
                              [dd](double x) { return dd->eval(x); }, radius, "table-full");
}

SupNorms sup_norms(const Perturbation& psi, int n_refine) {
  if (n_refine < 1) throw Error(ErrorKind::invalid_parameter, "n_refine must be >= 1");
  const double R = psi.support_radius();
  if (psi.is_none() || R <= 0.0) return {};

  auto sample = [&](long intervals) {
    SupNorms s;
    const double h = 2.0 * R / static_cast<double>(intervals);
    for (long k = 0; k <= intervals; ++k) {
      // symmetric grid; the k = intervals/2 node is exactly 0
      const double x = (2 * k == intervals) ? 0.0 : -R + h * static_cast<double>(k);
      s.psi = std::max(s.psi, std::abs(psi.value(x)));
      s.dpsi = std::max(s.dpsi, std::abs(psi.d1(x)));
      s.ddpsi = std::max(s.ddpsi, std::abs(psi.d2(x)));
    }
    return s;
  };
  auto close = [](double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 || std::abs(a - b) < 1e-6 * scale;
  };

  long intervals = 16L << n_refine;
  SupNorms prev = sample(intervals);
  for (int doubling = 0; doubling < 20; ++doubling) {
    intervals *= 2;
    const SupNorms next = sample(intervals);
    if (close(prev.psi, next.psi) && close(prev.dpsi, next.dpsi) && close(prev.ddpsi, next.ddpsi)) {
      return next;
    }
    prev = next;
  }
  throw Error(ErrorKind::no_convergence, "sup norms did not stabilise after 20 grid doublings");
}

AdmissibilityReport admissibility_from_norms(double alpha, const SupNorms& n, double radius) {
  if (!(alpha > 0.0)) throw Error(ErrorKind::invalid_parameter, "alpha must be > 0");
  AdmissibilityReport r;
  r.alpha = alpha;
  r.radius = radius;
  r.norm_psi = n.psi;
  r.norm_dpsi = n.dpsi;
  r.norm_ddpsi = n.ddpsi;
  r.gamma = n.ddpsi - alpha;

  r.dpsi_below_alpha = 2.0 * n.dpsi < alpha;
  r.alpha_below_ddpsi = alpha < n.ddpsi;
  r.ddpsi_below_tenth = n.ddpsi < 0.1;
  r.gamma_below_ddpsi_sq = r.gamma < n.ddpsi * n.ddpsi;

  const double under_root = 1.0 - 2.0 * (r.gamma + n.ddpsi);
  r.sqrt_defined = under_root >= 0.0;
  r.b_star = r.sqrt_defined
                 ? (r.gamma + n.ddpsi * n.ddpsi) * 2.0 / (1.0 + std::sqrt(under_root))
                 : std::numeric_limits<double>::quiet_NaN();
  r.c_star = (1.0 / 20.0) * std::exp(-0.5 * alpha * (radius + 2.0) * (radius + 2.0)) *
             std::exp(-n.psi) * std::min(1.0, (alpha - 2.0 * n.dpsi) / 4.0);
  r.c_low = 2.0 * r.b_star;
  r.c_high = r.c_star;
  r.c_window_open = r.sqrt_defined && r.c_star > 2.0 * r.b_star;

  r.admissible = r.dpsi_below_alpha && r.alpha_below_ddpsi && r.ddpsi_below_tenth &&
                 r.sqrt_defined && r.c_window_open;

  std::ostringstream why;
  if (!r.dpsi_below_alpha) why << "2||psi'|| >= alpha; ";
  if (!r.alpha_below_ddpsi) why << "alpha >= ||psi''||; ";
  if (!r.ddpsi_below_tenth) why << "||psi''|| >= 1e-1; ";
  if (!r.sqrt_defined) why << "1 - 2(gamma + ||psi''||) < 0 (b_star undefined); ";
  else if (!r.c_window_open) why << "c_star <= 2 b_star; ";
  r.reason = why.str();
  if (!r.reason.empty()) r.reason.resize(r.reason.size() - 2);
  return r;
}

AdmissibilityReport check_admissibility(double alpha, const Perturbation& psi) {
  if (!(alpha > 0.0)) throw Error(ErrorKind::invalid_parameter, "alpha must be > 0");
  return admissibility_from_norms(alpha, sup_norms(psi), psi.support_radius());
}

NovoidSearchResult novoid_search() {
  const SupNorms unit = sup_norms(Perturbation::novoid(1.0), 8);
  const double p1 = unit.dpsi;
  const double p2 = unit.ddpsi;
  constexpr int kPoints = 200;
  constexpr long kMaxCandidates = 1000000;

  NovoidSearchResult out;
  double width = p2 - 2.0 * p1;
  while (out.candidates < kMaxCandidates) {
    // a_param nearest ||Psi''|| first, then scale ascending on a log grid
    for (int k = 0; k < kPoints && out.candidates < kMaxCandidates; ++k) {
      const double a = p2 - width * static_cast<double>(k + 1) / (kPoints + 1);
      if (!(a > 2.0 * p1)) continue;
      const double lo = (p2 - a) / (p2 * p2);
      const double hi = 0.1 / p2;
      if (!(lo < hi)) continue;
      for (int m = 0; m < kPoints && out.candidates < kMaxCandidates; ++m) {
        const double s = lo * std::pow(hi / lo, static_cast<double>(m + 1) / (kPoints + 1));
        ++out.candidates;
        const auto rep = admissibility_from_norms(s * a, unit.scaled(s), 1.0);
        if (rep.admissible && rep.gamma_below_ddpsi_sq) {
          out.a_param = a;
          out.scale = s;
          out.alpha = s * a;
          out.report = rep;
          return out;
        }
      }
    }
    width /= 10.0;
  }
  throw Error(ErrorKind::not_found, "novoid parameter sweep exhausted 1e6 candidates");
}

Vec2 drift(const Potential& U, Vec2 z) { return {z.v, -U.dU(z.x) - z.v}; }

RateConstants rate_constants(double alpha, const SupNorms& n, double b) {
  if (!(alpha > 0.0) || !(b > 0.0)) {
    throw Error(ErrorKind::invalid_parameter, "rate_constants requires alpha > 0 and b > 0");
  }
  RateConstants k;
  k.b = b;
  k.gamma = n.ddpsi - alpha;
  const double hyp = (n.ddpsi + b) * (n.ddpsi + b) / (1.0 + 4.0 * b) + k.gamma;
  if (!(b > hyp)) {
    std::ostringstream os;
    os << "b = " << b << " does not exceed (||psi''|| + b)^2/(1 + 4b) + gamma = " << hyp;
    throw Error(ErrorKind::hypothesis_violated, os.str());
  }
  k.kappa1 = std::min(0.5 - n.dpsi, 0.5 * (alpha - 2.0 * n.dpsi));
  k.kappa2 = 0.5 * (0.5 - n.ddpsi - 0.5 * k.gamma);
  k.kappa3 = 0.5 * (0.5 * (b - k.gamma) - (n.ddpsi + b) * (n.ddpsi + b) / (2.0 + 4.0 * b));
  k.rho_base = 0.5 * (alpha + 1.5 + std::sqrt((alpha - 0.5) * (alpha - 0.5) + 1.0));
  k.kappa = std::min(0.5 * std::min(k.kappa1, k.kappa2), k.kappa3) / k.rho_base;
  if (!(k.kappa1 > 0.0) || !(k.kappa2 > 0.0) || !(k.kappa3 > 0.0) || !(k.kappa > 0.0)) {
    std::ostringstream os;
    os << "nonpositive rate constant: kappa1 = " << k.kappa1 << ", kappa2 = " << k.kappa2
       << ", kappa3 = " << k.kappa3;
    throw Error(ErrorKind::hypothesis_violated, os.str());
  }
  return k;
}

RateConstants rate_constants(double alpha, const Perturbation& psi, double b) {
  return rate_constants(alpha, sup_norms(psi), b);
}

}  // namespace hypoot
