#include "hypoot/dissipation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "hypoot/errors.hpp"
#include "json.hpp"

namespace hypoot {

double term2_integrand(const Sym2& H, const TwistMatrix& A) {
  const double b = A.b(), c = A.c();
  const double d22 = H.vv - c;
  const double mix = b * d22 - c * (H.xv - b);
  return (d22 * d22 + mix * mix / H.det()) / H.vv;
}

DissipationReport j_functional(const DensityGrid& f, const DensityGrid& g, const TwistMatrix& A,
                               const Potential& U, const BrenierField& field) {
  (void)f;
  const auto& grid = g.grid();
  if (!(field.grid == grid)) throw Error(ErrorKind::field_mismatch, "Brenier field grid differs from g's grid");
  const double area = grid.cell_area();
  const double floor = field.delta_floor;
  std::vector<double> t1, t2, w2, cl;
  t1.reserve(grid.cells());
  double min_t2 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.nv; ++j) {
      const std::size_t c = grid.index(i, j);
      const double m = g(i, j) * area;
      if (!field.in_support[c] || m == 0.0) continue;
      const Vec2 z = grid.center(i, j);
      const Vec2 T = field.map_values[c];
      const Vec2 d = T - z;
      const Vec2 dB = drift(U, T) - drift(U, z);
      t1.push_back(-inner(A, dB, d) * m);
      Sym2 H = field.hessian[c];
      if (field.clamped[c]) {
        H.vv = std::max(H.vv, floor);
        // raise the diagonal entry xx until det reaches the floor
        if (H.det() < floor) H.xx = (floor + H.xv * H.xv) / H.vv;
        cl.push_back(m);
      }
      const double q = term2_integrand(H, A);
      min_t2 = std::min(min_t2, q);
      t2.push_back(q * m);
      w2.push_back(norm_sq(A, d) * m);
    }
  }
  DissipationReport r;
  r.term1 = pairwise_sum(t1);
  r.term2 = pairwise_sum(t2);
  r.j_total = r.term1 + r.term2;
  r.wa_sq = pairwise_sum(w2);
  r.ratio = r.wa_sq > 1e-14 ? r.j_total / r.wa_sq : std::numeric_limits<double>::quiet_NaN();
  r.clamp_fraction = pairwise_sum(cl) / std::max(g.mass(), 1e-300);
  r.min_term2_integrand = t2.empty() ? 0.0 : min_t2;
  r.j_extrapolated = r.j_total;
  return r;
}

DissipationReport j_extrapolated(const DensityGrid& f, const DensityGrid& g, const TwistMatrix& A,
                                 const Potential& U, const JOptions& opt) {
  if (opt.levels < 1 || opt.levels > 3) throw Error(ErrorKind::invalid_parameter, "eps ladder supports 1 to 3 levels");
  const auto& grid = g.grid();
  const double cell = grid.dx() * grid.dx() * A.a() + grid.dv() * grid.dv() * A.c();
  const double finest = opt.eps_finest > 0.0 ? opt.eps_finest : opt.eps_cells * cell;
  std::vector<double> eps;
  for (int k = opt.levels - 1; k >= 0; --k) eps.push_back(finest * std::pow(2.0, k));
  const auto fields = brenier_ladder(f, g, A, eps, opt.brenier);

  std::vector<DissipationReport> reps;
  for (const auto& F : fields) reps.push_back(j_functional(f, g, A, U, F));
  DissipationReport r = reps.back();
  for (std::size_t k = 0; k < reps.size(); ++k) r.eps_ladder.emplace_back(eps[k], reps[k].j_total);
  // J(eps) = J0 + c1 eps + c2 eps^2: halving steps, first then second order
  if (reps.size() == 1) {
    r.j_extrapolated = reps[0].j_total;
  } else if (reps.size() == 2) {
    r.j_extrapolated = 2.0 * reps[1].j_total - reps[0].j_total;
  } else {
    const double r1 = 2.0 * reps[1].j_total - reps[0].j_total;
    const double r2 = 2.0 * reps[2].j_total - reps[1].j_total;
    r.j_extrapolated = (4.0 * r2 - r1) / 3.0;
  }
  return r;
}

GaussianJ gaussian_j_terms(Vec2 mean, Sym2 S, double alpha, const TwistMatrix& A) {
  if (!S.is_spd()) throw Error(ErrorKind::not_spd, "covariance must be SPD");
  if (!(alpha > 0.0)) throw Error(ErrorKind::invalid_parameter, "alpha must be positive");
  const Sym2 Sinf = Sym2::diag(1.0 / alpha, 1.0);
  const Mat2 R = Mat2::from(sqrt_spd(A.sym()));
  const Mat2 Ri = Mat2::from(inverse(sqrt_spd(A.sym())));
  auto conj = [](const Mat2& P, const Sym2& X) { return (P * Mat2::from(X) * P).sym(); };
  // z~ = A^{1/2} z: plain quadratic cost, Gaussian map matrix
  // K = Sg^{-1/2} (Sg^{1/2} Sf Sg^{1/2})^{1/2} Sg^{-1/2}
  const Sym2 Sg = conj(R, Sinf), Sf = conj(R, S);
  const Mat2 rg = Mat2::from(sqrt_spd(Sg));
  const Mat2 rgi = Mat2::from(inverse(sqrt_spd(Sg)));
  const Sym2 K = conj(rgi, sqrt_spd(conj(rg, Sf)));
  GaussianJ out;
  out.L = Ri * Mat2::from(K) * R;
  const Sym2 H = (Mat2::from(A.sym()) * out.L).sym();

  const Mat2 M{0.0, 1.0, -alpha, -1.0};
  const Sym2 Q = (Mat2::from(A.sym()) * M).sym();
  const Mat2 D = out.L - Mat2::identity();
  const Mat2 Eww = D * Mat2::from(Sinf) * D.transpose() + Mat2{mean.x * mean.x, mean.x * mean.v, mean.v * mean.x, mean.v * mean.v};
  const Mat2 QE = Mat2::from(Q) * Eww;
  out.term1 = -QE.trace();
  out.term2 = term2_integrand(H, A);
  out.total = out.term1 + out.term2;
  out.wa_sq = (Mat2::from(A.sym()) * Eww).trace();
  return out;
}

double gaussian_j_oracle(Vec2 mean, Sym2 S, double alpha, const TwistMatrix& A) {
  return gaussian_j_terms(mean, S, alpha, A).total;
}

RateFit fit_decay_rate(const std::vector<double>& times, const std::vector<double>& distances) {
  const std::size_t n = times.size();
  if (n < 5 || distances.size() != n) throw Error(ErrorKind::degenerate_input, "rate fit needs at least 5 points");
  for (std::size_t k = 0; k < n; ++k) {
    if (!(distances[k] > 0.0)) throw Error(ErrorKind::degenerate_input, "distances must be positive");
    if (k > 0 && !(times[k] > times[k - 1])) throw Error(ErrorKind::degenerate_input, "times must increase strictly");
  }
  double mt = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mt += times[k] / n;
    my += std::log(distances[k]) / n;
  }
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double dt = times[k] - mt, dy = std::log(distances[k]) - my;
    stt += dt * dt;
    sty += dt * dy;
    syy += dy * dy;
  }
  RateFit r;
  r.times = times;
  r.distances = distances;
  r.slope = sty / stt;
  r.intercept = my - r.slope * mt;
  r.r_squared = syy > 0.0 ? (sty * sty) / (stt * syy) : 1.0;
  return r;
}

double ou_contraction_rate(double alpha) {
  const Eigen::Matrix2d M = ou_drift_matrix(alpha);
  const Eigen::EigenSolver<Eigen::Matrix2d> es(M);
  return -es.eigenvalues().real().maxCoeff();
}

namespace {

double half_wa_sq(const DensityGrid& f, const DensityGrid& sigma, const TwistMatrix& A, std::size_t max_cells,
                  OtMethod method) {
  DistanceOptions d;
  d.method = method;
  d.mass_floor = 1e-12;
  d.max_cells = max_cells;
  const double w = w_distance(f, sigma, A, d);
  return 0.5 * w * w;
}

// third difference of y on four consecutive samples, spacing h
double third_difference(const std::vector<double>& y, std::size_t k0, double h) {
  return (y[k0 + 3] - 3.0 * y[k0 + 2] + 3.0 * y[k0 + 1] - y[k0]) / (h * h * h);
}

}  // namespace

std::vector<DissipationCheck> verify_dissipation(
    const Trajectory& traj, const TwistMatrix& A, const Potential& U, const DensityGrid& sigma,
    const DissipationOptions& opt, const std::function<JEstimate(const DensityGrid&, double)>& oracle) {
  const std::size_t n = traj.snapshots.size();
  if (n < 3 || traj.times.size() != n) throw Error(ErrorKind::degenerate_input, "need at least 3 snapshots");
  if (opt.max_cells < 16) throw Error(ErrorKind::invalid_parameter, "max_cells must be at least 16");

  std::vector<double> fine(n), coarse(n);
  for (std::size_t k = 0; k < n; ++k) {
    fine[k] = half_wa_sq(traj.snapshots[k], sigma, A, opt.max_cells, opt.method);
    coarse[k] = half_wa_sq(traj.snapshots[k], sigma, A, opt.max_cells / 4, opt.method);
  }

  std::vector<DissipationCheck> out;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double span = traj.times[k + 1] - traj.times[k - 1];
    const double h = 0.5 * span;
    DissipationCheck c;
    c.t = traj.times[k];
    c.lhs = (fine[k + 1] - fine[k - 1]) / span;
    c.tol_ot = std::abs(c.lhs - (coarse[k + 1] - coarse[k - 1]) / span);
    if (n >= 4) {
      // central difference error h^2 |y'''| / 6, nearest 4-point window
      const std::size_t k0 = std::min(k - 1, n - 4);
      c.tol_time = h * h * std::abs(third_difference(fine, k0, h)) / 6.0;
    } else {
      c.tol_time = std::abs(fine[2] - 2.0 * fine[1] + fine[0]) / h;
    }
    if (oracle) {
      const JEstimate e = oracle(traj.snapshots[k], traj.times[k]);
      c.rhs = -e.j;
      c.tol_eps = std::abs(e.eps_bias);
    } else {
      const DissipationReport r = j_extrapolated(traj.snapshots[k], sigma, A, U, opt.j);
      c.rhs = -r.j_extrapolated;
      c.tol_eps = std::abs(r.j_extrapolated - r.j_total);
    }
    c.pass = c.lhs <= c.rhs + opt.tol_factor * (c.tol_time + c.tol_ot + c.tol_eps);
    out.push_back(c);
  }
  return out;
}

KeyCheck verify_key_inequality(const DensityGrid& f, const TwistMatrix& A, const Potential& U,
                               const JOptions& opt) {
  const double b = A.b();
  const TwistMatrix expect = theorem_matrix(U.alpha, 2.0 * b);
  if (std::abs(expect.a() - A.a()) > 1e-12 * A.a() || std::abs(expect.c() - A.c()) > 1e-12 * A.c())
    throw Error(ErrorKind::invalid_parameter, "A must have the form [[b + 2 b alpha, b], [b, 2 b]]");
  const RateConstants rc = rate_constants(U.alpha, U.psi, b);
  const DensityGrid sigma = equilibrium_density(U, f.grid());

  KeyCheck k;
  k.kappa_required = rc.kappa;
  const DissipationReport r = j_extrapolated(f, sigma, A, U, opt);
  k.j = r.j_extrapolated;
  k.wa_sq = 2.0 * half_wa_sq(f, sigma, A, 64 * 64, OtMethod::exact);
  if (k.wa_sq < 1e-10) {
    k.vacuous = true;
    k.ratio = std::numeric_limits<double>::quiet_NaN();
    k.pass = true;
    return k;
  }
  k.ratio = k.j / k.wa_sq;
  const double slack = std::abs(r.j_extrapolated - r.j_total);
  k.pass = k.j + slack >= k.kappa_required * k.wa_sq;
  return k;
}

KeyCheck verify_key_gaussian(Vec2 mean, Sym2 S, double alpha, const TwistMatrix& A, double kappa) {
  const GaussianJ g = gaussian_j_terms(mean, S, alpha, A);
  KeyCheck k;
  k.kappa_required = kappa;
  k.j = g.total;
  k.wa_sq = g.wa_sq;
  if (k.wa_sq < 1e-14) {
    k.vacuous = true;
    k.ratio = std::numeric_limits<double>::quiet_NaN();
    k.pass = true;
    return k;
  }
  k.ratio = k.j / k.wa_sq;
  k.pass = k.j >= kappa * k.wa_sq * (1.0 - 1e-12);
  return k;
}

void write_report_json(const std::string& path, const DissipationReport& r) {
  nlohmann::json j;
  j["term1"] = r.term1;
  j["term2"] = r.term2;
  j["j_total"] = r.j_total;
  j["j_extrapolated"] = r.j_extrapolated;
  j["wa_sq"] = r.wa_sq;
  j["ratio"] = std::isfinite(r.ratio) ? nlohmann::json(r.ratio) : nlohmann::json(nullptr);
  j["clamp_fraction"] = r.clamp_fraction;
  j["min_term2_integrand"] = r.min_term2_integrand;
  nlohmann::json ladder = nlohmann::json::array();
  for (const auto& [eps, val] : r.eps_ladder) ladder.push_back({{"eps", eps}, {"j", val}});
  j["eps_ladder"] = ladder;
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::io_error, "cannot open " + path);
  os << std::setw(2) << j << "\n";
}

void write_decay_csv(const std::string& path, const std::vector<DecayRow>& rows) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::io_error, "cannot open " + path);
  os << "t,W_A,W_2,J_A_raw,J_A_extrapolated,H_rel_entropy,mass\n" << std::setprecision(12);
  for (const auto& r : rows)
    os << r.t << ',' << r.wa << ',' << r.w2 << ',' << r.j_raw << ',' << r.j_extrapolated << ',' << r.h_rel << ','
       << r.mass << '\n';
}

}  // namespace hypoot
