#include "hypoot/kfp_solver.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hypoot/errors.hpp"

namespace hypoot {

double cfl_dt(const PhaseGrid& grid, const Potential& U) {
  double vmax = 0.0, fmax = 0.0;
  for (int j = 0; j < grid.nv; ++j) vmax = std::max(vmax, std::abs(grid.v(j)));
  for (int i = 0; i < grid.nx; ++i) {
    const double du = U.dU(grid.x(i));
    fmax = std::max({fmax, std::abs(du + grid.v(0)), std::abs(du + grid.v(grid.nv - 1))});
  }
  const double tx = grid.dx() / vmax;
  const double tv = fmax > 0.0 ? grid.dv() / fmax : tx;
  const double td = 0.5 * grid.dv() * grid.dv();
  return 0.5 * std::min({tx, tv, td});
}

namespace {

// B(x) = x / (e^x - 1)
double bernoulli(double x) {
  if (std::abs(x) < 1e-8) return 1.0 - 0.5 * x;
  return x / std::expm1(x);
}

double mc_slope(double dm, double dp) {
  if (dm * dp <= 0.0) return 0.0;
  const double s = dm > 0.0 ? 1.0 : -1.0;
  return s * std::min({2.0 * std::abs(dm), 2.0 * std::abs(dp), 0.5 * std::abs(dm + dp)});
}

}  // namespace

KfpStepper::KfpStepper(const Potential& U, const PhaseGrid& grid, double dt, Splitting splitting,
                       VelocityScheme velocity)
    : U_(U), grid_(grid), dt_(dt), splitting_(splitting), scheme_(velocity) {
  if (!(dt >= 0.0) || !std::isfinite(dt)) {
    throw Error(ErrorKind::invalid_parameter, "dt must be finite and >= 0");
  }
  const double bound = cfl_dt(grid, U);
  if (dt > bound * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "dt = " << dt << " exceeds the CFL bound " << bound;
    throw Error(ErrorKind::cfl_violation, os.str());
  }
  const int nv = grid.nv;
  xspeed_.resize(nv);
  for (int j = 0; j < nv; ++j) xspeed_[j] = grid.v(j);
  vspeed_.resize(grid.nx);
  for (int i = 0; i < grid.nx; ++i) vspeed_[i] = -U.dU(grid.x(i));

  const int nx = grid.nx;
  double umin = U.U(grid.x(0));
  for (int i = 0; i < nx; ++i) umin = std::min(umin, U.U(grid.x(i)));
  auto boltz = [](double e) { return std::exp(-std::min(e, 700.0)); };
  ex_c_.resize(nx);
  ex_f_.resize(nx + 1);
  for (int i = 0; i < nx; ++i) ex_c_[i] = boltz(U.U(grid.x(i)) - umin);
  for (int i = 0; i <= nx; ++i) ex_f_[i] = boltz(U.U(-grid.Lx + i * grid.dx()) - umin);
  ev_c_.resize(nv);
  ev_f_.resize(nv + 1);
  for (int j = 0; j < nv; ++j) ev_c_[j] = boltz(0.5 * grid.v(j) * grid.v(j));
  for (int j = 0; j <= nv; ++j) {
    const double v = -grid.Lv + j * grid.dv();
    ev_f_[j] = boltz(0.5 * v * v);
  }
  face_ratio_ = 1.0;
  for (int i = 0; i < nx; ++i) {
    face_ratio_ = std::max({face_ratio_, ex_f_[i] / ex_c_[i], ex_f_[i + 1] / ex_c_[i]});
  }
  for (int j = 0; j < nv; ++j) {
    face_ratio_ = std::max({face_ratio_, ev_f_[j] / ev_c_[j], ev_f_[j + 1] / ev_c_[j]});
  }

  // df_j/dt = (G_{j+1/2} - G_{j-1/2}) / dv,
  // G_{j+1/2} = (B(-d) f_{j+1} - B(d) f_j) / dv,  d = (v_{j+1}^2 - v_j^2) / 2
  diag_.assign(nv, 0.0);
  upper_.assign(nv, 0.0);
  lower_.assign(nv, 0.0);
  const double h2 = grid.dv() * grid.dv();
  for (int j = 0; j + 1 < nv; ++j) {
    const double d = 0.5 * (grid.v(j + 1) * grid.v(j + 1) - grid.v(j) * grid.v(j));
    const double bp = bernoulli(-d) / h2;  // weight of f_{j+1}
    const double bm = bernoulli(d) / h2;   // weight of f_j
    // face j+1/2 adds to cell j, subtracts from cell j+1
    diag_[j] -= bm;
    upper_[j] += bp;  // row j, column j+1
    diag_[j + 1] -= bp;
    lower_[j + 1] += bm;  // row j+1, column j
  }

  velocity_tau_ = dt;
  if (scheme_ == VelocityScheme::exponential && dt > 0.0) {
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(nv, nv);
    for (int j = 0; j < nv; ++j) {
      L(j, j) = diag_[j];
      if (j + 1 < nv) L(j, j + 1) = upper_[j];
      if (j > 0) L(j, j - 1) = lower_[j];
    }
    propagator_ = (velocity_tau_ * L).exp();
    for (int k = 0; k < nv; ++k) {
      double s = 0.0;
      for (int j = 0; j < nv; ++j) {
        propagator_(j, k) = std::max(0.0, propagator_(j, k));
        s += propagator_(j, k);
      }
      propagator_.col(k) /= s;
    }
  }
}

double KfpStepper::transport_rhs(const std::vector<double>& f, std::vector<double>& rhs) const {
  const int nx = grid_.nx, nv = grid_.nv;
  const double dx = grid_.dx(), dv = grid_.dv();
  rhs.assign(f.size(), 0.0);
  double out = 0.0;

  // upwind face fluxes of w * q along a line, q = f / w at centers, w known at faces
  std::vector<double> q, slope, flux;
  auto line_flux = [&](int n, double a, auto&& value, const std::vector<double>& wc,
                       const std::vector<double>& wf) {
    q.resize(n);
    slope.resize(n);
    flux.resize(n + 1);
    for (int k = 0; k < n; ++k) q[k] = value(k) / wc[k];
    for (int k = 0; k < n; ++k) {
      const double qm = k > 0 ? q[k - 1] : 0.0;
      const double qp = k + 1 < n ? q[k + 1] : 0.0;
      slope[k] = mc_slope(q[k] - qm, qp - q[k]);
    }
    for (int k = 0; k <= n; ++k) {
      double face = 0.0;
      if (a > 0.0) {
        face = k > 0 ? q[k - 1] + 0.5 * slope[k - 1] : 0.0;
      } else {
        face = k < n ? q[k] - 0.5 * slope[k] : 0.0;
      }
      flux[k] = a * wf[k] * face;
    }
  };

  for (int j = 0; j < nv; ++j) {
    line_flux(nx, xspeed_[j], [&](int i) { return f[static_cast<std::size_t>(i) * nv + j]; }, ex_c_,
              ex_f_);
    out += (std::max(0.0, flux[nx]) + std::max(0.0, -flux[0])) * dv;
    for (int i = 0; i < nx; ++i) {
      rhs[static_cast<std::size_t>(i) * nv + j] -= (flux[i + 1] - flux[i]) / dx;
    }
  }
  for (int i = 0; i < nx; ++i) {
    const double* col = &f[static_cast<std::size_t>(i) * nv];
    line_flux(nv, vspeed_[i], [&](int j) { return col[j]; }, ev_c_, ev_f_);
    out += (std::max(0.0, flux[nv]) + std::max(0.0, -flux[0])) * dx;
    double* r = &rhs[static_cast<std::size_t>(i) * nv];
    for (int j = 0; j < nv; ++j) r[j] -= (flux[j + 1] - flux[j]) / dv;
  }
  return out;
}

double KfpStepper::transport(std::vector<double>& f, double tau) const {
  double vmax = 0.0, amax = 0.0;
  for (double s : xspeed_) vmax = std::max(vmax, std::abs(s));
  for (double s : vspeed_) amax = std::max(amax, std::abs(s));
  const double courant = face_ratio_ * tau * (vmax / grid_.dx() + amax / grid_.dv());
  const int nsub = std::max(1, static_cast<int>(std::ceil(courant / 0.5 - 1e-12)));
  const double h = tau / nsub;

  double leaked = 0.0;
  std::vector<double> k1, k2, f1(f.size());
  for (int s = 0; s < nsub; ++s) {
    const double o1 = transport_rhs(f, k1);
    for (std::size_t n = 0; n < f.size(); ++n) f1[n] = std::max(0.0, f[n] + h * k1[n]);
    const double o2 = transport_rhs(f1, k2);
    for (std::size_t n = 0; n < f.size(); ++n) {
      f[n] = std::max(0.0, 0.5 * f[n] + 0.5 * (f1[n] + h * k2[n]));
    }
    leaked += 0.5 * h * (o1 + o2);
  }
  return leaked;
}

void KfpStepper::velocity(std::vector<double>& f, double tau) const {
  const int nv = grid_.nv;
  if (tau <= 0.0) return;
  if (scheme_ == VelocityScheme::exponential) {
    Eigen::VectorXd tmp(nv);
    for (int i = 0; i < grid_.nx; ++i) {
      Eigen::Map<Eigen::VectorXd> col(&f[static_cast<std::size_t>(i) * nv], nv);
      tmp.noalias() = propagator_ * col;
      col = tmp.cwiseMax(0.0);
    }
    return;
  }
  // backward Euler: (I - tau L) f_new = f_old, Thomas algorithm
  std::vector<double> c(nv), d(nv);
  for (int i = 0; i < grid_.nx; ++i) {
    double* col = &f[static_cast<std::size_t>(i) * nv];
    for (int j = 0; j < nv; ++j) {
      const double lo = j > 0 ? -tau * lower_[j] : 0.0;
      const double di = 1.0 - tau * diag_[j];
      const double up = j + 1 < nv ? -tau * upper_[j] : 0.0;
      const double denom = j > 0 ? di - lo * c[j - 1] : di;
      c[j] = up / denom;
      d[j] = (col[j] - (j > 0 ? lo * d[j - 1] : 0.0)) / denom;
    }
    for (int j = nv - 1; j >= 0; --j) {
      col[j] = std::max(0.0, d[j] - (j + 1 < nv ? c[j] * col[j + 1] : 0.0));
    }
  }
}

double KfpStepper::advance(std::vector<double>& f) const {
  if (dt_ == 0.0) return 0.0;
  double leaked = 0.0;
  if (splitting_ == Splitting::strang) {
    leaked += transport(f, 0.5 * dt_);
    velocity(f, dt_);
    leaked += transport(f, 0.5 * dt_);
  } else {
    leaked += transport(f, dt_);
    velocity(f, dt_);
  }
  return leaked;
}

DensityGrid step(const DensityGrid& f, const Potential& U, double dt) {
  if (dt == 0.0) return f;
  KfpStepper stepper(U, f.grid(), dt);
  auto vals = f.values();
  stepper.advance(vals);
  return DensityGrid::unnormalized(f.grid(), std::move(vals));
}

Trajectory evolve(const DensityGrid& f0, const Potential& U, const SolverConfig& cfg) {
  if (!(cfg.t_end >= 0.0) || !std::isfinite(cfg.t_end)) {
    throw Error(ErrorKind::invalid_parameter, "t_end must be finite and >= 0");
  }
  if (cfg.t_end > 0.0 && !(cfg.dt > 0.0)) {
    throw Error(ErrorKind::invalid_parameter, "dt must be > 0");
  }
  std::vector<double> wanted = cfg.snapshot_times;
  if (wanted.empty()) wanted = {0.0, cfg.t_end};
  for (std::size_t k = 0; k < wanted.size(); ++k) {
    if (wanted[k] < 0.0 || wanted[k] > cfg.t_end * (1.0 + 1e-12) ||
        (k > 0 && !(wanted[k] > wanted[k - 1]))) {
      throw Error(ErrorKind::invalid_parameter,
                  "snapshot_times must be strictly increasing within [0, t_end]");
    }
  }

  Trajectory traj;
  traj.config = cfg;
  traj.requested_times = wanted;
  if (cfg.t_end == 0.0) {
    traj.times.push_back(0.0);
    traj.snapshots.push_back(f0);
    return traj;
  }
  const long nsteps = std::max(1L, static_cast<long>(std::ceil(cfg.t_end / cfg.dt - 1e-9)));
  const double dt = cfg.t_end / static_cast<double>(nsteps);
  traj.dt_used = dt;
  KfpStepper stepper(U, f0.grid(), dt, cfg.splitting, cfg.velocity);

  std::vector<long> at_step;
  for (double t : wanted) at_step.push_back(std::lround(t / dt));

  auto vals = f0.values();
  const double area = f0.grid().cell_area();
  std::size_t next = 0;
  auto record = [&](long n) {
    while (next < at_step.size() && at_step[next] == n) {
      const double t = static_cast<double>(n) * dt;
      // two requests can land on the same step when they are closer than dt
      if (traj.times.empty() || traj.times.back() != t) {
        traj.times.push_back(t);
        traj.snapshots.push_back(DensityGrid::unnormalized(f0.grid(), vals));
      }
      traj.max_time_mismatch = std::max(traj.max_time_mismatch, std::abs(t - wanted[next]));
      ++next;
    }
  };
  record(0);
  double mass = pairwise_sum(vals) * area;
  for (long n = 1; n <= nsteps; ++n) {
    const double leaked = stepper.advance(vals);
    const double m = pairwise_sum(vals) * area;
    traj.leakage.push_back(leaked);
    traj.mass_deviation.push_back(std::abs(mass - leaked - m));
    traj.total_leakage += leaked;
    mass = m;
    record(n);
  }
  return traj;
}

Eigen::Matrix2d ou_drift_matrix(double alpha) {
  Eigen::Matrix2d M;
  M << 0.0, 1.0, -alpha, -1.0;
  return M;
}

OuMoments ou_moments(double alpha, Vec2 m0, Sym2 cov0, double t) {
  if (!(alpha > 0.0) || !(t >= 0.0)) {
    throw Error(ErrorKind::invalid_parameter, "ou_moments needs alpha > 0 and t >= 0");
  }
  const Eigen::Matrix2d E = (ou_drift_matrix(alpha) * t).exp();
  Eigen::Vector2d m(m0.x, m0.v);
  m = E * m;
  Eigen::Matrix2d S0, Sinf;
  S0 << cov0.xx, cov0.xv, cov0.xv, cov0.vv;
  Sinf << 1.0 / alpha, 0.0, 0.0, 1.0;
  Eigen::Matrix2d S = Sinf + E * (S0 - Sinf) * E.transpose();
  return {{m(0), m(1)}, {S(0, 0), 0.5 * (S(0, 1) + S(1, 0)), S(1, 1)}};
}

double stationarity_residual(const Potential& U, const PhaseGrid& grid) {
  const auto finf = equilibrium_density(U, grid);
  const double dt = cfl_dt(grid, U);
  const auto next = step(finf, U, dt);
  double diff = 0.0, peak = 0.0;
  for (std::size_t k = 0; k < grid.cells(); ++k) {
    diff = std::max(diff, std::abs(next.values()[k] - finf.values()[k]));
    peak = std::max(peak, finf.values()[k]);
  }
  return diff / (dt * peak);
}

}  // namespace hypoot
