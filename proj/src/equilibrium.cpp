#include "hypoot/equilibrium.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "hypoot/errors.hpp"

namespace hypoot {

PhaseGrid PhaseGrid::make(double Lx, double Lv, int nx, int nv) {
  if (!(Lx > 0.0) || !(Lv > 0.0) || !std::isfinite(Lx) || !std::isfinite(Lv) || nx < 4 ||
      nv < 4) {
    std::ostringstream os;
    os << "grid needs Lx, Lv > 0 and nx, nv >= 4 (got " << Lx << ", " << Lv << ", " << nx << ", "
       << nv << ")";
    throw Error(ErrorKind::invalid_parameter, os.str());
  }
  return PhaseGrid{Lx, Lv, nx, nv};
}

PhaseGrid default_grid(const Potential& U, int n) {
  return PhaseGrid::make(U.psi.support_radius() + 8.0 / std::sqrt(U.alpha), 8.0, n, n);
}

double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 16) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

namespace {

void check_values(const std::vector<double>& values, const PhaseGrid& grid) {
  if (values.size() != grid.cells()) {
    throw Error(ErrorKind::invalid_parameter, "density size does not match grid");
  }
  for (double x : values) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw Error(ErrorKind::invalid_parameter, "density values must be finite and nonnegative");
    }
  }
}

}  // namespace

DensityGrid DensityGrid::normalized(const PhaseGrid& grid, std::vector<double> values) {
  check_values(values, grid);
  const double m = pairwise_sum(values) * grid.cell_area();
  if (!(m > 0.0)) throw Error(ErrorKind::degenerate_input, "density has zero mass");
  const double inv = 1.0 / m;
  for (double& x : values) x *= inv;
  return DensityGrid(grid, std::move(values), m);
}

DensityGrid DensityGrid::unnormalized(const PhaseGrid& grid, std::vector<double> values) {
  check_values(values, grid);
  const double m = pairwise_sum(values) * grid.cell_area();
  return DensityGrid(grid, std::move(values), m);
}

double DensityGrid::mass() const { return pairwise_sum(values_) * grid_.cell_area(); }

namespace {

struct RombergWorkspace {
  gsl_integration_romberg_workspace* w;
  explicit RombergWorkspace(std::size_t n) : w(gsl_integration_romberg_alloc(n)) {}
  ~RombergWorkspace() { gsl_integration_romberg_free(w); }
  RombergWorkspace(const RombergWorkspace&) = delete;
  RombergWorkspace& operator=(const RombergWorkspace&) = delete;
};

struct Integrand {
  const Potential* U;
  double shift;
};

double boltzmann(double x, void* p) {
  const auto* in = static_cast<Integrand*>(p);
  return std::exp(-(in->U->U(x) - in->shift));
}

}  // namespace

double partition_z(const Potential& U, double tol) {
  if (!(tol > 0.0)) throw Error(ErrorKind::invalid_parameter, "tol must be > 0");
  if (!(U.alpha > 0.0)) throw Error(ErrorKind::invalid_parameter, "alpha must be > 0");
  const double R = U.psi.support_radius();

  // min of U: attained inside [-R, R] or at 0 (U is alpha x^2/2 outside)
  double umin = U.U(0.0);
  for (int k = 0; k <= 4000 && R > 0.0; ++k) umin = std::min(umin, U.U(-R + 2.0 * R * k / 4000));
  // exp(-(U - umin)) < 1e-16 beyond X
  const double drop = -std::log(1e-16);
  double X = std::sqrt(2.0 * std::max(drop + umin, drop) / U.alpha);
  X = std::max(X, R);
  while (U.U(X) - umin < drop) X *= 1.1;

  gsl_set_error_handler_off();
  Integrand in{&U, umin};
  gsl_function F{&boltzmann, &in};
  RombergWorkspace ws(30);
  double total = 0.0;
  std::vector<std::pair<double, double>> pieces;
  if (R > 0.0 && R < X) {
    pieces = {{-X, -R}, {-R, R}, {R, X}};
  } else {
    pieces = {{-X, X}};
  }
  for (auto [lo, hi] : pieces) {
    double result = 0.0;
    std::size_t neval = 0;
    const int status = gsl_integration_romberg(&F, lo, hi, 0.0, tol, &result, &neval, ws.w);
    if (status != GSL_SUCCESS) {
      throw Error(ErrorKind::no_convergence, "Romberg quadrature for Z did not reach tolerance");
    }
    total += result;
  }
  return std::sqrt(2.0 * std::numbers::pi) * total * std::exp(-umin);
}

DensityGrid equilibrium_density(const Potential& U, const PhaseGrid& grid) {
  std::vector<double> ux(grid.nx), gv(grid.nv);
  double umin = ux.empty() ? 0.0 : U.U(grid.x(0));
  for (int i = 0; i < grid.nx; ++i) {
    ux[i] = U.U(grid.x(i));
    umin = std::min(umin, ux[i]);
  }
  for (int j = 0; j < grid.nv; ++j) gv[j] = 0.5 * grid.v(j) * grid.v(j);
  const double vmin = *std::min_element(gv.begin(), gv.end());

  std::vector<double> vals(grid.cells());
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.nv; ++j) vals[grid.index(i, j)] = std::exp(-(ux[i] - umin) - (gv[j] - vmin));
  }
  const double peak = *std::max_element(vals.begin(), vals.end());
  double edge = 0.0;
  for (int i = 0; i < grid.nx; ++i) {
    edge = std::max({edge, vals[grid.index(i, 0)], vals[grid.index(i, grid.nv - 1)]});
  }
  for (int j = 0; j < grid.nv; ++j) {
    edge = std::max({edge, vals[grid.index(0, j)], vals[grid.index(grid.nx - 1, j)]});
  }
  if (edge > 1e-12 * peak) {
    std::ostringstream os;
    os << "equilibrium boundary/peak ratio " << edge / peak << " exceeds 1e-12";
    throw Error(ErrorKind::domain_too_small, os.str());
  }
  return DensityGrid::normalized(grid, std::move(vals));
}

Moments moments(const DensityGrid& f) {
  const auto& g = f.grid();
  const auto& vals = f.values();
  const std::size_t n = g.cells();
  std::vector<double> w(n), wx(n), wv(n);
  const double m0 = f.mass();
  for (int i = 0; i < g.nx; ++i) {
    for (int j = 0; j < g.nv; ++j) {
      const auto k = g.index(i, j);
      w[k] = vals[k] * g.cell_area() / m0;
      wx[k] = w[k] * g.x(i);
      wv[k] = w[k] * g.v(j);
    }
  }
  Moments m;
  m.mean = {pairwise_sum(wx), pairwise_sum(wv)};
  std::vector<double> sxx(n), sxv(n), svv(n);
  for (int i = 0; i < g.nx; ++i) {
    const double dx = g.x(i) - m.mean.x;
    for (int j = 0; j < g.nv; ++j) {
      const auto k = g.index(i, j);
      const double dv = g.v(j) - m.mean.v;
      sxx[k] = w[k] * dx * dx;
      sxv[k] = w[k] * dx * dv;
      svv[k] = w[k] * dv * dv;
    }
  }
  m.cov = {pairwise_sum(sxx), pairwise_sum(sxv), pairwise_sum(svv)};
  return m;
}

DensityGrid gaussian_density(Vec2 mean, Sym2 cov, const PhaseGrid& grid) {
  if (!cov.is_spd()) throw Error(ErrorKind::not_spd, "Gaussian covariance must be SPD");
  const double sx = std::sqrt(cov.xx), sv = std::sqrt(cov.vv);
  if (std::abs(mean.x) + 6.0 * sx > grid.Lx || std::abs(mean.v) + 6.0 * sv > grid.Lv) {
    throw Error(ErrorKind::domain_too_small, "grid does not cover 6 standard deviations");
  }
  const Sym2 P = inverse(cov);
  std::vector<double> vals(grid.cells());
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.nv; ++j) {
      const Vec2 d = grid.center(i, j) - mean;
      vals[grid.index(i, j)] = std::exp(-0.5 * P.quad(d));
    }
  }
  return DensityGrid::normalized(grid, std::move(vals));
}

double relative_entropy(const DensityGrid& f, const DensityGrid& g) {
  if (!(f.grid() == g.grid())) throw Error(ErrorKind::support_mismatch, "densities on different grids");
  const auto& fv = f.values();
  const auto& gv = g.values();
  std::vector<double> terms(fv.size(), 0.0);
  for (std::size_t k = 0; k < fv.size(); ++k) {
    if (fv[k] == 0.0) continue;
    if (gv[k] == 0.0) {
      throw Error(ErrorKind::support_mismatch, "f > 0 where g = 0 in relative entropy");
    }
    terms[k] = fv[k] * std::log(fv[k] / gv[k]);
  }
  return pairwise_sum(terms) * f.grid().cell_area();
}

void write_density(const std::string& path, const DensityGrid& f, double time) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io_error, "cannot write " + path);
  const auto& g = f.grid();
  out << "# hypoot-density v1\n" << std::setprecision(17);
  out << g.Lx << " " << g.Lv << " " << g.nx << " " << g.nv << " " << time << "\n";
  for (double x : f.values()) out << x << "\n";
  if (!out) throw Error(ErrorKind::io_error, "write failed for " + path);
}

DensitySnapshot read_density(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_error, "cannot open " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != "# hypoot-density v1") throw Error(ErrorKind::parse_error, path + ": bad header");
  double Lx = 0, Lv = 0, time = 0;
  int nx = 0, nv = 0;
  if (!(in >> Lx >> Lv >> nx >> nv >> time)) {
    throw Error(ErrorKind::parse_error, path + ": bad grid line");
  }
  const auto grid = PhaseGrid::make(Lx, Lv, nx, nv);
  std::vector<double> vals(grid.cells());
  for (double& x : vals) {
    if (!(in >> x)) throw Error(ErrorKind::parse_error, path + ": truncated values");
  }
  return {DensityGrid::unnormalized(grid, std::move(vals)), time};
}

}  // namespace hypoot
