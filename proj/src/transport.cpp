#include "hypoot/transport.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "hypoot/errors.hpp"

namespace hypoot {

DiscreteMeasure make_measure(std::vector<Vec2> atoms, std::vector<double> weights) {
  if (atoms.empty() || atoms.size() != weights.size()) {
    throw Error(ErrorKind::invalid_parameter, "measure needs matching, nonempty atoms and weights");
  }
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    if (!atoms[k].finite() || !(weights[k] > 0.0) || !std::isfinite(weights[k])) {
      throw Error(ErrorKind::invalid_parameter, "atoms must be finite and weights positive");
    }
  }
  const double total = pairwise_sum(weights);
  for (auto& w : weights) w /= total;
  return {std::move(atoms), std::move(weights)};
}

DiscreteMeasure uniform_measure(std::vector<Vec2> atoms) {
  std::vector<double> w(atoms.size(), 1.0);
  return make_measure(std::move(atoms), std::move(w));
}

GridMeasure from_density(const DensityGrid& f, double mass_floor) {
  if (!(mass_floor >= 0.0 && mass_floor <= 1e-6)) {
    throw Error(ErrorKind::invalid_parameter, "mass_floor must lie in [0, 1e-6]");
  }
  const auto& grid = f.grid();
  const auto& val = f.values();
  const double peak = *std::max_element(val.begin(), val.end());
  if (!(peak > 0.0)) throw Error(ErrorKind::degenerate_input, "density has no mass");
  const double cut = mass_floor * peak;
  GridMeasure out;
  std::vector<Vec2> atoms;
  std::vector<double> w;
  std::vector<double> dropped;
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.nv; ++j) {
      const double m = f(i, j);
      if (m > 0.0 && (mass_floor == 0.0 || m >= cut)) {
        atoms.push_back(grid.center(i, j));
        w.push_back(m);
        out.cell.push_back(static_cast<std::uint32_t>(grid.index(i, j)));
      } else {
        dropped.push_back(m);
      }
    }
  }
  const double kept = pairwise_sum(w);
  out.dropped_mass = pairwise_sum(dropped) / (kept + pairwise_sum(dropped));
  out.measure = make_measure(std::move(atoms), std::move(w));
  return out;
}

double Coupling::marginal_violation(const DiscreteMeasure& mu, const DiscreteMeasure& nu) const {
  std::vector<double> rows(m, 0.0), cols(n, 0.0);
  for (const auto& e : entries) {
    rows[e.i] += e.mass;
    cols[e.j] += e.mass;
  }
  double err = 0.0;
  for (std::size_t i = 0; i < m; ++i) err += std::abs(rows[i] - mu.weights[i]);
  for (std::size_t j = 0; j < n; ++j) err += std::abs(cols[j] - nu.weights[j]);
  return err;
}

bool Coupling::nonnegative() const {
  return std::all_of(entries.begin(), entries.end(), [](const PlanEntry& e) { return e.mass >= 0.0; });
}

double plan_cost(const Coupling& P, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                 const TwistMatrix& A) {
  long double s = 0.0L;
  for (const auto& e : P.entries) s += static_cast<long double>(e.mass) * norm_sq(A, mu.atoms[e.i] - nu.atoms[e.j]);
  return static_cast<double>(s);
}

ExactResult brute_force_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const TwistMatrix& A) {
  const std::size_t n = mu.size();
  if (n == 0 || n > 8 || nu.size() != n) {
    throw Error(ErrorKind::size_exceeded, "brute force needs equal sizes n <= 8");
  }
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (std::abs(mu.weights[k] - w) > 1e-12 || std::abs(nu.weights[k] - w) > 1e-12) {
      throw Error(ErrorKind::size_exceeded, "brute force needs equal weights");
    }
  }
  std::vector<std::size_t> perm(n), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += norm_sq(A, mu.atoms[i] - nu.atoms[perm[i]]);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  ExactResult out;
  out.plan.m = out.plan.n = n;
  for (std::size_t i = 0; i < n; ++i) {
    out.plan.entries.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(best[i]), w});
  }
  out.cost = best_cost * w;
  out.dual_value = out.cost;
  out.certified = true;
  return out;
}

double gaussian_wa(Vec2 m1, Sym2 S1, Vec2 m2, Sym2 S2, const TwistMatrix& A) {
  if (!S1.is_spd() || !S2.is_spd()) throw Error(ErrorKind::not_spd, "Gaussian covariances must be SPD");
  const Mat2 R = Mat2::from(sqrt_spd(A.sym()));
  auto conj = [&](Sym2 S) { return (R * Mat2::from(S) * R).sym(); };
  const Sym2 T1 = conj(S1), T2 = conj(S2);
  const Mat2 r1 = Mat2::from(sqrt_spd(T1));
  const Sym2 cross = sqrt_spd((r1 * Mat2::from(T2) * r1).sym());
  const Vec2 dm = R.apply(m1 - m2);
  const double w2 = dm.norm_sq() + T1.trace() + T2.trace() - 2.0 * cross.trace();
  return std::sqrt(std::max(0.0, w2));
}

DensityGrid coarsen_density(const DensityGrid& f, int kx, int kv) {
  const auto& g = f.grid();
  if (kx < 1 || kv < 1 || g.nx % kx != 0 || g.nv % kv != 0) {
    throw Error(ErrorKind::invalid_parameter, "coarsening factors must divide the grid");
  }
  const auto cg = PhaseGrid::make(g.Lx, g.Lv, g.nx / kx, g.nv / kv);
  std::vector<double> v(cg.cells(), 0.0);
  for (int i = 0; i < g.nx; ++i) {
    for (int j = 0; j < g.nv; ++j) v[cg.index(i / kx, j / kv)] += f(i, j);
  }
  for (auto& x : v) x /= static_cast<double>(kx * kv);
  return DensityGrid::unnormalized(cg, std::move(v));
}

namespace {

void require_same_extent(const PhaseGrid& a, const PhaseGrid& b) {
  if (a.Lx != b.Lx || a.Lv != b.Lv) {
    throw Error(ErrorKind::support_mismatch, "densities live on grids with different extents");
  }
}

DensityGrid shrink(const DensityGrid& f, std::size_t max_cells) {
  DensityGrid out = f;
  while (max_cells > 0 && out.grid().cells() > max_cells) {
    const bool cx = out.grid().nx % 2 == 0 && out.grid().nx >= 8;
    const bool cv = out.grid().nv % 2 == 0 && out.grid().nv >= 8;
    if (!cx && !cv) break;
    out = coarsen_density(out, cx ? 2 : 1, cv ? 2 : 1);
  }
  return out;
}

}  // namespace

double w_distance(const DensityGrid& f, const DensityGrid& g, const TwistMatrix& A,
                  const DistanceOptions& opt) {
  require_same_extent(f.grid(), g.grid());
  const DensityGrid fs = shrink(f, opt.max_cells), gs = shrink(g, opt.max_cells);
  const auto mu = from_density(fs, opt.mass_floor);
  const auto nu = from_density(gs, opt.mass_floor);
  double cost = 0.0;
  if (opt.method == OtMethod::exact) {
    cost = exact_ot(mu.measure, nu.measure, A).cost;
  } else {
    const double eps = opt.eps_rel * diameter_sq(mu.measure, nu.measure, A);
    SinkhornOptions so;
    so.keep_plan = false;
    cost = sinkhorn(mu.measure, nu.measure, A, eps, so).cost_est;
  }
  return std::sqrt(std::max(0.0, cost));
}

void write_plan(const std::string& path, const Coupling& P) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io_error, "cannot write " + path);
  out << "# " << P.m << " " << P.n << "\n" << std::setprecision(17);
  for (const auto& e : P.entries) out << e.i << " " << e.j << " " << e.mass << "\n";
}

// ---------------------------------------------------------------------------

Vec2 BrenierField::map_at(Vec2 z) const {
  const double fx = (z.x + grid.Lx) / grid.dx() - 0.5;
  const double fv = (z.v + grid.Lv) / grid.dv() - 0.5;
  const int i0 = std::clamp(static_cast<int>(std::floor(fx)), 0, grid.nx - 2);
  const int j0 = std::clamp(static_cast<int>(std::floor(fv)), 0, grid.nv - 2);
  const double tx = std::clamp(fx - i0, 0.0, 1.0), tv = std::clamp(fv - j0, 0.0, 1.0);
  double wsum = 0.0;
  Vec2 acc;
  for (int di = 0; di < 2; ++di) {
    for (int dj = 0; dj < 2; ++dj) {
      const std::size_t c = grid.index(i0 + di, j0 + dj);
      if (!in_support[c]) continue;
      const double w = (di ? tx : 1.0 - tx) * (dj ? tv : 1.0 - tv);
      acc = acc + w * map_values[c];
      wsum += w;
    }
  }
  return wsum > 0.0 ? (1.0 / wsum) * acc : z;
}

namespace {

BrenierField assemble_field(const GridMeasure& src, const EntropicSolution& sol, const TwistMatrix& A,
                            const PhaseGrid& grid, double delta_floor) {
  BrenierField F;
  F.grid = grid;
  F.regularization = sol.eps;
  F.delta_floor = delta_floor;
  const std::size_t cells = grid.cells();
  F.map_values.resize(cells);
  F.hessian.assign(cells, A.sym());
  F.clamped.assign(cells, 0);
  F.in_support.assign(cells, 0);
  std::vector<double> weight(cells, 0.0);
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.nv; ++j) F.map_values[grid.index(i, j)] = grid.center(i, j);
  }
  for (std::size_t k = 0; k < src.cell.size(); ++k) {
    F.map_values[src.cell[k]] = sol.barycentric[k];
    F.in_support[src.cell[k]] = 1;
    weight[src.cell[k]] = src.measure.weights[k];
  }

  auto grad = [&](int i, int j) { return A.apply(F.map_values[grid.index(i, j)]); };
  auto inside = [&](int i, int j) {
    return i >= 0 && i < grid.nx && j >= 0 && j < grid.nv && F.in_support[grid.index(i, j)];
  };
  // derivative of grad phi along one axis; false when the cell has no support neighbour
  auto diff = [&](int i, int j, int di, int dj, double h, Vec2& d) {
    const bool lo = inside(i - di, j - dj), hi = inside(i + di, j + dj);
    if (lo && hi) {
      d = (0.5 / h) * (grad(i + di, j + dj) - grad(i - di, j - dj));
    } else if (hi) {
      d = (1.0 / h) * (grad(i + di, j + dj) - grad(i, j));
    } else if (lo) {
      d = (1.0 / h) * (grad(i, j) - grad(i - di, j - dj));
    } else {
      return false;
    }
    return true;
  };

  double clamped_mass = 0.0;
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.nv; ++j) {
      const std::size_t c = grid.index(i, j);
      if (!F.in_support[c]) continue;
      Vec2 dx{A.a(), A.b()}, dv{A.b(), A.c()};
      const bool okx = diff(i, j, 1, 0, grid.dx(), dx);
      const bool okv = diff(i, j, 0, 1, grid.dv(), dv);
      const Sym2 H{dx.x, 0.5 * (dv.x + dx.v), dv.v};
      F.hessian[c] = H;
      if (!okx || !okv || H.vv < delta_floor || H.det() < delta_floor) {
        F.clamped[c] = 1;
        clamped_mass += weight[c];
      }
    }
  }
  F.clamp_fraction = clamped_mass;
  return F;
}

}  // namespace

std::vector<BrenierField> brenier_ladder(const DensityGrid& f, const DensityGrid& g,
                                         const TwistMatrix& A, const std::vector<double>& eps_desc,
                                         const BrenierOptions& opt) {
  require_same_extent(f.grid(), g.grid());
  const auto src = from_density(g, opt.mass_floor);
  const auto dst = from_density(f, opt.mass_floor);
  SinkhornOptions so = opt.sinkhorn;
  so.keep_plan = false;
  const auto sols = sinkhorn_ladder(src.measure, dst.measure, A, eps_desc, so);
  std::vector<BrenierField> out;
  out.reserve(sols.size());
  for (const auto& s : sols) out.push_back(assemble_field(src, s, A, g.grid(), opt.delta_floor));
  return out;
}

BrenierField brenier_field(const DensityGrid& f, const DensityGrid& g, const TwistMatrix& A, double eps,
                           const BrenierOptions& opt) {
  return std::move(brenier_ladder(f, g, A, {eps}, opt).front());
}

void write_brenier(const std::string& path, const BrenierField& F) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io_error, "cannot write " + path);
  const auto& g = F.grid;
  out << "# hypoot-brenier v1\n" << std::setprecision(17);
  out << g.Lx << " " << g.Lv << " " << g.nx << " " << g.nv << " " << F.regularization << "\n";
  for (std::size_t c = 0; c < g.cells(); ++c) {
    const auto& T = F.map_values[c];
    const auto& H = F.hessian[c];
    out << T.x << " " << T.v << " " << H.xx << " " << H.xv << " " << H.vv << " " << int(F.clamped[c]) << "\n";
  }
}

}  // namespace hypoot
