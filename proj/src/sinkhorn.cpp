// Log-stabilized Sinkhorn with eps-scaling and a truncated sparse kernel.
//
// Everything runs in z~ = A^{1/2} z, where the cost is |x~ - y~|^2. The kernel
// K_ij = exp((f_i + g_j - C_ij) / eps) is stored only where it exceeds
// exp(-truncation); scalings u, v are folded into (f, g) whenever they leave
// [e^-3, e^3], and the kernel is rebuilt. Candidate pairs come from a bucket
// grid over the targets with a bound on f_i + max g - dist^2 per bucket.
// Large problems first run on binned measures until the fine kernel fits the
// nnz budget; fine potentials are then initialized by a soft c-transform.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hypoot/errors.hpp"
#include "hypoot/transport.hpp"

namespace hypoot {

namespace {

constexpr double kAbsorb = 3.0;
constexpr int kWindow = 40;
constexpr double kMaxOmega = 1.98;
constexpr std::size_t kHardNnz = 80'000'000;

struct Cloud {
  std::vector<Vec2> p;  // z~ coordinates
  std::vector<double> w;
};

Cloud to_tilde(const DiscreteMeasure& m, const Sym2& root) {
  Cloud c;
  c.p.reserve(m.size());
  for (const auto& z : m.atoms) c.p.push_back(root.apply(z));
  c.w = m.weights;
  return c;
}

struct Box {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  double v0 = x0, v1 = -x0;
  void add(Vec2 p) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    v0 = std::min(v0, p.v);
    v1 = std::max(v1, p.v);
  }
  double dist_sq(Vec2 p) const {
    const double dx = std::max({x0 - p.x, 0.0, p.x - x1});
    const double dv = std::max({v0 - p.v, 0.0, p.v - v1});
    return dx * dx + dv * dv;
  }
};

/// Uniform grid over a cloud; members listed bucket by bucket.
struct Buckets {
  std::vector<std::size_t> start;
  std::vector<std::uint32_t> idx;
  std::vector<Box> box;

  explicit Buckets(const std::vector<Vec2>& p, double per_bucket = 8.0) {
    Box all;
    for (const auto& q : p) all.add(q);
    const int k = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(p.size()) / per_bucket)));
    const double wx = std::max(all.x1 - all.x0, 1e-300) / k;
    const double wv = std::max(all.v1 - all.v0, 1e-300) / k;
    auto bin = [&](Vec2 q) {
      const int bx = std::min(k - 1, static_cast<int>((q.x - all.x0) / wx));
      const int bv = std::min(k - 1, static_cast<int>((q.v - all.v0) / wv));
      return static_cast<std::size_t>(bx) * k + bv;
    };
    std::vector<std::size_t> count(static_cast<std::size_t>(k) * k + 1, 0);
    for (const auto& q : p) ++count[bin(q) + 1];
    std::partial_sum(count.begin(), count.end(), count.begin());
    std::vector<std::size_t> fill(count.begin(), count.end() - 1);
    std::vector<std::uint32_t> order(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) order[fill[bin(p[j])]++] = static_cast<std::uint32_t>(j);
    // drop empty buckets
    for (std::size_t b = 0; b + 1 < count.size(); ++b) {
      if (count[b + 1] == count[b]) continue;
      start.push_back(idx.size());
      Box bx;
      for (std::size_t t = count[b]; t < count[b + 1]; ++t) {
        idx.push_back(order[t]);
        bx.add(p[order[t]]);
      }
      box.push_back(bx);
    }
    start.push_back(idx.size());
  }
  std::size_t size() const { return box.size(); }
};

class EntropicProblem {
 public:
  EntropicProblem(const Cloud& X, const Cloud& Y, double theta, bool symmetric = false)
      : X_(X), Y_(Y), theta_(theta), symmetric_(symmetric), buckets_(Y.p),
        f_(X.p.size(), 0.0), g_(Y.p.size(), 0.0),
        u_(X.p.size(), 1.0), v_(Y.p.size(), 1.0) {}

  std::vector<double>& f() { return f_; }
  std::vector<double>& g() { return g_; }
  std::size_t nnz() const { return col_.size(); }

  /// Iterates at eps until the L1 violation of both marginals drops below tol.
  /// After a few plain sweeps the contraction rate rho is estimated and the
  /// updates are over-relaxed with omega = 2 / (1 + sqrt(1 - rho)); a rise of
  /// the violation resets omega to 1.
  int solve(double eps, double tol, int max_sweeps) {
    absorb();
    eps_ = eps;
    rebuild();
    const std::size_t N = X_.p.size(), M = Y_.p.size();
    std::vector<double> s(N), colsum(M), w(M);
    double omega = 1.0;
    double best = std::numeric_limits<double>::infinity();
    int window_start = 0;
    double window_err = 0.0;
    if (symmetric_) return solve_symmetric(tol, max_sweeps);
    for (int sweep = 1;; ++sweep) {
      std::fill(colsum.begin(), colsum.end(), 0.0);
      for (std::size_t i = 0; i < N; ++i) {
        const double au = X_.w[i] * u_[i];
        for (std::size_t t = row_[i]; t < row_[i + 1]; ++t) colsum[col_[t]] += val_[t] * au;
      }
      double err = 0.0;
      for (std::size_t j = 0; j < M; ++j) {
        v_[j] = omega == 1.0 ? 1.0 / colsum[j] : std::pow(v_[j], 1.0 - omega) * std::pow(colsum[j], -omega);
        w[j] = Y_.w[j] * v_[j];
        err += Y_.w[j] * std::abs(v_[j] * colsum[j] - 1.0);
      }
      for (std::size_t i = 0; i < N; ++i) {
        double acc = 0.0;
        for (std::size_t t = row_[i]; t < row_[i + 1]; ++t) acc += val_[t] * w[col_[t]];
        s[i] = acc;
        err += X_.w[i] * std::abs(u_[i] * acc - 1.0);
      }
      last_err_ = err;
      if (sweep == 5) {
        window_start = sweep;
        window_err = err;
      }
      if (!std::isfinite(err)) {
        throw Error(ErrorKind::no_convergence, "sinkhorn produced a non-finite marginal at eps " + std::to_string(eps));
      }
      if (err < tol) return sweep;
      if (sweep >= max_sweeps) {
        throw Error(ErrorKind::no_convergence, "sinkhorn: marginal violation " + std::to_string(err) +
                                                   " after " + std::to_string(sweep) + " sweeps at eps " +
                                                   std::to_string(eps));
      }

      if (omega > 1.0 && err > 10.0 * best) {
        omega = 1.0;
        window_start = sweep;
        window_err = err;
        best = std::numeric_limits<double>::infinity();
      } else if (sweep == window_start + kWindow) {
        // observed rate r under omega gives the plain rate through
        // (r + omega - 1)^2 = r omega^2 rho
        const double r = std::pow(err / window_err, 1.0 / kWindow);
        if (r < 1.0 && r > 1.05 * (omega - 1.0)) {
          const double rho = std::min(1.0, (r + omega - 1.0) * (r + omega - 1.0) / (r * omega * omega));
          const double next = std::min(kMaxOmega, 2.0 / (1.0 + std::sqrt(1.0 - rho)));
          if (next > omega) omega = next;
        }
        window_start = sweep;
        window_err = err;
      }
      best = std::min(best, err);

      bool big = false;
      for (std::size_t i = 0; i < N; ++i) {
        u_[i] = omega == 1.0 ? 1.0 / s[i] : std::pow(u_[i], 1.0 - omega) * std::pow(s[i], -omega);
        big = big || std::abs(std::log(u_[i])) > kAbsorb;
      }
      for (std::size_t j = 0; j < M && !big; ++j) big = std::abs(std::log(v_[j])) > kAbsorb;
      if (big) {
        absorb();
        rebuild();
      }
    }
  }

  /// mu against itself: u = v and the averaged update u <- sqrt(u / (K b u)),
  /// which avoids the slow alternating modes of the two-sided iteration.
  int solve_symmetric(double tol, int max_sweeps) {
    const std::size_t N = X_.p.size();
    std::vector<double> w(N), s(N);
    for (int sweep = 1;; ++sweep) {
      for (std::size_t i = 0; i < N; ++i) w[i] = X_.w[i] * u_[i];
      double err = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        double acc = 0.0;
        for (std::size_t t = row_[i]; t < row_[i + 1]; ++t) acc += val_[t] * w[col_[t]];
        s[i] = acc;
        err += 2.0 * X_.w[i] * std::abs(u_[i] * acc - 1.0);
      }
      last_err_ = err;
      if (!std::isfinite(err)) throw Error(ErrorKind::no_convergence, "symmetric sinkhorn produced a non-finite marginal");
      if (err < tol) {
        v_ = u_;
        return sweep;
      }
      if (sweep >= max_sweeps) {
        throw Error(ErrorKind::no_convergence, "symmetric sinkhorn: marginal violation " + std::to_string(err) +
                                                   " after " + std::to_string(sweep) + " sweeps");
      }
      bool big = false;
      for (std::size_t i = 0; i < N; ++i) {
        u_[i] = std::sqrt(u_[i] / s[i]);
        big = big || std::abs(std::log(u_[i])) > kAbsorb;
      }
      v_ = u_;
      if (big) {
        absorb();
        g_ = f_;
        rebuild();
      }
    }
  }

  double last_error() const { return last_err_; }

  /// Upper estimate of the fine kernel size if each atom stood for `count` atoms.
  double weighted_nnz(const std::vector<double>& cx, const std::vector<double>& cy) const {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < row_.size(); ++i) {
      for (std::size_t t = row_[i]; t < row_[i + 1]; ++t) s += cx[i] * cy[col_[t]];
    }
    return s;
  }

  EntropicSolution extract(const Sym2& root_inv, bool keep_plan) {
    absorb();
    // values are still those of the last rebuild; refresh with the absorbed potentials
    const std::size_t N = X_.p.size();
    EntropicSolution out;
    out.eps = eps_;
    out.marginal_violation = last_err_;
    out.barycentric.resize(N);
    long double mass = 0.0L, cost = 0.0L;
    if (keep_plan) {
      out.plan.m = N;
      out.plan.n = Y_.p.size();
      out.plan.entries.reserve(col_.size());
    }
    for (std::size_t i = 0; i < N; ++i) {
      long double rm = 0.0L, bx = 0.0L, bv = 0.0L;
      for (std::size_t t = row_[i]; t < row_[i + 1]; ++t) {
        const std::size_t j = col_[t];
        const double c = (X_.p[i] - Y_.p[j]).norm_sq();
        const double p = X_.w[i] * Y_.w[j] * std::exp((f_[i] + g_[j] - c) / eps_);
        rm += p;
        bx += p * Y_.p[j].x;
        bv += p * Y_.p[j].v;
        cost += static_cast<long double>(p) * c;
        if (keep_plan && p > 0.0) out.plan.entries.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), p});
      }
      mass += rm;
      out.barycentric[i] = rm > 0 ? root_inv.apply({static_cast<double>(bx / rm), static_cast<double>(bv / rm)})
                                  : root_inv.apply(X_.p[i]);
    }
    long double dual = 0.0L;
    for (std::size_t i = 0; i < N; ++i) dual += static_cast<long double>(X_.w[i]) * f_[i];
    for (std::size_t j = 0; j < Y_.p.size(); ++j) dual += static_cast<long double>(Y_.w[j]) * g_[j];
    dual -= eps_ * (mass - 1.0L);
    out.ot_eps = static_cast<double>(dual);
    out.transport_cost = static_cast<double>(cost);
    out.f = f_;
    out.g = g_;
    return out;
  }

 private:
  void absorb() {
    if (eps_ <= 0.0) return;
    for (std::size_t i = 0; i < f_.size(); ++i) {
      f_[i] += eps_ * std::log(u_[i]);
      u_[i] = 1.0;
    }
    for (std::size_t j = 0; j < g_.size(); ++j) {
      g_[j] += eps_ * std::log(v_[j]);
      v_[j] = 1.0;
    }
  }

  void build_row(std::size_t i, const std::vector<double>& gmax, double cut) {
    const Vec2 xi = X_.p[i];
    for (std::size_t b = 0; b < buckets_.size(); ++b) {
      if (f_[i] + gmax[b] - buckets_.box[b].dist_sq(xi) < cut) continue;
      for (std::size_t t = buckets_.start[b]; t < buckets_.start[b + 1]; ++t) {
        const std::uint32_t j = buckets_.idx[t];
        const double e = f_[i] + g_[j] - (xi - Y_.p[j]).norm_sq();
        if (e >= cut) {
          col_.push_back(j);
          val_.push_back(std::exp(e / eps_));
        }
      }
    }
  }

  void rebuild() {
    const double cut = -theta_ * eps_;
    const std::size_t N = X_.p.size(), M = Y_.p.size();
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<double> gmax(buckets_.size(), -std::numeric_limits<double>::infinity());
      for (std::size_t b = 0; b < buckets_.size(); ++b) {
        for (std::size_t t = buckets_.start[b]; t < buckets_.start[b + 1]; ++t) gmax[b] = std::max(gmax[b], g_[buckets_.idx[t]]);
      }
      row_.assign(N + 1, 0);
      col_.clear();
      val_.clear();
      for (std::size_t i = 0; i < N; ++i) {
        const std::size_t before = col_.size();
        build_row(i, gmax, cut);
        if (col_.size() == before) {
          // no admissible pair: lower f_i so the best pair sits at exponent 0
          double best = -std::numeric_limits<double>::infinity();
          for (std::size_t j = 0; j < M; ++j) best = std::max(best, f_[i] + g_[j] - (X_.p[i] - Y_.p[j]).norm_sq());
          f_[i] -= best;
          build_row(i, gmax, cut);
        }
        row_[i + 1] = col_.size();
        if (col_.size() > kHardNnz) {
          throw Error(ErrorKind::size_exceeded, "sinkhorn kernel exceeds " + std::to_string(kHardNnz) +
                                                    " entries at eps " + std::to_string(eps_));
        }
      }
      std::vector<std::uint8_t> seen(M, 0);
      for (auto j : col_) seen[j] = 1;
      bool fixed = false;
      for (std::size_t j = 0; j < M; ++j) {
        if (seen[j]) continue;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < N; ++i) best = std::max(best, f_[i] + g_[j] - (X_.p[i] - Y_.p[j]).norm_sq());
        g_[j] -= best;
        fixed = true;
      }
      if (!fixed) return;
    }
  }

  const Cloud& X_;
  const Cloud& Y_;
  double theta_;
  bool symmetric_;
  Buckets buckets_;
  std::vector<double> f_, g_, u_, v_;
  double eps_ = 0.0;
  std::vector<std::size_t> row_;
  std::vector<std::uint32_t> col_;
  std::vector<double> val_;
  double last_err_ = std::numeric_limits<double>::infinity();
};

/// Bins a cloud on a k x k grid; atoms at the weighted bin means.
struct Binned {
  Cloud cloud;
  std::vector<double> count;  // fine atoms per bin
  double h_sq = 0.0;          // mean squared bin side
};

Binned bin_cloud(const Cloud& c, int k) {
  Box all;
  for (const auto& q : c.p) all.add(q);
  const double wx = std::max(all.x1 - all.x0, 1e-300) / k;
  const double wv = std::max(all.v1 - all.v0, 1e-300) / k;
  std::vector<double> w(static_cast<std::size_t>(k) * k, 0.0), sx(w.size(), 0.0), sv(w.size(), 0.0), n(w.size(), 0.0);
  for (std::size_t t = 0; t < c.p.size(); ++t) {
    const int bx = std::min(k - 1, static_cast<int>((c.p[t].x - all.x0) / wx));
    const int bv = std::min(k - 1, static_cast<int>((c.p[t].v - all.v0) / wv));
    const std::size_t b = static_cast<std::size_t>(bx) * k + bv;
    w[b] += c.w[t];
    sx[b] += c.w[t] * c.p[t].x;
    sv[b] += c.w[t] * c.p[t].v;
    n[b] += 1.0;
  }
  Binned out;
  for (std::size_t b = 0; b < w.size(); ++b) {
    if (n[b] == 0.0) continue;
    out.cloud.p.push_back({sx[b] / w[b], sv[b] / w[b]});
    out.cloud.w.push_back(w[b]);
    out.count.push_back(n[b]);
  }
  out.h_sq = 0.5 * (wx * wx + wv * wv);
  return out;
}

/// -eps log sum_J w_J exp((h_J - |p - q_J|^2) / eps) for every p.
std::vector<double> soft_ctransform(const std::vector<Vec2>& p, const Cloud& q,
                                    const std::vector<double>& h, double eps) {
  std::vector<double> out(p.size());
  std::vector<double> e(q.p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t J = 0; J < q.p.size(); ++J) {
      e[J] = std::log(q.w[J]) + (h[J] - (p[i] - q.p[J]).norm_sq()) / eps;
      mx = std::max(mx, e[J]);
    }
    double s = 0.0;
    for (double x : e) s += std::exp(x - mx);
    out[i] = -eps * (mx + std::log(s));
  }
  return out;
}

void check_measure(const DiscreteMeasure& m) {
  if (m.size() == 0 || m.weights.size() != m.size()) throw Error(ErrorKind::invalid_parameter, "empty or malformed measure");
}

}  // namespace

double diameter_sq(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const TwistMatrix& A) {
  const Sym2 root = sqrt_spd(A.sym());
  Box b;
  for (const auto& z : mu.atoms) b.add(root.apply(z));
  for (const auto& z : nu.atoms) b.add(root.apply(z));
  const double dx = b.x1 - b.x0, dv = b.v1 - b.v0;
  return dx * dx + dv * dv;
}

std::vector<EntropicSolution> sinkhorn_ladder(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                              const TwistMatrix& A, const std::vector<double>& eps_desc,
                                              const SinkhornOptions& opt, std::vector<double>* schedule_out) {
  check_measure(mu);
  check_measure(nu);
  if (eps_desc.empty()) throw Error(ErrorKind::invalid_parameter, "no eps levels requested");
  for (std::size_t k = 0; k < eps_desc.size(); ++k) {
    if (!(eps_desc[k] > 0.0) || (k > 0 && !(eps_desc[k] < eps_desc[k - 1]))) {
      throw Error(ErrorKind::invalid_parameter, "eps levels must be positive and strictly decreasing");
    }
  }
  if (!(opt.factor > 0.0 && opt.factor < 1.0)) throw Error(ErrorKind::invalid_parameter, "schedule factor must be in (0, 1)");

  const Sym2 root = sqrt_spd(A.sym());
  const Sym2 root_inv = inverse(root);
  const Cloud X = to_tilde(mu, root), Y = to_tilde(nu, root);

  // schedule: geometric from diam^2, landing exactly on each requested eps
  std::vector<double> sched;
  std::vector<int> report;  // index into eps_desc, or -1
  double e = std::max(diameter_sq(mu, nu, A), eps_desc.front());
  if (e > eps_desc.front()) {
    sched.push_back(e);
    report.push_back(-1);
  }
  for (std::size_t k = 0; k < eps_desc.size(); ++k) {
    while (e * opt.factor > eps_desc[k]) {
      e *= opt.factor;
      sched.push_back(e);
      report.push_back(-1);
    }
    e = eps_desc[k];
    sched.push_back(e);
    report.push_back(static_cast<int>(k));
  }
  if (schedule_out) *schedule_out = sched;

  // mu == nu: the averaged symmetric update reaches the same fixed point far faster
  const bool same = mu.atoms.size() == nu.atoms.size() &&
                    std::equal(mu.atoms.begin(), mu.atoms.end(), nu.atoms.begin(),
                               [](Vec2 a, Vec2 b) { return a.x == b.x && a.v == b.v; }) &&
                    mu.weights == nu.weights;
  std::vector<EntropicSolution> out;
  EntropicProblem fine(X, Y, opt.truncation, same);
  std::size_t level = 0;

  const double NM = static_cast<double>(X.p.size()) * static_cast<double>(Y.p.size());
  if (NM > static_cast<double>(opt.dense_limit)) {
    const int k = std::max(2, static_cast<int>(std::sqrt(std::sqrt(static_cast<double>(opt.dense_limit)))));
    const Binned bx = bin_cloud(X, k), by = bin_cloud(Y, k);
    EntropicProblem coarse(bx.cloud, by.cloud, opt.truncation, same);
    const double h_sq = std::max(bx.h_sq, by.h_sq);
    for (; level < sched.size(); ++level) {
      const double eps = sched[level];
      coarse.solve(eps, opt.level_tol, opt.max_sweeps);
      const bool ready = report[level] >= 0 || eps <= h_sq ||
                         coarse.weighted_nnz(bx.count, by.count) <= static_cast<double>(opt.nnz_budget);
      if (!ready) continue;
      // fine potentials from the coarse duals (soft c-transforms)
      fine.f() = soft_ctransform(X.p, by.cloud, coarse.g(), eps);
      fine.g() = soft_ctransform(Y.p, bx.cloud, coarse.f(), eps);
      if (report[level] < 0) ++level;
      break;
    }
  }

  for (; level < sched.size(); ++level) {
    const bool rep = report[level] >= 0;
    const int sweeps = fine.solve(sched[level], rep ? opt.tol : opt.level_tol, opt.max_sweeps);
    if (rep) {
      out.push_back(fine.extract(root_inv, opt.keep_plan));
      out.back().sweeps = sweeps;
    }
  }
  return out;
}

namespace {

double symmetric_ot_eps(const DiscreteMeasure& mu, const TwistMatrix& A, double eps, const SinkhornOptions& opt) {
  const Sym2 root = sqrt_spd(A.sym());
  const Cloud X = to_tilde(mu, root);
  EntropicProblem p(X, X, opt.truncation, true);
  for (double e = diameter_sq(mu, mu, A); e > eps; e *= opt.factor) p.solve(e, opt.level_tol, opt.max_sweeps);
  p.solve(eps, opt.tol, opt.max_sweeps);
  return p.extract(inverse(root), false).ot_eps;
}

}  // namespace

SinkhornResult sinkhorn(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const TwistMatrix& A,
                        double eps_target, const SinkhornOptions& opt) {
  if (!(eps_target > 0.0)) throw Error(ErrorKind::invalid_parameter, "eps_target must be positive");
  SinkhornResult r;
  auto main = sinkhorn_ladder(mu, nu, A, {eps_target}, opt, &r.schedule);
  r.solution = std::move(main.front());
  r.raw = r.solution.ot_eps;
  const double aa = symmetric_ot_eps(mu, A, eps_target, opt);
  const double bb = symmetric_ot_eps(nu, A, eps_target, opt);
  r.cost_est = r.raw - 0.5 * (aa + bb);
  return r;
}

}  // namespace hypoot
