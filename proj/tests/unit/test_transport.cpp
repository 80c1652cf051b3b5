#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "hypoot/dissipation.hpp"
#include "hypoot/errors.hpp"
#include "hypoot/transport.hpp"

using namespace hypoot;

namespace {

const TwistMatrix kId = make_twist(1.0, 0.0, 1.0);

TwistMatrix random_twist(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double a = std::exp(u(rng)), c = std::exp(u(rng));
  return make_twist(a, 0.9 * u(rng) * std::sqrt(a * c), c);
}

std::vector<Vec2> cloud(std::mt19937_64& rng, int n, Vec2 m, double sx, double sv) {
  std::normal_distribution<double> N;
  std::vector<Vec2> p;
  for (int k = 0; k < n; ++k) p.push_back({m.x + sx * N(rng), m.v + sv * N(rng)});
  return p;
}

// independent dense log-domain iteration for comparison
double dense_ot_eps(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double eps) {
  const std::size_t m = mu.size(), n = nu.size();
  std::vector<double> f(m, 0.0), g(n, 0.0), C(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) C[i * n + j] = (mu.atoms[i] - nu.atoms[j]).dot(mu.atoms[i] - nu.atoms[j]);
  auto lse = [](std::vector<double>& v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
  };
  std::vector<double> buf;
  for (int it = 0; it < 20000; ++it) {
    for (std::size_t i = 0; i < m; ++i) {
      buf.clear();
      for (std::size_t j = 0; j < n; ++j) buf.push_back(std::log(nu.weights[j]) + (g[j] - C[i * n + j]) / eps);
      f[i] = -eps * lse(buf);
    }
    for (std::size_t j = 0; j < n; ++j) {
      buf.clear();
      for (std::size_t i = 0; i < m; ++i) buf.push_back(std::log(mu.weights[i]) + (f[i] - C[i * n + j]) / eps);
      g[j] = -eps * lse(buf);
    }
  }
  double v = 0.0;
  for (std::size_t i = 0; i < m; ++i) v += mu.weights[i] * f[i];
  for (std::size_t j = 0; j < n; ++j) v += nu.weights[j] * g[j];
  return v;
}

PhaseGrid wide_grid(int n) { return PhaseGrid::make(7.0, 7.0, n, n); }

}  // namespace

TEST(FromDensity, Examples) {
  const auto g = PhaseGrid::make(1.0, 1.0, 4, 4);
  std::vector<double> one(16, 0.0);
  one[5] = 1.0;
  const auto single = from_density(DensityGrid::normalized(g, one));
  ASSERT_EQ(single.measure.size(), 1u);
  EXPECT_DOUBLE_EQ(single.measure.weights[0], 1.0);
  EXPECT_EQ(single.cell[0], 5u);

  const auto full = from_density(DensityGrid::normalized(g, std::vector<double>(16, 1.0)));
  EXPECT_EQ(full.measure.size(), 16u);
  EXPECT_THROW(from_density(DensityGrid::normalized(g, one), 1e-5), Error);

  const auto gg = default_grid({1.0, Perturbation::none()}, 128);
  const auto gm = from_density(gaussian_density({0.0, 0.0}, Sym2::diag(1.0, 1.0), gg), 1e-12);
  EXPECT_LT(gm.dropped_mass, 1e-9);
  EXPECT_LT(gm.measure.size(), gg.cells());
}

TEST(ExactOt, HandExamples) {
  const auto A = theorem_matrix(1.0, 1.0);
  const auto mu = uniform_measure({{0, 0}, {1, 0}});
  EXPECT_NEAR(exact_ot(mu, mu, A).cost, 0.0, 1e-14);
  const auto shifted = uniform_measure({{0, 1}, {1, 1}});
  const auto r = exact_ot(mu, shifted, kId);
  EXPECT_NEAR(r.cost, 1.0, 1e-12);
  EXPECT_TRUE(r.certified);
  EXPECT_LE(r.plan.marginal_violation(mu, shifted), 1e-9);
  const Vec2 z1{0.3, -1.2}, z2{2.0, 0.4};
  EXPECT_NEAR(exact_ot(uniform_measure({z1}), uniform_measure({z2}), A).cost, norm_sq(A, z1 - z2), 1e-12);
}

TEST(ExactOt, SizeGuard) {
  std::vector<Vec2> p(5000, Vec2{0.0, 0.0});
  for (std::size_t k = 0; k < p.size(); ++k) p[k].x = static_cast<double>(k);
  const auto mu = uniform_measure(p);
  try {
    exact_ot(mu, mu, kId);
    FAIL() << "expected SizeExceeded";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::size_exceeded);
  }
}

TEST(ExactOt, MatchesBruteForce) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> N;
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto A = random_twist(rng);
    const int n = 1 + t % 8;
    const auto mu = uniform_measure(cloud(rng, n, {0, 0}, 1, 1));
    const auto nu = uniform_measure(cloud(rng, n, {N(rng), N(rng)}, 1, 1));
    const auto e = exact_ot(mu, nu, A);
    const auto b = brute_force_ot(mu, nu, A);
    worst = std::max(worst, std::abs(e.cost - b.cost));
    EXPECT_TRUE(e.certified);
    EXPECT_TRUE(e.plan.nonnegative());
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(BruteForce, TiesAndGuards) {
  // a square mapped onto itself rotated: several optimal pairings, one cost
  const auto mu = uniform_measure({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  const auto nu = uniform_measure({{1, 0}, {1, 1}, {0, 1}, {0, 0}});
  EXPECT_NEAR(brute_force_ot(mu, nu, kId).cost, 0.0, 1e-15);
  std::vector<Vec2> nine(9, Vec2{0, 0});
  EXPECT_THROW(brute_force_ot(uniform_measure(nine), uniform_measure(nine), kId), Error);
}

TEST(Sinkhorn, CloseToExactOnSeparatedClouds) {
  const auto A = theorem_matrix(1.0, 1.0);
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const auto mu = uniform_measure(cloud(rng, 400, {0, 0}, 1, 1));
    std::normal_distribution<double> N;
    std::vector<Vec2> q;
    for (int k = 0; k < 400; ++k) q.push_back({1.5 + 0.7 * N(rng), 0.75 + 1.2 * N(rng)});
    const auto nu = uniform_measure(q);
    const double exact = exact_ot(mu, nu, A).cost;
    const auto s = sinkhorn(mu, nu, A, 1e-3 * diameter_sq(mu, nu, A));
    EXPECT_LE(std::abs(s.cost_est - exact), 5e-3 * exact) << "seed " << seed;
    EXPECT_LE(s.solution.marginal_violation, 1e-9);
    EXPECT_LE(s.solution.plan.marginal_violation(mu, nu), 1e-9);
    EXPECT_TRUE(s.solution.plan.nonnegative());
    EXPECT_GT(s.raw, s.cost_est);
  }
}

TEST(Sinkhorn, SelfDistanceVanishes) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  const auto p = cloud(rng, 300, {0, 0}, 1, 2);
  std::vector<double> w;
  for (std::size_t k = 0; k < p.size(); ++k) w.push_back(u(rng));
  const auto mu = make_measure(p, w);
  const auto A = theorem_matrix(0.5, 2.0);
  const double D = diameter_sq(mu, mu, A);
  const auto s = sinkhorn(mu, mu, A, 1e-3 * D);
  EXPECT_LE(std::abs(s.cost_est), 1e-8 * D);
}

TEST(Sinkhorn, IdentityMatrixMatchesPlainQuadraticCost) {
  std::mt19937_64 rng(9);
  const auto mu = uniform_measure(cloud(rng, 40, {0, 0}, 1, 1));
  const auto nu = uniform_measure(cloud(rng, 50, {1, 0.5}, 0.8, 1.1));
  const double eps = 0.05 * diameter_sq(mu, nu, kId);
  const auto s = sinkhorn(mu, nu, kId, eps);
  EXPECT_NEAR(s.raw, dense_ot_eps(mu, nu, eps), 1e-8 * std::abs(s.raw));
}

TEST(Sinkhorn, MultiscalePathAgrees) {
  std::mt19937_64 rng(11);
  const auto A = theorem_matrix(1.0, 1.0);
  const auto mu = uniform_measure(cloud(rng, 400, {0, 0}, 1, 1));
  const auto nu = uniform_measure(cloud(rng, 400, {1.5, 0.5}, 0.7, 1.2));
  const double eps = 1e-3 * diameter_sq(mu, nu, A);
  SinkhornOptions coarse;
  coarse.dense_limit = 10000;
  const auto a = sinkhorn(mu, nu, A, eps);
  const auto b = sinkhorn(mu, nu, A, eps, coarse);
  EXPECT_NEAR(a.cost_est, b.cost_est, 1e-6 * a.cost_est);
  EXPECT_LE(b.solution.marginal_violation, 1e-9);
}

TEST(Sinkhorn, SweepCapRaisesNoConvergence) {
  std::mt19937_64 rng(3);
  const auto mu = uniform_measure(cloud(rng, 100, {0, 0}, 1, 1));
  const auto nu = uniform_measure(cloud(rng, 100, {2, 0}, 1, 1));
  SinkhornOptions opt;
  opt.max_sweeps = 1;
  try {
    sinkhorn(mu, nu, kId, 1e-3 * diameter_sq(mu, nu, kId), opt);
    FAIL() << "expected NoConvergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::no_convergence);
  }
  EXPECT_THROW(sinkhorn(mu, nu, kId, 0.0), Error);
}

TEST(GaussianWa, ClosedFormCases) {
  const auto A = theorem_matrix(1.0, 1.0);
  const Sym2 S{0.7, 0.2, 1.3};
  EXPECT_NEAR(gaussian_wa({1, 2}, S, {1, 2}, S, A), 0.0, 1e-12);
  EXPECT_NEAR(gaussian_wa({0, 0}, Sym2::diag(0.5, 0.5), {3, 4}, Sym2::diag(0.5, 0.5), kId), 5.0, 1e-12);
  // same covariance: only the mean moves
  EXPECT_NEAR(gaussian_wa({0, 0}, S, {1, -1}, S, A), std::sqrt(norm_sq(A, {1, -1})), 1e-12);
  // commuting covariances, A = I: sum of squared sqrt-differences
  EXPECT_NEAR(gaussian_wa({0, 0}, Sym2::diag(1, 4), {0, 0}, Sym2::diag(4, 9), kId), std::sqrt(2.0), 1e-12);
}

TEST(GaussianWa, DiscretizedExactAgrees) {
  const auto A = theorem_matrix(1.0, 1.0);
  const auto grid = wide_grid(64);
  const Vec2 m1{-1.0, 0.5}, m2{1.2, -0.4};
  const Sym2 S1{0.8, 0.2, 1.0}, S2{0.5, -0.1, 0.7};
  DistanceOptions opt;
  opt.mass_floor = 1e-12;
  const double w = w_distance(gaussian_density(m1, S1, grid), gaussian_density(m2, S2, grid), A, opt);
  const double ref = gaussian_wa(m1, S1, m2, S2, A);
  EXPECT_NEAR(w, ref, 0.02 * ref);
}

TEST(WDistance, MetricAxiomsAndSandwich) {
  const auto grid = wide_grid(16);
  const auto A = theorem_matrix(1.0, 1.0);
  const auto f = gaussian_density({-0.5, 0.0}, Sym2::diag(0.8, 1.0), grid);
  const auto g = gaussian_density({0.8, 0.5}, Sym2{1.0, 0.3, 0.9}, grid);
  const auto h = gaussian_density({0.0, -1.0}, Sym2::diag(0.6, 0.6), grid);
  EXPECT_NEAR(w_distance(f, f, A), 0.0, 1e-7);
  const double fg = w_distance(f, g, A), gf = w_distance(g, f, A);
  EXPECT_NEAR(fg, gf, 1e-7);
  EXPECT_LE(fg, w_distance(f, h, A) + w_distance(h, g, A) + 1e-7);
  const double w2 = w_distance(f, g, kId);
  const auto ev = eigenvalues(A);
  const double nu1 = ev.nu1, nu2 = ev.nu2;
  EXPECT_LE(nu1 * w2 * w2, fg * fg * (1 + 1e-7));
  EXPECT_GE(nu2 * w2 * w2, fg * fg * (1 - 1e-7));
  EXPECT_THROW(w_distance(f, gaussian_density({0, 0}, Sym2::diag(0.5, 0.5), PhaseGrid::make(6.0, 7.0, 16, 16)), A),
               Error);
}

TEST(WDistance, TranslatedGaussianIdentityMatrix) {
  const auto grid = wide_grid(64);
  const Sym2 S = Sym2::diag(0.6, 0.6);
  DistanceOptions opt;
  opt.mass_floor = 1e-12;
  const double w = w_distance(gaussian_density({-0.8, 0.3}, S, grid), gaussian_density({0.8, -0.3}, S, grid), kId, opt);
  EXPECT_NEAR(w, std::hypot(1.6, 0.6), 0.01 * std::hypot(1.6, 0.6));
}

class GaussianBrenier : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    grid_ = new PhaseGrid(wide_grid(64));
    f_ = new DensityGrid(gaussian_density(kMean, kCov, *grid_));
    g_ = new DensityGrid(gaussian_density({0, 0}, Sym2::diag(1, 1), *grid_));
    eps_ = 0.5 * (grid_->dx() * grid_->dx() * kA.a() + grid_->dv() * grid_->dv() * kA.c());
    forward_ = new BrenierField(brenier_field(*f_, *g_, kA, eps_));
  }
  static void TearDownTestSuite() {
    delete forward_;
    delete g_;
    delete f_;
    delete grid_;
  }

  static inline const Vec2 kMean{0.8, 0.3};
  static inline const Sym2 kCov{0.6, 0.1, 0.8};
  static inline const TwistMatrix kA = theorem_matrix(1.0, 1.0);
  static inline PhaseGrid* grid_ = nullptr;
  static inline DensityGrid* f_ = nullptr;
  static inline DensityGrid* g_ = nullptr;
  static inline BrenierField* forward_ = nullptr;
  static inline double eps_ = 0.0;
};

TEST_F(GaussianBrenier, MapIsAffineAndMatchesClosedForm) {
  const auto& F = *forward_;
  const auto& grid = *grid_;
  // weighted least squares T ~ c + M z
  Eigen::Matrix3d N = Eigen::Matrix3d::Zero();
  Eigen::Matrix<double, 3, 2> R = Eigen::Matrix<double, 3, 2>::Zero();
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.nv; ++j) {
      const auto c = grid.index(i, j);
      if (!F.in_support[c]) continue;
      const double w = (*g_)(i, j);
      const Vec2 z = grid.center(i, j);
      const Eigen::Vector3d phi(1.0, z.x, z.v);
      N += w * phi * phi.transpose();
      R += w * phi * Eigen::RowVector2d(F.map_values[c].x, F.map_values[c].v);
    }
  const Eigen::Matrix<double, 3, 2> coef = N.ldlt().solve(R);
  const auto oracle = gaussian_j_terms(kMean, kCov, 1.0, kA);
  const Sym2 H = (Mat2::from(kA.sym()) * oracle.L).sym();
  double res = 0.0, mag = 0.0, herr = 0.0, wsum = 0.0;
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.nv; ++j) {
      const auto c = grid.index(i, j);
      if (!F.in_support[c]) continue;
      const double w = (*g_)(i, j);
      const Vec2 z = grid.center(i, j);
      const Eigen::RowVector2d fit = Eigen::RowVector3d(1.0, z.x, z.v) * coef;
      const Vec2 T = F.map_values[c];
      res += w * (std::pow(T.x - fit(0), 2) + std::pow(T.v - fit(1), 2));
      mag += w * T.dot(T);
      const Sym2& h = F.hessian[c];
      herr += w * (std::abs(h.xx - H.xx) + std::abs(h.xv - H.xv) + std::abs(h.vv - H.vv));
      wsum += w;
    }
  EXPECT_LE(std::sqrt(res / mag), 0.01);
  EXPECT_LE(herr / wsum, 0.05 * (H.xx + H.vv));
  EXPECT_EQ(F.clamp_fraction, 0.0);
}

TEST_F(GaussianBrenier, PushforwardMoments) {
  // the barycentric map shrinks the pushed covariance by O(eps), so this uses a finer eps
  const auto F = brenier_field(*f_, *g_, kA, 0.25 * eps_);
  const auto& grid = *grid_;
  double w = 0.0;
  Vec2 m{0, 0};
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.nv; ++j) {
      const auto c = grid.index(i, j);
      if (!F.in_support[c]) continue;
      w += (*g_)(i, j);
      m = m + (*g_)(i, j) * F.map_values[c];
    }
  m = (1.0 / w) * m;
  Sym2 S{0, 0, 0};
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.nv; ++j) {
      const auto c = grid.index(i, j);
      if (!F.in_support[c]) continue;
      const Vec2 d = F.map_values[c] - m;
      const double p = (*g_)(i, j) / w;
      S = S + Sym2{p * d.x * d.x, p * d.x * d.v, p * d.v * d.v};
    }
  const auto target = moments(*f_);
  EXPECT_NEAR(m.x, target.mean.x, 0.02 * std::hypot(target.mean.x, target.mean.v));
  EXPECT_NEAR(m.v, target.mean.v, 0.02 * std::hypot(target.mean.x, target.mean.v));
  EXPECT_NEAR(S.xx, target.cov.xx, 0.02 * target.cov.xx);
  EXPECT_NEAR(S.vv, target.cov.vv, 0.02 * target.cov.vv);
  EXPECT_NEAR(S.xv, target.cov.xv, 0.02 * std::sqrt(target.cov.xx * target.cov.vv));
}

TEST_F(GaussianBrenier, InverseMapReturnsToStart) {
  const auto back = brenier_field(*g_, *f_, kA, eps_);
  const auto& grid = *grid_;
  // bulk: cells of g holding 99% of the mass
  std::vector<std::pair<double, std::size_t>> cells;
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.nv; ++j) cells.emplace_back((*g_)(i, j), grid.index(i, j));
  std::sort(cells.rbegin(), cells.rend());
  const double total = g_->mass() / grid.cell_area();
  double acc = 0.0, worst = 0.0;
  for (const auto& [val, c] : cells) {
    if (acc >= 0.99 * total) break;
    acc += val;
    const Vec2 z = grid.center(static_cast<int>(c) / grid.nv, static_cast<int>(c) % grid.nv);
    const Vec2 r = back.map_at(forward_->map_values[c]);
    worst = std::max({worst, std::abs(r.x - z.x) / grid.dx(), std::abs(r.v - z.v) / grid.dv()});
  }
  EXPECT_LE(worst, 2.0);
}

TEST(Brenier, IdentityTransport) {
  const auto grid = wide_grid(48);
  const auto A = theorem_matrix(1.0, 1.0);
  const auto g = gaussian_density({0.2, -0.1}, Sym2{0.9, 0.2, 1.1}, grid);
  const double eps = 0.5 * (grid.dx() * grid.dx() * A.a() + grid.dv() * grid.dv() * A.c());
  const auto F = brenier_field(g, g, A, eps);
  double err = 0.0, herr = 0.0, w = 0.0;
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.nv; ++j) {
      const auto c = grid.index(i, j);
      if (!F.in_support[c]) continue;
      const double p = g(i, j);
      const Vec2 d = F.map_values[c] - grid.center(i, j);
      err += p * std::hypot(d.x / grid.dx(), d.v / grid.dv());
      const Sym2& h = F.hessian[c];
      herr += p * (std::abs(h.xx - A.a()) + std::abs(h.xv - A.b()) + std::abs(h.vv - A.c()));
      w += p;
    }
  // the entropic bias shrinks the map toward the mean by O(eps); a fraction of a cell here
  EXPECT_LE(err / w, 0.5);
  EXPECT_LE(herr / w, 0.1 * (A.a() + A.c()));
  EXPECT_DOUBLE_EQ(F.regularization, eps);
}

TEST(Writers, PlanAndField) {
  const auto dir = std::filesystem::temp_directory_path() / "hypoot_transport_writers";
  std::filesystem::create_directories(dir);
  const auto mu = uniform_measure({{0, 0}, {1, 0}});
  const auto nu = uniform_measure({{0, 1}, {1, 1}, {2, 1}});
  const auto r = exact_ot(mu, nu, kId);
  write_plan((dir / "plan.txt").string(), r.plan);
  std::ifstream is(dir / "plan.txt");
  std::string hash;
  std::size_t m = 0, n = 0;
  is >> hash >> m >> n;
  EXPECT_EQ(hash, "#");
  EXPECT_EQ(m, 2u);
  EXPECT_EQ(n, 3u);
  double total = 0.0;
  std::size_t i, j;
  double mass;
  while (is >> i >> j >> mass) total += mass;
  EXPECT_NEAR(total, 1.0, 1e-12);

  const auto grid = PhaseGrid::make(4.0, 4.0, 16, 16);
  const auto g = gaussian_density({0, 0}, Sym2::diag(0.4, 0.4), grid);
  const auto F = brenier_field(g, g, kId, 0.5);
  write_brenier((dir / "field.txt").string(), F);
  std::ifstream fs(dir / "field.txt");
  std::string line;
  std::getline(fs, line);
  EXPECT_EQ(line, "# hypoot-brenier v1");
  std::getline(fs, line);
  int rows = 0;
  while (std::getline(fs, line))
    if (!line.empty()) ++rows;
  EXPECT_EQ(rows, 256);
}
