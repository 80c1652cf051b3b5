#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "hypoot/dissipation.hpp"
#include "hypoot/errors.hpp"
#include "json.hpp"

using namespace hypoot;

namespace {

const Potential kOu{1.0, Perturbation::none()};
const TwistMatrix kA = theorem_matrix(1.0, 1.0);

double cell_eps(const PhaseGrid& g, const TwistMatrix& A, double cells) {
  return cells * (g.dx() * g.dx() * A.a() + g.dv() * g.dv() * A.c());
}

}  // namespace

TEST(FitDecayRate, ExactExponential) {
  std::vector<double> t, d;
  for (int k = 0; k < 10; ++k) {
    t.push_back(0.5 * k);
    d.push_back(std::exp(-0.3 * t.back()));
  }
  const auto r = fit_decay_rate(t, d);
  EXPECT_NEAR(r.slope, -0.3, 1e-12);
  EXPECT_NEAR(r.kappa_observed(), 0.3, 1e-12);
  EXPECT_NEAR(r.r_squared, 1.0, 1e-12);
}

TEST(FitDecayRate, DegenerateInputs) {
  EXPECT_THROW(fit_decay_rate({0, 1, 2, 3}, {1, 1, 1, 1}), Error);
  EXPECT_THROW(fit_decay_rate({0, 1, 2, 3, 4}, {1, 1, 0, 1, 1}), Error);
  EXPECT_THROW(fit_decay_rate({0, 1, 1, 3, 4}, {1, 1, 1, 1, 1}), Error);
}

TEST(FitDecayRate, OuRunMatchesSpectralRate) {
  const auto grid = default_grid(kOu, 64);
  const auto sigma = equilibrium_density(kOu, grid);
  SolverConfig cfg;
  cfg.dt = cfl_dt(grid, kOu);
  cfg.t_end = 10.0;
  for (int k = 1; k <= 10; ++k) cfg.snapshot_times.push_back(1.0 * k);
  const auto tr = evolve(gaussian_density({1.5, 0.0}, Sym2::diag(0.8, 0.8), grid), kOu, cfg);
  // lattice exact OT between nearly equal densities scales like sqrt(W h); the
  // debiased entropic estimate does not
  DistanceOptions opt;
  opt.method = OtMethod::sinkhorn;
  opt.mass_floor = 1e-12;
  opt.max_cells = 32 * 32;
  std::vector<double> d;
  for (const auto& s : tr.snapshots) d.push_back(w_distance(DensityGrid::normalized(grid, s.values()), sigma, kA, opt));
  const auto fit = fit_decay_rate(tr.times, d);
  const double rate = ou_contraction_rate(1.0);
  EXPECT_NEAR(rate, 0.5, 1e-12);
  EXPECT_NEAR(fit.kappa_observed(), rate, 0.1 * rate);
}

TEST(GaussianOracle, EquilibriumGivesZero) {
  for (double alpha : {0.5, 1.0, 3.0}) {
    const auto A = theorem_matrix(alpha, 1.0);
    const auto t = gaussian_j_terms({0, 0}, Sym2::diag(1.0 / alpha, 1.0), alpha, A);
    EXPECT_NEAR(t.total, 0.0, 1e-12);
    EXPECT_NEAR(t.wa_sq, 0.0, 1e-12);
  }
}

TEST(GaussianOracle, MeanShiftOnly) {
  const double alpha = 2.0;
  const auto A = theorem_matrix(alpha, 1.5);
  const Vec2 m{0.7, -0.4};
  const auto t = gaussian_j_terms(m, Sym2::diag(1.0 / alpha, 1.0), alpha, A);
  EXPECT_NEAR(t.term2, 0.0, 1e-12);
  // the drift difference is exactly the linear part applied to the shift
  const Vec2 Bm{m.v, -alpha * m.x - m.v};
  EXPECT_NEAR(t.term1, -inner(A, Bm, m), 1e-12);
  EXPECT_NEAR(t.wa_sq, norm_sq(A, m), 1e-12);
}

TEST(GaussianOracle, MonteCarloAgreement) {
  const double alpha = 1.0;
  const Vec2 m{0.4, -0.3};
  const Sym2 S{0.8, -0.1, 1.2};
  const auto t = gaussian_j_terms(m, S, alpha, kA);
  std::mt19937_64 rng(42);
  std::normal_distribution<double> N;
  const int n = 1'000'000;
  double s1 = 0.0, s1sq = 0.0, sw = 0.0, swsq = 0.0;
  for (int k = 0; k < n; ++k) {
    const Vec2 z{N(rng) / std::sqrt(alpha), N(rng)};
    const Vec2 T = m + t.L.apply(z);
    const double x1 = -inner(kA, drift(kOu, T) - drift(kOu, z), T - z);
    const double x2 = norm_sq(kA, T - z);
    s1 += x1;
    s1sq += x1 * x1;
    sw += x2;
    swsq += x2 * x2;
  }
  const double mean1 = s1 / n, se1 = std::sqrt((s1sq / n - mean1 * mean1) / n);
  const double meanw = sw / n, sew = std::sqrt((swsq / n - meanw * meanw) / n);
  EXPECT_LE(std::abs(mean1 - t.term1), 3.0 * se1);
  EXPECT_LE(std::abs(meanw - t.wa_sq), 3.0 * sew);
  // the map pushes f_inf onto N(m, S)
  const Mat2 LSL = t.L * Mat2::from(Sym2::diag(1.0 / alpha, 1.0)) * t.L.transpose();
  EXPECT_NEAR(LSL.m11, S.xx, 1e-12);
  EXPECT_NEAR(LSL.m12, S.xv, 1e-12);
  EXPECT_NEAR(LSL.m22, S.vv, 1e-12);
}

TEST(GaussianOracle, KeyInequalityInClosedForm) {
  const Potential U{7.995e-4, Perturbation::none()};
  const double b = 0.5;
  const auto A = theorem_matrix(U.alpha, 2.0 * b);
  const double kappa = rate_constants(U.alpha, U.psi, b).kappa;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const double sx = std::exp(u(rng)) / std::sqrt(U.alpha), sv = std::exp(u(rng));
    const Sym2 S{sx * sx, 0.5 * u(rng) * sx * sv, sv * sv};
    const auto c = verify_key_gaussian({sx * u(rng), u(rng)}, S, U.alpha, A, kappa);
    EXPECT_TRUE(c.pass);
    EXPECT_FALSE(c.vacuous);
    EXPECT_GT(c.ratio, kappa);
  }
  const auto vac = verify_key_gaussian({0, 0}, Sym2::diag(1.0 / U.alpha, 1.0), U.alpha, A, kappa);
  EXPECT_TRUE(vac.vacuous);
  EXPECT_TRUE(vac.pass);
  EXPECT_TRUE(std::isnan(vac.ratio));
}

TEST(Term2, SumOfSquaresAndKeyBound) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-3.0, 3.0), pos(0.1, 3.0);
  for (int k = 0; k < 100000; ++k) {
    const double h11 = pos(rng), h22 = pos(rng);
    const double h12 = 0.99 * u(rng) / 3.0 * std::sqrt(h11 * h22);
    const Sym2 H{h11, h12, h22};
    const double c = pos(rng), b = 0.49 * c * u(rng) / 3.0;
    const auto A = make_twist(c, b, c);
    const double q = term2_integrand(H, A);
    EXPECT_GE(q, -1e-10);
    // the numerator simplifies to b h22 - c h12
    const double lhs = b * (h22 - c) - c * (h12 - b);
    ASSERT_NEAR(lhs, b * h22 - c * h12, 1e-12 * (1 + std::abs(lhs)));
    ASSERT_GE(q, (h12 - b) * (h12 - b) / h11 - 1e-10 * (1 + q));
  }
}

class JOnGrid : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    grid_ = new PhaseGrid(default_grid(kOu, 64));
    sigma_ = new DensityGrid(equilibrium_density(kOu, *grid_));
  }
  static void TearDownTestSuite() {
    delete sigma_;
    delete grid_;
  }
  static inline PhaseGrid* grid_ = nullptr;
  static inline DensityGrid* sigma_ = nullptr;
};

TEST_F(JOnGrid, SameDensityGivesNearZero) {
  const auto F = brenier_field(*sigma_, *sigma_, kA, cell_eps(*grid_, kA, 0.5));
  const auto r = j_functional(*sigma_, *sigma_, kA, kOu, F);
  EXPECT_LE(std::abs(r.term1), 1e-3);
  EXPECT_LE(std::abs(r.term2), 2e-2);
  EXPECT_GE(r.term2, -1e-10);
  EXPECT_GE(r.min_term2_integrand, -1e-10);
}

TEST_F(JOnGrid, ExtrapolatedMatchesOracle) {
  const Vec2 m{0.4, -0.3};
  const Sym2 S{0.8, -0.1, 1.2};
  const auto f = gaussian_density(m, S, *grid_);
  const auto r = j_extrapolated(f, *sigma_, kA, kOu);
  const double oracle = gaussian_j_oracle(m, S, 1.0, kA);
  EXPECT_NEAR(r.j_extrapolated, oracle, 0.05 * oracle);
  ASSERT_EQ(r.eps_ladder.size(), 3u);
  EXPECT_NEAR(r.eps_ladder[0].first, 4.0 * r.eps_ladder[2].first, 1e-12);
  EXPECT_DOUBLE_EQ(r.eps_ladder[2].second, r.j_total);
  EXPECT_LE(r.clamp_fraction, 1e-3);
}

TEST_F(JOnGrid, FieldOnOtherGridIsRejected) {
  const auto other = PhaseGrid::make(grid_->Lx, grid_->Lv, 32, 32);
  const auto g = equilibrium_density(kOu, other);
  const auto F = brenier_field(g, g, kA, 1.0);
  try {
    j_functional(*sigma_, *sigma_, kA, kOu, F);
    FAIL() << "expected FieldMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::field_mismatch);
  }
}

TEST_F(JOnGrid, DissipationOnGaussianRun) {
  const Vec2 m0{1.5, 0.0};
  const Sym2 S0 = Sym2::diag(0.5, 0.5);
  SolverConfig cfg;
  cfg.dt = cfl_dt(*grid_, kOu);
  cfg.t_end = 2.0;
  for (int k = 1; k <= 8; ++k) cfg.snapshot_times.push_back(0.25 * k);
  const auto tr = evolve(gaussian_density(m0, S0, *grid_), kOu, cfg);
  auto oracle = [&](const DensityGrid&, double t) {
    const auto mo = ou_moments(1.0, m0, S0, t);
    return JEstimate{gaussian_j_oracle(mo.mean, mo.cov, 1.0, kA), 0.0};
  };
  DissipationOptions opt;
  opt.max_cells = 32 * 32;
  const auto checks = verify_dissipation(tr, kA, kOu, *sigma_, opt, oracle);
  ASSERT_EQ(checks.size(), 6u);
  for (const auto& c : checks) {
    EXPECT_TRUE(c.pass) << "t=" << c.t << " lhs=" << c.lhs << " rhs=" << c.rhs;
    EXPECT_LT(c.lhs, 0.0);
    EXPECT_GT(c.tol_time + c.tol_ot, 0.0);
  }
}

TEST_F(JOnGrid, StationaryTrajectory) {
  SolverConfig cfg;
  cfg.dt = cfl_dt(*grid_, kOu);
  cfg.t_end = 1.0;
  cfg.snapshot_times = {0.0, 0.5, 1.0};
  const auto tr = evolve(*sigma_, kOu, cfg);
  DissipationOptions opt;
  opt.max_cells = 16 * 16;
  opt.j.eps_cells = 2.0;
  const auto checks = verify_dissipation(tr, kA, kOu, *sigma_, opt);
  ASSERT_EQ(checks.size(), 1u);
  // the solver settles on its discrete equilibrium, a lattice-scale distance away
  EXPECT_LE(std::abs(checks[0].lhs), 1e-3);
  EXPECT_NEAR(checks[0].rhs, 0.0, 2e-2);
  EXPECT_TRUE(checks[0].pass);
}

TEST_F(JOnGrid, KeyInequalityGuards) {
  // A outside the theorem family
  EXPECT_THROW(verify_key_inequality(*sigma_, make_twist(2.0, 0.1, 1.0), kOu), Error);
  const auto k = verify_key_inequality(*sigma_, kA, kOu);
  EXPECT_TRUE(k.vacuous);
  EXPECT_TRUE(k.pass);
}

TEST(Writers, ReportAndCsv) {
  const auto dir = std::filesystem::temp_directory_path() / "hypoot_dissipation_writers";
  std::filesystem::create_directories(dir);
  DissipationReport r;
  r.term1 = 0.1;
  r.term2 = 0.2;
  r.j_total = 0.3;
  r.j_extrapolated = 0.31;
  r.wa_sq = 0.0;
  r.ratio = std::numeric_limits<double>::quiet_NaN();
  r.eps_ladder = {{0.4, 0.33}, {0.2, 0.32}, {0.1, 0.3}};
  write_report_json((dir / "r.json").string(), r);
  std::ifstream is(dir / "r.json");
  const auto j = nlohmann::json::parse(is);
  EXPECT_DOUBLE_EQ(j["j_extrapolated"].get<double>(), 0.31);
  EXPECT_TRUE(j["ratio"].is_null());
  EXPECT_EQ(j["eps_ladder"].size(), 3u);

  write_decay_csv((dir / "d.csv").string(), {{0.0, 1.0, 0.9, 0.5, 0.49, 0.2, 1.0}});
  std::ifstream cs(dir / "d.csv");
  std::string header;
  std::getline(cs, header);
  EXPECT_EQ(header, "t,W_A,W_2,J_A_raw,J_A_extrapolated,H_rel_entropy,mass");
}
