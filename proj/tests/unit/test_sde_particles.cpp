#include <gtest/gtest.h>

#include <cmath>

#include "hypoot/kfp_solver.hpp"
#include "hypoot/sde_particles.hpp"

using namespace hypoot;

TEST(Philox, KnownAnswers) {
  auto r = philox4x32({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(r[0], 0x6627e8d5u);
  EXPECT_EQ(r[1], 0xe169c58du);
  EXPECT_EQ(r[2], 0xbc57ac4cu);
  EXPECT_EQ(r[3], 0x9b00dbd8u);
  r = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(r[0], 0x408f276du);
  EXPECT_EQ(r[1], 0x41c83b0eu);
  EXPECT_EQ(r[2], 0xa20bc7c6u);
  EXPECT_EQ(r[3], 0x6d5451fdu);
  r = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(r[0], 0xd16cfe09u);
  EXPECT_EQ(r[1], 0x94fdccebu);
  EXPECT_EQ(r[2], 0x5001e420u);
  EXPECT_EQ(r[3], 0x24126ea1u);
}

TEST(Simulate, BitwiseReproducible) {
  const Potential U{0.7, Perturbation::novoid(0.05)};
  const auto a = simulate(U, 1, 0.37, 5.0, 99, InitSpec::gaussian({1, 0}, Sym2::identity()));
  const auto b = simulate(U, 1, 0.37, 5.0, 99, InitSpec::gaussian({1, 0}, Sym2::identity()));
  EXPECT_EQ(a.states[0], b.states[0]);
  EXPECT_NEAR(a.time, 5.0, 0.37);
  const auto c = simulate(U, 1, 0.37, 5.0, 100, InitSpec::gaussian({1, 0}, Sym2::identity()));
  EXPECT_NE(a.states[0], c.states[0]);
  // particle k does not depend on how many others are simulated
  const auto big = simulate(U, 5, 0.37, 5.0, 99, InitSpec::gaussian({1, 0}, Sym2::identity()));
  EXPECT_EQ(big.states[0], a.states[0]);
}

namespace {

Moments ensemble_moments(const ParticleEnsemble& e) {
  Moments m;
  const double n = static_cast<double>(e.size());
  for (const auto& z : e.states) {
    m.mean.x += z.x / n;
    m.mean.v += z.v / n;
  }
  for (const auto& z : e.states) {
    const Vec2 d = z - m.mean;
    m.cov.xx += d.x * d.x / n;
    m.cov.xv += d.x * d.v / n;
    m.cov.vv += d.v * d.v / n;
  }
  return m;
}

}  // namespace

TEST(Simulate, StationaryCovariance) {
  const double alpha = 1.0;
  const Potential U{alpha, Perturbation::none()};
  const std::size_t n = 100000;
  const auto e = simulate(U, n, 0.005, 20.0 / alpha, 2024, InitSpec::point({0, 0}));
  const auto m = ensemble_moments(e);
  const double se = std::sqrt(2.0 / n);  // relative standard error of a variance
  EXPECT_NEAR(m.cov.xx * alpha, 1.0, 3 * se);
  EXPECT_NEAR(m.cov.vv, 1.0, 3 * se);
}

TEST(Simulate, GaussianMeanMatchesOu) {
  const Potential U{1.0, Perturbation::none()};
  const Vec2 m0{1.0, -0.5};
  const Sym2 S0{0.4, 0.1, 0.3};
  const std::size_t n = 100000;
  const auto e = simulate(U, n, 1e-3, 1.0, 7, InitSpec::gaussian(m0, S0));
  const auto m = ensemble_moments(e);
  const auto ex = ou_moments(1.0, m0, S0, 1.0);
  EXPECT_NEAR(m.mean.x, ex.mean.x, 4 * std::sqrt(ex.cov.xx / n) + 2e-3);
  EXPECT_NEAR(m.mean.v, ex.mean.v, 4 * std::sqrt(ex.cov.vv / n) + 2e-3);
}

TEST(Simulate, WeakOrderOne) {
  const Potential U{1.0, Perturbation::none()};
  const Vec2 m0{10.0, 0.0};
  const auto ex = ou_moments(1.0, m0, Sym2::identity(), 1.0);
  std::vector<double> err;
  for (double dt : {0.1, 0.05, 0.025}) {
    double e_sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const auto m = ensemble_moments(simulate(U, 20000, dt, 1.0, seed, InitSpec::gaussian(m0, Sym2::identity())));
      e_sum += std::hypot(m.mean.x - ex.mean.x, m.mean.v - ex.mean.v) / 4;
    }
    err.push_back(e_sum);
  }
  for (int k = 0; k + 1 < 3; ++k) {
    const double slope = std::log2(err[k] / err[k + 1]);
    EXPECT_GE(slope, 0.7);
    EXPECT_LE(slope, 1.3);
  }
}

TEST(SynchronousPair, IdenticalInitGivesZero) {
  const Potential U{0.5, Perturbation::novoid(0.02)};
  const auto A = theorem_matrix(0.5, 1.0);
  const auto init = InitSpec::gaussian({0.5, 0.5}, Sym2{0.3, 0, 0.3});
  const auto run = synchronous_pair(U, 200, 0.01, 2.0, 3, init, init, A, 10);
  for (const auto& [t, d] : run.msd) EXPECT_EQ(d, 0.0);
  EXPECT_EQ(run.msd.front().first, 0.0);
  EXPECT_NEAR(run.msd.back().first, 2.0, 1e-12);
}

TEST(SynchronousPair, ConvexCaseDecays) {
  const Potential U{1.0, Perturbation::none()};
  const auto A = theorem_matrix(1.0, 1.0);
  int monotone_runs = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto run = synchronous_pair(U, 200, 0.01, 5.0, seed, InitSpec::gaussian({2, 0}, Sym2::identity()),
                                      InitSpec::gaussian({0, 0}, Sym2::identity()), A, 50);
    bool mono = true;
    for (std::size_t k = 1; k < run.msd.size(); ++k) mono = mono && run.msd[k].second <= run.msd[k - 1].second * (1 + 1e-9);
    monotone_runs += mono;
    EXPECT_LT(run.msd.back().second, 0.1 * run.msd.front().second);
  }
  EXPECT_GT(monotone_runs, 10);
}

TEST(EmpiricalDensity, IndicatorAndLeakage) {
  const auto grid = PhaseGrid::make(1, 1, 4, 4);
  ParticleEnsemble e;
  e.states = {{0.1, 0.1}, {0.2, 0.3}, {0.4, 0.2}};
  const auto d = empirical_density(e, grid);
  EXPECT_EQ(d.outside, 0u);
  EXPECT_NEAR(d.density.mass(), 1.0, 1e-14);
  EXPECT_NEAR(d.density(2, 2), 1.0 / grid.cell_area(), 1e-12);
  e.states.push_back({5.0, 0.0});
  const auto d2 = empirical_density(e, grid);
  EXPECT_EQ(d2.outside, 1u);
  EXPECT_DOUBLE_EQ(d2.outside_fraction, 0.25);
  ParticleEnsemble far;
  far.states = {{9, 9}};
  const auto d3 = empirical_density(far, grid);
  EXPECT_EQ(d3.outside_fraction, 1.0);
  EXPECT_EQ(d3.density.mass(), 0.0);
}
