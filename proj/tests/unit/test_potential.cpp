#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "hypoot/errors.hpp"
#include "hypoot/potential.hpp"

using namespace hypoot;

TEST(SupNorms, NovoidUnit) {
  const auto n = sup_norms(Perturbation::novoid(1.0));
  EXPECT_NEAR(n.psi, 1.0, 1e-12);
  EXPECT_NEAR(n.dpsi, 1.9041, 1e-3);
  EXPECT_NEAR(n.ddpsi, 8.0, 1e-6);
}

TEST(SupNorms, Homogeneity) {
  const auto n1 = sup_norms(Perturbation::novoid(1.0));
  const auto ns = sup_norms(Perturbation::novoid(1e-4));
  EXPECT_NEAR(ns.psi, 1e-4 * n1.psi, 1e-12 * 1e-4);
  EXPECT_NEAR(ns.dpsi, 1e-4 * n1.dpsi, 1e-12 * 1e-4);
  EXPECT_NEAR(ns.ddpsi, 1e-4 * n1.ddpsi, 1e-12 * 1e-4);
}

TEST(SupNorms, ZeroCustom) {
  auto zero = [](double) { return 0.0; };
  const auto n = sup_norms(Perturbation::custom(zero, zero, zero, 2.0));
  EXPECT_EQ(n.psi, 0.0);
  EXPECT_EQ(n.dpsi, 0.0);
  EXPECT_EQ(n.ddpsi, 0.0);
  EXPECT_THROW(sup_norms(Perturbation::novoid(1), 0), Error);
}

TEST(Perturbation, CompactSupportAndSmoothness) {
  const auto p = Perturbation::novoid(2.5);
  for (double x : {1.0, -1.0, 1.5, -7.0}) {
    EXPECT_EQ(p.value(x), 0.0);
    EXPECT_EQ(p.d1(x), 0.0);
    EXPECT_EQ(p.d2(x), 0.0);
  }
  // d2 continuous at the support edge
  EXPECT_NEAR(p.d2(1.0 - 1e-7), 0.0, 1e-10);
  // derivatives consistent with finite differences
  const double h = 1e-5;
  for (double x : {-0.7, -0.2, 0.1, 0.55, 0.9}) {
    EXPECT_NEAR((p.value(x + h) - p.value(x - h)) / (2 * h), p.d1(x), 1e-7);
    EXPECT_NEAR((p.d1(x + h) - p.d1(x - h)) / (2 * h), p.d2(x), 1e-7);
  }
}

TEST(Admissibility, PinnedInstance) {
  const auto r = check_admissibility(7.995e-4, Perturbation::novoid(1e-4));
  EXPECT_TRUE(r.admissible) << r.reason;
  EXPECT_NEAR(r.gamma, 5e-7, 1e-12);
  EXPECT_NEAR(r.b_star, 1.14046e-6, 1e-10);
  EXPECT_NEAR(r.c_star, 5.21407e-6, 1e-10);
  EXPECT_GT(r.c_star, 2 * r.b_star);
  EXPECT_TRUE(r.gamma_below_ddpsi_sq);
}

TEST(Admissibility, Failures) {
  const auto r = check_admissibility(1.0, Perturbation::novoid(1.0));
  EXPECT_FALSE(r.admissible);
  EXPECT_FALSE(r.ddpsi_below_tenth);
  EXPECT_FALSE(r.reason.empty());
  EXPECT_THROW(check_admissibility(0.0, Perturbation::novoid(1e-4)), Error);
  // doubling the scale from the pinned instance leaves the window
  const auto d = check_admissibility(7.995e-4, Perturbation::novoid(2e-4));
  EXPECT_FALSE(d.admissible);
}

TEST(Admissibility, UndefinedRootIsReportedNotThrown) {
  SupNorms n{0.01, 0.01, 0.6};
  const auto r = admissibility_from_norms(0.05, n, 1.0);
  EXPECT_FALSE(r.sqrt_defined);
  EXPECT_TRUE(std::isnan(r.b_star));
  EXPECT_FALSE(r.admissible);
}

TEST(NovoidSearch, FindsAdmissiblePair) {
  const auto s = novoid_search();
  EXPECT_TRUE(s.report.admissible);
  EXPECT_TRUE(s.report.gamma_below_ddpsi_sq);
  EXPECT_LT(2 * s.report.norm_dpsi, s.alpha);
  EXPECT_LT(s.alpha, s.report.norm_ddpsi);
  const auto direct = check_admissibility(s.alpha, Perturbation::novoid(s.scale));
  EXPECT_TRUE(direct.admissible);
  // doubling the scale at the found point flips the verdict
  const auto doubled = check_admissibility(s.alpha, Perturbation::novoid(2 * s.scale));
  EXPECT_FALSE(doubled.admissible);
}

TEST(Drift, Examples) {
  Potential U{7.995e-4, Perturbation::novoid(1e-4)};
  const auto z0 = drift(U, {0, 0});
  EXPECT_EQ(z0.x, 0.0);
  EXPECT_EQ(z0.v, 0.0);
  Potential Q{1.0, Perturbation::none()};
  const auto z = drift(Q, {1, 2});
  EXPECT_DOUBLE_EQ(z.x, 2.0);
  EXPECT_DOUBLE_EQ(z.v, -3.0);
  const auto far = drift(U, {3, 0});
  EXPECT_DOUBLE_EQ(far.v, -U.alpha * 3);
}

TEST(RateConstants, PinnedInstance) {
  const auto r = check_admissibility(7.995e-4, Perturbation::novoid(1e-4));
  const double b = 0.5 * (r.b_star + 0.5 * r.c_star);
  const auto k = rate_constants(7.995e-4, Perturbation::novoid(1e-4), b);
  EXPECT_NEAR(k.kappa1, 2.0935e-4, 5e-8);
  EXPECT_NEAR(k.kappa2, 0.5 * (0.5 - 8e-4 - 2.5e-7), 1e-9);
  EXPECT_GT(k.kappa3, 0.0);
  EXPECT_GT(k.kappa, 0.0);
  EXPECT_LT(k.kappa, k.kappa3);
}

TEST(RateConstants, ZeroPerturbationAndViolations) {
  const auto k = rate_constants(0.2, Perturbation::none(), 0.5);
  EXPECT_DOUBLE_EQ(k.kappa1, std::min(0.5, 0.1));
  try {
    rate_constants(7.995e-4, Perturbation::novoid(1e-4), 1e-7);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::hypothesis_violated);
  }
}

TEST(PerturbationTable, SplineRoundTrip) {
  const std::string path = ::testing::TempDir() + "/psi_table.txt";
  {
    std::ofstream out(path);
    out << "# x psi\n";
    const auto p = Perturbation::novoid(1.0);
    for (int i = 0; i <= 400; ++i) {
      const double x = -1.0 + 2.0 * i / 400.0;
      out << x << " " << p.value(x) << "\n";
    }
  }
  const auto t = load_perturbation_table(path);
  EXPECT_DOUBLE_EQ(t.support_radius(), 1.0);
  EXPECT_NEAR(t.value(0.3), Perturbation::novoid(1.0).value(0.3), 1e-5);
  EXPECT_NEAR(t.d1(0.3), Perturbation::novoid(1.0).d1(0.3), 1e-3);
  EXPECT_EQ(t.value(1.5), 0.0);
  std::remove(path.c_str());
  EXPECT_THROW(load_perturbation_table("/nonexistent/psi.txt"), Error);
}
