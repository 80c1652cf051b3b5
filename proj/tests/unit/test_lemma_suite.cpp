#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "hypoot/equilibrium.hpp"
#include "hypoot/errors.hpp"
#include "hypoot/lemma_suite.hpp"
#include "json.hpp"

using namespace hypoot;

namespace {

constexpr double kAlpha = 7.995e-4;

double pinned_b() {
  const auto rep = check_admissibility(kAlpha, Perturbation::novoid(1e-4));
  return 0.5 * (rep.b_star + 0.5 * rep.c_star);
}

}  // namespace

TEST(Key2, HandExample) {
  const auto t = key2_terms({2, 1, 3}, 1.0, 2.0);
  EXPECT_NEAR(t.lhs, 0.4, 1e-15);
  EXPECT_EQ(t.rhs, 0.0);
  EXPECT_NEAR(key2_gap({2, 1, 3}, 1.0, 2.0), 0.4, 1e-15);
}

TEST(Key2, EqualityLocus) {
  const auto p = key2_equality_m22(2, 1, 0, 1);
  EXPECT_DOUBLE_EQ(p.m22, 1.5);
  EXPECT_TRUE(p.in_spd_cone);
  const auto t = key2_terms({2, 1, p.m22}, 0, 1);
  EXPECT_NEAR(t.lhs, 0.5, 1e-15);
  EXPECT_NEAR(t.rhs, 0.5, 1e-15);

  const auto q = key2_equality_m22(1, 2, 1, 1);
  EXPECT_DOUBLE_EQ(q.m22, 3.0);
  EXPECT_FALSE(q.in_spd_cone);
  EXPECT_DOUBLE_EQ(key2_equality_m22(2, 0.7, 0.7, 1.3).m22, 1.3);
  EXPECT_THROW(key2_equality_m22(0, 1, 0, 1), Error);
}

TEST(Key2, VanishingRhs) {
  const SPDSample M{1.5, 0.4, 2.0};
  const auto t = key2_terms(M, 0.4, -1.0);
  EXPECT_EQ(t.rhs, 0.0);
  EXPECT_GE(t.gap, 0.0);
}

TEST(Key2, GapMatchesClosedForm) {
  // the gap equals m11 (m22 - root)^2 / det M
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto M = random_spd(s);
    const double b = 2.0 * counter_uniform(s, 7, 0) - 1.0;
    const double c = 3.0 * counter_uniform(s, 7, 1) - 1.0;
    const double root = key2_equality_m22(M.m11, M.m12, b, c).m22;
    const double expect = M.m11 * (M.m22 - root) * (M.m22 - root) / M.det();
    EXPECT_NEAR(key2_gap(M, b, c), expect, 1e-9 * std::max(1.0, expect));
  }
}

TEST(RandomSpd, DeterministicAndValid) {
  for (std::uint64_t s : {1u, 2u, 3u}) {
    const auto M = random_spd(s);
    EXPECT_TRUE(M.valid());
    const auto N = random_spd(s);
    EXPECT_EQ(M.m11, N.m11);
    EXPECT_EQ(M.m22, N.m22);
    const auto ev = eigenvalues(Sym2{M.m11, M.m12, M.m22});
    std::printf("seed %llu: condition number %.3g\n", static_cast<unsigned long long>(s), ev.nu2 / ev.nu1);
  }
  EXPECT_NE(random_spd(1).m11, random_spd(2).m11);
}

TEST(CounterUniform, Range) {
  double mean = 0.0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const double u = counter_uniform(9, static_cast<std::uint64_t>(k), static_cast<std::uint32_t>(k % 7));
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    mean += u / n;
  }
  EXPECT_NEAR(mean, 0.5, 0.01);
  EXPECT_NE(counter_uniform(9, 0, 0), counter_uniform(9, 0, 1));
}

TEST(Key2, Sweeps) {
  const auto s = sweep_key2(100000, 11);
  EXPECT_TRUE(s.pass) << s.min_gap;
  EXPECT_EQ(s.samples, 100000u);
  const auto e = sweep_key2_equality(100000, 12);
  EXPECT_TRUE(e.pass) << e.min_gap;
  const auto c = check_key2_cubic(100, 13);
  EXPECT_TRUE(c.pass) << c.min_gap;
}

TEST(Key1, HandInstance) {
  const double b = pinned_b();
  const auto psi = Perturbation::novoid(1e-4);
  const auto ctx = make_key1_context(kAlpha, psi, b);
  const auto g = key1_case_gap(ctx, {2, 0}, {0, 0});
  EXPECT_EQ(g.case_id, 1);
  const double expect = 4 * kAlpha * b - 8 * b * ctx.k.kappa1;
  EXPECT_GT(expect, 0.0);
  EXPECT_NEAR(g.terms.gap, expect, 1e-12 * expect);
  EXPECT_NEAR(g.terms.lhs, 4 * kAlpha * b, 1e-15);

  const auto direct = key1_case_gap({2, 0}, {0, 0}, kAlpha, psi, b);
  EXPECT_DOUBLE_EQ(direct.terms.gap, g.terms.gap);
}

TEST(Key1, CoincidentPointsGiveZero) {
  const auto ctx = make_key1_context(kAlpha, Perturbation::novoid(1e-4), pinned_b());
  for (Vec2 z : {Vec2{3, 1}, Vec2{0.5, 2}, Vec2{0.5, 0}}) {
    for (auto r : {Key1Reading::proof_consistent, Key1Reading::printed}) {
      const auto g = key1_case_gap(ctx, z, z, r);
      EXPECT_GE(g.case_id, 1);
      EXPECT_EQ(g.terms.gap, 0.0);
    }
  }
}

TEST(Key1, Classification) {
  const auto ctx = make_key1_context(kAlpha, Perturbation::novoid(1e-4), pinned_b());
  EXPECT_EQ(key1_case_gap(ctx, {-2.5, 0}, {0, 0}).case_id, 1);
  EXPECT_EQ(key1_case_gap(ctx, {0.1, 0.5}, {0, 0}).case_id, 2);
  EXPECT_EQ(key1_case_gap(ctx, {0.5, 0.1}, {0, 0}).case_id, 3);
  // printed reading: unprimed (r, s) = A (r', s'); here s has the larger magnitude
  EXPECT_EQ(key1_case_gap(ctx, {0.5, 0.1}, {0, 0}, Key1Reading::printed).case_id, 2);
}

TEST(Key1, SweepsPerCase) {
  const auto ctx = make_key1_context(kAlpha, Perturbation::novoid(1e-4), pinned_b());
  for (int id = 1; id <= 3; ++id) {
    const auto v = sweep_key1(ctx, id, 20000, 40 + id);
    EXPECT_TRUE(v.pass) << v.name << " " << v.min_gap;
    EXPECT_EQ(v.samples, 20000u);
  }
}

TEST(Key1, PrintedReadingFails) {
  const auto ctx = make_key1_context(kAlpha, Perturbation::novoid(1e-4), pinned_b());
  EXPECT_FALSE(sweep_key1(ctx, 2, 20000, 5, Key1Reading::printed).pass);
  EXPECT_FALSE(sweep_key1(ctx, 3, 20000, 6, Key1Reading::printed).pass);
}

TEST(Key1, HypothesisGuard) {
  EXPECT_THROW(make_key1_context(kAlpha, Perturbation::novoid(1e-4), 1e-8), Error);
}

TEST(Key1, GaussianSector) {
  // psi = 0 has R = 0; the estimates still hold
  const auto ctx = make_key1_context(0.5, Perturbation::none(), 0.1);
  for (int id = 1; id <= 3; ++id) EXPECT_TRUE(sweep_key1(ctx, id, 5000, 70 + id).pass) << id;
}

TEST(DissipationIdentity, HandInstance) {
  const Sym2 H{2, 1, 3};
  const auto s = prop_diss_identity(H, 1, 2);
  EXPECT_NEAR(s.lhs, 0.4, 1e-14);
  EXPECT_NEAR(s.rhs, 0.4, 1e-14);
  EXPECT_NEAR(prop_diss_identity(H, 1, 2, true).lhs, 2.0, 1e-14);
}

TEST(DissipationIdentity, Sweep) {
  const auto v = sweep_prop_diss_identity(100000, 3);
  EXPECT_TRUE(v.pass) << v.min_gap;
}

TEST(FieldKey2, BrenierHessians) {
  const auto grid = PhaseGrid::make(8.0, 8.0, 32, 32);
  const auto A = theorem_matrix(1.0, 1.0);
  const auto f = gaussian_density({0.8, 0.3}, Sym2{0.8, 0.2, 0.7}, grid);
  const auto g = gaussian_density({0, 0}, Sym2::diag(1, 1), grid);
  const double eps = 0.5 * (grid.dx() * grid.dx() * A.a() + grid.dv() * grid.dv() * A.c());
  const auto F = brenier_field(f, g, A, eps);
  const auto v = check_field_key2(F, A);
  EXPECT_GT(v.samples, 100u);
  EXPECT_TRUE(v.pass) << v.min_gap;
}

TEST(Verify, AllAndJson) {
  VerifyOptions opt;
  opt.samples = 5000;
  const auto all = verify_all(opt);
  int diagnostics = 0;
  for (const auto& v : all) {
    if (v.diagnostic) {
      ++diagnostics;
      continue;
    }
    EXPECT_TRUE(v.pass) << v.name;
  }
  EXPECT_EQ(diagnostics, 3);

  const std::string path = ::testing::TempDir() + "lemmas.json";
  write_verdicts_json(path, all);
  std::ifstream is(path);
  const auto j = nlohmann::json::parse(is);
  EXPECT_TRUE(j.at("pass").get<bool>());
  ASSERT_EQ(j.at("lemmas").size(), all.size());
  for (const auto& l : j.at("lemmas")) {
    EXPECT_TRUE(l.contains("samples"));
    EXPECT_TRUE(l.contains("min_gap"));
    EXPECT_TRUE(l.at("worst_case_inputs").is_object());
  }
  EXPECT_THROW(write_verdicts_json("/nonexistent/dir/x.json", all), Error);
}
