#include "hypoot/lemma_suite.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "hypoot/dissipation.hpp"
#include "hypoot/errors.hpp"
#include "hypoot/sde_particles.hpp"
#include "json.hpp"

namespace hypoot {

namespace {

constexpr std::uint32_t kLemmaStream = 0x6c656d6du;

GapTerms make_gap(double lhs, double rhs) {
  GapTerms t;
  t.lhs = lhs;
  t.rhs = rhs;
  t.gap = lhs - rhs;
  t.normalized = t.gap / std::max({std::abs(lhs), std::abs(rhs), 1.0});
  return t;
}

double uniform_in(std::uint64_t seed, std::uint64_t index, std::uint32_t lane, double lo, double hi) {
  return lo + (hi - lo) * counter_uniform(seed, index, lane);
}

SPDSample spd_at(std::uint64_t seed, std::uint64_t index) {
  const double g11 = uniform_in(seed, index, 0, -3.0, 3.0);
  const double g12 = uniform_in(seed, index, 1, -3.0, 3.0);
  const double g21 = uniform_in(seed, index, 2, -3.0, 3.0);
  const double g22 = uniform_in(seed, index, 3, -3.0, 3.0);
  return {g11 * g11 + g21 * g21 + 1e-6, g11 * g12 + g21 * g22, g12 * g12 + g22 * g22 + 1e-6};
}

// keeps the smallest value seen together with the inputs that produced it
struct Worst {
  double value = std::numeric_limits<double>::infinity();
  std::vector<std::pair<std::string, double>> inputs;

  void offer(double v, std::vector<std::pair<std::string, double>> in) {
    if (v < value) {
      value = v;
      inputs = std::move(in);
    }
  }
};

LemmaVerdict finish(std::string name, std::uint64_t n, const Worst& w, bool pass) {
  LemmaVerdict v;
  v.name = std::move(name);
  v.samples = n;
  v.min_gap = n > 0 ? w.value : std::numeric_limits<double>::quiet_NaN();
  v.worst_case_inputs = w.inputs;
  v.pass = pass;
  return v;
}

}  // namespace

double counter_uniform(std::uint64_t seed, std::uint64_t index, std::uint32_t lane) {
  const std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                                         lane / 2, kLemmaStream};
  const auto r = philox4x32(ctr, {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
  const std::uint32_t hi = (lane % 2) ? r[2] : r[0];
  const std::uint32_t lo = (lane % 2) ? r[3] : r[1];
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

SPDSample random_spd(std::uint64_t seed) { return spd_at(seed, 0); }

GapTerms key2_terms(const SPDSample& M, double b, double c) {
  const double d22 = M.m22 - c;
  const double mix = b * d22 - c * (M.m12 - b);
  const double lhs = (d22 * d22 + mix * mix / M.det()) / M.m22;
  const double e = M.m12 - b;
  return make_gap(lhs, e * e / M.m11);
}

double key2_gap(const SPDSample& M, double b, double c) { return key2_terms(M, b, c).gap; }

EqualityPoint key2_equality_m22(double m11, double m12, double b, double c) {
  if (!(m11 > 0.0)) throw Error(ErrorKind::invalid_parameter, "m11 must be positive");
  EqualityPoint p;
  p.m22 = c + (m12 - b) * m12 / m11;
  p.in_spd_cone = p.m22 > m12 * m12 / m11;
  return p;
}

double key2_cubic(double m11, double m12, double b, double c, double x) {
  const double q = x * m11 - m12 * m12;
  const double e = m12 - b;
  const double mix = b * x - c * m12;
  return (x - c) * (x - c) * q + mix * mix - e * e * (x / m11) * q;
}

double key2_cubic_factored(double m11, double m12, double b, double c, double x) {
  const double root = (c * m11 + (m12 - b) * m12) / m11;
  return m11 * x * (x - root) * (x - root);
}

Key1Context make_key1_context(double alpha, const Perturbation& psi, double b) {
  Key1Context ctx{Potential{alpha, psi}, sup_norms(psi), {}, theorem_matrix(alpha, 2.0 * b), psi.support_radius()};
  ctx.k = rate_constants(alpha, ctx.norms, b);
  return ctx;
}

Key1Gap key1_case_gap(const Key1Context& ctx, Vec2 z1p, Vec2 z2p, Key1Reading reading) {
  const double R1 = ctx.radius + 1.0;
  const double c = ctx.A.c();
  const Vec2 dz = z1p - z2p;
  const double dz2 = dz.norm_sq();
  const double D = -inner(ctx.A, drift(ctx.U, z1p) - drift(ctx.U, z2p), dz);
  const Vec2 du = ctx.A.apply(dz);  // (r, s) = A (r', s')

  Key1Gap out;
  if (std::abs(z1p.x) >= R1 || std::abs(z2p.x) >= R1) {
    out.case_id = 1;
    out.terms = make_gap(D, c * ctx.k.kappa1 * dz2);
    return out;
  }
  if (reading == Key1Reading::proof_consistent) {
    if (std::abs(dz.x) < std::abs(dz.v)) {
      out.case_id = 2;
      out.terms = make_gap(D, c * ctx.k.kappa2 * dz2);
    } else {
      out.case_id = 3;
      out.terms = make_gap(D + du.v * du.v, c * ctx.k.kappa3 * dz2);
    }
    return out;
  }
  if (std::abs(du.x) < std::abs(du.v)) {
    out.case_id = 2;
    out.terms = make_gap(D, c * ctx.k.kappa2 * dz2);
    return out;
  }
  const Vec2 z1 = ctx.A.apply(z1p), z2 = ctx.A.apply(z2p);
  if (std::abs(z1.x) <= R1 && std::abs(z2.x) <= R1) {
    out.case_id = 3;
    out.terms = make_gap(D + du.v * du.v, ctx.k.kappa3 * dz2);
    return out;
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.terms = {nan, nan, nan, nan};
  return out;
}

Key1Gap key1_case_gap(Vec2 z1p, Vec2 z2p, double alpha, const Perturbation& psi, double b, Key1Reading reading) {
  return key1_case_gap(make_key1_context(alpha, psi, b), z1p, z2p, reading);
}

IdentitySides prop_diss_identity(const Sym2& H, double b, double c, bool c_inside) {
  const double det = H.det();
  const double quad = b * b * H.vv - 2.0 * c * b * H.xv + c * c * H.xx;
  IdentitySides s;
  s.lhs = c_inside ? (quad - c) / det + (H.vv - c) : quad / det - c + (H.vv - c);
  const double d22 = H.vv - c;
  const double mix = b * H.vv - c * H.xv;
  s.rhs = (d22 * d22 + mix * mix / det) / H.vv;
  return s;
}

LemmaVerdict sweep_key2(std::uint64_t samples, std::uint64_t seed) {
  Worst w;
  for (std::uint64_t k = 0; k < samples; ++k) {
    const SPDSample M = spd_at(seed, k);
    const double b = uniform_in(seed, k, 4, -5.0, 5.0);
    const double c = uniform_in(seed, k, 5, -5.0, 5.0);
    const auto t = key2_terms(M, b, c);
    w.offer(t.normalized, {{"m11", M.m11}, {"m12", M.m12}, {"m22", M.m22}, {"b", b}, {"c", c},
                           {"lhs", t.lhs}, {"rhs", t.rhs}});
  }
  return finish("key2_inequality", samples, w, samples > 0 && w.value >= -1e-12);
}

LemmaVerdict sweep_key2_equality(std::uint64_t samples, std::uint64_t seed) {
  Worst w;
  std::uint64_t n = 0;
  for (std::uint64_t k = 0; n < samples && k < 100 * samples + 1000; ++k) {
    const double m11 = spd_at(seed, k).m11;
    const double m12 = uniform_in(seed, k, 4, -5.0, 5.0);
    const double b = uniform_in(seed, k, 5, -5.0, 5.0);
    const double c = uniform_in(seed, k, 6, -5.0, 5.0);
    const auto p = key2_equality_m22(m11, m12, b, c);
    if (!p.in_spd_cone) continue;
    ++n;
    const auto t = key2_terms({m11, m12, p.m22}, b, c);
    w.offer(-std::abs(t.normalized), {{"m11", m11}, {"m12", m12}, {"m22", p.m22}, {"b", b}, {"c", c},
                                      {"lhs", t.lhs}, {"rhs", t.rhs}});
  }
  return finish("key2_equality_locus", n, w, n == samples && w.value >= -1e-10);
}

LemmaVerdict check_key2_cubic(int points, std::uint64_t seed) {
  Worst w;
  for (int k = 0; k < points; ++k) {
    const auto idx = static_cast<std::uint64_t>(k);
    const double m11 = uniform_in(seed, idx, 0, 0.1, 5.0);
    const double m12 = uniform_in(seed, idx, 1, -5.0, 5.0);
    const double b = uniform_in(seed, idx, 2, -5.0, 5.0);
    const double c = uniform_in(seed, idx, 3, -5.0, 5.0);
    const double x = uniform_in(seed, idx, 4, -5.0, 5.0);
    const double g = key2_cubic(m11, m12, b, c, x);
    const double gf = key2_cubic_factored(m11, m12, b, c, x);
    const double rel = std::abs(g - gf) / std::max({std::abs(g), std::abs(gf), 1.0});
    w.offer(-rel, {{"m11", m11}, {"m12", m12}, {"b", b}, {"c", c}, {"x", x}, {"g", g}, {"factored", gf}});
  }
  const auto n = static_cast<std::uint64_t>(std::max(points, 0));
  return finish("key2_cubic_factorization", n, w, n > 0 && w.value >= -1e-9);
}

LemmaVerdict sweep_key1(const Key1Context& ctx, int case_id, std::uint64_t samples, std::uint64_t seed,
                        Key1Reading reading) {
  const double xr = ctx.radius + 3.0;
  Worst w;
  double min_rel = std::numeric_limits<double>::infinity();
  std::uint64_t n = 0;
  for (std::uint64_t k = 0; n < samples && k < 100 * samples + 1000; ++k) {
    const Vec2 z1p{uniform_in(seed, k, 0, -xr, xr), uniform_in(seed, k, 1, -3.0, 3.0)};
    const double len = std::pow(10.0, uniform_in(seed, k, 2, -3.0, 0.7));
    const double th = uniform_in(seed, k, 3, 0.0, 2.0 * std::numbers::pi);
    const Vec2 z2p = z1p + len * Vec2{std::cos(th), std::sin(th)};
    const auto g = key1_case_gap(ctx, z1p, z2p, reading);
    if (g.case_id != case_id) continue;
    ++n;
    const double rel = g.terms.gap / std::max(std::abs(g.terms.lhs), std::abs(g.terms.rhs));
    min_rel = std::min(min_rel, rel);
    w.offer(g.terms.normalized, {{"x1p", z1p.x}, {"v1p", z1p.v}, {"x2p", z2p.x}, {"v2p", z2p.v},
                                 {"lhs", g.terms.lhs}, {"rhs", g.terms.rhs}, {"relative_gap", rel}});
  }
  std::string name = "key1_case_" + std::to_string(case_id);
  if (reading == Key1Reading::printed) name += "_printed";
  // the sides are O(b |dz'|^2) ~ 1e-6, so the relative gap is gated as well
  auto v = finish(name, n, w, n == samples && w.value >= -1e-12 && min_rel >= -1e-9);
  v.worst_case_inputs.emplace_back("min_relative_gap", min_rel);
  return v;
}

LemmaVerdict sweep_prop_diss_identity(std::uint64_t samples, std::uint64_t seed) {
  Worst w;
  for (std::uint64_t k = 0; k < samples; ++k) {
    const SPDSample M = spd_at(seed, k);
    const Sym2 H{M.m11, M.m12, M.m22};
    const double b = uniform_in(seed, k, 4, -5.0, 5.0);
    const double c = uniform_in(seed, k, 5, -5.0, 5.0);
    const auto s = prop_diss_identity(H, b, c);
    const double rel = std::abs(s.lhs - s.rhs) / std::max({std::abs(s.lhs), std::abs(s.rhs), 1.0});
    w.offer(-rel, {{"h11", H.xx}, {"h12", H.xv}, {"h22", H.vv}, {"b", b}, {"c", c}, {"lhs", s.lhs}, {"rhs", s.rhs}});
  }
  return finish("dissipation_identity", samples, w, samples > 0 && w.value >= -1e-10);
}

LemmaVerdict check_field_key2(const BrenierField& field, const TwistMatrix& A) {
  Worst w;
  std::uint64_t n = 0;
  const double b = A.b();
  for (std::size_t i = 0; i < field.hessian.size(); ++i) {
    if (!field.in_support[i] || field.clamped[i]) continue;
    const Sym2& H = field.hessian[i];
    if (!H.is_spd()) continue;
    ++n;
    const double lhs = term2_integrand(H, A);
    const double rhs = (H.xv - b) * (H.xv - b) / H.xx;
    const auto t = make_gap(lhs, rhs);
    w.offer(t.normalized, {{"cell", static_cast<double>(i)}, {"h11", H.xx}, {"h12", H.xv}, {"h22", H.vv},
                           {"lhs", lhs}, {"rhs", rhs}});
  }
  return finish("key2_on_brenier_field", n, w, n > 0 && w.value >= -1e-12);
}

std::vector<LemmaVerdict> verify_all(const VerifyOptions& opt) {
  std::vector<LemmaVerdict> out;
  out.push_back(sweep_key2(opt.samples, opt.seed));
  out.push_back(sweep_key2_equality(opt.samples, opt.seed + 1));
  out.push_back(check_key2_cubic(100, opt.seed + 2));
  out.push_back(sweep_prop_diss_identity(opt.samples, opt.seed + 3));

  const double alpha = 7.995e-4;
  const auto psi = Perturbation::novoid(1e-4);
  const auto rep = check_admissibility(alpha, psi);
  if (!rep.admissible) throw Error(ErrorKind::hypothesis_violated, "pinned instance not admissible: " + rep.reason);
  const double b = 0.5 * (rep.b_star + 0.5 * rep.c_star);
  const auto ctx = make_key1_context(alpha, psi, b);

  const Vec2 z1{2.0, 0.0}, z2{0.0, 0.0};
  const auto hand = key1_case_gap(ctx, z1, z2);
  LemmaVerdict hv;
  hv.name = "key1_hand_instance";
  hv.samples = 1;
  const double expect = 4.0 * alpha * b - 8.0 * b * ctx.k.kappa1;
  hv.min_gap = hand.terms.gap;
  hv.worst_case_inputs = {{"gap", hand.terms.gap}, {"expected", expect}, {"b", b}, {"kappa1", ctx.k.kappa1}};
  hv.pass = hand.case_id == 1 && expect > 0.0 && std::abs(hand.terms.gap - expect) <= 1e-12 * std::abs(expect);
  out.push_back(hv);

  for (int id = 1; id <= 3; ++id) out.push_back(sweep_key1(ctx, id, opt.samples, opt.seed + 10 + id, opt.reading));

  if (opt.include_printed_diagnostic) {
    if (opt.reading != Key1Reading::printed) {
      for (int id = 2; id <= 3; ++id) {
        auto v = sweep_key1(ctx, id, opt.samples, opt.seed + 20 + id, Key1Reading::printed);
        v.diagnostic = true;
        out.push_back(std::move(v));
      }
    }
    Worst w;
    const std::uint64_t n = std::min<std::uint64_t>(opt.samples, 1000);
    for (std::uint64_t k = 0; k < n; ++k) {
      const SPDSample M = spd_at(opt.seed + 4, k);
      const double bb = uniform_in(opt.seed + 4, k, 4, -5.0, 5.0);
      const double cc = uniform_in(opt.seed + 4, k, 5, -5.0, 5.0);
      const auto s = prop_diss_identity({M.m11, M.m12, M.m22}, bb, cc, true);
      const double rel = std::abs(s.lhs - s.rhs) / std::max({std::abs(s.lhs), std::abs(s.rhs), 1.0});
      w.offer(-rel, {{"h11", M.m11}, {"h12", M.m12}, {"h22", M.m22}, {"b", bb}, {"c", cc}, {"lhs", s.lhs},
                     {"rhs", s.rhs}});
    }
    auto v = finish("dissipation_identity_printed", n, w, n > 0 && w.value >= -1e-10);
    v.diagnostic = true;
    out.push_back(std::move(v));
  }
  return out;
}

void write_verdicts_json(const std::string& path, const std::vector<LemmaVerdict>& verdicts) {
  using nlohmann::json;
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  json lemmas = json::array();
  bool all = true;
  for (const auto& v : verdicts) {
    json inputs = json::object();
    for (const auto& [k, x] : v.worst_case_inputs) inputs[k] = num(x);
    lemmas.push_back({{"name", v.name},
                      {"samples", v.samples},
                      {"min_gap", num(v.min_gap)},
                      {"worst_case_inputs", inputs},
                      {"pass", v.pass},
                      {"diagnostic", v.diagnostic}});
    if (!v.diagnostic) all = all && v.pass;
  }
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::io_error, "cannot write " + path);
  os << json{{"lemmas", lemmas}, {"pass", all}}.dump(2) << '\n';
}

}  // namespace hypoot
