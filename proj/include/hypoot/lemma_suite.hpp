#pragma once

// Property checks for the matrix inequality, the three-case drift contraction
// estimate and the algebraic identity behind the dissipation inequality.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hypoot/potential.hpp"
#include "hypoot/transport.hpp"
#include "hypoot/twist_algebra.hpp"

namespace hypoot {

struct SPDSample {
  double m11 = 1.0;
  double m12 = 0.0;
  double m22 = 1.0;

  double det() const { return m11 * m22 - m12 * m12; }
  bool valid() const { return m11 > 0.0 && det() > 0.0; }
};

/// M = G^T G + 1e-6 I with G uniform in [-3, 3]^{2x2}; counter-based, so the
/// same seed always gives the same sample.
SPDSample random_spd(std::uint64_t seed);

/// Uniform in (0, 1) from (seed, index, lane); lanes 2k and 2k+1 share one Philox block.
double counter_uniform(std::uint64_t seed, std::uint64_t index, std::uint32_t lane);

struct GapTerms {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;         ///< lhs - rhs
  double normalized = 0.0;  ///< gap / max(|lhs|, |rhs|, 1)
};

/// ((m22 - c)^2 + (b (m22 - c) - c (m12 - b))^2 / det M) / m22  versus  (m12 - b)^2 / m11.
GapTerms key2_terms(const SPDSample& M, double b, double c);
double key2_gap(const SPDSample& M, double b, double c);

struct EqualityPoint {
  double m22 = 0.0;
  bool in_spd_cone = false;  ///< m22 > m12^2 / m11
};

/// m22 = c + (m12 - b) m12 / m11. Throws invalid_parameter when m11 <= 0.
EqualityPoint key2_equality_m22(double m11, double m12, double b, double c);

/// The cubic g(x) = (x-c)^2 (x m11 - m12^2) + (b x - c m12)^2 - (m12-b)^2 (x/m11)(x m11 - m12^2)
/// and its factored form m11 x (x - (c m11 + (m12 - b) m12) / m11)^2.
double key2_cubic(double m11, double m12, double b, double c, double x);
double key2_cubic_factored(double m11, double m12, double b, double c, double x);

/// How the case conditions of the drift contraction estimate are read.
///  proof_consistent: every condition in primed coordinates and c kappa3 in case (iii),
///                    as the proofs use them;
///  printed:          cases (ii) and (iii) classified with unprimed differences, the
///                    support condition of (iii) unprimed, kappa3 without the factor c.
enum class Key1Reading { proof_consistent, printed };

struct Key1Context {
  Potential U;
  SupNorms norms;
  RateConstants k;
  TwistMatrix A;
  double radius = 0.0;
};

/// Requires c = 2b and b > b_star; throws hypothesis_violated otherwise.
Key1Context make_key1_context(double alpha, const Perturbation& psi, double b);

struct Key1Gap {
  int case_id = 0;  ///< 1, 2, 3, or 0 when no case applies under the reading
  GapTerms terms;
};

/// Gap of the applicable case for the primed points z1p, z2p (z_i = A z'_i).
Key1Gap key1_case_gap(const Key1Context& ctx, Vec2 z1p, Vec2 z2p,
                      Key1Reading reading = Key1Reading::proof_consistent);
Key1Gap key1_case_gap(Vec2 z1p, Vec2 z2p, double alpha, const Perturbation& psi, double b,
                      Key1Reading reading = Key1Reading::proof_consistent);

struct IdentitySides {
  double lhs = 0.0;
  double rhs = 0.0;
};

/// (b^2 h22 - 2 c b h12 + c^2 h11) / det H - c + (h22 - c)  versus
/// ((h22 - c)^2 + (b h22 - c h12)^2 / det H) / h22.
/// With c_inside = true the first -c sits inside the det-scaled bracket (the
/// variant kept as a diagnostic).
IdentitySides prop_diss_identity(const Sym2& H, double b, double c, bool c_inside = false);

struct LemmaVerdict {
  std::string name;
  std::uint64_t samples = 0;
  double min_gap = 0.0;       ///< smallest normalized gap (for equalities: minus the largest |gap|)
  std::vector<std::pair<std::string, double>> worst_case_inputs;
  bool pass = false;
  bool diagnostic = false;  ///< reported, but does not enter the overall verdict
};

LemmaVerdict sweep_key2(std::uint64_t samples, std::uint64_t seed);
LemmaVerdict sweep_key2_equality(std::uint64_t samples, std::uint64_t seed);
LemmaVerdict check_key2_cubic(int points, std::uint64_t seed);
/// Pairs drawn near the support and kept when they fall into `case_id` under the reading.
LemmaVerdict sweep_key1(const Key1Context& ctx, int case_id, std::uint64_t samples, std::uint64_t seed,
                        Key1Reading reading = Key1Reading::proof_consistent);
LemmaVerdict sweep_prop_diss_identity(std::uint64_t samples, std::uint64_t seed);
/// term2 integrand >= (h12 - b)^2 / h11 on every supported, unclamped cell.
LemmaVerdict check_field_key2(const BrenierField& field, const TwistMatrix& A);

struct VerifyOptions {
  std::uint64_t samples = 100000;
  std::uint64_t seed = 1;
  Key1Reading reading = Key1Reading::proof_consistent;
  bool include_printed_diagnostic = true;
};

/// All sweeps with the novoid pinned instance for the drift estimate.
std::vector<LemmaVerdict> verify_all(const VerifyOptions& opt = {});

/// {"lemmas": [{name, samples, min_gap, worst_case_inputs, pass, diagnostic}, ...], "pass": all non-diagnostic}
void write_verdicts_json(const std::string& path, const std::vector<LemmaVerdict>& verdicts);

}  // namespace hypoot
