#include "hypoot/twist_algebra.hpp"

#include <cmath>
#include <sstream>

#include "hypoot/errors.hpp"

namespace hypoot {

Eigenvalues eigenvalues(Sym2 s) {
  const double disc = std::sqrt((s.vv - s.xx) * (s.vv - s.xx) + 4.0 * s.xv * s.xv);
  const double tr = s.xx + s.vv;
  return {0.5 * (tr - disc), 0.5 * (tr + disc)};
}

Sym2 sqrt_spd(Sym2 s) {
  const double sd = std::sqrt(s.det());
  const double t = std::sqrt(s.trace() + 2.0 * sd);
  return {(s.xx + sd) / t, s.xv / t, (s.vv + sd) / t};
}

Sym2 inverse(Sym2 s) {
  const double d = s.det();
  return {s.vv / d, -s.xv / d, s.xx / d};
}

TwistMatrix make_twist(double a, double b, double c) {
  const double det = a * c - b * b;
  if (!(a > 0.0) || !(det > 0.0) || !std::isfinite(det)) {
    std::ostringstream os;
    os << "matrix (" << a << ", " << b << ", " << c << ") has a = " << a << ", det = " << det;
    throw Error(ErrorKind::not_spd, os.str());
  }
  return TwistMatrix(Sym2{a, b, c});
}

TwistMatrix theorem_matrix(double alpha, double c_scale) {
  if (!(alpha > 0.0) || !(c_scale > 0.0)) {
    throw Error(ErrorKind::invalid_parameter, "theorem_matrix requires alpha > 0 and c > 0");
  }
  return make_twist(c_scale * (alpha + 0.5), 0.5 * c_scale, c_scale);
}

Eigenvalues eigenvalues(const TwistMatrix& A) { return eigenvalues(A.sym()); }

double norm_sq(const TwistMatrix& A, Vec2 z) { return A.sym().quad(z); }

double inner(const TwistMatrix& A, Vec2 u, Vec2 w) { return u.dot(A.apply(w)); }

TwistMatrix inverse(const TwistMatrix& A) { return make_twist(inverse(A.sym())); }

TwistMatrix sqrt_spd(const TwistMatrix& A) { return make_twist(sqrt_spd(A.sym())); }

double equivalence_ratio(const TwistMatrix& A) {
  const auto ev = eigenvalues(A);
  return std::sqrt(ev.nu2 / ev.nu1);
}

double spectral_radius(const TwistMatrix& A) { return eigenvalues(A).nu2; }

}  // namespace hypoot
