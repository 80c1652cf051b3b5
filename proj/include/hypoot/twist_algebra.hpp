#pragma once

// Two-dimensional phase-space algebra: points (x, v), symmetric and general
// 2x2 matrices, and the SPD "twist" matrix A that defines the quadratic cost
// |z|_A^2 = a x^2 + 2 b x v + c v^2.

#include <cmath>

namespace hypoot {

struct Vec2 {
  double x = 0.0;
  double v = 0.0;

  friend Vec2 operator+(Vec2 p, Vec2 q) { return {p.x + q.x, p.v + q.v}; }
  friend Vec2 operator-(Vec2 p, Vec2 q) { return {p.x - q.x, p.v - q.v}; }
  friend Vec2 operator*(double s, Vec2 p) { return {s * p.x, s * p.v}; }
  friend bool operator==(Vec2, Vec2) = default;

  double dot(Vec2 q) const { return x * q.x + v * q.v; }
  double norm_sq() const { return x * x + v * v; }
  bool finite() const { return std::isfinite(x) && std::isfinite(v); }
};

/// Symmetric 2x2 matrix [[xx, xv], [xv, vv]].
struct Sym2 {
  double xx = 0.0;
  double xv = 0.0;
  double vv = 0.0;

  static Sym2 identity() { return {1.0, 0.0, 1.0}; }
  static Sym2 diag(double d1, double d2) { return {d1, 0.0, d2}; }

  double det() const { return xx * vv - xv * xv; }
  double trace() const { return xx + vv; }
  Vec2 apply(Vec2 z) const { return {xx * z.x + xv * z.v, xv * z.x + vv * z.v}; }
  double quad(Vec2 z) const { return z.dot(apply(z)); }
  bool is_spd() const { return xx > 0.0 && det() > 0.0; }

  friend Sym2 operator+(Sym2 p, Sym2 q) { return {p.xx + q.xx, p.xv + q.xv, p.vv + q.vv}; }
  friend Sym2 operator-(Sym2 p, Sym2 q) { return {p.xx - q.xx, p.xv - q.xv, p.vv - q.vv}; }
  friend Sym2 operator*(double s, Sym2 p) { return {s * p.xx, s * p.xv, s * p.vv}; }
};

/// General 2x2 matrix, row-major.
struct Mat2 {
  double m11 = 0.0, m12 = 0.0, m21 = 0.0, m22 = 0.0;

  static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  static Mat2 from(Sym2 s) { return {s.xx, s.xv, s.xv, s.vv}; }

  double det() const { return m11 * m22 - m12 * m21; }
  double trace() const { return m11 + m22; }
  Mat2 transpose() const { return {m11, m21, m12, m22}; }
  Vec2 apply(Vec2 z) const { return {m11 * z.x + m12 * z.v, m21 * z.x + m22 * z.v}; }
  Sym2 sym() const { return {m11, 0.5 * (m12 + m21), m22}; }

  friend Mat2 operator*(Mat2 p, Mat2 q) {
    return {p.m11 * q.m11 + p.m12 * q.m21, p.m11 * q.m12 + p.m12 * q.m22,
            p.m21 * q.m11 + p.m22 * q.m21, p.m21 * q.m12 + p.m22 * q.m22};
  }
  friend Mat2 operator+(Mat2 p, Mat2 q) {
    return {p.m11 + q.m11, p.m12 + q.m12, p.m21 + q.m21, p.m22 + q.m22};
  }
  friend Mat2 operator-(Mat2 p, Mat2 q) {
    return {p.m11 - q.m11, p.m12 - q.m12, p.m21 - q.m21, p.m22 - q.m22};
  }
};

struct Eigenvalues {
  double nu1 = 0.0;  ///< smallest
  double nu2 = 0.0;  ///< largest
};

/// Eigenvalues of a symmetric 2x2 matrix via (tr -/+ sqrt((c-a)^2 + 4b^2)) / 2.
Eigenvalues eigenvalues(Sym2 s);

/// Principal square root of an SPD 2x2 matrix (closed form (S + sqrt(det) I) / sqrt(tr + 2 sqrt(det))).
Sym2 sqrt_spd(Sym2 s);
Sym2 inverse(Sym2 s);

/// SPD cost matrix A = [[a, b], [b, c]]. Immutable; only constructible through
/// make_twist / theorem_matrix, which enforce a > 0 and a c - b^2 > 0 strictly.
class TwistMatrix {
 public:
  double a() const { return m_.xx; }
  double b() const { return m_.xv; }
  double c() const { return m_.vv; }
  double det() const { return m_.det(); }
  const Sym2& sym() const { return m_; }
  Vec2 apply(Vec2 z) const { return m_.apply(z); }

  static TwistMatrix identity() { return TwistMatrix(Sym2::identity()); }

 private:
  explicit TwistMatrix(Sym2 m) : m_(m) {}
  Sym2 m_;

  friend TwistMatrix make_twist(double a, double b, double c);
};

/// Throws Error(not_spd) unless a > 0 and a c - b^2 > 0 (no epsilon slack).
TwistMatrix make_twist(double a, double b, double c);
inline TwistMatrix make_twist(Sym2 s) { return make_twist(s.xx, s.xv, s.vv); }

/// A = c_scale * [[alpha + 1/2, 1/2], [1/2, 1]], the matrix of the contraction theorem.
TwistMatrix theorem_matrix(double alpha, double c_scale);

Eigenvalues eigenvalues(const TwistMatrix& A);
double norm_sq(const TwistMatrix& A, Vec2 z);
/// <u, w>_A = u . A w
double inner(const TwistMatrix& A, Vec2 u, Vec2 w);
TwistMatrix inverse(const TwistMatrix& A);
TwistMatrix sqrt_spd(const TwistMatrix& A);
/// sqrt(nu2 / nu1): the constant relating W_A/sqrt(nu1) and W_2 bounds.
double equivalence_ratio(const TwistMatrix& A);
double spectral_radius(const TwistMatrix& A);

}  // namespace hypoot
