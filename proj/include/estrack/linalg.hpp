#pragma once

// Fixed-size 2-vector and 2x2 matrix helpers. The reactor model and the
// controller both live in R^2, so everything here is closed form.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>

namespace estrack {

using Vec2 = std::array<double, 2>;
using StateVec = Vec2;  // (x1, x2): concentration and temperature deviations
using InputVec = Vec2;  // (u1, u2): inlet concentration and inlet temperature

// Row-major: m[row][col].
using Mat2 = std::array<std::array<double, 2>, 2>;

inline constexpr Vec2 operator+(const Vec2& a, const Vec2& b) { return {a[0] + b[0], a[1] + b[1]}; }
inline constexpr Vec2 operator-(const Vec2& a, const Vec2& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline constexpr Vec2 operator-(const Vec2& a) { return {-a[0], -a[1]}; }
inline constexpr Vec2 operator*(double s, const Vec2& a) { return {s * a[0], s * a[1]}; }

inline constexpr double dot(const Vec2& a, const Vec2& b) { return a[0] * b[0] + a[1] * b[1]; }
inline double norm(const Vec2& a) { return std::hypot(a[0], a[1]); }
inline constexpr double squared_norm(const Vec2& a) { return dot(a, a); }

inline constexpr Vec2 operator*(const Mat2& m, const Vec2& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]};
}

inline constexpr Mat2 operator*(double s, const Mat2& m) {
  return {{{s * m[0][0], s * m[0][1]}, {s * m[1][0], s * m[1][1]}}};
}

inline constexpr Mat2 identity2() { return {{{1.0, 0.0}, {0.0, 1.0}}}; }
inline constexpr double trace(const Mat2& m) { return m[0][0] + m[1][1]; }
inline constexpr double determinant(const Mat2& m) { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }

// Solves m * x = b by Cramer's rule. Returns false when m is numerically singular.
inline bool solve2(const Mat2& m, const Vec2& b, Vec2& x) {
  const double det = determinant(m);
  const double scale = std::abs(m[0][0] * m[1][1]) + std::abs(m[0][1] * m[1][0]);
  if (!(std::abs(det) > 1e-14 * scale) || !std::isfinite(det)) return false;
  x = {(b[0] * m[1][1] - m[0][1] * b[1]) / det, (m[0][0] * b[1] - b[0] * m[1][0]) / det};
  return true;
}

// Eigenvalues from the trace/determinant formula, ordered by descending real
// part. The root of larger magnitude is formed first and the other recovered
// from det = l1 * l2 to avoid cancellation.
inline std::array<std::complex<double>, 2> eigenvalues(const Mat2& m) {
  const double half_tr = 0.5 * trace(m);
  const double det = determinant(m);
  const double disc = half_tr * half_tr - det;
  if (disc >= 0.0) {
    const double root = std::sqrt(disc);
    const double big = half_tr >= 0.0 ? half_tr + root : half_tr - root;
    const double small = big != 0.0 ? det / big : 0.0;
    const double hi = std::max(big, small);
    const double lo = std::min(big, small);
    return {std::complex<double>(hi, 0.0), std::complex<double>(lo, 0.0)};
  }
  const double im = std::sqrt(-disc);
  return {std::complex<double>(half_tr, im), std::complex<double>(half_tr, -im)};
}

// exp(m t) in closed form. With B = m t = mu I + N, N traceless, N^2 = q I
// where q = mu^2 - det(B), so exp(B) = e^mu (c(q) I + s(q) N) with
// c = cosh(sqrt q), s = sinh(sqrt q) / sqrt q (trigonometric for q < 0).
inline Mat2 expm(const Mat2& m, double t) {
  const Mat2 b = t * m;
  const double mu = 0.5 * trace(b);
  const double q = mu * mu - determinant(b);
  double c = 1.0;
  double s = 1.0;
  if (std::abs(q) < 1e-8) {
    c = 1.0 + q / 2.0 + q * q / 24.0;
    s = 1.0 + q / 6.0 + q * q / 120.0;
  } else if (q > 0.0) {
    const double r = std::sqrt(q);
    c = std::cosh(r);
    s = std::sinh(r) / r;
  } else {
    const double r = std::sqrt(-q);
    c = std::cos(r);
    s = std::sin(r) / r;
  }
  const double e = std::exp(mu);
  return {{{e * (c + s * (b[0][0] - mu)), e * s * b[0][1]}, {e * s * b[1][0], e * (c + s * (b[1][1] - mu))}}};
}

}  // namespace estrack
