#pragma once

#include <cmath>
#include <numbers>

#include <cbfpds/cbfpds.hpp>

namespace cbfpds::test {

inline Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

inline Mat m2(double a, double b, double c, double d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

// Example data written out independently of the builtin scenarios.
inline Mat example_q() { return m2(3, 2, 2, 2); }
inline Mat example_g() { return m2(0.625, 0.125, 0.125, 2.625); }
inline Mat example_k() { return m2(-2, -4, 1, -1); }
inline Mat example_a() { return m2(-1, -4, 1, 0); }  // I + K

inline double q_lambda_min() { return (5.0 - std::sqrt(17.0)) / 2.0; }
inline double q_lambda_max() { return (5.0 + std::sqrt(17.0)) / 2.0; }
inline double g_lambda_max() { return (3.25 + std::sqrt(4.0625)) / 2.0; }

/// Point of the ellipse x^T Q x = c in direction theta.
inline Vec ellipse_point(double theta, const Mat& q, double c) {
  const Vec u = v2(std::cos(theta), std::sin(theta));
  return u * std::sqrt(c / u.dot(q * u));
}

/// Minimum of dist(x, y) over `n` boundary points of the planar ellipse.
template <class Dist>
double brute_force_min(const Mat& q, double c, int n, Dist dist) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    best = std::min(best, dist(ellipse_point(2.0 * std::numbers::pi * k / n, q, c)));
  }
  return best;
}

/// The example barrier 9 - x^T Q x written as an expression.
inline BarrierFunction example_expr_barrier() {
  return BarrierFunction::expression(parse_expression("9 - (3*x1^2 + 4*x1*x2 + 2*x2^2)", 2));
}

}  // namespace cbfpds::test
