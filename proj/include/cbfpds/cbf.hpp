#pragma once

// CBF-QP safety filter.
//
// The filtered field solves  min_mu ||mu - f0(x)||_P^2  s.t.  grad h(x)^T mu + a h(x) >= 0,
// whose solution is
//     f_cbf,a(x) = f0(x) - min(0, L_f0 h(x) + a h(x)) P^{-1} grad h(x) / ||grad h(x)||^2_{P^{-1}}.
// qp_oracle solves the same QP through its KKT system instead, so the two can cross-check.

#include <algorithm>
#include <cmath>
#include <string>

#include "cbfpds/error.hpp"
#include "cbfpds/geometry.hpp"
#include "cbfpds/scenario.hpp"

namespace cbfpds {

struct CbfEvaluation {
  Vec x;
  Vec raw;            // f0(x)
  double h = 0.0;
  double lie = 0.0;   // L_f0 h(x)
  bool active = false;  // L_f0 h + a h <= 0
  Vec output;
};

namespace detail {

/// Closed-form filtered field from precomputed pieces. `gtol` guards the active branch.
inline Vec cbf_closed_form(const Vec& fnom, const Vec& gradh, double h, double a, const SpdMatrix& p, double gtol,
                           bool* active = nullptr) {
  const double slack = gradh.dot(fnom) + a * h;
  if (active) *active = slack <= 0.0;
  if (slack > 0.0) return fnom;
  if (!(gradh.norm() > gtol)) {
    throw GradientVanishesError("CBF filter is active but the barrier gradient vanishes (a below a*, or bad scenario)");
  }
  const Vec pinv_g = p.solve(gradh);
  return fnom - slack * pinv_g / gradh.dot(pinv_g);
}

}  // namespace detail

/// Filtered field without the safe-set membership check; used inside integrator stages,
/// which may probe points slightly outside S.
inline Vec cbf_vector(const Scenario& s, const Vec& x) {
  return detail::cbf_closed_form(s.f0(x), s.barrier.gradient(x), s.barrier.value(x), s.a, s.P,
                                 s.barrier.gradient_tolerance());
}

/// Full evaluation of the CBF-QP closed loop at x in S. Points with h in [-tol, 0) are
/// treated as boundary points.
inline CbfEvaluation cbf_field(const Scenario& s, const Vec& x) {
  if (x.size() != s.dim) throw DimensionError("cbf_field: point has wrong dimension");
  CbfEvaluation ev;
  ev.x = x;
  ev.h = s.barrier.value(x);
  if (ev.h < -kBoundaryTol) {
    throw OutsideSafeSetError("cbf_field: point lies outside the safe set (h = " + std::to_string(ev.h) + ")");
  }
  ev.raw = s.f0(x);
  const Vec g = s.barrier.gradient(x);
  ev.lie = g.dot(ev.raw);
  ev.output = detail::cbf_closed_form(ev.raw, g, ev.h, s.a, s.P, s.barrier.gradient_tolerance(), &ev.active);
  return ev;
}

/// Safety-filtered input u = f_cbf,a(x) - f(x); equals u0(x) when the filter is inactive.
inline Vec cbf_filter_input(const Scenario& s, const Vec& x) {
  const CbfEvaluation ev = cbf_field(s, x);
  if (!ev.active) return s.controller(x);
  return ev.output - s.dynamics(x);
}

/// Minimizer of ||mu - fnom||_P^2 s.t. gradh^T mu + a h >= 0 via the KKT conditions:
/// either the constraint is slack at fnom, or it is tight and
///     [2P  -g] [mu]   [2P fnom]
///     [g^T  0] [nu] = [ -a h  ],   nu >= 0.
inline Vec qp_oracle(const Vec& fnom, const Vec& gradh, double h, double a, const SpdMatrix& p) {
  const int n = static_cast<int>(fnom.size());
  if (gradh.size() != n || p.dim() != n) throw DimensionError("qp_oracle: dimension mismatch");
  if (gradh.dot(fnom) + a * h >= 0.0) return fnom;
  if (gradh.norm() == 0.0) throw GradientVanishesError("qp_oracle: constraint violated with zero gradient");
  Mat kkt = Mat::Zero(n + 1, n + 1);
  kkt.topLeftCorner(n, n) = 2.0 * p.matrix();
  kkt.block(0, n, n, 1) = -gradh;
  kkt.block(n, 0, 1, n) = gradh.transpose();
  Vec rhs(n + 1);
  rhs.head(n) = 2.0 * p.matrix() * fnom;
  rhs[n] = -a * h;
  const Vec sol = kkt.fullPivLu().solve(rhs);
  if (sol[n] < -1e-9 * std::max(1.0, std::abs(sol[n]))) {
    throw ConvergenceError("qp_oracle: negative multiplier in the active KKT branch");
  }
  return sol.head(n);
}

}  // namespace cbfpds
