#pragma once

// Projections onto the safe set S = {h >= 0} and onto its boundary.
//
// Quadratic barriers reduce to the closest point on an ellipsoid surface, found from the
// one-dimensional secular equation
//     phi(l) = sum_i q_i z_i^2 / (1 + l q_i)^2 - c = 0
// in the eigenbasis of Q (z = V^T x). phi is convex and strictly decreasing on the branch
// l > -1/q_max, so a bracket plus Newton started from the phi > 0 side converges monotonically.
// A P-weighted projection is the Euclidean one after the change of variables w = L^T y with
// P = L L^T. Expression barriers use Newton on the KKT system from several seeds.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "cbfpds/barrier.hpp"
#include "cbfpds/error.hpp"
#include "cbfpds/geometry.hpp"

namespace cbfpds {

namespace detail {

/// Closest point to `xt` on the surface {w | w^T Qt w = c}, Qt SPD.
inline Vec ellipsoid_surface_point(const Vec& xt, const Mat& qt, double c) {
  const int n = static_cast<int>(xt.size());
  Eigen::SelfAdjointEigenSolver<Mat> es(qt);
  const Vec q = es.eigenvalues();  // ascending
  const Mat& V = es.eigenvectors();
  const Vec z = V.transpose() * xt;
  const double s = (q.array() * z.array().square()).sum();
  if (std::abs(c - s) <= 0.1 * kBoundaryTol) return xt;

  auto phi = [&](double lam) {
    double acc = -c;
    for (int i = 0; i < n; ++i) {
      if (z[i] == 0.0) continue;
      const double d = 1.0 + lam * q[i];
      acc += q[i] * z[i] * z[i] / (d * d);
    }
    return acc;
  };
  auto dphi = [&](double lam) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      if (z[i] == 0.0) continue;
      const double d = 1.0 + lam * q[i];
      acc -= 2.0 * q[i] * q[i] * z[i] * z[i] / (d * d * d);
    }
    return acc;
  };

  const double qmax = q[n - 1];
  Vec w_eig(n);
  double lo = 0.0;
  double hi = 0.0;

  if (s < c) {
    // Interior point: the nearest surface point corresponds to the root in (-1/qmax, 0).
    double zk2 = 0.0;
    for (int i = 0; i < n; ++i)
      if (q[i] >= qmax * (1.0 - 1e-12)) zk2 += z[i] * z[i];
    const double scale = z.norm() + std::sqrt(c / qmax);
    const double left = -1.0 / qmax;
    if (zk2 <= 1e-24 * scale * scale) {
      double lim = -c;
      for (int i = 0; i < n; ++i) {
        if (q[i] >= qmax * (1.0 - 1e-12) || z[i] == 0.0) continue;
        const double d = 1.0 - q[i] / qmax;
        lim += q[i] * z[i] * z[i] / (d * d);
      }
      if (lim <= 0.0) {
        // Degenerate case (e.g. the center): the root sits at the pole -1/qmax and the
        // projection extends along the top eigenspace.
        double rem = c;
        Vec dir = Vec::Zero(n);
        for (int i = 0; i < n; ++i) {
          if (q[i] >= qmax * (1.0 - 1e-12)) {
            dir[i] = z[i];
            w_eig[i] = 0.0;
          } else {
            w_eig[i] = z[i] / (1.0 - q[i] / qmax);
            rem -= q[i] * w_eig[i] * w_eig[i];
          }
        }
        if (dir.norm() == 0.0) {
          dir[n - 1] = 1.0;
        } else {
          dir.normalize();
        }
        w_eig += dir * std::sqrt(std::max(0.0, rem) / qmax);
        Vec w = V * w_eig;
        return w * std::sqrt(c / w.dot(qt * w));
      }
      lo = left;
    } else {
      lo = std::max(left, (std::sqrt(zk2) * std::sqrt(qmax / c) - 1.0) / qmax);
    }
    hi = 0.0;
  } else {
    // Exterior point: root in (0, hi].
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += z[i] * z[i] / q[i];
    lo = 0.0;
    hi = std::sqrt(acc / c);
  }

  double lam = lo;
  if (!std::isfinite(phi(lam))) lam = 0.5 * (lo + hi);
  bool converged = false;
  for (int it = 0; it < 300; ++it) {
    const double f = phi(lam);
    if (f > 0.0) {
      lo = lam;
    } else {
      hi = lam;
    }
    if (std::abs(f) <= 1e-15 * c) {
      converged = true;
      break;
    }
    const double df = dphi(lam);
    double next = (df != 0.0 && std::isfinite(df)) ? lam - f / df : std::numeric_limits<double>::quiet_NaN();
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == lam || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(lam))) {
      lam = next;
      converged = true;
      break;
    }
    lam = next;
  }
  if (!converged) throw ConvergenceError("secular equation root finder did not converge");

  for (int i = 0; i < n; ++i) w_eig[i] = z[i] / (1.0 + lam * q[i]);
  Vec w = V * w_eig;
  const double wq = w.dot(qt * w);
  if (!(wq > 0.0) || !w.allFinite()) throw ConvergenceError("secular projection produced a degenerate point");
  return w * std::sqrt(c / wq);
}

/// First sign change of h along from + t*dir, t > 0, refined by bisection.
inline std::optional<Vec> boundary_crossing(const BarrierFunction& b, const Vec& from, const Vec& dir,
                                            double tmax = 1e6) {
  const double h0 = b.value(from);
  const bool inside = h0 >= 0.0;
  double t_prev = 0.0;
  double t = std::min(tmax, 1e-3 * (1.0 + from.norm()) / std::max(dir.norm(), 1e-300));
  while (true) {
    double ht = 0.0;
    try {
      ht = b.value(from + t * dir);
    } catch (const EvalError&) {
      return std::nullopt;
    }
    if ((ht >= 0.0) != inside) {
      double a = t_prev;
      double c = t;
      for (int k = 0; k < 200 && c - a > 1e-16 * std::max(1.0, c); ++k) {
        const double m = 0.5 * (a + c);
        if ((b.value(from + m * dir) >= 0.0) == inside) {
          a = m;
        } else {
          c = m;
        }
      }
      return Vec(from + 0.5 * (a + c) * dir);
    }
    if (t >= tmax) break;
    t_prev = t;
    t = std::min(tmax, 2.0 * t);
  }
  return std::nullopt;
}

/// Newton steps along the gradient that drive |h(y)| to rounding level.
inline Vec snap_to_level_set(const BarrierFunction& b, Vec y) {
  for (int k = 0; k < 8; ++k) {
    const double hy = b.value(y);
    if (std::abs(hy) <= 1e-14) break;
    const Vec g = b.gradient(y);
    const double gg = g.squaredNorm();
    if (gg == 0.0) break;
    y -= hy * g / gg;
  }
  return y;
}

struct KktPoint {
  Vec y;
  double multiplier = 0.0;
  double residual = 0.0;
};

/// Newton on  M(y - x) - mu grad h(y) = 0,  h(y) = 0.
inline std::optional<KktPoint> kkt_newton(const Vec& x, const Mat& m, const BarrierFunction& b, Vec y) {
  const int n = static_cast<int>(x.size());
  auto residual_of = [&](const Vec& yy, double mu, Vec* out) -> double {
    const Vec g = b.gradient(yy);
    Vec r(n + 1);
    r.head(n) = m * (yy - x) - mu * g;
    r[n] = b.value(yy);
    if (out) *out = r;
    return r.norm();
  };

  Vec g = b.gradient(y);
  double mu = g.squaredNorm() > 0.0 ? g.dot(m * (y - x)) / g.squaredNorm() : 0.0;
  Vec r;
  double res = 0.0;
  try {
    res = residual_of(y, mu, &r);
  } catch (const EvalError&) {
    return std::nullopt;
  }
  const double scale = 1.0 + (m * (y - x)).norm();
  for (int it = 0; it < 100 && res > 1e-13 * scale; ++it) {
    g = b.gradient(y);
    Mat J = Mat::Zero(n + 1, n + 1);
    J.topLeftCorner(n, n) = m - mu * b.hessian(y);
    J.block(0, n, n, 1) = -g;
    J.block(n, 0, 1, n) = g.transpose();
    const Vec step = J.fullPivLu().solve(-r);
    if (!step.allFinite()) return std::nullopt;
    double alpha = 1.0;
    bool improved = false;
    for (int k = 0; k < 40; ++k) {
      const Vec y_try = y + alpha * step.head(n);
      const double mu_try = mu + alpha * step[n];
      Vec r_try;
      double res_try = 0.0;
      try {
        res_try = residual_of(y_try, mu_try, &r_try);
      } catch (const EvalError&) {
        res_try = std::numeric_limits<double>::infinity();
      }
      if (res_try < res) {
        y = y_try;
        mu = mu_try;
        r = r_try;
        res = res_try;
        improved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!improved) break;
  }
  if (!(res <= 1e-9 * scale)) return std::nullopt;
  y = snap_to_level_set(b, y);
  return KktPoint{y, mu, res};
}

/// Closest boundary point in the metric M (Identity or P) for an expression barrier.
/// Best-effort: several seeds, the best converged KKT point wins.
inline Vec expr_boundary_projection(const Vec& x, const Mat& m, const BarrierFunction& b, bool require_nonneg_mu) {
  const int n = static_cast<int>(x.size());
  const double hx = b.value(x);
  std::vector<Vec> seeds;
  const Vec gx = b.gradient(x);
  if (hx >= 0.0) {
    if (gx.norm() > 0.0) {
      if (auto s = boundary_crossing(b, x, -gx / gx.norm())) seeds.push_back(*s);
    }
    for (int i = 0; i < n; ++i) {
      for (double sign : {1.0, -1.0}) {
        Vec d = Vec::Zero(n);
        d[i] = sign;
        if (auto s = boundary_crossing(b, x, d)) seeds.push_back(*s);
      }
    }
  } else {
    if (gx.norm() > 0.0) {
      if (auto s = boundary_crossing(b, x, gx / gx.norm())) seeds.push_back(*s);
    }
    const Vec origin = Vec::Zero(n);
    if (b.value(origin) > 0.0) {
      if (auto s = boundary_crossing(b, x, origin - x, 1.0)) seeds.push_back(*s);
    }
  }
  if (seeds.empty()) throw ConvergenceError("boundary projection: no boundary crossing found from the seed point");

  std::optional<KktPoint> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& seed : seeds) {
    auto p = kkt_newton(x, m, b, seed);
    if (!p) continue;
    if (require_nonneg_mu && p->multiplier < -1e-12) continue;
    const Vec d = p->y - x;
    const double dist = std::sqrt(std::max(0.0, d.dot(m * d)));
    if (dist < best_dist) {
      best_dist = dist;
      best = p;
    }
  }
  if (!best) throw ConvergenceError("boundary projection: KKT Newton did not converge from any seed");
  return best->y;
}

}  // namespace detail

/// Euclidean projection of x onto the boundary of S. For interior points this is the
/// nearest boundary point (one of them when not unique); points already on the boundary
/// are returned unchanged. Exterior points are accepted as well.
inline Vec proj_boundary_euclidean(const Vec& x, const BarrierFunction& b) {
  if (x.size() != b.dim()) throw DimensionError("proj_boundary_euclidean: dimension mismatch");
  const double hx = b.value(x);
  if (std::abs(hx) <= kBoundaryTol) return x;
  Vec y;
  if (const auto* q = b.quadratic_form()) {
    y = detail::ellipsoid_surface_point(x, q->Q.matrix(), q->c);
  } else {
    y = detail::expr_boundary_projection(x, Mat::Identity(x.size(), x.size()), b, false);
  }
  if (!(std::abs(b.value(y)) <= kBoundaryTol)) {
    throw ConvergenceError("proj_boundary_euclidean: result is off the boundary");
  }
  if (b.gradient(y).norm() <= b.gradient_tolerance()) {
    throw GradientVanishesError("proj_boundary_euclidean: barrier gradient vanishes at the projection");
  }
  return y;
}

/// argmin_{h(y) >= 0} ||x - y||_P.
inline Vec proj_set_weighted(const Vec& x, const SpdMatrix& p, const BarrierFunction& b) {
  if (x.size() != b.dim() || p.dim() != b.dim()) throw DimensionError("proj_set_weighted: dimension mismatch");
  if (b.value(x) >= 0.0) return x;
  Vec y;
  if (const auto* q = b.quadratic_form()) {
    const Mat L = p.cholesky_lower();
    const Mat Linv = L.triangularView<Eigen::Lower>().solve(Mat::Identity(x.size(), x.size()));
    const Mat qt = Linv * q->Q.matrix() * Linv.transpose();
    const Vec w = detail::ellipsoid_surface_point(L.transpose() * x, 0.5 * (qt + qt.transpose()), q->c);
    y = L.transpose().triangularView<Eigen::Upper>().solve(w);
  } else {
    y = detail::expr_boundary_projection(x, p.matrix(), b, true);
  }
  if (!(std::abs(b.value(y)) <= kBoundaryTol)) throw ConvergenceError("proj_set_weighted: result is off the boundary");
  return y;
}

/// d(x, dS) computed through proj_boundary_euclidean.
inline double distance_to_boundary(const Vec& x, const BarrierFunction& b) {
  return (x - proj_boundary_euclidean(x, b)).norm();
}

/// Point where the ray origin + t*dir (t > 0) leaves S. `origin` must be interior.
inline Vec boundary_point_along(const BarrierFunction& b, const Vec& origin, const Vec& dir) {
  auto p = detail::boundary_crossing(b, origin, dir);
  if (!p) throw ConvergenceError("boundary_point_along: ray does not leave the safe set");
  return detail::snap_to_level_set(b, *p);
}

}  // namespace cbfpds
