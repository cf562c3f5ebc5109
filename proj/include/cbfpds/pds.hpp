#pragma once

// Projected dynamical system
//     x' = f0(x)                                   in Int(S)
//     x' = argmin_{mu in T_S(x)} ||mu - f0(x)||_P^2   on dS
// and its differential-inclusion form x' in f0(x) - P^{-1} N_S(x).
// On a regular boundary point T_S(x) = {v | grad h(x)^T v >= 0} and
// N_S(x) = {lambda grad h(x) | lambda <= 0}.

#include <algorithm>
#include <cmath>
#include <string>

#include "cbfpds/error.hpp"
#include "cbfpds/geometry.hpp"
#include "cbfpds/scenario.hpp"

namespace cbfpds {

/// Tangent cone on the boundary: the halfspace {v | normal^T v >= 0}.
struct TangentHalfspace {
  Vec normal;
  bool contains(const Vec& v, double tol = 1e-9) const { return normal.dot(v) >= -tol; }
};

struct PdsEvaluation {
  enum class Location { Interior, Boundary };

  Vec x;
  Location location = Location::Interior;
  Vec output;
  double multiplier = 0.0;  // min(0, L_f0 h) / ||grad h||^2_{P^-1}; zero when interior or slack
};

inline bool on_boundary(const BarrierFunction& b, const Vec& x) { return std::abs(b.value(x)) <= kBoundaryTol; }

inline TangentHalfspace tangent_halfspace(const BarrierFunction& b, const Vec& x) {
  if (!on_boundary(b, x)) throw DomainError("tangent_halfspace: point is not on the boundary");
  Vec g = b.gradient(x);
  if (!(g.norm() > b.gradient_tolerance())) throw GradientVanishesError("tangent_halfspace: gradient vanishes");
  return {std::move(g)};
}

inline ConeRep normal_cone(const BarrierFunction& b, const Vec& x) {
  const double hx = b.value(x);
  if (hx < -kBoundaryTol) throw OutsideSafeSetError("normal_cone: point lies outside the safe set");
  if (hx > kBoundaryTol) return ConeRep::zero();
  Vec g = b.gradient(x);
  if (!(g.norm() > b.gradient_tolerance())) throw GradientVanishesError("normal_cone: gradient vanishes on the boundary");
  return ConeRep::ray(std::move(g));
}

namespace detail {

/// Projection of fnom onto {v | g^T v >= 0} in the P-metric; returns the multiplier too.
inline Vec project_onto_halfspace(const Vec& fnom, const Vec& g, const SpdMatrix& p, double* multiplier) {
  const double lie = g.dot(fnom);
  if (lie >= 0.0) {
    if (multiplier) *multiplier = 0.0;
    return fnom;
  }
  const Vec pinv_g = p.solve(g);
  const double coeff = lie / g.dot(pinv_g);
  if (multiplier) *multiplier = coeff;
  return fnom - coeff * pinv_g;
}

}  // namespace detail

/// PDS field without the membership check: points with h <= tol (including slightly outside)
/// use the boundary branch. For time-stepping schemes.
inline Vec pds_vector(const Scenario& s, const Vec& x) {
  const Vec f = s.f0(x);
  if (s.barrier.value(x) > kBoundaryTol) return f;
  const Vec g = s.barrier.gradient(x);
  if (!(g.norm() > s.barrier.gradient_tolerance())) throw GradientVanishesError("pds: gradient vanishes on the boundary");
  return detail::project_onto_halfspace(f, g, s.P, nullptr);
}

inline PdsEvaluation pds_field(const Scenario& s, const Vec& x) {
  if (x.size() != s.dim) throw DimensionError("pds_field: point has wrong dimension");
  PdsEvaluation ev;
  ev.x = x;
  const ConeRep cone = normal_cone(s.barrier, x);
  const Vec f = s.f0(x);
  if (cone.kind == ConeRep::Kind::Zero) {
    ev.location = PdsEvaluation::Location::Interior;
    ev.output = f;
    return ev;
  }
  ev.location = PdsEvaluation::Location::Boundary;
  ev.output = detail::project_onto_halfspace(f, cone.generator, s.P, &ev.multiplier);
  return ev;
}

/// Euclidean distance from v to F(x) = f0(x) - P^{-1} N_S(x).
inline double di_residual(const Scenario& s, const Vec& x, const Vec& v) {
  require_same_dim(x, v, "di_residual");
  const ConeRep cone = normal_cone(s.barrier, x);
  const Vec f = s.f0(x);
  if (cone.kind == ConeRep::Kind::Zero) return (v - f).norm();
  // F(x) on the boundary is the ray {f + t d | t >= 0} with d = P^{-1} grad h(x).
  const Vec d = s.P.solve(cone.generator);
  const double t = std::max(0.0, (v - f).dot(d) / d.squaredNorm());
  return (v - f - t * d).norm();
}

}  // namespace cbfpds
