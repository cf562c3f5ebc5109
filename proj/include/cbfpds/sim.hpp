#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cbfpds/cbf.hpp"
#include "cbfpds/error.hpp"
#include "cbfpds/geometry.hpp"
#include "cbfpds/pds.hpp"
#include "cbfpds/projection.hpp"
#include "cbfpds/scenario.hpp"

namespace cbfpds {

/// Recorded whenever a state had to be moved back onto dS.
struct SnapEvent {
  std::size_t step = 0;
  double time = 0.0;
  double h_before = 0.0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<double> h_values;
  std::vector<bool> active_flags;
  std::string method;
  double dt = 0.0;
  std::vector<SnapEvent> events;

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
  int dim() const { return states.empty() ? 0 : static_cast<int>(states.front().size()); }
  const Vec& final_state() const { return states.back(); }
};

enum class PdsScheme { ProjectedEuler, SwitchedRK4 };

/// Largest tolerated penetration after snapping before a run is declared broken.
inline constexpr double kEscapeTol = 1e-3;

namespace detail {

inline Vec rk4_step(const VectorField& f, const Vec& x, double dt) {
  const Vec k1 = f(x);
  const Vec k2 = f(x + 0.5 * dt * k1);
  const Vec k3 = f(x + 0.5 * dt * k2);
  const Vec k4 = f(x + dt * k3);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline std::size_t step_count(double dt, double t_final) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("time step must be positive");
  if (!(t_final >= 0.0) || !std::isfinite(t_final)) throw ValidationError("final time must be nonnegative");
  return static_cast<std::size_t>(std::llround(t_final / dt));
}

inline void require_start_in_s(const Scenario& s, const Vec& x0) {
  if (x0.size() != s.dim) throw DimensionError("initial state has wrong dimension");
  if (s.barrier.value(x0) < -kBoundaryTol) throw OutsideSafeSetError("initial state lies outside the safe set");
}

inline void record(Trajectory& tr, const Scenario& s, double t, const Vec& x, bool active) {
  tr.times.push_back(t);
  tr.states.push_back(x);
  tr.h_values.push_back(s.barrier.value(x));
  tr.active_flags.push_back(active);
}

/// One RK4 step of length dt. If it lands at h < -tol it is redone with 2, 4, ..., 64
/// substeps; if the finest level still escapes, each escaping substep is snapped back to dS.
inline Vec guarded_rk4_step(const Scenario& s, const VectorField& f, const Vec& x, double dt, std::size_t step,
                            double t, Trajectory& tr) {
  Vec next = rk4_step(f, x, dt);
  if (s.barrier.value(next) >= -kBoundaryTol) return next;
  for (int m = 2; m <= 64; m *= 2) {
    const double sub = dt / m;
    Vec y = x;
    bool ok = true;
    for (int j = 0; j < m; ++j) {
      y = rk4_step(f, y, sub);
      if (s.barrier.value(y) < -kBoundaryTol) {
        ok = false;
        break;
      }
    }
    if (ok) return y;
  }
  Vec y = x;
  const double sub = dt / 64;
  for (int j = 0; j < 64; ++j) {
    y = rk4_step(f, y, sub);
    const double hy = s.barrier.value(y);
    if (hy < -kBoundaryTol) {
      tr.events.push_back({step, t + (j + 1) * sub, hy});
      y = proj_boundary_euclidean(y, s.barrier);
      if (s.barrier.value(y) < -kEscapeTol) throw IntegrationError("state escaped the safe set beyond recovery");
    }
  }
  return y;
}

template <class Step>
Trajectory run_fixed_step(const Scenario& s, const Vec& x0, double dt, double t_final, std::string method,
                          const std::function<bool(const Vec&)>& active_of, Step&& step_fn) {
  require_start_in_s(s, x0);
  const std::size_t steps = step_count(dt, t_final);
  Trajectory tr;
  tr.method = std::move(method);
  tr.dt = dt;
  tr.times.reserve(steps + 1);
  tr.states.reserve(steps + 1);
  tr.h_values.reserve(steps + 1);
  Vec x = x0;
  record(tr, s, 0.0, x, active_of(x));
  for (std::size_t k = 0; k < steps; ++k) {
    x = step_fn(x, k, static_cast<double>(k) * dt, tr);
    if (!x.allFinite()) throw IntegrationError("state became non-finite");
    if (s.barrier.value(x) < -kEscapeTol) throw IntegrationError("state escaped the safe set beyond recovery");
    record(tr, s, static_cast<double>(k + 1) * dt, x, active_of(x));
  }
  return tr;
}

}  // namespace detail

/// Fixed-step RK4 on the CBF-QP closed loop (parameter a and metric P from the scenario).
inline Trajectory integrate_cbf(const Scenario& s, const Vec& x0, double dt, double t_final) {
  const VectorField f = [&s](const Vec& x) { return cbf_vector(s, x); };
  auto active = [&s](const Vec& x) {
    return s.barrier.gradient(x).dot(s.f0(x)) + s.a * s.barrier.value(x) <= 0.0;
  };
  return detail::run_fixed_step(s, x0, dt, t_final, "cbf-rk4", active,
                                [&](const Vec& x, std::size_t k, double t, Trajectory& tr) {
                                  return detail::guarded_rk4_step(s, f, x, dt, k, t, tr);
                                });
}

/// Fixed-step RK4 on the unfiltered closed loop f0. No safety guarantee; the active flag
/// reports where the CBF filter would intervene.
inline Trajectory integrate_nominal(const Scenario& s, const Vec& x0, double dt, double t_final) {
  if (x0.size() != s.dim) throw DimensionError("initial state has wrong dimension");
  const std::size_t steps = detail::step_count(dt, t_final);
  Trajectory tr;
  tr.method = "nominal-rk4";
  tr.dt = dt;
  const VectorField f = [&s](const Vec& x) { return s.f0(x); };
  auto active = [&s](const Vec& x) {
    return s.barrier.gradient(x).dot(s.f0(x)) + s.a * s.barrier.value(x) <= 0.0;
  };
  Vec x = x0;
  detail::record(tr, s, 0.0, x, active(x));
  for (std::size_t k = 0; k < steps; ++k) {
    x = detail::rk4_step(f, x, dt);
    if (!x.allFinite()) throw IntegrationError("state became non-finite");
    detail::record(tr, s, static_cast<double>(k + 1) * dt, x, active(x));
  }
  return tr;
}

/// Time-stepping for the projected system. ProjectedEuler: x+ = proj_S^P(x + dt f0(x)).
/// SwitchedRK4: RK4 on the PDS field with the same retry-and-snap guard as integrate_cbf.
inline Trajectory integrate_pds(const Scenario& s, const Vec& x0, double dt, double t_final,
                                PdsScheme scheme = PdsScheme::ProjectedEuler) {
  auto active = [&s](const Vec& x) {
    return on_boundary(s.barrier, x) && s.barrier.gradient(x).dot(s.f0(x)) < 0.0;
  };
  if (scheme == PdsScheme::ProjectedEuler) {
    return detail::run_fixed_step(s, x0, dt, t_final, "pds-projected-euler", active,
                                  [&](const Vec& x, std::size_t, double, Trajectory&) {
                                    return proj_set_weighted(x + dt * s.f0(x), s.P, s.barrier);
                                  });
  }
  const VectorField f = [&s](const Vec& x) { return pds_vector(s, x); };
  return detail::run_fixed_step(s, x0, dt, t_final, "pds-switched-rk4", active,
                                [&](const Vec& x, std::size_t k, double t, Trajectory& tr) {
                                  return detail::guarded_rk4_step(s, f, x, dt, k, t, tr);
                                });
}

/// State at time t by linear interpolation (t clamped to the trajectory's range).
inline Vec interpolate_state(const Trajectory& tr, double t) {
  if (tr.empty()) throw ValidationError("interpolate_state: empty trajectory");
  if (t <= tr.times.front()) return tr.states.front();
  if (t >= tr.times.back()) return tr.states.back();
  const auto it = std::upper_bound(tr.times.begin(), tr.times.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - tr.times.begin());
  const double t0 = tr.times[i - 1];
  const double t1 = tr.times[i];
  const double w = (t - t0) / (t1 - t0);
  return (1.0 - w) * tr.states[i - 1] + w * tr.states[i];
}

/// max_t ||x1(t) - x2(t)|| over the common time range, sampled on the finer of the two grids.
inline double sup_distance(const Trajectory& a, const Trajectory& b) {
  if (a.empty() || b.empty()) throw ValidationError("sup_distance: empty trajectory");
  if (a.dim() != b.dim()) throw DimensionError("sup_distance: dimension mismatch");
  const double lo = std::max(a.times.front(), b.times.front());
  const double hi = std::min(a.times.back(), b.times.back());
  if (lo > hi) throw ValidationError("sup_distance: time ranges are disjoint");
  const Trajectory& fine = a.size() >= b.size() ? a : b;
  const Trajectory& coarse = a.size() >= b.size() ? b : a;
  double best = 0.0;
  for (std::size_t i = 0; i < fine.size(); ++i) {
    const double t = fine.times[i];
    if (t < lo || t > hi) continue;
    best = std::max(best, (fine.states[i] - interpolate_state(coarse, t)).norm());
  }
  // Common ranges that fall between two fine samples still get compared at their ends.
  best = std::max(best, (interpolate_state(a, lo) - interpolate_state(b, lo)).norm());
  best = std::max(best, (interpolate_state(a, hi) - interpolate_state(b, hi)).norm());
  return best;
}

/// min_k h(x_k).
inline double safety_margin(const Trajectory& tr) {
  if (tr.empty()) throw ValidationError("safety_margin: empty trajectory");
  return *std::min_element(tr.h_values.begin(), tr.h_values.end());
}

}  // namespace cbfpds
