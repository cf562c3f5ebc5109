#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cbfpds/cbf.hpp"
#include "cbfpds/error.hpp"
#include "cbfpds/geometry.hpp"
#include "cbfpds/pds.hpp"
#include "cbfpds/sampling.hpp"
#include "cbfpds/scenario.hpp"
#include "cbfpds/sim.hpp"

namespace cbfpds {

/// Search domain for equilibria: a box plus a membership predicate.
struct Region {
  Box box;
  std::function<bool(const Vec&)> contains;
};

inline Region safe_region(const Scenario& s) {
  const BarrierFunction* b = &s.barrier;
  return {s.bounds, [b](const Vec& x) { return b->value(x) >= -kBoundaryTol; }};
}

struct Equilibrium {
  enum class Classification { Stable, Unstable, Marginal };

  Vec point;
  double residual = 0.0;
  Classification classification = Classification::Marginal;
  bool boundary = false;
  bool on_switching_surface = false;  // classified from one-sided Jacobians
  Vec eigen_real_parts;
};

inline const char* to_string(Equilibrium::Classification c) {
  switch (c) {
    case Equilibrium::Classification::Stable: return "stable";
    case Equilibrium::Classification::Unstable: return "unstable";
    default: return "marginal";
  }
}

/// Real parts within this band of zero are classified Marginal.
inline constexpr double kStabilityBand = 1e-4;

/// Central-difference Jacobian with step 1e-6 (1 + ||x||).
inline Mat fd_jacobian(const VectorField& f, const Vec& x) {
  const int n = static_cast<int>(x.size());
  const double step = 1e-6 * (1.0 + x.norm());
  Mat J(n, n);
  for (int j = 0; j < n; ++j) {
    Vec xp = x, xm = x;
    xp[j] += step;
    xm[j] -= step;
    J.col(j) = (f(xp) - f(xm)) / (2.0 * step);
  }
  return J;
}

inline Vec eigen_real_parts(const Mat& J) {
  Eigen::EigenSolver<Mat> es(J, false);
  return es.eigenvalues().real();
}

inline Equilibrium::Classification classify_real_parts(const Vec& re) {
  if ((re.array() < -kStabilityBand).all()) return Equilibrium::Classification::Stable;
  if ((re.array() > kStabilityBand).any()) return Equilibrium::Classification::Unstable;
  return Equilibrium::Classification::Marginal;
}

struct EquilibriumSearchOptions {
  const BarrierFunction* barrier = nullptr;  // enables the boundary flag
  std::function<double(const Vec&)> switching;  // field is only piecewise C1 across switching = 0
  double merge_radius = 1e-4;
  double accept_residual = 1e-6;
  int max_newton = 100;
};

namespace detail {

inline std::optional<Vec> damped_newton(const VectorField& f, Vec x, const Region& region, int max_iter) {
  auto safe_norm = [&](const Vec& y) {
    try {
      const Vec v = f(y);
      return v.allFinite() ? v.norm() : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  double r = safe_norm(x);
  if (!std::isfinite(r)) return std::nullopt;
  const Box wide{region.box.lower - 0.5 * (region.box.upper - region.box.lower),
                 region.box.upper + 0.5 * (region.box.upper - region.box.lower)};
  for (int it = 0; it < max_iter && r > 1e-13; ++it) {
    Mat J;
    Vec fx;
    try {
      J = fd_jacobian(f, x);
      fx = f(x);
    } catch (const Error&) {
      return std::nullopt;
    }
    Eigen::FullPivLU<Mat> lu(J);
    if (!lu.isInvertible()) return std::nullopt;
    const Vec dx = lu.solve(-fx);
    double alpha = 1.0;
    bool improved = false;
    for (int k = 0; k < 30; ++k) {
      const Vec y = x + alpha * dx;
      if (wide.contains(y)) {
        const double ry = safe_norm(y);
        if (ry < r) {
          x = y;
          r = ry;
          improved = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!improved) break;
  }
  return x;
}

inline Equilibrium::Classification worse(Equilibrium::Classification a, Equilibrium::Classification b) {
  auto rank = [](Equilibrium::Classification c) {
    return c == Equilibrium::Classification::Stable ? 0 : c == Equilibrium::Classification::Marginal ? 1 : 2;
  };
  return rank(a) >= rank(b) ? a : b;
}

}  // namespace detail

/// Multi-start damped Newton with finite-difference Jacobians. Converged points inside the
/// region are merged within `merge_radius`, classified from Jacobian eigenvalues and returned
/// sorted lexicographically.
inline std::vector<Equilibrium> find_equilibria(const VectorField& field, const Region& region, int seeds, Rng& rng,
                                                const EquilibriumSearchOptions& opt = {}) {
  if (seeds < 10) throw ValidationError("find_equilibria needs at least 10 seeds");
  const Sampler sampler = rejection_sampler(region.box, region.contains);
  std::vector<Vec> starts;
  starts.reserve(seeds);
  for (int k = 0; k < seeds; ++k) starts.push_back(sampler(rng));

  const auto solved = parallel_map<std::optional<Vec>>(
      starts.size(), [&](std::size_t i) { return detail::damped_newton(field, starts[i], region, opt.max_newton); });

  std::vector<Equilibrium> found;
  for (const auto& cand : solved) {
    if (!cand || !region.contains(*cand)) continue;
    double res = 0.0;
    try {
      res = field(*cand).norm();
    } catch (const Error&) {
      continue;
    }
    if (!(res <= opt.accept_residual)) continue;
    bool dup = false;
    for (auto& e : found) {
      if ((e.point - *cand).norm() <= opt.merge_radius) {
        if (res < e.residual) {
          e.point = *cand;
          e.residual = res;
        }
        dup = true;
        break;
      }
    }
    if (!dup) found.push_back({*cand, res, Equilibrium::Classification::Marginal, false, false, Vec()});
  }

  for (auto& e : found) {
    e.residual = field(e.point).norm();
    if (opt.barrier) e.boundary = std::abs(opt.barrier->value(e.point)) <= opt.accept_residual;
    if (opt.switching && std::abs(opt.switching(e.point)) <= 1e-6 * (1.0 + e.point.norm())) {
      e.on_switching_surface = true;
      // One-sided Jacobians on both sides of the switching surface; the worse class wins.
      const int n = static_cast<int>(e.point.size());
      Vec normal(n);
      const double step = 1e-6 * (1.0 + e.point.norm());
      for (int j = 0; j < n; ++j) {
        Vec p = e.point, m = e.point;
        p[j] += step;
        m[j] -= step;
        normal[j] = (opt.switching(p) - opt.switching(m)) / (2.0 * step);
      }
      if (normal.norm() > 0.0) normal.normalize();
      const double off = 1e-4 * (1.0 + e.point.norm());
      const Vec re_plus = eigen_real_parts(fd_jacobian(field, e.point + off * normal));
      const Vec re_minus = eigen_real_parts(fd_jacobian(field, e.point - off * normal));
      e.classification = detail::worse(classify_real_parts(re_plus), classify_real_parts(re_minus));
      e.eigen_real_parts = re_plus.maxCoeff() >= re_minus.maxCoeff() ? re_plus : re_minus;
    } else {
      e.eigen_real_parts = eigen_real_parts(fd_jacobian(field, e.point));
      e.classification = classify_real_parts(e.eigen_real_parts);
    }
  }
  std::sort(found.begin(), found.end(), [](const Equilibrium& l, const Equilibrium& r) {
    return std::lexicographical_compare(l.point.data(), l.point.data() + l.point.size(), r.point.data(),
                                        r.point.data() + r.point.size());
  });
  return found;
}

/// Equilibria of the CBF closed loop of `s` over S.
inline std::vector<Equilibrium> find_cbf_equilibria(const Scenario& s, int seeds, Rng& rng) {
  EquilibriumSearchOptions opt;
  opt.barrier = &s.barrier;
  opt.switching = [&s](const Vec& x) { return s.barrier.gradient(x).dot(s.f0(x)) + s.a * s.barrier.value(x); };
  return find_equilibria([&s](const Vec& x) { return cbf_vector(s, x); }, safe_region(s), seeds, rng, opt);
}

/// min over sampled pairs of <x - y | -(f(x) - f(y))>_G / ||x - y||_G^2. A positive value is
/// empirical evidence that -f is strongly G-monotone with at least that modulus.
inline double check_strong_monotonicity(const VectorField& field, const SpdMatrix& g, int pairs, const Sampler& sampler,
                                        Rng& rng) {
  if (pairs < 1000) throw ValidationError("check_strong_monotonicity needs at least 1000 pairs");
  double alpha = std::numeric_limits<double>::infinity();
  for (int k = 0; k < pairs; ++k) {
    const Vec x = sampler(rng);
    const Vec y = sampler(rng);
    const Vec d = x - y;
    const double dg = weighted_inner(d, d, g);
    if (dg <= 1e-24) continue;
    alpha = std::min(alpha, weighted_inner(d, -(field(x) - field(y)), g) / dg);
  }
  if (!std::isfinite(alpha)) throw ValidationError("check_strong_monotonicity: degenerate sampling region");
  return alpha;
}

/// Which closed loop a study integrates.
struct ControllerChoice {
  enum class Kind { Cbf, Pds };
  Kind kind = Kind::Pds;
  double a = 1.0;

  static ControllerChoice cbf(double a) { return {Kind::Cbf, a}; }
  static ControllerChoice pds() { return {Kind::Pds, 0.0}; }
};

inline Trajectory integrate_choice(const Scenario& s, const ControllerChoice& c, const Vec& x0, double dt, double t_final) {
  if (c.kind == ControllerChoice::Kind::Cbf) return integrate_cbf(with_a(s, c.a), x0, dt, t_final);
  return integrate_pds(s, x0, dt, t_final, PdsScheme::ProjectedEuler);
}

struct ContractionReport {
  std::vector<double> times;
  std::vector<double> distances;  // ||x_a(t) - x_b(t)||_G
  double rho = 0.0;
  double tol = 0.0;
  double worst_excess = 0.0;   // max_t (e(t) - e(0) exp(-rho t) - tol); <= 0 passes
  double observed_rate = 0.0;  // -log(e(T) / e(0)) / T, +inf when e(T) = 0
  bool pass = false;
};

/// Integrates both starts and checks ||e(t)||_G <= ||e(0)||_G exp(-rho t) + tol, with G taken
/// from the scenario (P when no G is given).
inline ContractionReport contraction_test(const Scenario& s, const ControllerChoice& c, const Vec& x0a, const Vec& x0b,
                                          double dt, double t_final, double rho = 0.15, double tol = 1e-4) {
  const SpdMatrix& g = s.G ? *s.G : s.P;
  const Trajectory ta = integrate_choice(s, c, x0a, dt, t_final);
  const Trajectory tb = integrate_choice(s, c, x0b, dt, t_final);
  ContractionReport r;
  r.rho = rho;
  r.tol = tol;
  r.times = ta.times;
  r.distances.reserve(ta.size());
  for (std::size_t i = 0; i < ta.size(); ++i) r.distances.push_back(weighted_norm(ta.states[i] - tb.states[i], g));
  const double e0 = r.distances.front();
  r.worst_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    r.worst_excess = std::max(r.worst_excess, r.distances[i] - e0 * std::exp(-rho * r.times[i]) - tol);
  }
  const double eT = r.distances.back();
  const double T = r.times.back();
  if (e0 == 0.0 || T == 0.0) {
    r.observed_rate = 0.0;
  } else if (eT == 0.0) {
    r.observed_rate = std::numeric_limits<double>::infinity();
  } else {
    r.observed_rate = -std::log(eT / e0) / T;
  }
  r.pass = r.worst_excess <= 0.0;
  return r;
}

struct SweepRow {
  double a = 0.0;
  double sup_distance = 0.0;
  double min_h = 0.0;
};

/// For each a: CBF trajectory vs the PDS reference (projected Euler, same dt) by sup distance.
inline std::vector<SweepRow> convergence_sweep(const Scenario& s, const Vec& x0, const std::vector<double>& a_list,
                                               double dt, double t_final) {
  if (a_list.empty()) throw ValidationError("convergence_sweep: empty a list");
  for (std::size_t i = 0; i < a_list.size(); ++i) {
    if (!(a_list[i] > 0.0)) throw ValidationError("convergence_sweep: a must be positive");
    if (i > 0 && !(a_list[i] > a_list[i - 1])) throw ValidationError("convergence_sweep: a list must be increasing");
  }
  const Trajectory ref = integrate_pds(s, x0, dt, t_final, PdsScheme::ProjectedEuler);
  return parallel_map<SweepRow>(a_list.size(), [&](std::size_t i) {
    const Trajectory tr = integrate_cbf(with_a(s, a_list[i]), x0, dt, t_final);
    return SweepRow{a_list[i], sup_distance(tr, ref), safety_margin(tr)};
  });
}

/// Smallest a in [a_lo, a_hi] (to bisection resolution) for which the CBF closed loop passes
/// contraction_test. Empirical only; no closed form is known. nullopt if a_hi fails.
inline std::optional<double> empirical_a_stable(const Scenario& s, const Vec& x0a, const Vec& x0b, double a_lo,
                                                double a_hi, double dt, double t_final, int iterations = 12,
                                                double rho = 0.15, double tol = 1e-4) {
  auto passes = [&](double a) {
    return contraction_test(s, ControllerChoice::cbf(a), x0a, x0b, dt, t_final, rho, tol).pass;
  };
  if (passes(a_lo)) return a_lo;
  if (!passes(a_hi)) return std::nullopt;
  double lo = a_lo, hi = a_hi;
  for (int k = 0; k < iterations; ++k) {
    const double mid = std::sqrt(lo * hi);
    if (passes(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

enum class ExampleVariant { CorrectP, WrongP };

struct ReproductionCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ReproductionOptions {
  Vec x0;  // defaults to (-1, 2)
  double dt = 1e-3;
  double t_final = 30.0;
  double a = 1.0;
  int seeds = 64;
  std::uint64_t seed = kDefaultSeed;
};

struct ReproductionReport {
  ExampleVariant variant = ExampleVariant::CorrectP;
  std::vector<ReproductionCheck> checks;
  Trajectory trajectory;
  std::vector<Equilibrium> equilibria;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const ReproductionCheck& c) { return c.passed; });
  }
};

/// Location of the undesired boundary equilibrium created by the metric diag(3, 1).
inline Vec undesired_equilibrium_reference() {
  Vec p(2);
  p << -2.985, 2.777;
  return p;
}

inline std::string format_vec(const Vec& v) {
  std::string s = "(";
  for (int i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v[i]);
    s += buf;
  }
  return s + ")";
}

/// Runs the two-dimensional safe-stabilization example and checks its stated outcomes.
inline ReproductionReport reproduce_example(ExampleVariant variant, ReproductionOptions opt = {}) {
  if (opt.x0.size() == 0) {
    opt.x0 = Vec(2);
    opt.x0 << -1.0, 2.0;
  }
  ReproductionReport rep;
  rep.variant = variant;
  const Scenario base = variant == ExampleVariant::CorrectP ? builtin::paper_example() : builtin::paper_example_wrong_p();
  const Scenario s = with_a(base, opt.a);
  auto check = [&](std::string name, bool ok, std::string detail) {
    rep.checks.push_back({std::move(name), ok, std::move(detail)});
  };

  rep.trajectory = integrate_cbf(s, opt.x0, opt.dt, opt.t_final);
  const Vec xf = rep.trajectory.final_state();
  const double margin = safety_margin(rep.trajectory);
  check("safety", margin >= -1e-6, "min h = " + std::to_string(margin));

  Rng rng(opt.seed);
  rep.equilibria = find_cbf_equilibria(s, opt.seeds, rng);

  if (variant == ExampleVariant::CorrectP) {
    check("converges-to-origin", xf.norm() <= 1e-3, "||x(T)|| = " + std::to_string(xf.norm()));
    const bool only_origin = rep.equilibria.size() == 1 && rep.equilibria[0].point.norm() <= 1e-6 &&
                             rep.equilibria[0].classification == Equilibrium::Classification::Stable;
    std::string found;
    for (const auto& e : rep.equilibria) found += format_vec(e.point) + "[" + to_string(e.classification) + "] ";
    check("single-stable-equilibrium-at-origin", only_origin, found.empty() ? "none found" : found);
    if (opt.x0.norm() > 0.0) {
      for (double a : {0.1, 1.0, 10.0}) {
        const Trajectory tr = integrate_cbf(with_a(base, a), opt.x0, opt.dt, opt.t_final);
        const double n = tr.final_state().norm();
        const double m = safety_margin(tr);
        char label[48];
        std::snprintf(label, sizeof label, "stabilizes-a=%g", a);
        check(label, n <= 1e-3 && m >= -1e-6, "||x(T)|| = " + std::to_string(n) + ", min h = " + std::to_string(m));
      }
    }
  } else {
    const Vec ref = undesired_equilibrium_reference();
    const double err = (xf - ref).norm();
    check("converges-to-undesired-equilibrium", err <= 1e-2,
          "x(T) = " + format_vec(xf) + ", distance to reference " + std::to_string(err));
    bool stable_near = false;
    for (const auto& e : rep.equilibria) {
      if ((e.point - ref).norm() <= 1e-2 && e.classification == Equilibrium::Classification::Stable) stable_near = true;
    }
    check("undesired-equilibrium-stable", stable_near, std::to_string(rep.equilibria.size()) + " equilibria found");
  }
  return rep;
}

}  // namespace cbfpds
