#pragma once

// Perturbation bound relating the CBF closed loop to the projected system.
//
// With M1 = min_dS ||grad h||, M2 = max_dS ||grad h||, eps in (0, M1) and Lipschitz constants
// L_gradh (of grad h on S) and L_f (of f0 on S):
//   a*  = max_S |L_f h| / gamma^{-1}((M1 - eps) / L_gradh)
//   M3  = M2 + L_gradh gamma(max_S |L_f h| / a*)
//   L1  = lmax(P) / (lmin(P) eps^2) L_gradh [1 + M2 lmax(P) (M2 + M3) / (lmin(P) M1^2)]
//   sigma(a, x) = max{ gamma(|L_f h(x)| / a), (L_f + L1 |L_f h(x)|) gamma(|L_f h(x)| / a) }
// and for a >= a* every f_cbf,a(x) lies in F((x + sigma B) cap S) + sigma B. check_inclusion
// verifies that numerically by building the witness point y = proj_dS(x) and the normal-cone
// element eta = (L_f h(x) + a h(x)) grad h(y) / ||grad h(y)||^2_{P^-1}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cbfpds/cbf.hpp"
#include "cbfpds/error.hpp"
#include "cbfpds/geometry.hpp"
#include "cbfpds/projection.hpp"
#include "cbfpds/sampling.hpp"
#include "cbfpds/scenario.hpp"

namespace cbfpds {

/// Where a constant came from. Sampled values are lower bounds of the true supremum (or
/// upper bounds of an infimum) and are inflated to compensate.
struct Provenance {
  enum class Kind { Analytic, Sampled };

  Kind kind = Kind::Analytic;
  int samples = 0;
  double inflation = 1.0;

  static Provenance analytic() { return {}; }
  static Provenance sampled(int n, double inflation) { return {Kind::Sampled, n, inflation}; }
};

inline constexpr double kDefaultInflation = 1.2;
inline constexpr double kDefaultEpsFraction = 0.5;

struct LipschitzEstimate {
  double raw = 0.0;       // max sampled ratio
  double estimate = 0.0;  // inflation * raw
  Provenance provenance;
};

/// Sampled Lipschitz constant of `field` over the region drawn by `sampler`. Half of the
/// pairs are independent draws, half are close pairs to catch local steepness.
inline LipschitzEstimate estimate_lipschitz(const VectorField& field, const Sampler& sampler, int pairs, double inflation,
                                            Rng& rng) {
  if (pairs < 1000) throw ValidationError("estimate_lipschitz needs at least 1000 pairs");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double best = 0.0;
  int usable = 0;
  double spread = 0.0;
  for (int k = 0; k < pairs; ++k) {
    const Vec x = sampler(rng);
    Vec y = sampler(rng);
    if (k % 2 == 1) {
      // Close pair along a random direction, shrunk toward x.
      y = x + (1e-3 + 0.05 * u(rng)) * (y - x);
    }
    const double d = (x - y).norm();
    spread = std::max(spread, d);
    if (d <= 1e-12) continue;
    ++usable;
    best = std::max(best, (field(x) - field(y)).norm() / d);
  }
  if (usable == 0 || spread <= 1e-12) throw ValidationError("estimate_lipschitz: degenerate sampling region");
  return {best, inflation * best, Provenance::sampled(pairs, inflation)};
}

struct GradNormExtrema {
  double M1 = 0.0;
  double M2 = 0.0;
  Provenance provenance;
};

/// min and max of ||grad h|| over dS. Analytic for quadratic barriers
/// (2 sqrt(c lmin(Q)), 2 sqrt(c lmax(Q))); otherwise radial boundary sampling from the origin
/// with a local pattern-search polish of the extreme candidates.
inline GradNormExtrema boundary_extrema_gradnorm(const BarrierFunction& b, int samples, Rng& rng,
                                                 double inflation = kDefaultInflation) {
  if (const auto* q = b.quadratic_form()) {
    return {2.0 * std::sqrt(q->c * q->Q.min_eigenvalue()), 2.0 * std::sqrt(q->c * q->Q.max_eigenvalue()),
            Provenance::analytic()};
  }
  if (samples < 1000) throw ValidationError("boundary_extrema_gradnorm needs at least 1000 samples");
  const int n = b.dim();
  const Vec origin = Vec::Zero(n);
  if (!(b.value(origin) > 0.0)) throw ValidationError("boundary sampling needs the origin in the interior of S");

  auto gradnorm_along = [&](const Vec& dir) { return b.gradient(boundary_point_along(b, origin, dir)).norm(); };

  std::vector<std::pair<double, Vec>> found;
  found.reserve(samples);
  for (int k = 0; k < samples; ++k) {
    Vec d = random_unit_vector(n, rng);
    found.emplace_back(gradnorm_along(d), std::move(d));
  }
  std::sort(found.begin(), found.end(), [](const auto& l, const auto& r) { return l.first < r.first; });

  // Pattern search over directions: sign = +1 maximizes, -1 minimizes.
  auto polish = [&](Vec dir, double value, double sign) {
    double step = 0.1;
    while (step > 1e-9) {
      bool moved = false;
      for (int i = 0; i < n && !moved; ++i) {
        for (double s : {1.0, -1.0}) {
          Vec cand = dir;
          cand[i] += s * step;
          if (cand.norm() < 1e-12) continue;
          cand.normalize();
          const double v = gradnorm_along(cand);
          if (sign * v > sign * value) {
            dir = cand;
            value = v;
            moved = true;
            break;
          }
        }
      }
      if (!moved) step *= 0.5;
    }
    return value;
  };

  double m1 = found.front().first;
  double m2 = found.back().first;
  const int top = std::min<int>(5, static_cast<int>(found.size()));
  for (int k = 0; k < top; ++k) {
    m1 = std::min(m1, polish(found[k].second, found[k].first, -1.0));
    const auto& hi = found[found.size() - 1 - k];
    m2 = std::max(m2, polish(hi.second, hi.first, 1.0));
  }
  return {m1 / inflation, m2 * inflation, Provenance::sampled(samples, inflation)};
}

struct MaxLieEstimate {
  double value = 0.0;
  Provenance provenance;
};

/// max over S of |L_f0 h|. For a quadratic barrier and linear f0 = A x this is
/// c * max |lambda| of the pencil (Q A + A^T Q, Q); otherwise quasi-random sampling of S
/// followed by a pattern-search ascent from the best candidates.
inline MaxLieEstimate max_abs_lie_derivative(const Scenario& s, int samples = 10000,
                                             double inflation = kDefaultInflation) {
  const auto* q = s.barrier.quadratic_form();
  if (q && effective_field_is_linear(s)) {
    const Mat a = *effective_linear_part(s);
    const Mat m = q->Q.matrix() * a + a.transpose() * q->Q.matrix();
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(m, q->Q.matrix(), Eigen::EigenvaluesOnly);
    return {q->c * ges.eigenvalues().cwiseAbs().maxCoeff(), Provenance::analytic()};
  }

  auto lie_abs = [&](const Vec& x) { return std::abs(s.barrier.gradient(x).dot(s.f0(x))); };
  std::vector<std::pair<double, Vec>> cand;
  for (int k = 0; k < samples; ++k) {
    Vec x = halton_point(static_cast<std::uint64_t>(k), s.bounds);
    if (s.barrier.value(x) < 0.0) continue;
    cand.emplace_back(lie_abs(x), std::move(x));
  }
  if (cand.empty()) throw ValidationError("max_abs_lie_derivative: no samples fell inside S");
  std::sort(cand.begin(), cand.end(), [](const auto& l, const auto& r) { return l.first > r.first; });
  const SpdMatrix eye = SpdMatrix::identity(s.dim);
  double best = cand.front().first;
  const int top = std::min<int>(10, static_cast<int>(cand.size()));
  for (int k = 0; k < top; ++k) {
    Vec x = cand[k].second;
    double v = cand[k].first;
    double step = 0.05 * s.bounds.diagonal();
    while (step > 1e-9 * s.bounds.diagonal()) {
      bool moved = false;
      for (int i = 0; i < s.dim && !moved; ++i) {
        for (double sg : {1.0, -1.0}) {
          Vec y = x;
          y[i] += sg * step;
          y = proj_set_weighted(y, eye, s.barrier);
          const double vy = lie_abs(y);
          if (vy > v) {
            x = y;
            v = vy;
            moved = true;
            break;
          }
        }
      }
      if (!moved) step *= 0.5;
    }
    best = std::max(best, v);
  }
  return {best * inflation, Provenance::sampled(samples, inflation)};
}

struct ConstantsBundle {
  double eps = 0.0;
  double M1 = 0.0;
  double M2 = 0.0;
  double M3 = 0.0;
  double L_gradh = 0.0;
  double L_f = 0.0;
  double max_lie = 0.0;  // max_S |L_f h|
  double a_star = 0.0;
  double L1 = 0.0;
  double lambda_min_P = 0.0;
  double lambda_max_P = 0.0;
  GammaFn gamma;

  Provenance prov_M;
  Provenance prov_L_gradh;
  Provenance prov_L_f;
  Provenance prov_max_lie;

  /// 0 < eps < M1 <= M2 <= M3, a* >= 0, L1 > 0, all finite.
  bool invariants_hold() const {
    const bool finite = std::isfinite(eps) && std::isfinite(M1) && std::isfinite(M2) && std::isfinite(M3) &&
                        std::isfinite(a_star) && std::isfinite(L1) && std::isfinite(L_f) && std::isfinite(L_gradh);
    return finite && eps > 0.0 && eps < M1 && M1 <= M2 && M2 <= M3 && a_star >= 0.0 && L1 > 0.0;
  }
};

/// Assembles every constant of the bound. `samples` governs the sampled paths only.
inline ConstantsBundle compute_constants(const Scenario& s, double eps_fraction = kDefaultEpsFraction,
                                         std::uint64_t seed = kDefaultSeed, int samples = 10000,
                                         double inflation = kDefaultInflation) {
  if (!(eps_fraction > 0.0 && eps_fraction < 1.0)) {
    throw ValidationError("eps fraction must lie in (0, 1); eps = M1 is not allowed");
  }
  Rng rng(seed);
  ConstantsBundle k;
  k.gamma = s.gamma;
  k.lambda_min_P = s.P.min_eigenvalue();
  k.lambda_max_P = s.P.max_eigenvalue();

  const GradNormExtrema m = boundary_extrema_gradnorm(s.barrier, std::max(samples / 10, 1000), rng, inflation);
  k.M1 = m.M1;
  k.M2 = m.M2;
  k.prov_M = m.provenance;

  if (const auto* q = s.barrier.quadratic_form()) {
    k.L_gradh = 2.0 * q->Q.max_eigenvalue();
    k.prov_L_gradh = Provenance::analytic();
  } else {
    const BarrierFunction* b = &s.barrier;
    auto est = estimate_lipschitz([b](const Vec& x) { return b->gradient(x); }, safe_set_sampler(s),
                                  std::max(samples, 1000), inflation, rng);
    k.L_gradh = est.estimate;
    k.prov_L_gradh = est.provenance;
  }

  if (auto a = effective_linear_part(s)) {
    k.L_f = spectral_norm(*a);
    k.prov_L_f = Provenance::analytic();
  } else {
    auto est = estimate_lipschitz(effective_field(s), safe_set_sampler(s), std::max(samples, 1000), inflation, rng);
    k.L_f = est.estimate;
    k.prov_L_f = est.provenance;
  }

  const MaxLieEstimate lie = max_abs_lie_derivative(s, samples, inflation);
  k.max_lie = lie.value;
  k.prov_max_lie = lie.provenance;

  k.eps = eps_fraction * k.M1;
  if (!(k.L_gradh > 0.0)) throw ValidationError("Lipschitz constant of grad h must be positive");
  const double arg = (k.M1 - k.eps) / k.L_gradh;
  if (!(arg > 0.0)) throw ValidationError("gamma inverse argument (M1 - eps) / L_gradh must be positive");
  const double denom = k.gamma.inverse(arg);
  if (!(denom > 0.0)) throw ValidationError("gamma inverse returned a nonpositive value");
  k.a_star = k.max_lie / denom;
  // gamma(max_lie / a*) = gamma(gamma^{-1}(arg)) = arg; the limit value is used when a* = 0.
  const double reach = k.a_star > 0.0 ? k.gamma(k.max_lie / k.a_star) : arg;
  k.M3 = k.M2 + k.L_gradh * reach;
  const double lmin = k.lambda_min_P;
  const double lmax = k.lambda_max_P;
  k.L1 = lmax / (lmin * k.eps * k.eps) * k.L_gradh * (1.0 + k.M2 * lmax * (k.M2 + k.M3) / (lmin * k.M1 * k.M1));
  if (!k.invariants_hold()) throw ValidationError("computed constants violate 0 < eps < M1 <= M2 <= M3");
  return k;
}

/// gamma(|L_f h(x)| / a), the radius bound on ||x - proj_dS(x)|| in the active region.
inline double sigma_gamma_term(const ConstantsBundle& k, double a, const Vec& x, const Scenario& s) {
  if (!(a > 0.0)) throw ValidationError("sigma requires a > 0");
  const double lie = std::abs(s.barrier.gradient(x).dot(s.f0(x)));
  return k.gamma(lie / a);
}

/// sigma_1(a, x) = (L_f + L1 |L_f h(x)|) gamma(|L_f h(x)| / a).
inline double sigma1(const ConstantsBundle& k, double a, const Vec& x, const Scenario& s) {
  const double lie = std::abs(s.barrier.gradient(x).dot(s.f0(x)));
  return (k.L_f + k.L1 * lie) * sigma_gamma_term(k, a, x, s);
}

inline double sigma(const ConstantsBundle& k, double a, const Vec& x, const Scenario& s) {
  const double g = sigma_gamma_term(k, a, x, s);
  const double lie = std::abs(s.barrier.gradient(x).dot(s.f0(x)));
  return std::max(g, (k.L_f + k.L1 * lie) * g);
}

/// True when x lies in U_cbf,a = {z in S | L_f h(z) + a h(z) <= 0}.
inline bool in_active_region(const Scenario& s, double a, const Vec& x) {
  const double hx = s.barrier.value(x);
  return hx >= -kBoundaryTol && s.barrier.gradient(x).dot(s.f0(x)) + a * hx <= 0.0;
}

namespace detail {

inline void require_active(const Scenario& s, double a, const Vec& x, const char* who) {
  if (!in_active_region(s, a, x)) throw DomainError(std::string(who) + ": point is not in the active region U_cbf,a");
}

inline void require_a_star(const ConstantsBundle& k, double a, const char* who) {
  if (a < k.a_star) throw ValidationError(std::string(who) + ": requires a >= a* = " + std::to_string(k.a_star));
}

/// P^{-1} grad h(z) / ||grad h(z)||^2_{P^{-1}}.
inline Vec normalized_direction(const Scenario& s, const Vec& z) {
  const Vec g = s.barrier.gradient(z);
  const Vec pg = s.P.solve(g);
  return pg / g.dot(pg);
}

}  // namespace detail

/// gamma(|L_f h(x)| / a) - ||x - y||, y = proj_dS(x). Nonnegative passes.
inline double lemma1_check(const Scenario& s, const ConstantsBundle& k, double a, const Vec& x) {
  detail::require_active(s, a, x, "lemma1_check");
  const Vec y = proj_boundary_euclidean(x, s.barrier);
  return sigma_gamma_term(k, a, x, s) - (x - y).norm();
}

/// (||grad h(x)|| - eps, M3 - ||grad h(x)||). Both nonnegative passes.
inline std::pair<double, double> lemma2_check(const Scenario& s, const ConstantsBundle& k, double a, const Vec& x) {
  detail::require_a_star(k, a, "lemma2_check");
  detail::require_active(s, a, x, "lemma2_check");
  const double g = s.barrier.gradient(x).norm();
  return {g - k.eps, k.M3 - g};
}

/// L1 ||x - y|| - ||n(x) - n(y)|| with n(z) = P^{-1} grad h(z) / ||grad h(z)||^2_{P^{-1}}.
inline double lemma3_check(const Scenario& s, const ConstantsBundle& k, double a, const Vec& x) {
  detail::require_a_star(k, a, "lemma3_check");
  detail::require_active(s, a, x, "lemma3_check");
  const Vec y = proj_boundary_euclidean(x, s.barrier);
  return k.L1 * (x - y).norm() - (detail::normalized_direction(s, x) - detail::normalized_direction(s, y)).norm();
}

struct InclusionReport {
  enum class Case { Inactive, Active };

  Vec x;
  Case which = Case::Inactive;
  Vec y;
  Vec eta;
  double eta_coefficient = 0.0;  // eta = coefficient * grad h(y); must be <= 0
  double sigma = 0.0;
  double sigma1 = 0.0;
  double gamma_term = 0.0;
  double dist_xy = 0.0;
  double dist_field = 0.0;
  bool pass = true;
  double margin = 0.0;  // min(sigma - dist_xy, sigma - dist_field)
};

/// Absolute plus relative slack on sigma used by the pass/fail decision.
inline double inclusion_slack(double sigma_value) { return 1e-8 + 1e-6 * sigma_value; }

/// Witness check that f_cbf,a(x) lies in the sigma-inflation of F. Meaningful for a >= a*;
/// smaller a is accepted so that failures can be explored.
inline InclusionReport check_inclusion(const Scenario& s, const ConstantsBundle& k, double a, const Vec& x) {
  if (x.size() != s.dim) throw DimensionError("check_inclusion: point has wrong dimension");
  const double hx = s.barrier.value(x);
  if (hx < -kBoundaryTol) throw OutsideSafeSetError("check_inclusion: point lies outside the safe set");
  InclusionReport r;
  r.x = x;
  r.sigma = sigma(k, a, x, s);
  r.sigma1 = sigma1(k, a, x, s);
  r.gamma_term = sigma_gamma_term(k, a, x, s);

  const Vec f = s.f0(x);
  const Vec gx = s.barrier.gradient(x);
  const double slack = gx.dot(f) + a * hx;
  if (slack > 0.0) {
    r.which = InclusionReport::Case::Inactive;
    r.y = x;
    r.eta = Vec::Zero(s.dim);
    r.margin = r.sigma;
    r.pass = true;
    return r;
  }

  r.which = InclusionReport::Case::Active;
  const Scenario sa = with_a(s, a);
  const Vec fcbf = cbf_vector(sa, x);
  r.y = proj_boundary_euclidean(x, s.barrier);
  const Vec gy = s.barrier.gradient(r.y);
  const double gy_norm = inverse_weighted_sq_norm(s.P, gy);
  r.eta_coefficient = slack / gy_norm;
  r.eta = r.eta_coefficient * gy;
  r.dist_xy = (x - r.y).norm();
  r.dist_field = (s.f0(r.y) - s.P.solve(r.eta) - fcbf).norm();
  r.margin = std::min(r.sigma - r.dist_xy, r.sigma - r.dist_field);
  const double tol = inclusion_slack(r.sigma);
  r.pass = r.eta_coefficient <= 0.0 && r.dist_xy <= r.sigma + tol && r.dist_field <= r.sigma + tol;
  return r;
}

/// Draws points of U_cbf,a: uniform samples of S that satisfy the activity condition, plus
/// boundary points (h = 0) where L_f h <= 0.
inline std::vector<Vec> sample_active_region(const Scenario& s, double a, int count, Rng& rng, int max_draws = 2000000) {
  std::vector<Vec> pts;
  const Sampler in_s = safe_set_sampler(s);
  const Vec origin = Vec::Zero(s.dim);
  const bool star = s.barrier.value(origin) > 0.0;
  for (int draws = 0; draws < max_draws && static_cast<int>(pts.size()) < count; ++draws) {
    Vec x;
    if (star && draws % 4 == 3) {
      x = boundary_point_along(s.barrier, origin, random_unit_vector(s.dim, rng));
    } else {
      x = in_s(rng);
    }
    if (in_active_region(s, a, x)) pts.push_back(std::move(x));
  }
  return pts;
}

}  // namespace cbfpds
