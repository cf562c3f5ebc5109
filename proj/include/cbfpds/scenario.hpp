#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cbfpds/barrier.hpp"
#include "cbfpds/error.hpp"
#include "cbfpds/expr.hpp"
#include "cbfpds/geometry.hpp"
#include "cbfpds/projection.hpp"
#include "cbfpds/sampling.hpp"

namespace cbfpds {

using VectorField = std::function<Vec(const Vec&)>;

/// Open-loop dynamics x' = f(x).
class DynamicsField {
 public:
  enum class Kind { Linear, Affine, Expr };

  DynamicsField() = default;

  static DynamicsField linear(Mat a) {
    if (a.rows() != a.cols()) throw DimensionError("dynamics matrix must be square");
    DynamicsField f;
    f.kind_ = Kind::Linear;
    f.dim_ = static_cast<int>(a.rows());
    f.b_ = Vec::Zero(f.dim_);
    f.a_ = std::move(a);
    return f;
  }

  static DynamicsField affine(Mat a, Vec b) {
    if (a.rows() != a.cols() || b.size() != a.rows()) throw DimensionError("affine dynamics: inconsistent sizes");
    DynamicsField f;
    f.kind_ = Kind::Affine;
    f.dim_ = static_cast<int>(a.rows());
    f.a_ = std::move(a);
    f.b_ = std::move(b);
    return f;
  }

  static DynamicsField expr(std::vector<ExprAst> components, Params params = {}) {
    if (components.empty()) throw DimensionError("expression dynamics needs at least one component");
    const int n = static_cast<int>(components.size());
    for (const auto& c : components)
      if (c.dim() != n) throw DimensionError("expression dynamics: component dimension mismatch");
    DynamicsField f;
    f.kind_ = Kind::Expr;
    f.dim_ = n;
    f.components_ = std::move(components);
    f.params_ = std::move(params);
    return f;
  }

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  const Mat& matrix() const { return a_; }
  const Vec& offset() const { return b_; }
  const std::vector<ExprAst>& components() const { return components_; }
  const Params& params() const { return params_; }

  Vec operator()(const Vec& x) const {
    if (x.size() != dim_) throw DimensionError("dynamics: point has wrong dimension");
    if (kind_ != Kind::Expr) return a_ * x + b_;
    Vec v(dim_);
    for (int i = 0; i < dim_; ++i) v[i] = components_[i](x, params_);
    return v;
  }

  friend bool operator==(const DynamicsField& l, const DynamicsField& r) {
    return l.kind_ == r.kind_ && l.dim_ == r.dim_ && l.a_ == r.a_ && l.b_ == r.b_ && l.components_ == r.components_ &&
           l.params_ == r.params_;
  }

 private:
  Kind kind_ = Kind::Linear;
  int dim_ = 0;
  Mat a_;
  Vec b_;
  std::vector<ExprAst> components_;
  Params params_;
};

/// Nominal feedback u0(x), designed without safety considerations.
class NominalController {
 public:
  enum class Kind { None, Linear, Expr };

  NominalController() = default;

  static NominalController none() { return {}; }

  static NominalController linear(Mat k) {
    if (k.rows() != k.cols()) throw DimensionError("controller gain must be square (full actuation)");
    NominalController u;
    u.kind_ = Kind::Linear;
    u.k_ = std::move(k);
    return u;
  }

  static NominalController expr(std::vector<ExprAst> components, Params params = {}) {
    const int n = static_cast<int>(components.size());
    for (const auto& c : components)
      if (c.dim() != n) throw DimensionError("expression controller: component dimension mismatch");
    NominalController u;
    u.kind_ = Kind::Expr;
    u.components_ = std::move(components);
    u.params_ = std::move(params);
    return u;
  }

  Kind kind() const { return kind_; }
  bool present() const { return kind_ != Kind::None; }
  const Mat& gain() const { return k_; }
  const std::vector<ExprAst>& components() const { return components_; }

  /// Dimension, or -1 when there is no controller.
  int dim() const {
    switch (kind_) {
      case Kind::Linear: return static_cast<int>(k_.rows());
      case Kind::Expr: return static_cast<int>(components_.size());
      default: return -1;
    }
  }

  Vec operator()(const Vec& x) const {
    switch (kind_) {
      case Kind::None:
        return Vec::Zero(x.size());
      case Kind::Linear:
        return k_ * x;
      case Kind::Expr: {
        Vec v(components_.size());
        for (std::size_t i = 0; i < components_.size(); ++i) v[static_cast<int>(i)] = components_[i](x, params_);
        return v;
      }
    }
    return Vec::Zero(x.size());
  }

  friend bool operator==(const NominalController& l, const NominalController& r) {
    return l.kind_ == r.kind_ && l.k_ == r.k_ && l.components_ == r.components_ && l.params_ == r.params_;
  }

 private:
  Kind kind_ = Kind::None;
  Mat k_;
  std::vector<ExprAst> components_;
  Params params_;
};

/// Class-K-infinity comparison function with d(x, dS) <= gamma(|h(x)|) on S.
/// Tabulated functions interpolate linearly between knots and continue with the last
/// slope beyond them, so they stay unbounded.
class GammaFn {
 public:
  enum class Kind { LinearSlope, Tabulated };

  GammaFn() = default;

  static GammaFn linear_slope(double slope) {
    if (!(slope > 0.0) || !std::isfinite(slope)) {
      throw ValidationError("gamma slope must be positive and finite (gamma must be strictly increasing)");
    }
    GammaFn g;
    g.kind_ = Kind::LinearSlope;
    g.slope_ = slope;
    return g;
  }

  static GammaFn tabulated(std::vector<std::pair<double, double>> knots) {
    if (knots.size() < 2) throw ValidationError("gamma table needs at least two knots");
    if (knots.front().first != 0.0 || knots.front().second != 0.0) {
      throw ValidationError("gamma table must start at (0, 0)");
    }
    for (std::size_t i = 1; i < knots.size(); ++i) {
      if (!(knots[i].first > knots[i - 1].first) || !(knots[i].second > knots[i - 1].second) ||
          !std::isfinite(knots[i].first) || !std::isfinite(knots[i].second)) {
        throw ValidationError("gamma table must be strictly increasing in both columns");
      }
    }
    GammaFn g;
    g.kind_ = Kind::Tabulated;
    g.knots_ = std::move(knots);
    return g;
  }

  Kind kind() const { return kind_; }
  double slope() const { return slope_; }
  const std::vector<std::pair<double, double>>& knots() const { return knots_; }

  double operator()(double s) const {
    if (!(s >= 0.0)) throw DomainError("gamma is defined on [0, inf)");
    if (kind_ == Kind::LinearSlope) return slope_ * s;
    return interpolate(s, false);
  }

  double inverse(double r) const {
    if (!(r >= 0.0)) throw DomainError("gamma inverse is defined on [0, inf)");
    if (kind_ == Kind::LinearSlope) return r / slope_;
    return interpolate(r, true);
  }

  friend bool operator==(const GammaFn& a, const GammaFn& b) {
    return a.kind_ == b.kind_ && a.slope_ == b.slope_ && a.knots_ == b.knots_;
  }

 private:
  double interpolate(double s, bool inverse) const {
    auto in = [&](std::size_t i) { return inverse ? knots_[i].second : knots_[i].first; };
    auto out = [&](std::size_t i) { return inverse ? knots_[i].first : knots_[i].second; };
    std::size_t i = 1;
    while (i + 1 < knots_.size() && s > in(i)) ++i;
    const double t = (s - in(i - 1)) / (in(i) - in(i - 1));
    return out(i - 1) + t * (out(i) - out(i - 1));
  }

  Kind kind_ = Kind::LinearSlope;
  double slope_ = 1.0;
  std::vector<std::pair<double, double>> knots_;
};

/// Linear gamma valid for h = c - x^T Q x: slope 1 / sqrt(c * lambda_min(Q)).
inline GammaFn gamma_for_quadratic(double c, const SpdMatrix& q) {
  if (!(c > 0.0)) throw ValidationError("gamma_for_quadratic: c must be positive");
  return GammaFn::linear_slope(1.0 / std::sqrt(c * q.min_eigenvalue()));
}

/// Exact bounding box of the ellipsoid x^T Q x <= c.
inline Box quadratic_bounding_box(double c, const SpdMatrix& q) {
  const Mat qinv = q.inverse();
  Vec half(q.dim());
  for (int i = 0; i < q.dim(); ++i) half[i] = std::sqrt(c * qinv(i, i));
  return Box{-half, half};
}

/// Tabulated gamma from sampled (h, d) pairs: a monotone upper envelope inflated by 10%.
/// Used when an expression barrier comes without a user-supplied gamma.
inline GammaFn fit_gamma_envelope(const BarrierFunction& b, const Box& box, int samples, Rng& rng,
                                  int bins = 32, double inflation = 1.1) {
  std::vector<std::pair<double, double>> hd;
  hd.reserve(samples);
  auto sampler = rejection_sampler(box, [&](const Vec& x) { return b.value(x) > kBoundaryTol; });
  double hmax = 0.0;
  for (int k = 0; k < samples; ++k) {
    const Vec x = sampler(rng);
    const double hx = b.value(x);
    hd.emplace_back(hx, distance_to_boundary(x, b));
    hmax = std::max(hmax, hx);
  }
  if (hd.empty() || !(hmax > 0.0)) throw ValidationError("gamma fit: no interior samples");
  const double width = hmax / bins;
  std::vector<double> bin_max(bins + 1, 0.0);
  double first_ratio = 0.0;
  for (const auto& [hx, d] : hd) {
    const int k = std::min(bins - 1, static_cast<int>(hx / width));
    // gamma(h) >= gamma(knot k) covers the bin (knot k, knot k+1]; the first bin starts at
    // gamma(0) = 0, so it is covered through the slope instead.
    if (k == 0) {
      first_ratio = std::max(first_ratio, d / hx);
    } else {
      bin_max[k] = std::max(bin_max[k], d);
    }
  }
  std::vector<std::pair<double, double>> knots{{0.0, 0.0}};
  double prev = 0.0;
  for (int k = 1; k <= bins; ++k) {
    // Running maximum keeps the envelope monotone.
    double g = std::max(bin_max[k], first_ratio * width * k);
    g = std::max(g * inflation, prev + 1e-12 * (1.0 + prev));
    knots.emplace_back(width * k, g);
    prev = g;
  }
  return GammaFn::tabulated(std::move(knots));
}

/// Complete problem description: plant, nominal controller, barrier, QP metric, Lyapunov
/// metric (optional), CBF parameter and gamma.
struct Scenario {
  std::string name;
  int dim = 0;
  DynamicsField dynamics;
  NominalController controller;
  BarrierFunction barrier;
  SpdMatrix P;
  std::optional<SpdMatrix> G;
  double a = 1.0;
  GammaFn gamma;
  Box bounds;
  Params params;

  /// f0(x) = f(x) + u0(x); f(x) when no controller is present.
  Vec f0(const Vec& x) const {
    Vec v = dynamics(x);
    if (controller.present()) v += controller(x);
    return v;
  }

  friend bool operator==(const Scenario& l, const Scenario& r) {
    return l.name == r.name && l.dim == r.dim && l.dynamics == r.dynamics && l.controller == r.controller &&
           l.barrier == r.barrier && l.P == r.P && l.G == r.G && l.a == r.a && l.gamma == r.gamma &&
           l.bounds == r.bounds && l.params == r.params;
  }
};

/// Structural checks: dimensions agree, a > 0, bounds nonempty.
inline void check_consistency(const Scenario& s) {
  if (s.dim < 1) throw ValidationError("scenario dimension must be positive");
  if (s.dynamics.dim() != s.dim) throw DimensionError("dynamics dimension does not match scenario dimension");
  if (s.controller.present() && s.controller.dim() != s.dim) {
    throw DimensionError("controller dimension does not match scenario dimension");
  }
  if (s.barrier.dim() != s.dim) throw DimensionError("barrier dimension does not match scenario dimension");
  if (s.P.dim() != s.dim) throw DimensionError("P dimension does not match scenario dimension");
  if (s.G && s.G->dim() != s.dim) throw DimensionError("G dimension does not match scenario dimension");
  if (!(s.a > 0.0) || !std::isfinite(s.a)) throw ValidationError("parameter a must be positive");
  if (s.bounds.dim() != s.dim || s.bounds.upper.size() != s.dim) {
    throw DimensionError("bounds dimension does not match scenario dimension");
  }
  if (!((s.bounds.upper.array() > s.bounds.lower.array()).all())) throw ValidationError("bounds box is empty");
}

/// Copy of `s` with a different CBF parameter.
inline Scenario with_a(Scenario s, double a) {
  if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("parameter a must be positive");
  s.a = a;
  return s;
}

inline Scenario with_metric(Scenario s, SpdMatrix p) {
  if (p.dim() != s.dim) throw DimensionError("metric dimension mismatch");
  s.P = std::move(p);
  return s;
}

/// The closed-loop nominal field f0 = f + u0 as a callable.
inline VectorField effective_field(const Scenario& s) {
  return [s](const Vec& x) { return s.f0(x); };
}

/// Constant Jacobian of f0 when both dynamics and controller are linear or affine.
inline std::optional<Mat> effective_linear_part(const Scenario& s) {
  if (s.dynamics.kind() == DynamicsField::Kind::Expr) return std::nullopt;
  if (s.controller.kind() == NominalController::Kind::Expr) return std::nullopt;
  Mat a = s.dynamics.matrix();
  if (s.controller.kind() == NominalController::Kind::Linear) a += s.controller.gain();
  return a;
}

inline bool effective_field_is_linear(const Scenario& s) {
  return effective_linear_part(s).has_value() && s.dynamics.kind() == DynamicsField::Kind::Linear;
}

/// Samples uniformly from S within the scenario bounds.
inline Sampler safe_set_sampler(const Scenario& s) {
  const BarrierFunction* b = &s.barrier;
  return rejection_sampler(s.bounds, [b](const Vec& x) { return b->value(x) >= 0.0; });
}

namespace builtin {

inline Mat example_lyapunov_metric() {
  Mat g(2, 2);
  g << 0.625, 0.125, 0.125, 2.625;
  return g;
}

inline Mat example_barrier_matrix() {
  Mat q(2, 2);
  q << 3.0, 2.0, 2.0, 2.0;
  return q;
}

/// x' = x + u, u0 = (-2 x1 - 4 x2, x1 - x2), h = 9 - x^T Q x, QP metric P = G.
inline Scenario paper_example() {
  Scenario s;
  s.name = "paper-example";
  s.dim = 2;
  s.dynamics = DynamicsField::linear(Mat::Identity(2, 2));
  Mat k(2, 2);
  k << -2.0, -4.0, 1.0, -1.0;
  s.controller = NominalController::linear(k);
  SpdMatrix q(example_barrier_matrix());
  s.barrier = BarrierFunction::quadratic(9.0, q);
  s.P = SpdMatrix(example_lyapunov_metric());
  s.G = SpdMatrix(example_lyapunov_metric());
  s.a = 1.0;
  s.gamma = gamma_for_quadratic(9.0, q);
  s.bounds = quadratic_bounding_box(9.0, q);
  return s;
}

/// Same plant and barrier with the QP metric diag(3, 1).
inline Scenario paper_example_wrong_p() {
  Scenario s = paper_example();
  s.name = "paper-example-wrongP";
  Mat p = Mat::Zero(2, 2);
  p(0, 0) = 3.0;
  p(1, 1) = 1.0;
  s.P = SpdMatrix(p);
  return s;
}

/// Unstable spiral x' = A x on the unit disc, no nominal controller, Euclidean metric.
inline Scenario unit_disc() {
  Scenario s;
  s.name = "unit-disc";
  s.dim = 2;
  Mat a(2, 2);
  a << 0.5, -1.0, 1.0, 0.5;
  s.dynamics = DynamicsField::linear(a);
  s.controller = NominalController::none();
  SpdMatrix q = SpdMatrix::identity(2);
  s.barrier = BarrierFunction::quadratic(1.0, q);
  s.P = SpdMatrix::identity(2);
  s.a = 1.0;
  s.gamma = gamma_for_quadratic(1.0, q);
  s.bounds = quadratic_bounding_box(1.0, q);
  return s;
}

inline std::vector<std::string> names() { return {"paper-example", "paper-example-wrongP", "unit-disc"}; }

inline Scenario by_name(const std::string& name) {
  if (name == "paper-example") return paper_example();
  if (name == "paper-example-wrongP") return paper_example_wrong_p();
  if (name == "unit-disc") return unit_disc();
  throw ValidationError("unknown builtin scenario '" + name + "'");
}

}  // namespace builtin

}  // namespace cbfpds
