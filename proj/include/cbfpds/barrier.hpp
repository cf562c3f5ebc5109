#pragma once

#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "cbfpds/error.hpp"
#include "cbfpds/expr.hpp"
#include "cbfpds/geometry.hpp"

namespace cbfpds {

/// h(x) = c - x^T Q x with Q SPD; S is a solid ellipsoid.
struct QuadraticBarrier {
  double c = 1.0;
  SpdMatrix Q;
};

/// h given as an expression. The gradient is either supplied or derived symbolically.
struct ExprBarrier {
  ExprAst h;
  std::vector<ExprAst> grad;
  bool grad_auto = true;
  Params params;
  // Second derivatives, row-major; empty when not symbolically available.
  std::vector<ExprAst> hess;
};

/// Barrier function h whose super-zero-level set is the safe set S = {h >= 0}.
class BarrierFunction {
 public:
  BarrierFunction() = default;

  static BarrierFunction quadratic(double c, SpdMatrix q, double gtol = kDefaultGradTol) {
    if (!(c > 0.0) || !std::isfinite(c)) throw ValidationError("quadratic barrier needs c > 0");
    BarrierFunction b;
    b.dim_ = q.dim();
    b.gtol_ = gtol;
    b.impl_ = QuadraticBarrier{c, std::move(q)};
    return b;
  }

  /// Expression barrier. When `grad` is empty the gradient is derived symbolically; the
  /// expression must then be free of min/max/abs on variable-dependent paths.
  static BarrierFunction expression(ExprAst h, std::vector<ExprAst> grad = {}, Params params = {},
                                    double gtol = kDefaultGradTol) {
    BarrierFunction b;
    b.dim_ = h.dim();
    b.gtol_ = gtol;
    ExprBarrier e;
    e.grad_auto = grad.empty();
    e.grad = grad.empty() ? gradient_exprs(h) : std::move(grad);
    if (static_cast<int>(e.grad.size()) != h.dim()) throw DimensionError("barrier gradient has wrong length");
    try {
      for (const auto& g : e.grad)
        for (int j = 0; j < h.dim(); ++j) e.hess.push_back(differentiate(g, j));
    } catch (const DifferentiationError&) {
      e.hess.clear();
    }
    e.h = std::move(h);
    e.params = std::move(params);
    b.impl_ = std::move(e);
    return b;
  }

  int dim() const { return dim_; }
  double gradient_tolerance() const { return gtol_; }
  bool is_quadratic() const { return std::holds_alternative<QuadraticBarrier>(impl_); }
  const QuadraticBarrier* quadratic_form() const { return std::get_if<QuadraticBarrier>(&impl_); }
  const ExprBarrier* expr_form() const { return std::get_if<ExprBarrier>(&impl_); }

  double value(const Vec& x) const {
    check_dim(x);
    if (const auto* q = quadratic_form()) return q->c - x.dot(q->Q.matrix() * x);
    const auto& e = std::get<ExprBarrier>(impl_);
    return e.h(x, e.params);
  }

  double operator()(const Vec& x) const { return value(x); }

  Vec gradient(const Vec& x) const {
    check_dim(x);
    if (const auto* q = quadratic_form()) return -2.0 * (q->Q.matrix() * x);
    const auto& e = std::get<ExprBarrier>(impl_);
    Vec g(dim_);
    for (int i = 0; i < dim_; ++i) g[i] = e.grad[i](x, e.params);
    return g;
  }

  Mat hessian(const Vec& x) const {
    check_dim(x);
    if (const auto* q = quadratic_form()) return -2.0 * q->Q.matrix();
    const auto& e = std::get<ExprBarrier>(impl_);
    Mat H(dim_, dim_);
    if (!e.hess.empty()) {
      for (int i = 0; i < dim_; ++i)
        for (int j = 0; j < dim_; ++j) H(i, j) = e.hess[i * dim_ + j](x, e.params);
      return 0.5 * (H + H.transpose());
    }
    for (int j = 0; j < dim_; ++j) {
      const double step = 1e-6 * (1.0 + std::abs(x[j]));
      Vec xp = x, xm = x;
      xp[j] += step;
      xm[j] -= step;
      H.col(j) = (gradient(xp) - gradient(xm)) / (2.0 * step);
    }
    return 0.5 * (H + H.transpose());
  }

  /// L_v h(x) = grad h(x)^T v.
  double lie_derivative(const Vec& x, const Vec& v) const { return gradient(x).dot(v); }

  friend bool operator==(const BarrierFunction& a, const BarrierFunction& b) {
    if (a.dim_ != b.dim_ || a.gtol_ != b.gtol_ || a.impl_.index() != b.impl_.index()) return false;
    if (const auto* qa = a.quadratic_form()) {
      const auto* qb = b.quadratic_form();
      return qa->c == qb->c && qa->Q == qb->Q;
    }
    const auto& ea = *a.expr_form();
    const auto& eb = *b.expr_form();
    return ea.h == eb.h && ea.grad == eb.grad && ea.params == eb.params;
  }

 private:
  void check_dim(const Vec& x) const {
    if (x.size() != dim_) throw DimensionError("barrier: point has wrong dimension");
  }

  int dim_ = 0;
  double gtol_ = kDefaultGradTol;
  std::variant<QuadraticBarrier, ExprBarrier> impl_;
};

}  // namespace cbfpds
