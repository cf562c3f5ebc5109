#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "cbfpds/error.hpp"

namespace cbfpds {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// |h(x)| <= kBoundaryTol classifies x as a boundary point, everywhere in the library.
inline constexpr double kBoundaryTol = 1e-9;

/// Default threshold under which a barrier gradient counts as vanishing.
inline constexpr double kDefaultGradTol = 1e-8;

inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline void require_same_dim(const Vec& x, const Vec& y, const char* what) {
  if (x.size() != y.size()) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(x.size()) +
                         " vs " + std::to_string(y.size()) + ")");
  }
}

/// Symmetric positive-definite matrix with a cached Cholesky factorization and
/// cached extreme eigenvalues.
class SpdMatrix {
 public:
  SpdMatrix() = default;

  explicit SpdMatrix(const Mat& m) {
    if (m.rows() != m.cols() || m.rows() == 0) {
      throw NotSpdError("SPD matrix must be square and nonempty, got " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
    }
    if (!m.allFinite()) throw NotSpdError("SPD matrix has non-finite entries");
    const double scale = m.cwiseAbs().maxCoeff();
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * std::max(scale, 1e-300)) {
      throw NotSpdError("matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
    }
    m_ = 0.5 * (m + m.transpose());
    llt_.compute(m_);
    if (llt_.info() != Eigen::Success) throw NotSpdError("matrix is not positive definite");
    Eigen::SelfAdjointEigenSolver<Mat> eig(m_, Eigen::EigenvaluesOnly);
    lambda_min_ = eig.eigenvalues().minCoeff();
    lambda_max_ = eig.eigenvalues().maxCoeff();
    if (!(lambda_min_ > 0.0)) throw NotSpdError("matrix is not positive definite");
  }

  static SpdMatrix identity(int n) { return SpdMatrix(Mat::Identity(n, n)); }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Mat& matrix() const { return m_; }
  double min_eigenvalue() const { return lambda_min_; }
  double max_eigenvalue() const { return lambda_max_; }

  /// Lower-triangular factor L with matrix() = L L^T.
  Mat cholesky_lower() const { return llt_.matrixL(); }

  Vec solve(const Vec& b) const {
    if (b.size() != m_.rows()) throw DimensionError("solve_spd: dimension mismatch");
    return llt_.solve(b);
  }

  Mat inverse() const { return llt_.solve(Mat::Identity(m_.rows(), m_.cols())); }

  friend bool operator==(const SpdMatrix& a, const SpdMatrix& b) { return a.m_ == b.m_; }

 private:
  Mat m_;
  Eigen::LLT<Mat> llt_;
  double lambda_min_ = 0.0;
  double lambda_max_ = 0.0;
};

/// <x|y>_P = x^T P y.
inline double weighted_inner(const Vec& x, const Vec& y, const SpdMatrix& p) {
  require_same_dim(x, y, "weighted_inner");
  if (x.size() != p.dim()) throw DimensionError("weighted_inner: matrix dimension mismatch");
  return x.dot(p.matrix() * y);
}

inline double weighted_norm(const Vec& x, const SpdMatrix& p) {
  return std::sqrt(std::max(0.0, weighted_inner(x, x, p)));
}

/// Solves P v = b using the cached factorization.
inline Vec solve_spd(const SpdMatrix& p, const Vec& b) { return p.solve(b); }

/// ||v||^2_{P^{-1}} = v^T P^{-1} v.
inline double inverse_weighted_sq_norm(const SpdMatrix& p, const Vec& v) { return v.dot(p.solve(v)); }

/// Spectral norm (largest singular value).
inline double spectral_norm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues()(0);
}

/// Normal cone of S at a point: {0} in the interior, {lambda * grad h | lambda <= 0} on a
/// regular boundary point.
struct ConeRep {
  enum class Kind { Zero, Ray };

  Kind kind = Kind::Zero;
  Vec generator;  // grad h(x); empty for Kind::Zero

  static ConeRep zero() { return {}; }
  static ConeRep ray(Vec g) { return {Kind::Ray, std::move(g)}; }

  /// True when v = lambda * generator for some lambda <= 0 (up to tol relative).
  bool contains(const Vec& v, double tol = 1e-9) const {
    if (kind == Kind::Zero) return v.norm() <= tol;
    const double gg = generator.squaredNorm();
    const double lambda = v.dot(generator) / gg;
    if (lambda > tol) return false;
    return (v - lambda * generator).norm() <= tol * std::max(1.0, v.norm());
  }
};

}  // namespace cbfpds
