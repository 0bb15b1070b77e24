#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

#include "mcsmf/errors.hpp"

namespace mcsmf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Lower-triangular factor L of a shape matrix, P = L L^T.
struct CholeskyFactor {
  Matrix lower;

  Eigen::Index dim() const { return lower.rows(); }
};

/// Ellipsoid {x : (x - c)^T P^{-1} (x - c) <= 1} with symmetric positive-definite P.
///
/// The shape is symmetrized on construction and rejected unless
/// lambda_min > 1e-12 * lambda_max. The Cholesky factor is computed once and
/// reused for membership tests, so quadratic forms never invert P.
class Ellipsoid {
 public:
  static constexpr double kPdRelativeTolerance = 1e-12;

  Ellipsoid(Vector center, const Matrix& shape) : center_(std::move(center)) {
    if (shape.rows() != shape.cols()) {
      throw DimensionMismatch("ellipsoid shape must be square, got " +
                              std::to_string(shape.rows()) + "x" +
                              std::to_string(shape.cols()));
    }
    if (shape.rows() != center_.size() || shape.rows() == 0) {
      throw DimensionMismatch("ellipsoid center has dimension " +
                              std::to_string(center_.size()) + " but shape is " +
                              std::to_string(shape.rows()) + "x" +
                              std::to_string(shape.cols()));
    }
    if (!shape.allFinite() || !center_.allFinite()) {
      throw NotPositiveDefinite("ellipsoid data contains non-finite values");
    }
    shape_ = 0.5 * (shape + shape.transpose());

    Eigen::SelfAdjointEigenSolver<Matrix> eig(shape_, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    if (!(lmax > 0.0) || lmin <= kPdRelativeTolerance * lmax) {
      throw NotPositiveDefinite("ellipsoid shape is not positive definite (lambda_min=" +
                                std::to_string(lmin) + ", lambda_max=" +
                                std::to_string(lmax) + ")");
    }
    Eigen::LLT<Matrix> llt(shape_);
    if (llt.info() != Eigen::Success) {
      throw NotPositiveDefinite("Cholesky factorization of ellipsoid shape failed");
    }
    factor_.lower = llt.matrixL();
  }

  Eigen::Index dim() const { return center_.size(); }
  const Vector& center() const { return center_; }
  const Matrix& shape() const { return shape_; }
  const CholeskyFactor& factor() const { return factor_; }
  double trace() const { return shape_.trace(); }

  /// (x - c)^T P^{-1} (x - c), by one triangular solve.
  double quadratic_form(const Vector& x) const {
    if (x.size() != dim()) {
      throw DimensionMismatch("point has dimension " + std::to_string(x.size()) +
                              ", ellipsoid has " + std::to_string(dim()));
    }
    const Vector z = factor_.lower.triangularView<Eigen::Lower>().solve(x - center_);
    return z.squaredNorm();
  }

  /// x = c + L u; the image of the closed unit ball is the ellipsoid.
  Vector point_at(const Vector& u) const { return center_ + factor_.lower * u; }

 private:
  Vector center_;
  Matrix shape_;
  CholeskyFactor factor_;
};

inline Ellipsoid make_ellipsoid(Vector center, const Matrix& shape) {
  return Ellipsoid(std::move(center), shape);
}

inline CholeskyFactor cholesky(const Ellipsoid& e) { return e.factor(); }

inline bool contains(const Ellipsoid& e, const Vector& x, double slack = 0.0) {
  if (slack < 0.0) {
    throw Error("containment slack must be non-negative");
  }
  return e.quadratic_form(x) <= 1.0 + slack;
}

/// Image {A x + b : x in e}; A must be square and nonsingular.
inline Ellipsoid affine_image(const Ellipsoid& e, const Matrix& A, const Vector& b) {
  if (A.rows() != A.cols() || A.rows() != e.dim() || b.size() != e.dim()) {
    throw DimensionMismatch("affine map does not match ellipsoid dimension " +
                            std::to_string(e.dim()));
  }
  Eigen::JacobiSVD<Matrix> svd(A);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || !(sv(sv.size() - 1) > 1e-12 * sv(0))) {
    throw SingularTransform("affine map is singular or nearly singular");
  }
  return Ellipsoid(A * e.center() + b, A * e.shape() * A.transpose());
}

}  // namespace mcsmf
