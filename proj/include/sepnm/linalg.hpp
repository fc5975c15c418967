#pragma once

// Finite-dimensional Hilbert-space primitives on top of Eigen.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sepnm/errors.hpp"

namespace sepnm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require_same_dim(const Vector& u, const Vector& v, const char* where) {
  if (u.size() != v.size()) {
    throw UsageError(std::string(where) + ": dimension mismatch (" + std::to_string(u.size()) +
                     " vs " + std::to_string(v.size()) + ")");
  }
}

inline double inner(const Vector& u, const Vector& v) {
  require_same_dim(u, v, "inner");
  return u.dot(v);
}

inline double norm(const Vector& u) { return std::sqrt(u.dot(u)); }

inline double distance(const Vector& u, const Vector& v) {
  require_same_dim(u, v, "distance");
  return (u - v).norm();
}

/// Bounded linear operator R^n -> R^m stored densely.
class DenseOperator {
 public:
  DenseOperator() = default;
  explicit DenseOperator(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() < 1 || entries_.cols() < 1) {
      throw UsageError("DenseOperator: shape must be at least 1x1");
    }
    if (!entries_.allFinite()) throw DomainError("DenseOperator: non-finite entry");
  }

  static DenseOperator identity(Eigen::Index n) { return DenseOperator(Matrix::Identity(n, n)); }

  Eigen::Index rows() const { return entries_.rows(); }
  Eigen::Index cols() const { return entries_.cols(); }
  const Matrix& matrix() const { return entries_; }

  friend bool operator==(const DenseOperator& a, const DenseOperator& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a.entries_ == b.entries_;
  }

 private:
  Matrix entries_;
};

inline Vector apply(const DenseOperator& A, const Vector& x) {
  if (x.size() != A.cols()) throw UsageError("apply: dimension mismatch");
  return A.matrix() * x;
}

inline Vector adjoint_apply(const DenseOperator& A, const Vector& y) {
  if (y.size() != A.rows()) throw UsageError("adjoint_apply: dimension mismatch");
  return A.matrix().transpose() * y;
}

inline constexpr int kPowerIterations = 200;
inline constexpr double kNormSafety = 1.01;

/// Certified-by-margin upper bound on ||A||^2.
///
/// Power iteration on A^T A from the all-ones vector. When all-ones lies in
/// the kernel the start falls back to the coordinate vector of the largest
/// column. The Rayleigh quotient never exceeds sigma_max^2, so the safety
/// factor is what turns it into an upper bound. A zero operator yields
/// safety * epsilon so that 1/U stays finite.
inline double operator_norm_sq_upper(const Matrix& A, int iters = kPowerIterations,
                                     double safety = kNormSafety) {
  if (iters < 1) throw UsageError("operator_norm_sq_upper: iters must be >= 1");
  if (!(safety >= 1.0)) throw UsageError("operator_norm_sq_upper: safety must be >= 1");
  constexpr double kZeroNorm = std::numeric_limits<double>::epsilon();

  Vector v = Vector::Ones(A.cols());
  if ((A * v).squaredNorm() == 0.0) {
    Eigen::Index col = 0;
    const double largest = A.colwise().squaredNorm().maxCoeff(&col);
    if (largest == 0.0) return safety * kZeroNorm;
    v = Vector::Unit(A.cols(), col);
  }
  v.normalize();

  double rayleigh = 0.0;
  for (int i = 0; i < iters; ++i) {
    const Vector Av = A * v;
    rayleigh = Av.squaredNorm();
    Vector w = A.transpose() * Av;
    const double wn = w.norm();
    if (wn == 0.0) break;
    v = w / wn;
  }
  rayleigh = std::max(rayleigh, (A * v).squaredNorm());
  return safety * std::max(rayleigh, kZeroNorm);
}

inline double operator_norm_sq_upper(const DenseOperator& A, int iters = kPowerIterations,
                                     double safety = kNormSafety) {
  return operator_norm_sq_upper(A.matrix(), iters, safety);
}

}  // namespace sepnm
