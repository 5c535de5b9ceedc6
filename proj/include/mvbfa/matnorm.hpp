#pragma once

// Matrix variate normal distribution with structured (diagonal plus low-rank)
// row and column scale matrices.
//
// X ~ N_{n x p}(M, Delta, Omega)  <=>  vec(X) ~ N_{np}(vec(M), Omega (x) Delta)
//
// Every inverse and determinant goes through the k x k inner matrix
// W = I_k + L' D^{-1} L of a scale D + L L', so the cost is linear in the
// ambient dimension.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "mvbfa/dataset.hpp"

namespace mvbfa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Lower bound applied to every diagonal noise entry after a CM update.
inline constexpr double kVarianceFloor = 1e-6;

// Scale matrix Lambda = Diag(diag) + loading * loading'.
//
// Immutable; the inner matrix, its Cholesky factor and the log-determinant
// are computed on construction. A zero-width loading is allowed and yields a
// purely diagonal scale.
class StructuredScale {
 public:
  // Throws ContractError on shape mismatch or diag entries below the floor,
  // NumericalError when W is not positive definite.
  StructuredScale(Vector diag, Matrix loading);

  // Diagonal-only scale.
  explicit StructuredScale(Vector diag);

  Eigen::Index dim() const { return diag_.size(); }
  Eigen::Index rank() const { return loading_.cols(); }

  const Vector& diag() const { return diag_; }
  const Matrix& loading() const { return loading_; }

  // W = I_k + L' D^{-1} L.
  const Matrix& inner() const { return inner_; }
  // W^{-1}, k x k.
  const Matrix& innerInverse() const { return innerInverse_; }

  double logDet() const { return logDet_; }

  // Lambda^{-1} * rhs (rhs has dim() rows).
  Matrix solve(const Matrix& rhs) const;

  // rhs * Lambda^{-1} (rhs has dim() columns).
  Matrix solveRight(const Matrix& rhs) const;

  // Some S with S S' = Lambda: D^{1/2} (I + K K')^{1/2}, K = D^{-1/2} L, with
  // the square root taken through the eigendecomposition of K'K.
  Matrix sqrtFactor() const;

  // Dense Lambda. Test and reporting use only.
  Matrix dense() const;

 private:
  Vector diag_;
  Matrix loading_;
  Vector invDiag_;
  Matrix scaledLoading_;  // D^{-1} L
  Matrix inner_;
  Matrix innerInverse_;
  double logDet_ = 0.0;
};

struct MatNormParams {
  Matrix location;
  StructuredScale rowScale;  // Delta, n x n
  StructuredScale colScale;  // Omega, p x p

  Eigen::Index rows() const { return location.rows(); }
  Eigen::Index cols() const { return location.cols(); }
};

// tr(Delta^{-1} (X - M) Omega^{-1} (X - M)').
double mahalanobisTrace(const Matrix& x, const MatNormParams& params);

// log phi_{n x p}(X | M, Delta, Omega).
double logDensity(const Matrix& x, const MatNormParams& params);

// count i.i.d. draws X = M + S_Delta Z S_Omega' with Z standard normal.
DataSet3D sample(const MatNormParams& params, std::size_t count,
                 std::uint64_t seed);

}  // namespace mvbfa
