#include "mvbfa/matnorm.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "mvbfa/errors.hpp"

namespace mvbfa {

StructuredScale::StructuredScale(Vector diag, Matrix loading)
    : diag_(std::move(diag)), loading_(std::move(loading)) {
  if (loading_.rows() != diag_.size()) {
    throw ContractError("StructuredScale: loading has " +
                        std::to_string(loading_.rows()) + " rows, diag has " +
                        std::to_string(diag_.size()) + " entries");
  }
  if (loading_.cols() > diag_.size()) {
    throw ContractError("StructuredScale: loading wider than its dimension");
  }
  for (Eigen::Index i = 0; i < diag_.size(); ++i) {
    if (!(diag_[i] >= kVarianceFloor) || !std::isfinite(diag_[i])) {
      throw ContractError("StructuredScale: diagonal entry " + std::to_string(i) +
                          " below variance floor");
    }
  }
  if (!loading_.allFinite()) {
    throw ContractError("StructuredScale: non-finite loading");
  }

  invDiag_ = diag_.cwiseInverse();
  scaledLoading_ = invDiag_.asDiagonal() * loading_;
  const Eigen::Index k = loading_.cols();
  inner_ = Matrix::Identity(k, k);
  inner_.noalias() += loading_.transpose() * scaledLoading_;

  logDet_ = diag_.array().log().sum();
  if (k > 0) {
    Eigen::LLT<Matrix> llt(inner_);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("StructuredScale: inner matrix not positive definite");
    }
    const Matrix& factor = llt.matrixLLT();
    for (Eigen::Index i = 0; i < k; ++i) {
      const double pivot = factor(i, i);
      if (!(pivot > 0.0) || !std::isfinite(pivot)) {
        throw NumericalError("StructuredScale: non-positive Cholesky pivot");
      }
      logDet_ += 2.0 * std::log(pivot);
    }
    innerInverse_ = llt.solve(Matrix::Identity(k, k));
    innerInverse_ = 0.5 * (innerInverse_ + innerInverse_.transpose()).eval();
  } else {
    innerInverse_.resize(0, 0);
  }
}

StructuredScale::StructuredScale(Vector diag)
    : StructuredScale(diag, Matrix(diag.size(), 0)) {}

Matrix StructuredScale::solve(const Matrix& rhs) const {
  if (rhs.rows() != dim()) {
    throw ContractError("StructuredScale::solve: dimension mismatch");
  }
  Matrix out = invDiag_.asDiagonal() * rhs;
  if (rank() > 0) {
    const Matrix proj = innerInverse_ * (scaledLoading_.transpose() * rhs);
    out.noalias() -= scaledLoading_ * proj;
  }
  return out;
}

Matrix StructuredScale::solveRight(const Matrix& rhs) const {
  if (rhs.cols() != dim()) {
    throw ContractError("StructuredScale::solveRight: dimension mismatch");
  }
  Matrix out = rhs * invDiag_.asDiagonal();
  if (rank() > 0) {
    const Matrix proj = (rhs * scaledLoading_) * innerInverse_;
    out.noalias() -= proj * scaledLoading_.transpose();
  }
  return out;
}

Matrix StructuredScale::sqrtFactor() const {
  const Vector sqrtDiag = diag_.cwiseSqrt();
  Matrix root = Matrix::Identity(dim(), dim());
  if (rank() > 0) {
    // K = D^{-1/2} L = U S V'. (I + K K')^{1/2} = I + U (sqrt(1 + S^2) - 1) U'.
    const Matrix k = sqrtDiag.cwiseInverse().asDiagonal() * loading_;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(k.transpose() * k);
    const Vector& s2 = eig.eigenvalues();
    for (Eigen::Index j = 0; j < s2.size(); ++j) {
      if (s2[j] <= 1e-300) continue;
      const Vector u = k * eig.eigenvectors().col(j) / std::sqrt(s2[j]);
      root.noalias() += (std::sqrt(1.0 + s2[j]) - 1.0) * u * u.transpose();
    }
  }
  return sqrtDiag.asDiagonal() * root;
}

Matrix StructuredScale::dense() const {
  Matrix out = loading_ * loading_.transpose();
  out.diagonal() += diag_;
  return out;
}

namespace {

void checkShape(const Matrix& x, const MatNormParams& params) {
  if (params.rowScale.dim() != params.rows() ||
      params.colScale.dim() != params.cols()) {
    throw ContractError("MatNormParams: scale dimensions do not match location");
  }
  if (x.rows() != params.rows() || x.cols() != params.cols()) {
    throw ContractError("matrix normal: observation is " + std::to_string(x.rows()) +
                        "x" + std::to_string(x.cols()) + ", expected " +
                        std::to_string(params.rows()) + "x" +
                        std::to_string(params.cols()));
  }
  if (!x.allFinite()) {
    throw InputError("matrix normal: observation has non-finite entries");
  }
}

}  // namespace

double mahalanobisTrace(const Matrix& x, const MatNormParams& params) {
  checkShape(x, params);
  const Matrix residual = x - params.location;
  const Matrix left = params.rowScale.solve(residual);
  const Matrix right = params.colScale.solveRight(residual);
  // Both factors are PD, so the trace is nonnegative; clamp rounding noise.
  return std::max(0.0, (left.array() * right.array()).sum());
}

double logDensity(const Matrix& x, const MatNormParams& params) {
  const double n = static_cast<double>(params.rows());
  const double p = static_cast<double>(params.cols());
  const double trace = mahalanobisTrace(x, params);
  return -0.5 * n * p * std::log(2.0 * std::numbers::pi) -
         0.5 * p * params.rowScale.logDet() - 0.5 * n * params.colScale.logDet() -
         0.5 * trace;
}

DataSet3D sample(const MatNormParams& params, std::size_t count,
                 std::uint64_t seed) {
  if (count == 0) throw ContractError("sample: count must be positive");
  const Matrix rowRoot = params.rowScale.sqrtFactor();
  const Matrix colRootT = params.colScale.sqrtFactor().transpose();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  DataSet3D out;
  out.obs.reserve(count);
  Matrix z(params.rows(), params.cols());
  for (std::size_t i = 0; i < count; ++i) {
    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = normal(rng);
    out.obs.push_back(params.location + rowRoot * z * colRootT);
  }
  return out;
}

}  // namespace mvbfa
