#pragma once

// Mixture of matrix variate bilinear factor analyzers: parameter types,
// component densities, memberships and conditional latent moments.
//
// Component g generates
//   X = M + A U B' + A E_B + E_A B' + E,
// which marginally is N_{n x p}(M, Sigma + A A', Psi + B B').

#include <Eigen/Core>

#include <vector>

#include "mvbfa/dataset.hpp"
#include "mvbfa/matnorm.hpp"

namespace mvbfa {

struct ComponentParams {
  double weight = 1.0;  // pi_g
  Matrix location;      // M_g, n x p
  Matrix colLoading;    // A_g, n x q
  Matrix rowLoading;    // B_g, p x r
  Vector rowNoise;      // diag(Sigma_g), length n
  Vector colNoise;      // diag(Psi_g), length p

  // Lambda_A = Sigma + A A'.
  StructuredScale rowScale() const;
  // Lambda_B = Psi + B B'.
  StructuredScale colScale() const;
  MatNormParams marginal() const;
};

struct MixtureDims {
  Eigen::Index n = 0, p = 0, q = 0, r = 0;
  friend bool operator==(const MixtureDims&, const MixtureDims&) = default;
};

struct MixtureParams {
  std::vector<ComponentParams> components;
  MixtureDims dims;

  std::size_t G() const { return components.size(); }

  // Shapes, weights summing to one, noise above the floor. Throws
  // ContractError.
  void validate() const;
};

// N x G matrix of membership probabilities.
struct ResponsibilityMatrix {
  Matrix values;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  Vector mass() const { return values.colwise().sum().transpose(); }
};

// Conditional moments of the two latent projections of one observation
// under one component.
struct LatentMoments {
  Matrix aB;  // E[Y_B | X], q x p
  Matrix bB;  // E[Y_B Lambda_B^{-1} Y_B' | X], q x q
  Matrix aA;  // E[Y_A | X], n x r
  Matrix bA;  // E[Y_A' Lambda_A^{-1} Y_A | X], r x r
};

double componentLogDensity(const Matrix& x, const ComponentParams& comp);

// N x G matrix of log(pi_g) + log phi(X_i | g). Throws NumericalError naming
// the observation when a density is NaN.
Matrix weightedLogDensities(const DataSet3D& data, const MixtureParams& params);

// Row-wise normalisation of weightedLogDensities by log-sum-exp. Rows of
// labeled observations are one-hot on their label.
ResponsibilityMatrix responsibilitiesFromLogDensities(const Matrix& logJoint,
                                                      const DataSet3D& data);

ResponsibilityMatrix responsibilities(const DataSet3D& data,
                                      const MixtureParams& params);

// Column-side moments (aB, bB) only. rowScale/colScale are the component's
// Lambda_A / Lambda_B, passed in so callers can reuse the factorizations.
void columnMoments(const Matrix& residual, const ComponentParams& comp,
                   const StructuredScale& rowScale,
                   const StructuredScale& colScale, Matrix& aB, Matrix& bB);

LatentMoments latentMoments(const Matrix& x, const ComponentParams& comp);

// 1-based argmax of each row; ties go to the smallest index.
std::vector<int> mapClassify(const ResponsibilityMatrix& resp);

}  // namespace mvbfa
