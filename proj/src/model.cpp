#include "mvbfa/model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mvbfa/errors.hpp"

namespace mvbfa {

StructuredScale ComponentParams::rowScale() const {
  return StructuredScale(rowNoise, colLoading);
}

StructuredScale ComponentParams::colScale() const {
  return StructuredScale(colNoise, rowLoading);
}

MatNormParams ComponentParams::marginal() const {
  return MatNormParams{location, rowScale(), colScale()};
}

void MixtureParams::validate() const {
  if (components.empty()) throw ContractError("mixture has no components");
  if (dims.q < 0 || dims.r < 0 || dims.n < 1 || dims.p < 1) {
    throw ContractError("mixture dimensions must be positive");
  }
  if (dims.q >= dims.n && dims.q > 0) {
    throw ContractError("column factors q must be smaller than n");
  }
  if (dims.r >= dims.p && dims.r > 0) {
    throw ContractError("row factors r must be smaller than p");
  }
  double total = 0.0;
  for (std::size_t g = 0; g < components.size(); ++g) {
    const auto& c = components[g];
    const std::string tag = "component " + std::to_string(g + 1) + ": ";
    if (c.location.rows() != dims.n || c.location.cols() != dims.p) {
      throw ContractError(tag + "location has wrong shape");
    }
    if (c.colLoading.rows() != dims.n || c.colLoading.cols() != dims.q) {
      throw ContractError(tag + "column loading A must be n x q");
    }
    if (c.rowLoading.rows() != dims.p || c.rowLoading.cols() != dims.r) {
      throw ContractError(tag + "row loading B must be p x r");
    }
    if (c.rowNoise.size() != dims.n || c.colNoise.size() != dims.p) {
      throw ContractError(tag + "noise diagonals have wrong length");
    }
    if ((c.rowNoise.array() < kVarianceFloor).any() ||
        (c.colNoise.array() < kVarianceFloor).any()) {
      throw ContractError(tag + "noise below variance floor");
    }
    if (!(c.weight > 0.0) || c.weight > 1.0) {
      throw ContractError(tag + "weight outside (0, 1]");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ContractError("mixture weights sum to " + std::to_string(total));
  }
}

double componentLogDensity(const Matrix& x, const ComponentParams& comp) {
  return logDensity(x, comp.marginal());
}

Matrix weightedLogDensities(const DataSet3D& data, const MixtureParams& params) {
  const auto n = data.size();
  Matrix out(n, params.G());
  for (std::size_t g = 0; g < params.G(); ++g) {
    const auto& comp = params.components[g];
    const MatNormParams marginal = comp.marginal();
    const double logWeight = std::log(comp.weight);
    for (std::size_t i = 0; i < n; ++i) {
      const double value = logWeight + logDensity(data.obs[i], marginal);
      if (std::isnan(value)) {
        throw NumericalError("NaN density for observation " + std::to_string(i));
      }
      out(i, g) = value;
    }
  }
  return out;
}

ResponsibilityMatrix responsibilitiesFromLogDensities(const Matrix& logJoint,
                                                      const DataSet3D& data) {
  const Eigen::Index G = logJoint.cols();
  ResponsibilityMatrix resp{Matrix::Zero(logJoint.rows(), G)};
  for (Eigen::Index i = 0; i < logJoint.rows(); ++i) {
    const int label = data.label(static_cast<std::size_t>(i));
    if (label > 0) {
      if (label > G) {
        throw InputError("label " + std::to_string(label) + " at observation " +
                         std::to_string(i) + " exceeds G=" + std::to_string(G));
      }
      resp.values(i, label - 1) = 1.0;
      continue;
    }
    const double top = logJoint.row(i).maxCoeff();
    if (!std::isfinite(top)) {
      throw NumericalError("non-finite density for observation " +
                           std::to_string(i));
    }
    double total = 0.0;
    for (Eigen::Index g = 0; g < G; ++g) {
      const double w = std::exp(logJoint(i, g) - top);
      resp.values(i, g) = w;
      total += w;
    }
    resp.values.row(i) /= total;
  }
  return resp;
}

ResponsibilityMatrix responsibilities(const DataSet3D& data,
                                      const MixtureParams& params) {
  return responsibilitiesFromLogDensities(weightedLogDensities(data, params), data);
}

void columnMoments(const Matrix& residual, const ComponentParams& comp,
                   const StructuredScale& rowScale,
                   const StructuredScale& colScale, Matrix& aB, Matrix& bB) {
  const double p = static_cast<double>(residual.cols());
  const Matrix& winv = rowScale.innerInverse();
  aB = winv * (comp.colLoading.transpose() *
               (comp.rowNoise.cwiseInverse().asDiagonal() * residual));
  bB = p * winv + aB * colScale.solveRight(aB).transpose();
}

LatentMoments latentMoments(const Matrix& x, const ComponentParams& comp) {
  if (x.rows() != comp.location.rows() || x.cols() != comp.location.cols()) {
    throw ContractError("latentMoments: observation shape mismatch");
  }
  const StructuredScale rowScale = comp.rowScale();
  const StructuredScale colScale = comp.colScale();
  const Matrix residual = x - comp.location;
  LatentMoments m;
  columnMoments(residual, comp, rowScale, colScale, m.aB, m.bB);

  const double n = static_cast<double>(residual.rows());
  const Matrix& winvB = colScale.innerInverse();
  m.aA = (residual * comp.colNoise.cwiseInverse().asDiagonal()) *
         comp.rowLoading * winvB;
  m.bA = n * winvB + m.aA.transpose() * rowScale.solve(m.aA);
  return m;
}

std::vector<int> mapClassify(const ResponsibilityMatrix& resp) {
  std::vector<int> labels(static_cast<std::size_t>(resp.rows()));
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index g = 1; g < resp.cols(); ++g) {
      if (resp.values(i, g) > resp.values(i, best)) best = g;
    }
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best) + 1;
  }
  return labels;
}

}  // namespace mvbfa
