#include "mvbfa/aecm.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include "mvbfa/errors.hpp"
#include "mvbfa/parallel.hpp"
#include "mvbfa/random.hpp"

namespace mvbfa {

namespace {

// Observations laid side by side (n x Np) and stacked (Nn x p), so that
// left and right scale solves for all observations are single products.
struct StackedData {
  const DataSet3D* data = nullptr;
  Eigen::Index N = 0, n = 0, p = 0;
  Matrix horiz;
  Matrix vert;

  explicit StackedData(const DataSet3D& d) : data(&d) {
    N = static_cast<Eigen::Index>(d.size());
    n = d.rows();
    p = d.cols();
    horiz.resize(n, N * p);
    vert.resize(N * n, p);
    for (Eigen::Index i = 0; i < N; ++i) {
      const Matrix& x = d.obs[static_cast<std::size_t>(i)];
      horiz.middleCols(i * p, p) = x;
      vert.middleRows(i * n, n) = x;
    }
  }
};

// Everything one E-step needs from one component, for every observation.
// Only the low-rank projections of the residuals R_i = X_i - M are kept;
// products with Lambda_A^{-1} or Lambda_B^{-1} are expanded by Woodbury.
struct ComponentPass {
  StructuredScale rowScale;  // Lambda_A
  StructuredScale colScale;  // Lambda_B
  Matrix U;                  // A' Sigma^{-1} R_i, side by side, q x Np
  Matrix V;                  // R_i Psi^{-1} B, stacked, Nn x r
  Matrix aB;                 // W_A^{-1} U = E[Y_B | X_i]
  Matrix aA;                 // V W_B^{-1} = E[Y_A | X_i]
  Vector colDots;            // columns of aB . U, length Np
  Vector rowDots;            // rows of aA . V, length Nn
  Vector logJoint;           // log pi + log phi(X_i)
};

struct EStep {
  std::vector<ComponentPass> passes;
  Matrix logJoint;  // N x G
};

// Observations per chunk: a chunk of data stays in cache while every
// component works on it.
constexpr Eigen::Index kChunk = 32;

// Per-component constants for one E-step.
struct PassSetup {
  Vector invSigma, invPsi;
  Matrix weight;   // Sigma^{-1} 1 1' Psi^{-1}, elementwise weights
  Matrix scaledA;  // Sigma^{-1} A
  Matrix scaledB;  // Psi^{-1} B
  Matrix offsetU;  // A' Sigma^{-1} M
  Matrix offsetV;  // M Psi^{-1} B
};

EStep computeEStep(const StackedData& s, const MixtureParams& params) {
  const Eigen::Index N = s.N, n = s.n, p = s.p;
  const std::size_t G = params.G();
  EStep e;
  e.passes.reserve(G);
  std::vector<PassSetup> setup(G);
  std::vector<Vector> trace(G, Vector(N));
  for (std::size_t g = 0; g < G; ++g) {
    const auto& comp = params.components[g];
    const Eigen::Index q = comp.colLoading.cols(), r = comp.rowLoading.cols();
    e.passes.push_back({comp.rowScale(), comp.colScale(), Matrix(q, N * p), Matrix(N * n, r),
                        Matrix(q, N * p), Matrix(N * n, r), Vector::Zero(N * p),
                        Vector::Zero(N * n), Vector()});
    auto& c = setup[g];
    c.invSigma = comp.rowNoise.cwiseInverse();
    c.invPsi = comp.colNoise.cwiseInverse();
    c.weight = c.invSigma * c.invPsi.transpose();
    c.scaledA = c.invSigma.asDiagonal() * comp.colLoading;
    c.scaledB = c.invPsi.asDiagonal() * comp.rowLoading;
    c.offsetU = c.scaledA.transpose() * comp.location;
    c.offsetV = comp.location * c.scaledB;
  }

  for (Eigen::Index i0 = 0; i0 < N; i0 += kChunk) {
    const Eigen::Index m = std::min(kChunk, N - i0);
    const auto horiz = s.horiz.middleCols(i0 * p, m * p);
    const auto vert = s.vert.middleRows(i0 * n, m * n);
    for (std::size_t g = 0; g < G; ++g) {
      const auto& comp = params.components[g];
      const auto& c = setup[g];
      auto& pass = e.passes[g];
      // tr(Sigma^{-1} R Psi^{-1} R') straight from the data.
      for (Eigen::Index i = i0; i < i0 + m; ++i) {
        trace[g][i] = ((s.horiz.middleCols(i * p, p) - comp.location).array().square() *
                       c.weight.array())
                          .sum();
      }
      if (pass.U.rows() > 0) {
        auto u = pass.U.middleCols(i0 * p, m * p);
        auto ab = pass.aB.middleCols(i0 * p, m * p);
        u.noalias() = c.scaledA.transpose() * horiz;
        for (Eigen::Index i = 0; i < m; ++i) u.middleCols(i * p, p) -= c.offsetU;
        ab.noalias() = pass.rowScale.innerInverse() * u;
        pass.colDots.segment(i0 * p, m * p) =
            (ab.array() * u.array()).colwise().sum().transpose();
        for (Eigen::Index i = i0; i < i0 + m; ++i) {
          trace[g][i] -= pass.colDots.segment(i * p, p).dot(c.invPsi);
        }
      }
      if (pass.V.cols() > 0) {
        auto v = pass.V.middleRows(i0 * n, m * n);
        auto aa = pass.aA.middleRows(i0 * n, m * n);
        v.noalias() = vert * c.scaledB;
        for (Eigen::Index i = 0; i < m; ++i) v.middleRows(i * n, n) -= c.offsetV;
        aa.noalias() = v * pass.colScale.innerInverse();
        pass.rowDots.segment(i0 * n, m * n) = (aa.array() * v.array()).rowwise().sum();
        for (Eigen::Index i = i0; i < i0 + m; ++i) {
          trace[g][i] -= pass.rowDots.segment(i * n, n).dot(c.invSigma);
        }
      }
    }
  }

  e.logJoint.resize(N, static_cast<Eigen::Index>(G));
  for (std::size_t g = 0; g < G; ++g) {
    const auto& comp = params.components[g];
    auto& pass = e.passes[g];
    const Eigen::Index q = pass.U.rows(), r = pass.V.cols();
    if (q > 0 && r > 0) {
      // + tr(W_A^{-1} C_i W_B^{-1} C_i') with C_i = A' Sigma^{-1} V_i (q x r).
      // Viewing V as n x (N r) puts C_i[:, c] in column c N + i.
      const Eigen::Map<const Matrix> vBlocks(pass.V.data(), n, N * r);
      const Matrix c = setup[g].scaledA.transpose() * vBlocks;
      const Matrix wc = pass.rowScale.innerInverse() * c;
      const Matrix& wbInv = pass.colScale.innerInverse();
      for (Eigen::Index a = 0; a < r; ++a) {
        for (Eigen::Index b = 0; b < r; ++b) {
          trace[g] += wbInv(a, b) * (wc.middleCols(a * N, N).array() *
                                     c.middleCols(b * N, N).array())
                                        .colwise()
                                        .sum()
                                        .transpose()
                                        .matrix();
        }
      }
    }
    const double constant =
        std::log(comp.weight) -
        0.5 * static_cast<double>(n * p) * std::log(2.0 * std::numbers::pi) -
        0.5 * static_cast<double>(p) * pass.rowScale.logDet() -
        0.5 * static_cast<double>(n) * pass.colScale.logDet();
    pass.logJoint = (constant - 0.5 * trace[g].array()).matrix();
    for (Eigen::Index i = 0; i < N; ++i) {
      if (std::isnan(pass.logJoint[i])) {
        throw NumericalError("NaN density for observation " + std::to_string(i));
      }
    }
    e.logJoint.col(static_cast<Eigen::Index>(g)) = pass.logJoint;
  }
  return e;
}

double logLikFromLogJoint(const Matrix& logJoint, const DataSet3D& data) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logJoint.rows(); ++i) {
    const int label = data.label(static_cast<std::size_t>(i));
    if (label > 0) {
      if (label > logJoint.cols()) {
        throw InputError("label " + std::to_string(label) + " at observation " +
                         std::to_string(i) + " exceeds G=" +
                         std::to_string(logJoint.cols()));
      }
      total += logJoint(i, label - 1);
      continue;
    }
    const double top = logJoint.row(i).maxCoeff();
    if (!std::isfinite(top)) {
      throw NumericalError("non-finite density for observation " +
                           std::to_string(i));
    }
    total += top + std::log((logJoint.row(i).array() - top).exp().sum());
  }
  return total;
}

void checkMass(double mass, std::size_t g, const MixtureDims& dims) {
  const double minimum = minComponentMass(static_cast<int>(dims.q),
                                          static_cast<int>(dims.r));
  if (!(mass >= minimum)) {
    throw EmptyComponentError("component " + std::to_string(g + 1) +
                              " has expected size " + std::to_string(mass) +
                              " below minimum " + std::to_string(minimum));
  }
}

void checkResp(const StackedData& s, const MixtureParams& params,
               const ResponsibilityMatrix& resp) {
  if (resp.rows() != s.N ||
      resp.cols() != static_cast<Eigen::Index>(params.G())) {
    throw ContractError("responsibility matrix shape does not match data/mixture");
  }
}

void checkData(const DataSet3D& data, const MixtureParams& params) {
  if (data.empty()) throw InputError("dataset is empty");
  if (data.rows() != params.dims.n || data.cols() != params.dims.p) {
    throw ContractError("data dimensions do not match mixture dimensions");
  }
}

void applyStage1(const StackedData& s, MixtureParams& params,
                 const ResponsibilityMatrix& resp) {
  checkResp(s, params, resp);
  const Vector mass = resp.mass();
  const double total = static_cast<double>(s.N);
  for (std::size_t g = 0; g < params.G(); ++g) {
    const auto gi = static_cast<Eigen::Index>(g);
    checkMass(mass[gi], g, params.dims);
    Matrix sum = Matrix::Zero(s.n, s.p);
    for (Eigen::Index i = 0; i < s.N; ++i) {
      const double z = resp.values(i, gi);
      if (z != 0.0) sum.noalias() += z * s.horiz.middleCols(i * s.p, s.p);
    }
    auto& comp = params.components[g];
    comp.weight = mass[gi] / total;
    comp.location = sum / mass[gi];
  }
}

Matrix solveSpd(const Matrix& lhs, const Matrix& rhs, const char* what) {
  Eigen::LLT<Matrix> llt(lhs);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(std::string(what) + ": moment sum not positive definite");
  }
  return llt.solve(rhs);
}

// sum_i z_i (X_i - M)^2, elementwise.
Matrix weightedSquares(const StackedData& s, const Matrix& location, const Eigen::Ref<const Vector>& z) {
  Matrix out = Matrix::Zero(s.n, s.p);
  for (Eigen::Index i = 0; i < s.N; ++i) {
    if (z[i] != 0.0) {
      out.array() += z[i] * (s.horiz.middleCols(i * s.p, s.p) - location).array().square();
    }
  }
  return out;
}

// Solves the stage's loading equations given
//   cross = sum z R Lambda^{-1} a'   and   quad = sum z diag(R Lambda^{-1} R'),
// returns (loading, noise).
std::pair<Matrix, Vector> loadingUpdate(const Matrix& cross, const Vector& quad,
                                        const Matrix& loading, const Vector& noise,
                                        const Matrix& wInv, double scale,
                                        double floor, const char* what) {
  Vector diag = quad;
  Matrix next = loading;
  if (loading.cols() > 0) {
    const Matrix scaled = noise.cwiseInverse().asDiagonal() * loading;
    Matrix moment = scale * wInv + wInv * (scaled.transpose() * cross);
    moment = 0.5 * (moment + moment.transpose()).eval();
    next = solveSpd(moment, cross.transpose(), what).transpose();
    diag -= (next.array() * cross.array()).rowwise().sum().matrix();
  }
  diag /= scale;
  return {next, diag.cwiseMax(floor)};
}

void applyStage2(const StackedData& s, MixtureParams& params,
                 const ResponsibilityMatrix& resp, const EStep& e, double floor) {
  checkResp(s, params, resp);
  const Vector mass = resp.mass();
  const Eigen::Index N = s.N, n = s.n, p = s.p, q = params.dims.q;
  for (std::size_t g = 0; g < params.G(); ++g) {
    const auto gi = static_cast<Eigen::Index>(g);
    checkMass(mass[gi], g, params.dims);
    const ComponentPass& pass = e.passes[g];
    auto& comp = params.components[g];
    const Vector z = resp.values.col(gi);
    const Vector invPsi = comp.colNoise.cwiseInverse();
    const Eigen::Index r = pass.V.cols();

    // quad = sum z diag(R Psi^{-1} R') - sum z diag(aA V').
    Vector quad = weightedSquares(s, comp.location, z) * invPsi;
    if (r > 0) quad -= Eigen::Map<const Matrix>(pass.rowDots.data(), n, N) * z;

    Matrix cross = Matrix::Zero(n, q);
    if (q > 0) {
      // sum z R Psi^{-1} aB' = H S' - M Psi^{-1} (sum z aB)'.
      Matrix weighted = pass.aB;
      for (Eigen::Index i = 0; i < N; ++i) {
        weighted.middleCols(i * p, p) *= z[i];
      }
      const Matrix zaB = Eigen::Map<const Matrix>(weighted.data(), q * p, N).rowwise().sum()
                             .reshaped(q, p);
      for (Eigen::Index i = 0; i < N; ++i) {
        weighted.middleCols(i * p, p) *= invPsi.asDiagonal();
      }
      cross.noalias() = s.horiz * weighted.transpose();
      cross.noalias() -= comp.location * invPsi.asDiagonal() * zaB.transpose();
      if (r > 0) {
        // - sum z aA (aB Psi^{-1} B)'.
        const Matrix scaledB = invPsi.asDiagonal() * comp.rowLoading;
        Matrix proj(q, r);
        for (Eigen::Index i = 0; i < N; ++i) {
          if (z[i] == 0.0) continue;
          proj.noalias() = pass.aB.middleCols(i * p, p) * scaledB;
          cross.noalias() -= z[i] * pass.aA.middleRows(i * n, n) * proj.transpose();
        }
      }
    }

    auto [loading, noise] =
        loadingUpdate(cross, quad, comp.colLoading, comp.rowNoise,
                      pass.rowScale.innerInverse(), mass[gi] * static_cast<double>(p),
                      floor, "stage 2");
    comp.colLoading = std::move(loading);
    comp.rowNoise = std::move(noise);
  }
}

void applyStage3(const StackedData& s, MixtureParams& params,
                 const ResponsibilityMatrix& resp, const EStep& e, double floor) {
  checkResp(s, params, resp);
  const Vector mass = resp.mass();
  const Eigen::Index N = s.N, n = s.n, p = s.p, r = params.dims.r;
  for (std::size_t g = 0; g < params.G(); ++g) {
    const auto gi = static_cast<Eigen::Index>(g);
    checkMass(mass[gi], g, params.dims);
    const ComponentPass& pass = e.passes[g];
    auto& comp = params.components[g];
    const Vector z = resp.values.col(gi);
    const Vector invSigma = comp.rowNoise.cwiseInverse();
    const Eigen::Index q = pass.U.rows();

    // quad = sum z diag(R' Sigma^{-1} R) - sum z diag(U' aB).
    Vector quad = weightedSquares(s, comp.location, z).transpose() * invSigma;
    if (q > 0) quad -= Eigen::Map<const Matrix>(pass.colDots.data(), p, N) * z;

    Matrix cross = Matrix::Zero(p, r);
    if (r > 0) {
      // sum z R' Sigma^{-1} aA = vert' S - M' Sigma^{-1} (sum z aA).
      Matrix weighted = pass.aA;
      for (Eigen::Index i = 0; i < N; ++i) {
        weighted.middleRows(i * n, n) *= z[i];
      }
      Matrix zaA(n, r);
      for (Eigen::Index c = 0; c < r; ++c) {
        zaA.col(c) = Eigen::Map<const Matrix>(weighted.col(c).data(), n, N).rowwise().sum();
      }
      for (Eigen::Index i = 0; i < N; ++i) {
        weighted.middleRows(i * n, n) = invSigma.asDiagonal() * weighted.middleRows(i * n, n);
      }
      cross.noalias() = s.vert.transpose() * weighted;
      cross.noalias() -= comp.location.transpose() * invSigma.asDiagonal() * zaA;
      if (q > 0) {
        // - sum z U' W_A^{-1} A' Sigma^{-1} aA = - sum z aB' (A' Sigma^{-1} aA).
        const Matrix scaledA = invSigma.asDiagonal() * comp.colLoading;
        Matrix proj(q, r);
        for (Eigen::Index i = 0; i < N; ++i) {
          if (z[i] == 0.0) continue;
          proj.noalias() = scaledA.transpose() * pass.aA.middleRows(i * n, n);
          cross.noalias() -= z[i] * pass.aB.middleCols(i * p, p).transpose() * proj;
        }
      }
    }

    auto [loading, noise] =
        loadingUpdate(cross, quad, comp.rowLoading, comp.colNoise,
                      pass.colScale.innerInverse(), mass[gi] * static_cast<double>(n),
                      floor, "stage 3");
    comp.rowLoading = std::move(loading);
    comp.colNoise = std::move(noise);
  }
}

// Runs the three stages starting from memberships implied by logJoint, which
// must correspond to params.
MixtureParams runCycle(const StackedData& s, MixtureParams params,
                       const Matrix& logJoint, double floor) {
  const DataSet3D& data = *s.data;
  applyStage1(s, params, responsibilitiesFromLogDensities(logJoint, data));

  EStep e = computeEStep(s, params);
  applyStage2(s, params, responsibilitiesFromLogDensities(e.logJoint, data), e,
              floor);

  e = computeEStep(s, params);
  applyStage3(s, params, responsibilitiesFromLogDensities(e.logJoint, data), e,
              floor);
  return params;
}

// One AECM run that can be paused after burn-in.
class AecmRun {
 public:
  AecmRun(const StackedData& s, const FitConfig& config, MixtureParams init)
      : s_(&s), config_(config), params_(std::move(init)) {
    params_.validate();
    checkData(*s.data, params_);
    logJoint_ = computeEStep(s, params_).logJoint;
    conv_.trace.push_back(logLikFromLogJoint(logJoint_, *s.data));
  }

  void burnIn() {
    while (iterations_ < config_.burnInIters && iterations_ < config_.maxIters) {
      step();
      // Two increments at rounding level: nothing left to burn in.
      const auto& t = conv_.trace;
      const double tiny = 1e-13 * std::max(1.0, std::abs(t.back()));
      if (t.size() >= 3 && std::abs(t[t.size() - 1] - t[t.size() - 2]) <= tiny &&
          std::abs(t[t.size() - 2] - t[t.size() - 3]) <= tiny) {
        converged_ = true;
        return;
      }
    }
  }

  void finish() {
    conv_.epsilon = config_.epsilonRelative * std::abs(conv_.trace.back());
    while (!converged_) {
      const AitkenDecision d = aitkenStop(conv_.trace, conv_.epsilon);
      conv_.acceleration = d.acceleration;
      conv_.asymptote = d.asymptote;
      if (d.stop) {
        converged_ = true;
        break;
      }
      if (iterations_ >= config_.maxIters) break;
      step();
    }
  }

  double logLik() const { return conv_.trace.back(); }

  FitResult result() const {
    FitResult out;
    out.params = params_;
    out.resp = responsibilitiesFromLogDensities(logJoint_, *s_->data);
    out.convergence = conv_;
    out.logLik = conv_.trace.back();
    out.converged = converged_;
    out.iterations = iterations_;
    return out;
  }

 private:
  void step() {
    params_ = runCycle(*s_, std::move(params_), logJoint_, config_.floor);
    logJoint_ = computeEStep(*s_, params_).logJoint;
    conv_.trace.push_back(logLikFromLogJoint(logJoint_, *s_->data));
    ++iterations_;
  }

  const StackedData* s_;
  FitConfig config_;
  MixtureParams params_;
  Matrix logJoint_;
  ConvergenceState conv_;
  int iterations_ = 0;
  bool converged_ = false;
};

void checkConfig(const DataSet3D& data, const FitConfig& config) {
  if (config.G < 1) throw ContractError("G must be at least 1");
  if (config.q < 0 || config.r < 0) throw ContractError("q and r must be >= 0");
  if (config.nStarts < 1) throw ContractError("nStarts must be at least 1");
  if (config.burnInIters < 1 || config.maxIters < 1) {
    throw ContractError("burnInIters and maxIters must be positive");
  }
  if (data.empty()) throw InputError("dataset is empty");
  if (config.q > 0 && config.q >= data.rows()) {
    throw ContractError("q must be smaller than n");
  }
  if (config.r > 0 && config.r >= data.cols()) {
    throw ContractError("r must be smaller than p");
  }
}

}  // namespace

AitkenDecision aitkenStop(const std::vector<double>& trace, double epsilon) {
  AitkenDecision d;
  if (trace.size() < 3) return d;
  const double l0 = trace[trace.size() - 3];
  const double l1 = trace[trace.size() - 2];
  const double l2 = trace[trace.size() - 1];
  d.asymptote = l2;
  const double previous = l1 - l0;
  if (previous == 0.0) {
    d.stop = true;
    return d;
  }
  d.acceleration = (l2 - l1) / previous;
  if (d.acceleration == 1.0) {
    d.asymptote = std::numeric_limits<double>::infinity();
    return d;
  }
  d.asymptote = l1 + (l2 - l1) / (1.0 - d.acceleration);
  const double gap = d.asymptote - l2;
  d.stop = gap > 0.0 && gap < epsilon;
  return d;
}

double minComponentMass(int q, int r) {
  return static_cast<double>(std::max({q, r, 1}) + 1);
}

double observedLogLik(const DataSet3D& data, const MixtureParams& params) {
  params.validate();
  checkData(data, params);
  const StackedData s(data);
  return logLikFromLogJoint(computeEStep(s, params).logJoint, data);
}

MixtureParams stage1Update(const DataSet3D& data, const MixtureParams& params,
                           const ResponsibilityMatrix& resp) {
  checkData(data, params);
  const StackedData s(data);
  MixtureParams out = params;
  applyStage1(s, out, resp);
  return out;
}

MixtureParams stage2Update(const DataSet3D& data, const MixtureParams& params,
                           const ResponsibilityMatrix& resp, double floor) {
  checkData(data, params);
  const StackedData s(data);
  MixtureParams out = params;
  applyStage2(s, out, resp, computeEStep(s, params), floor);
  return out;
}

MixtureParams stage3Update(const DataSet3D& data, const MixtureParams& params,
                           const ResponsibilityMatrix& resp, double floor) {
  checkData(data, params);
  const StackedData s(data);
  MixtureParams out = params;
  applyStage3(s, out, resp, computeEStep(s, params), floor);
  return out;
}

MixtureParams aecmCycle(const DataSet3D& data, const MixtureParams& params,
                        double floor) {
  params.validate();
  checkData(data, params);
  const StackedData s(data);
  return runCycle(s, params, computeEStep(s, params).logJoint, floor);
}

MixtureParams randomInit(const DataSet3D& data, const FitConfig& config,
                         int startIndex) {
  checkConfig(data, config);
  const auto N = static_cast<Eigen::Index>(data.size());
  const Eigen::Index n = data.rows(), p = data.cols();
  const Eigen::Index G = config.G;

  std::mt19937_64 rng(
      deriveSeed(config.seed, {0x1417ULL, static_cast<std::uint64_t>(startIndex)}));
  std::exponential_distribution<double> gamma1(1.0);
  std::normal_distribution<double> normal;

  ResponsibilityMatrix resp{Matrix::Zero(N, G)};
  for (Eigen::Index i = 0; i < N; ++i) {
    const int label = data.label(static_cast<std::size_t>(i));
    if (label > G) {
      throw InputError("label " + std::to_string(label) + " at observation " +
                       std::to_string(i) + " exceeds G=" + std::to_string(G));
    }
    if (label > 0) {
      resp.values(i, label - 1) = 1.0;
      continue;
    }
    double total = 0.0;
    for (Eigen::Index g = 0; g < G; ++g) {
      resp.values(i, g) = gamma1(rng);
      total += resp.values(i, g);
    }
    resp.values.row(i) /= total;
  }

  double grand = 0.0;
  for (const auto& x : data.obs) grand += x.sum();
  grand /= static_cast<double>(N * n * p);
  double spread = 0.0;
  for (const auto& x : data.obs) spread += (x.array() - grand).square().sum();
  const double sd = std::sqrt(spread / static_cast<double>(N * n * p));

  MixtureParams params;
  params.dims = {n, p, config.q, config.r};
  params.components.resize(static_cast<std::size_t>(G));
  const Vector mass = resp.mass();
  for (Eigen::Index g = 0; g < G; ++g) {
    checkMass(mass[g], static_cast<std::size_t>(g), params.dims);
    auto& comp = params.components[static_cast<std::size_t>(g)];
    comp.weight = mass[g] / static_cast<double>(N);
    Matrix sum = Matrix::Zero(n, p);
    for (Eigen::Index i = 0; i < N; ++i) {
      sum += resp.values(i, g) * data.obs[static_cast<std::size_t>(i)];
    }
    comp.location = sum / mass[g];

    Matrix sq = Matrix::Zero(n, p);
    for (Eigen::Index i = 0; i < N; ++i) {
      sq += resp.values(i, g) *
            (data.obs[static_cast<std::size_t>(i)] - comp.location).array().square().matrix();
    }
    sq /= mass[g];
    const double totalVar = std::max(sq.mean(), config.floor);
    comp.rowNoise = (sq.rowwise().mean()).cwiseMax(config.floor);
    comp.colNoise = (sq.colwise().mean().transpose() / totalVar).cwiseMax(config.floor);

    comp.colLoading.resize(n, config.q);
    for (Eigen::Index j = 0; j < comp.colLoading.size(); ++j) {
      comp.colLoading(j) = 0.1 * sd * normal(rng);
    }
    comp.rowLoading.resize(p, config.r);
    for (Eigen::Index j = 0; j < comp.rowLoading.size(); ++j) {
      comp.rowLoading(j) = 0.1 * normal(rng);
    }
  }
  // Renormalise so the weights sum to one to the last bit.
  double wsum = 0.0;
  for (const auto& c : params.components) wsum += c.weight;
  for (auto& c : params.components) c.weight /= wsum;
  return params;
}

FitResult fitOnce(const DataSet3D& data, const FitConfig& config,
                  const MixtureParams& init) {
  checkConfig(data, config);
  const StackedData s(data);
  AecmRun run(s, config, init);
  run.burnIn();
  run.finish();
  return run.result();
}

FitResult fitMultiStart(const DataSet3D& data, const FitConfig& config) {
  checkConfig(data, config);
  const StackedData s(data);
  const auto starts = static_cast<std::size_t>(config.nStarts);
  std::vector<std::optional<AecmRun>> runs(starts);
  std::vector<std::string> errors(starts);

  parallelFor(starts, [&](std::size_t k) {
    try {
      runs[k].emplace(s, config, randomInit(data, config, static_cast<int>(k)));
      runs[k]->burnIn();
    } catch (const Error& err) {
      runs[k].reset();
      errors[k] = err.what();
    }
  });

  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < starts; ++k) {
    if (runs[k]) order.push_back(k);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return runs[a]->logLik() > runs[b]->logLik();
  });

  std::vector<std::string> startErrors;
  for (std::size_t k = 0; k < starts; ++k) {
    if (!errors[k].empty()) {
      startErrors.push_back("start " + std::to_string(k) + ": " + errors[k]);
    }
  }
  for (std::size_t k : order) {
    try {
      runs[k]->finish();
      FitResult out = runs[k]->result();
      out.selectedStart = static_cast<int>(k);
      out.startErrors = startErrors;
      return out;
    } catch (const Error& err) {
      startErrors.push_back("start " + std::to_string(k) + ": " + err.what());
    }
  }
  std::string message = "all " + std::to_string(starts) + " starts failed";
  for (const auto& e : startErrors) message += "; " + e;
  throw FitError(message);
}

}  // namespace mvbfa
