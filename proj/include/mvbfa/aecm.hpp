#pragma once

// Three-stage AECM fitting of the bilinear factor mixture.
//
// One cycle:
//   E(z)            -> stage 1: pi, M
//   E(z, Y_B)       -> stage 2: A, Sigma   (Lambda_B held fixed)
//   E(z, Y_A)       -> stage 3: B, Psi     (Lambda_A held fixed)
// Memberships are refreshed before every stage with the newest parameters.
// Labeled observations keep one-hot memberships throughout.

#include <cstdint>
#include <string>
#include <vector>

#include "mvbfa/dataset.hpp"
#include "mvbfa/model.hpp"

namespace mvbfa {

struct FitConfig {
  int G = 1;
  int q = 0;
  int r = 0;
  int nStarts = 10;
  int burnInIters = 10;
  int maxIters = 1000;
  // Stopping threshold is epsilonRelative * |log-likelihood after burn-in|.
  double epsilonRelative = 1e-4;
  std::uint64_t seed = 0;
  double floor = kVarianceFloor;
};

struct AitkenDecision {
  bool stop = false;
  double acceleration = 0.0;
  double asymptote = 0.0;
};

struct ConvergenceState {
  std::vector<double> trace;  // observed log-likelihood, one entry per cycle
                              // plus the initial value
  double acceleration = 0.0;
  double asymptote = 0.0;
  double epsilon = 0.0;
};

struct FitResult {
  MixtureParams params;
  ResponsibilityMatrix resp;
  ConvergenceState convergence;
  double logLik = 0.0;
  bool converged = false;
  int iterations = 0;                    // completed AECM cycles
  int selectedStart = 0;                 // 0-based emEM start that survived
  std::vector<std::string> startErrors;  // one entry per failed start
};

// Aitken stopping rule on the last three entries of trace. Fewer than three
// entries: continue. Zero previous increment: stop (plateau). Otherwise stop
// iff l_inf - l_last lies in (0, epsilon).
AitkenDecision aitkenStop(const std::vector<double>& trace, double epsilon);

// Observed log-likelihood. Unlabeled observations contribute
// log sum_g pi_g phi_g, labeled ones log(pi_l phi_l).
double observedLogLik(const DataSet3D& data, const MixtureParams& params);

// Minimum expected number of observations per component.
double minComponentMass(int q, int r);

// Individual CM steps with memberships supplied by the caller. Each returns a
// copy of params with the stage's parameters replaced. Stage 2 and 3 use the
// location already in params. Throw EmptyComponentError when a component's
// mass is below minComponentMass, NumericalError on singular moment sums.
MixtureParams stage1Update(const DataSet3D& data, const MixtureParams& params,
                           const ResponsibilityMatrix& resp);
MixtureParams stage2Update(const DataSet3D& data, const MixtureParams& params,
                           const ResponsibilityMatrix& resp,
                           double floor = kVarianceFloor);
MixtureParams stage3Update(const DataSet3D& data, const MixtureParams& params,
                           const ResponsibilityMatrix& resp,
                           double floor = kVarianceFloor);

// One full cycle (three E-steps, three CM-steps) from params.
MixtureParams aecmCycle(const DataSet3D& data, const MixtureParams& params,
                        double floor = kVarianceFloor);

// Random starting parameters for start number startIndex: flat Dirichlet
// memberships (one-hot for labeled rows), one stage-1 pass, loadings drawn
// N(0, 0.01 s^2) for A and N(0, 0.01) for B where s is the data standard
// deviation, noise diagonals from row and column residual variances.
MixtureParams randomInit(const DataSet3D& data, const FitConfig& config,
                         int startIndex);

// Runs burnInIters cycles (fewer once two successive increments are at
// rounding level), fixes epsilon from the log-likelihood reached,
// then continues until the Aitken rule stops or maxIters cycles have run.
// Throws on degeneracy (EmptyComponentError / NumericalError).
FitResult fitOnce(const DataSet3D& data, const FitConfig& config,
                  const MixtureParams& init);

// emEM: nStarts random starts, each run for burnInIters cycles; the best
// survivor continues to convergence. Throws FitError if every start fails.
FitResult fitMultiStart(const DataSet3D& data, const FitConfig& config);

}  // namespace mvbfa
