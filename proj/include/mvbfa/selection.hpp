#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "mvbfa/aecm.hpp"

namespace mvbfa {

// Free parameters of a G-component model:
//   (G - 1) + G [np + (nq + n - q(q-1)/2) + (pr + p - r(r-1)/2)].
long long countParams(int G, int n, int p, int q, int r);

// Covariance parameters saved relative to an unstructured d x d scale when
// k factors are used: ((d - k)^2 - (d + k)) / 2. May be negative.
double covarianceReduction(int d, int k);

// 2 logLik - rho log N. Larger is better.
double bic(double logLik, long long rho, std::size_t N);

struct SelectionRecord {
  int G = 0, q = 0, r = 0;
  double logLik = 0.0;
  long long rho = 0;
  double bic = 0.0;
  bool ok = false;
  std::string error;  // set when the cell failed
  std::shared_ptr<const FitResult> fit;
};

struct GridSpec {
  std::vector<int> Gs;
  std::vector<int> qs;
  std::vector<int> rs;
  // Extend q (r) upward while the winner sits at the top of its range and the
  // next value still reduces the covariance parameter count.
  bool expand = true;
};

struct SelectionResult {
  SelectionRecord best;
  std::vector<SelectionRecord> records;  // every fitted cell, in (G, q, r) order
};

// Fits every cell with fitMultiStart (config supplies starts, iterations and
// seed; G, q, r are overridden per cell). Throws ContractError on an invalid
// grid and FitError if no cell succeeds.
SelectionResult gridSearch(const DataSet3D& data, const GridSpec& grid,
                           const FitConfig& config);

// True if a beats b: larger BIC, then smaller rho, then smaller (G, q, r).
bool betterRecord(const SelectionRecord& a, const SelectionRecord& b);

// One line per record: G,q,r,logLik,rho,bic,converged (with a header line).
void writeSelectionTable(std::ostream& out, const std::vector<SelectionRecord>& records);

}  // namespace mvbfa
