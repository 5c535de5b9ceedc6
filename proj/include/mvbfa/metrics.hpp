#pragma once

#include <Eigen/Core>

#include <vector>

namespace mvbfa {

struct ConfusionTable {
  std::vector<int> truthLabels;      // sorted distinct labels, table rows
  std::vector<int> predictedLabels;  // sorted distinct labels, table columns
  Eigen::MatrixXi counts;
};

// Contingency counts truth x predicted. Throws InputError on length mismatch.
ConfusionTable confusion(const std::vector<int>& truth,
                         const std::vector<int>& predicted);

// Adjusted Rand index (Hubert-Arabie). Needs at least two observations.
double ari(const std::vector<int>& truth, const std::vector<int>& predicted);

// Misclassification rate under the best one-to-one matching of predicted to
// true labels. Unmatched labels count as errors.
double mcr(const std::vector<int>& truth, const std::vector<int>& predicted);

// max_j sum_i |w_ij|.
double matOneNorm(const Eigen::MatrixXd& w);

// Minimum-cost assignment (Hungarian algorithm). Returns, for each row, the
// matched column, or -1 when there are more rows than columns and the row is
// left unmatched.
std::vector<int> minCostAssignment(const Eigen::MatrixXd& cost);

}  // namespace mvbfa
