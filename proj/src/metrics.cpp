#include "mvbfa/metrics.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "mvbfa/errors.hpp"

namespace mvbfa {

namespace {

std::vector<int> distinct(const std::vector<int>& v) {
  std::vector<int> out(v);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

int indexOf(const std::vector<int>& sorted, int value) {
  return static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), value) -
                          sorted.begin());
}

__int128 pairs(long long k) { return static_cast<__int128>(k) * (k - 1) / 2; }

}  // namespace

ConfusionTable confusion(const std::vector<int>& truth,
                         const std::vector<int>& predicted) {
  if (truth.size() != predicted.size()) {
    throw InputError("label vectors differ in length: " +
                     std::to_string(truth.size()) + " vs " +
                     std::to_string(predicted.size()));
  }
  ConfusionTable t;
  t.truthLabels = distinct(truth);
  t.predictedLabels = distinct(predicted);
  t.counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(t.truthLabels.size()),
                                   static_cast<Eigen::Index>(t.predictedLabels.size()));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++t.counts(indexOf(t.truthLabels, truth[i]),
               indexOf(t.predictedLabels, predicted[i]));
  }
  return t;
}

double ari(const std::vector<int>& truth, const std::vector<int>& predicted) {
  const ConfusionTable t = confusion(truth, predicted);
  const auto n = static_cast<long long>(truth.size());
  if (n < 2) throw InputError("ARI needs at least two observations");

  __int128 index = 0, rowPairs = 0, colPairs = 0;
  for (Eigen::Index i = 0; i < t.counts.rows(); ++i) {
    rowPairs += pairs(t.counts.row(i).sum());
    for (Eigen::Index j = 0; j < t.counts.cols(); ++j) index += pairs(t.counts(i, j));
  }
  for (Eigen::Index j = 0; j < t.counts.cols(); ++j) colPairs += pairs(t.counts.col(j).sum());
  const __int128 total = pairs(n);

  // ARI = (index - E) / (max - E) with E = rowPairs colPairs / total and
  // max = (rowPairs + colPairs) / 2; scaled by 2 total to stay integral.
  const __int128 numerator = 2 * (index * total - rowPairs * colPairs);
  const __int128 denominator = (rowPairs + colPairs) * total - 2 * rowPairs * colPairs;
  if (denominator == 0) {
    // Both partitions trivial (all one class, or all singletons).
    return numerator == 0 ? 1.0 : 0.0;
  }
  return static_cast<double>(static_cast<long double>(numerator) /
                             static_cast<long double>(denominator));
}

double mcr(const std::vector<int>& truth, const std::vector<int>& predicted) {
  const ConfusionTable t = confusion(truth, predicted);
  if (truth.empty()) return 0.0;
  const Eigen::MatrixXd cost = -t.counts.cast<double>();
  const std::vector<int> match = minCostAssignment(cost);
  long long correct = 0;
  for (std::size_t i = 0; i < match.size(); ++i) {
    if (match[i] >= 0) correct += t.counts(static_cast<Eigen::Index>(i), match[i]);
  }
  return 1.0 - static_cast<double>(correct) / static_cast<double>(truth.size());
}

double matOneNorm(const Eigen::MatrixXd& w) {
  if (w.size() == 0) return 0.0;
  return w.cwiseAbs().colwise().sum().maxCoeff();
}

std::vector<int> minCostAssignment(const Eigen::MatrixXd& cost) {
  const auto rows = static_cast<int>(cost.rows());
  const auto cols = static_cast<int>(cost.cols());
  const int size = std::max(rows, cols);
  if (size == 0) return {};
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(size, size);
  a.topLeftCorner(rows, cols) = cost;

  // Potentials-based O(n^3) Hungarian method, 1-based internally.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(size + 1, 0.0), v(size + 1, 0.0);
  std::vector<int> match(size + 1, 0), way(size + 1, 0);
  for (int i = 1; i <= size; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(size + 1, inf);
    std::vector<char> used(size + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= size; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= size; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> out(static_cast<std::size_t>(rows), -1);
  for (int j = 1; j <= size; ++j) {
    const int i = match[j];
    if (i >= 1 && i <= rows && j <= cols) out[static_cast<std::size_t>(i - 1)] = j - 1;
  }
  return out;
}

}  // namespace mvbfa
