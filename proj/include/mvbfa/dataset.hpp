#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace mvbfa {

// N observations, each an n x p matrix, with optional class labels.
// labels is either empty (no label information) or has one entry per
// observation: 0 means unlabeled, 1..G a known class.
struct DataSet3D {
  std::vector<Eigen::MatrixXd> obs;
  std::vector<int> labels;

  std::size_t size() const { return obs.size(); }
  bool empty() const { return obs.empty(); }
  Eigen::Index rows() const { return obs.empty() ? 0 : obs.front().rows(); }
  Eigen::Index cols() const { return obs.empty() ? 0 : obs.front().cols(); }

  bool hasLabels() const { return !labels.empty(); }
  int label(std::size_t i) const { return labels.empty() ? 0 : labels[i]; }
  std::size_t labeledCount() const;

  // Throws SchemaError on ragged dimensions or a label vector of the wrong
  // length, InputError on non-finite entries or negative labels.
  void validate() const;

  // Every observation transposed; labels kept.
  DataSet3D transposed() const;
};

}  // namespace mvbfa
