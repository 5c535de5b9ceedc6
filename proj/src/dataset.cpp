#include "mvbfa/dataset.hpp"

#include <algorithm>
#include <string>

#include "mvbfa/errors.hpp"

namespace mvbfa {

std::size_t DataSet3D::labeledCount() const {
  return static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](int l) { return l > 0; }));
}

void DataSet3D::validate() const {
  if (!labels.empty() && labels.size() != obs.size()) {
    throw SchemaError("dataset has " + std::to_string(obs.size()) +
                      " observations but " + std::to_string(labels.size()) +
                      " labels");
  }
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i].rows() != rows() || obs[i].cols() != cols()) {
      throw SchemaError("observation " + std::to_string(i) + " is " +
                        std::to_string(obs[i].rows()) + "x" +
                        std::to_string(obs[i].cols()) + ", expected " +
                        std::to_string(rows()) + "x" + std::to_string(cols()));
    }
    if (!obs[i].allFinite()) {
      throw InputError("observation " + std::to_string(i) +
                       " has non-finite entries");
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) {
      throw InputError("negative label at observation " + std::to_string(i));
    }
  }
}

DataSet3D DataSet3D::transposed() const {
  DataSet3D out;
  out.labels = labels;
  out.obs.reserve(obs.size());
  for (const auto& x : obs) out.obs.push_back(x.transpose());
  return out;
}

}  // namespace mvbfa
