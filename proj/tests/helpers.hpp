#pragma once

#include <initializer_list>
#include <string>
#include <vector>

#include "detdisc/core.hpp"

namespace testutil {

inline Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

inline detdisc::Region region(Eigen::VectorXd feature, detdisc::Box box = {0, 0, 1, 1}) {
  detdisc::Region r;
  r.feature = std::move(feature);
  r.box = box;
  return r;
}

// Model with identity representation and the given detectors (dim+1 each).
inline detdisc::Model identity_model(int dim) {
  detdisc::Model m;
  m.repr.input_dim = dim;
  m.repr.output_dim = dim;
  return m;
}

// Detector vector from weights plus trailing bias.
inline Eigen::VectorXd detector(std::initializer_list<double> w, double bias = 0.0) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(w.size()) + 1);
  Eigen::Index i = 0;
  for (double x : w) v(i++) = x;
  v(i) = bias;
  return v;
}

}  // namespace testutil
