#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "sketchtd/errors.hpp"

namespace sketchtd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Sparse vector as (index, value) pairs; indices nondecreasing when produced
// by the feature encoders, and consumers accumulate repeated indices.
using SparseEntries = std::vector<std::pair<int, double>>;

template <class Derived>
inline void check_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw InvalidSpec(std::string(what) + ": non-finite entries");
}

inline void check_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw InvalidSpec(std::string(what) + ": non-finite value");
}

}  // namespace sketchtd
