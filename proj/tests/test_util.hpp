#pragma once

#include <random>

#include "sketchtd/types.hpp"

namespace testutil {

using sketchtd::Matrix;
using sketchtd::Vector;

inline Matrix random_orthogonal(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  return q;
}

// PSD matrix with a controlled spectrum: eigenvalues uniform in
// [lo, hi], with `num_zero` of them set to exactly zero.
inline Matrix random_psd(int n, double lo, double hi, int num_zero, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(lo, hi);
  Vector eig(n);
  for (int i = 0; i < n; ++i) eig(i) = i < num_zero ? 0.0 : unif(rng);
  Matrix q = random_orthogonal(n, rng);
  return q * eig.asDiagonal() * q.transpose();
}

inline Matrix random_gaussian(int rows, int cols, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix g(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) g(i, j) = normal(rng);
  return g;
}

inline Vector random_vector(int n, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

}  // namespace testutil
