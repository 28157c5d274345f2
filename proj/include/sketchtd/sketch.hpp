#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sketchtd/errors.hpp"
#include "sketchtd/rng.hpp"
#include "sketchtd/types.hpp"

namespace sketchtd::sketch {

// All families are sampled so that E[S^T S] = I, which keeps sketched inner
// products unbiased.
enum class Family { gaussian, count, combined, hadamard };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::count: return "count";
    case Family::combined: return "combined";
    case Family::hadamard: return "hadamard";
  }
  throw InvalidSpec("unknown sketch family");
}

inline Family family_from_string(const std::string& s) {
  if (s == "gaussian") return Family::gaussian;
  if (s == "count") return Family::count;
  if (s == "combined") return Family::combined;
  if (s == "hadamard") return Family::hadamard;
  throw InvalidSpec("unknown sketch family: " + s);
}

struct SketchSpec {
  Family family = Family::gaussian;
  int k = 0;
  int d = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (k < 1 || d < 1 || k > d)
      throw UnsupportedDim("sketch requires 1 <= k <= d, got k=" + std::to_string(k) +
                           " d=" + std::to_string(d));
  }
};

namespace detail {

// Dense i.i.d. N(0, 1/k) entries.
struct GaussianRep {
  Matrix dense;  // k x d
};

// One nonzero per column: row index uniform, sign +-1.
struct CountRep {
  std::vector<int> row;      // d
  std::vector<double> sign;  // d
};

// Gaussian (k x k_inner) composed with a count sketch (k_inner x d).
struct CombinedRep {
  CountRep inner;
  int k_inner = 0;
  Matrix outer;  // k x k_inner
};

// Subsampled randomized Hadamard transform with zero-padding to the next
// power of two. Row i of S is (1/sqrt(k)) * H(rows[i], :) .* sign.
struct HadamardRep {
  std::vector<double> sign;  // d
  std::vector<int> rows;     // k, sampled without replacement from [0, padded_dim)
  int padded_dim = 0;
};

// In-place unnormalized fast Walsh-Hadamard transform; size must be a power
// of two.
inline void fwht(Vector& z) {
  const auto n = z.size();
  for (Eigen::Index len = 1; len < n; len <<= 1)
    for (Eigen::Index i = 0; i < n; i += len << 1)
      for (Eigen::Index j = i; j < i + len; ++j) {
        const double a = z(j);
        const double b = z(j + len);
        z(j) = a + b;
        z(j + len) = a - b;
      }
}

inline int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace detail

class SketchMatrix {
 public:
  using Rep = std::variant<detail::GaussianRep, detail::CountRep, detail::CombinedRep,
                           detail::HadamardRep>;

  SketchMatrix(SketchSpec spec, Rep rep) : spec_(spec), rep_(std::move(rep)) {}

  const SketchSpec& spec() const { return spec_; }
  int k() const { return spec_.k; }
  int d() const { return spec_.d; }

  // y = S x for dense x. Gaussian costs O(dk); count O(d); combined
  // O(d + k k'); hadamard O(d' log d').
  Vector apply(const Vector& x) const {
    if (x.size() != spec_.d) throw DimensionMismatch("sketch apply: x has wrong length");
    return std::visit([&](const auto& rep) { return apply_impl(rep, x); }, rep_);
  }

  // y = S x for sparse x given as (index, value) pairs. Count and combined
  // touch only the nonzeros.
  Vector apply_sparse(const SparseEntries& entries) const {
    return std::visit([&](const auto& rep) { return apply_sparse_impl(rep, entries); }, rep_);
  }

  // Explicit k x d matrix; intended for oracles, debugging dumps, and the
  // dense gaussian path, not for per-step use of the structured families.
  Matrix materialize() const {
    return std::visit([&](const auto& rep) { return materialize_impl(rep); }, rep_);
  }

 private:
  Vector apply_impl(const detail::GaussianRep& rep, const Vector& x) const {
    return rep.dense * x;
  }

  Vector apply_impl(const detail::CountRep& rep, const Vector& x) const {
    Vector y = Vector::Zero(spec_.k);
    for (int j = 0; j < spec_.d; ++j) y(rep.row[j]) += rep.sign[j] * x(j);
    return y;
  }

  Vector apply_impl(const detail::CombinedRep& rep, const Vector& x) const {
    Vector inner = Vector::Zero(rep.k_inner);
    for (int j = 0; j < spec_.d; ++j) inner(rep.inner.row[j]) += rep.inner.sign[j] * x(j);
    return rep.outer * inner;
  }

  Vector apply_impl(const detail::HadamardRep& rep, const Vector& x) const {
    Vector z = Vector::Zero(rep.padded_dim);
    for (int j = 0; j < spec_.d; ++j) z(j) = rep.sign[j] * x(j);
    detail::fwht(z);
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec_.k));
    Vector y(spec_.k);
    for (int i = 0; i < spec_.k; ++i) y(i) = scale * z(rep.rows[i]);
    return y;
  }

  Vector apply_sparse_impl(const detail::GaussianRep& rep, const SparseEntries& entries) const {
    Vector y = Vector::Zero(spec_.k);
    for (const auto& [j, val] : entries) y.noalias() += val * rep.dense.col(j);
    return y;
  }

  Vector apply_sparse_impl(const detail::CountRep& rep, const SparseEntries& entries) const {
    Vector y = Vector::Zero(spec_.k);
    for (const auto& [j, val] : entries) y(rep.row[j]) += rep.sign[j] * val;
    return y;
  }

  Vector apply_sparse_impl(const detail::CombinedRep& rep, const SparseEntries& entries) const {
    Vector inner = Vector::Zero(rep.k_inner);
    for (const auto& [j, val] : entries) inner(rep.inner.row[j]) += rep.inner.sign[j] * val;
    return rep.outer * inner;
  }

  Vector apply_sparse_impl(const detail::HadamardRep& rep, const SparseEntries& entries) const {
    Vector z = Vector::Zero(rep.padded_dim);
    for (const auto& [j, val] : entries) z(j) += rep.sign[j] * val;
    detail::fwht(z);
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec_.k));
    Vector y(spec_.k);
    for (int i = 0; i < spec_.k; ++i) y(i) = scale * z(rep.rows[i]);
    return y;
  }

  Matrix materialize_impl(const detail::GaussianRep& rep) const { return rep.dense; }

  Matrix materialize_impl(const detail::CountRep& rep) const {
    Matrix s = Matrix::Zero(spec_.k, spec_.d);
    for (int j = 0; j < spec_.d; ++j) s(rep.row[j], j) = rep.sign[j];
    return s;
  }

  Matrix materialize_impl(const detail::CombinedRep& rep) const {
    Matrix inner = Matrix::Zero(rep.k_inner, spec_.d);
    for (int j = 0; j < spec_.d; ++j) inner(rep.inner.row[j], j) = rep.inner.sign[j];
    return rep.outer * inner;
  }

  Matrix materialize_impl(const detail::HadamardRep& rep) const {
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec_.k));
    Matrix s(spec_.k, spec_.d);
    for (int i = 0; i < spec_.k; ++i) {
      const int r = rep.rows[i];
      for (int j = 0; j < spec_.d; ++j) {
        // H entry (r, j) = (-1)^popcount(r & j).
        const int bits = __builtin_popcount(static_cast<unsigned>(r) & static_cast<unsigned>(j));
        const double h = (bits & 1) ? -1.0 : 1.0;
        s(i, j) = scale * h * rep.sign[j];
      }
    }
    return s;
  }

  SketchSpec spec_;
  Rep rep_;
};

namespace detail {

inline CountRep sample_count(int k, int d, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick_row(0, k - 1);
  std::uniform_int_distribution<int> pick_sign(0, 1);
  CountRep rep;
  rep.row.resize(d);
  rep.sign.resize(d);
  for (int j = 0; j < d; ++j) {
    rep.row[j] = pick_row(rng);
    rep.sign[j] = pick_sign(rng) == 0 ? 1.0 : -1.0;
  }
  return rep;
}

inline Matrix sample_gaussian_block(int rows, int cols, double variance, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(variance));
  Matrix g(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) g(i, j) = normal(rng);
  return g;
}

}  // namespace detail

// Draws a sketch matrix. Deterministic in the spec (seed included); two calls
// with the same spec produce identical sketches.
inline SketchMatrix sample_sketch(const SketchSpec& spec) {
  spec.validate();
  std::mt19937_64 rng = make_rng(spec.seed, Stream::sketch,
                                 static_cast<std::uint64_t>(spec.family));
  switch (spec.family) {
    case Family::gaussian: {
      detail::GaussianRep rep{detail::sample_gaussian_block(spec.k, spec.d, 1.0 / spec.k, rng)};
      return SketchMatrix(spec, std::move(rep));
    }
    case Family::count:
      return SketchMatrix(spec, detail::sample_count(spec.k, spec.d, rng));
    case Family::combined: {
      detail::CombinedRep rep;
      rep.k_inner = std::min(spec.d, 4 * spec.k);
      rep.inner = detail::sample_count(rep.k_inner, spec.d, rng);
      rep.outer = detail::sample_gaussian_block(spec.k, rep.k_inner, 1.0 / spec.k, rng);
      return SketchMatrix(spec, std::move(rep));
    }
    case Family::hadamard: {
      detail::HadamardRep rep;
      rep.padded_dim = detail::next_pow2(spec.d);
      std::uniform_int_distribution<int> pick_sign(0, 1);
      rep.sign.resize(spec.d);
      for (int j = 0; j < spec.d; ++j) rep.sign[j] = pick_sign(rng) == 0 ? 1.0 : -1.0;
      std::vector<int> pool(rep.padded_dim);
      std::iota(pool.begin(), pool.end(), 0);
      rep.rows.resize(spec.k);
      for (int i = 0; i < spec.k; ++i) {
        std::uniform_int_distribution<int> pick(i, rep.padded_dim - 1);
        std::swap(pool[i], pool[pick(rng)]);
        rep.rows[i] = pool[i];
      }
      return SketchMatrix(spec, std::move(rep));
    }
  }
  throw InvalidSpec("unknown sketch family");
}

// Degenerate k = d sketch equal to the identity; useful for reducing sketched
// learners to their unsketched counterparts.
inline SketchMatrix identity_sketch(int d) {
  SketchSpec spec{Family::count, d, d, 0};
  detail::CountRep rep;
  rep.row.resize(d);
  rep.sign.assign(d, 1.0);
  std::iota(rep.row.begin(), rep.row.end(), 0);
  return SketchMatrix(spec, std::move(rep));
}

// Fraction of sketch-vector pairs whose squared norm is preserved to within
// a factor of 1 +- eps. Vectors are random unit vectors; sketches are
// resampled with seeds derived from spec.seed.
inline double estimate_jl_distortion(const SketchSpec& spec, int num_sketches,
                                     int num_vectors, double eps) {
  spec.validate();
  if (num_sketches < 1 || num_vectors < 1 || !(eps > 0.0))
    throw InvalidSpec("estimate_jl_distortion: bad arguments");
  std::mt19937_64 vec_rng = make_rng(spec.seed, Stream::probe);
  std::normal_distribution<double> normal(0.0, 1.0);
  long hits = 0;
  for (int si = 0; si < num_sketches; ++si) {
    SketchSpec resampled = spec;
    resampled.seed = derive_seed(spec.seed, Stream::sketch, static_cast<std::uint64_t>(si));
    SketchMatrix s = sample_sketch(resampled);
    for (int vi = 0; vi < num_vectors; ++vi) {
      Vector x(spec.d);
      for (int j = 0; j < spec.d; ++j) x(j) = normal(vec_rng);
      x /= x.norm();
      const double sq = s.apply(x).squaredNorm();
      if (sq >= 1.0 - eps && sq <= 1.0 + eps) ++hits;
    }
  }
  return static_cast<double>(hits) / (static_cast<double>(num_sketches) * num_vectors);
}

// Fraction of resampled sketches for which S * A keeps full row rank,
// measured as sigma_min(S A) > sigma_tol.
inline double row_rank_statistics(const SketchSpec& spec, const Matrix& a, int num_trials,
                                  double sigma_tol) {
  spec.validate();
  if (a.rows() != spec.d || a.cols() != spec.d)
    throw DimensionMismatch("row_rank_statistics: A must be d x d");
  if (num_trials < 1) throw InvalidSpec("row_rank_statistics: need at least one trial");
  int full = 0;
  for (int t = 0; t < num_trials; ++t) {
    SketchSpec resampled = spec;
    resampled.seed = derive_seed(spec.seed, Stream::sketch, static_cast<std::uint64_t>(t));
    SketchMatrix s = sample_sketch(resampled);
    Matrix sa = s.materialize() * a;
    Eigen::JacobiSVD<Matrix> dec(sa);
    if (dec.singularValues().minCoeff() > sigma_tol) ++full;
  }
  return static_cast<double>(full) / num_trials;
}

// Max absolute entrywise deviation of the empirical mean of S^T S from the
// identity, over num_samples independent sketches.
inline double max_identity_deviation(const SketchSpec& spec, int num_samples) {
  spec.validate();
  if (num_samples < 1) throw InvalidSpec("max_identity_deviation: need samples");
  Matrix acc = Matrix::Zero(spec.d, spec.d);
  for (int t = 0; t < num_samples; ++t) {
    SketchSpec resampled = spec;
    resampled.seed = derive_seed(spec.seed, Stream::sketch, static_cast<std::uint64_t>(t));
    Matrix s = sample_sketch(resampled).materialize();
    acc.noalias() += s.transpose() * s;
  }
  acc /= static_cast<double>(num_samples);
  return (acc - Matrix::Identity(spec.d, spec.d)).cwiseAbs().maxCoeff();
}

}  // namespace sketchtd::sketch
