#include <catch2/catch_amalgamated.hpp>

#include "sketchtd/sketch.hpp"
#include "test_util.hpp"

using namespace sketchtd;
using namespace sketchtd::sketch;
using testutil::random_vector;

namespace {

SparseEntries to_entries(const Vector& x) {
  SparseEntries e;
  for (int i = 0; i < x.size(); ++i)
    if (x(i) != 0.0) e.emplace_back(i, x(i));
  return e;
}

const Family kFamilies[] = {Family::gaussian, Family::count, Family::combined,
                            Family::hadamard};

}  // namespace

TEST_CASE("sample_sketch validates dimensions") {
  REQUIRE_THROWS_AS(sample_sketch({Family::gaussian, 0, 4, 1}), UnsupportedDim);
  REQUIRE_THROWS_AS(sample_sketch({Family::count, 5, 4, 1}), UnsupportedDim);
  REQUIRE_NOTHROW(sample_sketch({Family::hadamard, 4, 4, 1}));
}

TEST_CASE("sample_sketch is deterministic in the spec") {
  for (Family f : kFamilies) {
    SketchSpec spec{f, 5, 17, 99};
    Matrix a = sample_sketch(spec).materialize();
    Matrix b = sample_sketch(spec).materialize();
    REQUIRE((a - b).norm() == 0.0);
    spec.seed = 100;
    Matrix c = sample_sketch(spec).materialize();
    REQUIRE((a - c).norm() > 0.0);
  }
}

TEST_CASE("apply and apply_sparse match the materialized matrix") {
  std::mt19937_64 rng(7);
  for (Family f : kFamilies) {
    SketchSpec spec{f, 6, 29, 1234};
    SketchMatrix s = sample_sketch(spec);
    Matrix dense = s.materialize();
    REQUIRE(dense.rows() == 6);
    REQUIRE(dense.cols() == 29);
    for (int t = 0; t < 5; ++t) {
      Vector x = random_vector(29, rng);
      // Mix in hard zeros so the sparse path skips entries.
      for (int j = 0; j < 29; j += 3) x(j) = 0.0;
      Vector want = dense * x;
      REQUIRE((s.apply(x) - want).norm() < 1e-12);
      REQUIRE((s.apply_sparse(to_entries(x)) - want).norm() < 1e-12);
    }
  }
}

TEST_CASE("gaussian entries have variance 1/k") {
  SketchSpec spec{Family::gaussian, 2, 4, 5};
  const int resamples = 100000;
  Matrix sum = Matrix::Zero(2, 4);
  Matrix sumsq = Matrix::Zero(2, 4);
  for (int t = 0; t < resamples; ++t) {
    SketchSpec st = spec;
    st.seed = derive_seed(spec.seed, Stream::sketch, static_cast<std::uint64_t>(t));
    Matrix s = sample_sketch(st).materialize();
    sum += s;
    sumsq += s.cwiseProduct(s);
  }
  Matrix mean = sum / resamples;
  Matrix var = sumsq / resamples - mean.cwiseProduct(mean);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) {
      REQUIRE(var(i, j) > 0.45);
      REQUIRE(var(i, j) < 0.55);
    }
}

TEST_CASE("count sketch has one signed entry per column with uniform rows") {
  const int k = 10, d = 100000;
  Matrix s = sample_sketch({Family::count, k, d, 21}).materialize();
  std::vector<long> row_counts(k, 0);
  long plus = 0, minus = 0;
  for (int j = 0; j < d; ++j) {
    int nnz = 0;
    for (int i = 0; i < k; ++i) {
      const double e = s(i, j);
      if (e == 0.0) continue;
      REQUIRE((e == 1.0 || e == -1.0));
      ++nnz;
      ++row_counts[i];
      (e > 0 ? plus : minus) += 1;
    }
    REQUIRE(nnz == 1);
  }
  // Chi-square goodness of fit against uniform row placement; 21.67 is the
  // 99th percentile with 9 degrees of freedom.
  const double expected = static_cast<double>(d) / k;
  double chi2 = 0.0;
  for (long c : row_counts) {
    const double diff = c - expected;
    chi2 += diff * diff / expected;
  }
  REQUIRE(chi2 < 21.67);
  REQUIRE(std::abs(plus - minus) < 4 * std::sqrt(double(d)));
}

TEST_CASE("hadamard sketch with k equal to the padded dim is orthogonal") {
  SketchMatrix s = sample_sketch({Family::hadamard, 8, 8, 3});
  Matrix dense = s.materialize();
  REQUIRE((dense * dense.transpose() - Matrix::Identity(8, 8)).norm() < 1e-12);
  REQUIRE((dense.transpose() * dense - Matrix::Identity(8, 8)).norm() < 1e-12);
}

TEST_CASE("identity_sketch is the identity") {
  SketchMatrix s = identity_sketch(6);
  REQUIRE((s.materialize() - Matrix::Identity(6, 6)).norm() == 0.0);
  std::mt19937_64 rng(3);
  Vector x = random_vector(6, rng);
  REQUIRE((s.apply(x) - x).norm() == 0.0);
}

TEST_CASE("mean of S^T S approaches the identity for every family") {
  for (Family f : kFamilies) {
    SketchSpec spec{f, 25, 50, 2026};
    const double dev = max_identity_deviation(spec, 10000);
    INFO(to_string(f));
    REQUIRE(dev < 0.05);
  }
}

TEST_CASE("gaussian sketches preserve norms at moderate distortion") {
  SketchSpec spec{Family::gaussian, 50, 1024, 11};
  const double frac = estimate_jl_distortion(spec, 100, 100, 0.5);
  REQUIRE(frac >= 0.9);
}

TEST_CASE("row_rank_statistics: full row rank is generic when rank(A) >= k") {
  std::mt19937_64 rng(88);
  const int d = 50;
  Matrix a = testutil::random_psd(d, 0.5, 2.0, d - 30, rng);
  SketchSpec spec{Family::gaussian, 10, d, 17};
  REQUIRE(row_rank_statistics(spec, a, 300, 1e-8) >= 0.99);
}

TEST_CASE("row_rank_statistics: rank collapse when rank(A) < k") {
  std::mt19937_64 rng(89);
  const int d = 30;
  Matrix a = testutil::random_psd(d, 0.5, 2.0, d - 4, rng);
  SketchSpec spec{Family::gaussian, 10, d, 17};
  REQUIRE(row_rank_statistics(spec, a, 50, 1e-8) == 0.0);
}
