#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sketchtd/agents.hpp"
#include "sketchtd/envs.hpp"
#include "sketchtd/errors.hpp"
#include "sketchtd/linalg.hpp"
#include "sketchtd/sketch.hpp"

namespace sketchtd::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  std::string detail;
};

struct VerifyOptions {
  std::string only;              // empty runs every check
  std::uint64_t seed = 1234;
  bool inject_sm_fault = false;  // negative-test hook: corrupts the rank-1 inverse update
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(3);
  ss << v;
  return ss.str();
}

inline Vector random_normal(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

inline Matrix random_orthogonal(int n, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(n, n, rng));
  return qr.householderQ() * Matrix::Identity(n, n);
}

}  // namespace detail

// A running inverse maintained through a chain of rank-1 updates must track
// the directly inverted matrix. The fault hook applies each correction with
// the wrong sign, which this check must catch.
inline CheckResult check_rank1_inverse(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed ^ 0x51u);
  const int d = 12;
  Matrix m = detail::random_matrix(d, d, rng, 0.5);
  m.diagonal().array() += 6.0;
  Matrix inv = m.inverse();
  double worst = 0.0;
  for (int t = 0; t < 30; ++t) {
    const Vector u = detail::random_normal(d, rng, 0.3);
    const Vector v = detail::random_normal(d, rng, 0.3);
    if (o.inject_sm_fault) {
      const Matrix prev = inv;
      linalg::sherman_morrison_in_place(inv, u, v);
      inv = 2.0 * prev - inv;
    } else {
      linalg::sherman_morrison_in_place(inv, u, v);
    }
    m.noalias() += u * v.transpose();
    worst = std::max(worst, (inv * m - Matrix::Identity(d, d)).cwiseAbs().maxCoeff());
  }
  return {"rank1-inverse", worst < 1e-8, 0.0,
          "max |inv*M - I| = " + detail::fmt(worst) + " over 30 updates"};
}

// min_norm_solve must return a feasible point, agree with the pseudo-inverse
// solution (the shortest feasible point), and match the ridge-regularized
// normal equations when ridge > 0.
inline CheckResult check_min_norm(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed ^ 0x52u);
  const int k = 8, d = 24;
  const Matrix atil = detail::random_matrix(k, d, rng);
  const Vector btil = detail::random_normal(k, rng);

  const Vector w = linalg::min_norm_solve(atil, btil, 0.0);
  const double feas = (atil * w - btil).norm() / btil.norm();
  const Vector w_pinv = atil.completeOrthogonalDecomposition().pseudoInverse() * btil;
  const double agree = (w - w_pinv).norm() / w_pinv.norm();

  const double ridge = 0.7;
  Matrix gram = atil * atil.transpose();
  gram.diagonal().array() += ridge;
  const Vector w_ridge_ref = atil.transpose() * gram.llt().solve(btil);
  const Vector w_ridge = linalg::min_norm_solve(atil, btil, ridge);
  const double ridge_err = (w_ridge - w_ridge_ref).norm() / w_ridge_ref.norm();

  const double worst = std::max({feas, agree, ridge_err});
  return {"min-norm", worst < 1e-8, 0.0,
          "feasibility " + detail::fmt(feas) + ", pinv gap " + detail::fmt(agree) +
              ", ridge gap " + detail::fmt(ridge_err)};
}

// Chains of rank-1 SVD updates must reproduce the accumulated matrix exactly
// when nothing is truncated, stay exact on a matrix whose true rank fits the
// budget, and keep orthonormal factors after reorthonormalization.
inline CheckResult check_svd_update(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed ^ 0x53u);
  const int d = 30;

  linalg::TruncatedSvd full = linalg::TruncatedSvd::zero(d, d, d);
  Matrix acc = Matrix::Zero(d, d);
  for (int t = 0; t < 60; ++t) {
    const Vector u = detail::random_normal(d, rng);
    const Vector v = detail::random_normal(d, rng);
    full = linalg::rank1_svd_update(full, u, v);
    acc.noalias() += u * v.transpose();
  }
  const double full_err = (full.reconstruct() - acc).norm() / acc.norm();

  const int r = 8;
  const Matrix u0 = detail::random_matrix(d, r, rng);
  const Matrix v0 = detail::random_matrix(d, r, rng);
  linalg::TruncatedSvd low = linalg::TruncatedSvd::zero(d, d, r);
  Matrix low_acc = Matrix::Zero(d, d);
  for (int t = 0; t < 40; ++t) {
    const Vector u = u0 * detail::random_normal(r, rng);
    const Vector v = v0 * detail::random_normal(r, rng);
    low = linalg::rank1_svd_update(low, u, v);
    low_acc.noalias() += u * v.transpose();
  }
  const double low_err = (low.reconstruct() - low_acc).norm() / low_acc.norm();
  const bool rank_ok = low.stored_rank() <= r;

  linalg::reorthonormalize(full);
  const double ortho =
      (full.left.transpose() * full.left -
       Matrix::Identity(full.stored_rank(), full.stored_rank()))
          .cwiseAbs()
          .maxCoeff();
  const double after = (full.reconstruct() - acc).norm() / acc.norm();

  const bool ok = full_err < 1e-8 && low_err < 1e-8 && rank_ok && ortho < 1e-10 && after < 1e-8;
  return {"svd-update", ok, 0.0,
          "untruncated " + detail::fmt(full_err) + ", rank-8 chain " + detail::fmt(low_err) +
              ", orthogonality " + detail::fmt(ortho)};
}

// The damped sketched expected update must reach the true solution of 50
// random positive-definite systems within the iteration budget.
inline CheckResult check_fixed_point(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed ^ 0x54u);
  std::uniform_real_distribution<double> eig(0.1, 2.0);
  double worst = 0.0;
  for (int sys = 0; sys < 50; ++sys) {
    const int d = 8 + sys % 13;
    const int ks[3] = {4, 8, d};
    const int k = std::min(ks[sys % 3], d);
    Vector lam(d);
    for (int i = 0; i < d; ++i) lam(i) = eig(rng);
    const Matrix q = detail::random_orthogonal(d, rng);
    const Matrix a = q * lam.asDiagonal() * q.transpose();
    const Vector b = detail::random_normal(d, rng);
    const sketch::Family fam = sys % 2 == 0 ? sketch::Family::gaussian : sketch::Family::count;
    const Matrix s =
        sketch::sample_sketch({fam, k, d, o.seed + 1000 + static_cast<std::uint64_t>(sys)})
            .materialize();
    const double eta = 1.0 / (4.0 * lam.maxCoeff());
    const double tol = 0.45e-6 * lam.minCoeff();
    Vector w;
    try {
      w = linalg::expected_update_fixed_point(a, b, s, 0.25, eta, 100000, tol);
    } catch (const NoConvergence& e) {
      return {"fixed-point", false, 0.0, std::string("system ") + std::to_string(sys) +
                                             " did not converge: " + e.what()};
    }
    worst = std::max(worst, (w - a.ldlt().solve(b)).norm());
  }
  return {"fixed-point", worst <= 1e-6, 0.0,
          "max solution error " + detail::fmt(worst) + " over 50 systems"};
}

// Sketching the constraints with the top-k left singular directions of A must
// reproduce the rank-k truncated pseudo-inverse solution exactly.
inline CheckResult check_svd_sketch(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed ^ 0x55u);
  const int d = 50;
  const Matrix a = detail::random_matrix(d, d, rng);
  const Vector b = detail::random_normal(d, rng);
  Eigen::JacobiSVD<Matrix> dec(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  double worst = 0.0;
  for (int k : {5, 20}) {
    const Matrix s = dec.matrixU().leftCols(k).transpose();
    const Vector w = linalg::min_norm_solve(s * a, s * b, 0.0);
    const Vector ref =
        dec.matrixV().leftCols(k) *
        (dec.matrixU().leftCols(k).transpose() * b).cwiseQuotient(dec.singularValues().head(k));
    worst = std::max(worst, (w - ref).cwiseAbs().maxCoeff());
  }
  return {"svd-sketch", worst < 1e-10, 0.0,
          "max entry gap to truncated pseudo-inverse solve " + detail::fmt(worst)};
}

// Random Gaussian sketches of a low-rank matrix must keep full row rank in at
// least 99% of trials.
inline CheckResult check_row_rank(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed ^ 0x56u);
  const int d = 50, r = 30, k = 10;
  const Matrix a = detail::random_matrix(d, r, rng) * detail::random_matrix(r, d, rng);
  const double frac =
      sketch::row_rank_statistics({sketch::Family::gaussian, k, d, o.seed}, a, 1000, 1e-8);
  return {"row-rank", frac >= 0.99, 0.0,
          "full row rank in " + detail::fmt(100.0 * frac) + "% of 1000 trials"};
}

// The empirical mean of S^T S over many sketches must be entrywise close to
// the identity for every family.
inline CheckResult check_isometry(const VerifyOptions& o) {
  double worst = 0.0;
  std::string worst_fam;
  for (sketch::Family fam : {sketch::Family::gaussian, sketch::Family::count,
                             sketch::Family::combined, sketch::Family::hadamard}) {
    const double dev = sketch::max_identity_deviation({fam, 25, 50, o.seed}, 10000);
    if (dev > worst) {
      worst = dev;
      worst_fam = sketch::to_string(fam);
    }
  }
  return {"isometry", worst < 0.05, 0.0,
          "max |mean(S^T S) - I| = " + detail::fmt(worst) + " (" + worst_fam + ")"};
}

// A Gaussian sketch must preserve squared norms of random unit vectors to
// within 50% for at least 90% of sketch-vector pairs.
inline CheckResult check_distortion(const VerifyOptions& o) {
  const double frac =
      sketch::estimate_jl_distortion({sketch::Family::gaussian, 50, 1024, o.seed}, 100, 100, 0.5);
  return {"distortion", frac >= 0.9, 0.0,
          detail::fmt(100.0 * frac) + "% of 10000 pairs within 1 +- 0.5"};
}

// The three incremental least-squares learners must match direct batch solves
// of the systems they maintain after 500 synthetic transitions.
inline CheckResult check_inc_batch(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed ^ 0x57u);
  const int d = 64, k = 16, steps = 500, episode_len = 50, nnz = 6;
  const double xi = 1.0, lambda = 0.8, gamma = 0.95;

  auto sk = sketch::sample_sketch({sketch::Family::gaussian, k, d, o.seed ^ 0x58u});
  const Matrix sm = sk.materialize();
  agents::LstdAgent lstd(d, xi, lambda);
  agents::LstdPAgent lstd_p(sk, xi, lambda);
  agents::LstdLAgent lstd_l(sk, xi, lambda);

  std::uniform_int_distribution<int> pick(0, d - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&] {
    features::FeatureVector x{d, {}};
    for (int i = 0; i < nnz; ++i) x.entries.push_back({pick(rng), normal(rng)});
    return x;
  };

  Matrix a_full = Matrix::Zero(d, d);
  Vector b_full = Vector::Zero(d);
  Matrix a_sk = Matrix::Zero(k, k);
  Vector b_sk = Vector::Zero(k);
  Vector trace = Vector::Zero(d);
  Vector trace_sk = Vector::Zero(k);

  features::FeatureVector x = draw();
  for (int t = 0; t < steps; ++t) {
    const bool start = t % episode_len == 0;
    const bool end = (t + 1) % episode_len == 0;
    features::FeatureVector x_next = end ? features::FeatureVector::zero(d) : draw();
    const double gamma_next = end ? 0.0 : gamma;
    const double reward = normal(rng);

    envs::Transition tr{x, x_next, reward, gamma_next, start};
    lstd.observe(tr);
    lstd_p.observe(tr);
    lstd_l.observe(tr);

    const Vector xd = x.dense(), xnd = x_next.dense();
    if (start) trace.setZero(), trace_sk.setZero();
    else trace *= gamma * lambda, trace_sk *= gamma * lambda;
    trace += xd;
    trace_sk += sm * xd;
    const Vector dvec = xd - gamma_next * xnd;
    a_full.noalias() += trace * dvec.transpose();
    b_full.noalias() += reward * trace;
    const Vector dvec_sk = sm * dvec;
    a_sk.noalias() += trace_sk * dvec_sk.transpose();
    b_sk.noalias() += reward * trace_sk;
    x = x_next;
  }

  Matrix reg_full = a_full;
  reg_full.diagonal().array() += 1.0 / xi;
  const Vector w_ref = reg_full.partialPivLu().solve(b_full);
  const double lstd_err = (lstd.weights() - w_ref).norm() / w_ref.norm();

  Matrix reg_sk = a_sk;
  reg_sk.diagonal().array() += 1.0 / xi;
  const Vector wk_ref = reg_sk.partialPivLu().solve(b_sk);
  const double lstd_p_err = (lstd_p.sketched_weights() - wk_ref).norm() / wk_ref.norm();

  const Vector wl_ref = linalg::min_norm_solve(sm * a_full, sm * b_full, 1.0 / xi);
  const double lstd_l_err = (lstd_l.weights() - wl_ref).norm() / wl_ref.norm();

  const double worst = std::max({lstd_err, lstd_p_err, lstd_l_err});
  return {"inc-batch", worst < 1e-6, 0.0,
          "relative gaps: full " + detail::fmt(lstd_err) + ", feature-sketched " +
              detail::fmt(lstd_p_err) + ", constraint-sketched " + detail::fmt(lstd_l_err)};
}

inline const std::vector<std::pair<std::string, CheckResult (*)(const VerifyOptions&)>>&
check_registry() {
  static const std::vector<std::pair<std::string, CheckResult (*)(const VerifyOptions&)>> reg = {
      {"rank1-inverse", &check_rank1_inverse},
      {"min-norm", &check_min_norm},
      {"svd-update", &check_svd_update},
      {"fixed-point", &check_fixed_point},
      {"svd-sketch", &check_svd_sketch},
      {"row-rank", &check_row_rank},
      {"isometry", &check_isometry},
      {"distortion", &check_distortion},
      {"inc-batch", &check_inc_batch},
  };
  return reg;
}

inline std::vector<CheckResult> run_battery(const VerifyOptions& opts) {
  const auto& reg = check_registry();
  if (!opts.only.empty()) {
    bool known = false;
    for (const auto& [name, fn] : reg) known = known || name == opts.only;
    if (!known) {
      std::string names;
      for (const auto& [name, fn] : reg) names += (names.empty() ? "" : ", ") + name;
      throw ConfigError("verify: unknown check '" + opts.only + "' (choices: " + names + ")");
    }
  }
  std::vector<CheckResult> out;
  for (const auto& [name, fn] : reg) {
    if (!opts.only.empty() && name != opts.only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r = fn(opts);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

inline bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.passed) return false;
  return !results.empty();
}

}  // namespace sketchtd::verify
