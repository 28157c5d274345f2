#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "sketchtd/errors.hpp"
#include "sketchtd/types.hpp"

namespace sketchtd::linalg {

// Rank-1 inverse update, in place. Given inv = M^-1, replaces it with
// (M + u v^T)^-1 using the identity
//   (M + u v^T)^-1 = M^-1 - (M^-1 u)(v^T M^-1) / (1 + v^T M^-1 u).
// Cost O(n^2). Throws DegenerateUpdate when |1 + v^T M^-1 u| < tol, which
// signals that M + u v^T is numerically singular; inv is left untouched then.
inline void sherman_morrison_in_place(Matrix& inv, const Vector& u, const Vector& v,
                                      double tol = 1e-10) {
  const auto n = inv.rows();
  if (inv.cols() != n || u.size() != n || v.size() != n)
    throw DimensionMismatch("sherman_morrison_update: inv must be n x n with matching u, v");
  check_finite(u, "sherman_morrison_update u");
  check_finite(v, "sherman_morrison_update v");
  Vector iu = inv * u;
  const double denom = 1.0 + v.dot(iu);
  if (!std::isfinite(denom) || std::abs(denom) < tol)
    throw DegenerateUpdate("sherman_morrison_update: denominator " + std::to_string(denom));
  Vector vi = inv.transpose() * v;
  inv.noalias() -= iu * (vi.transpose() / denom);
}

inline Matrix sherman_morrison_update(Matrix inv, const Vector& u, const Vector& v,
                                      double tol = 1e-10) {
  sherman_morrison_in_place(inv, u, v, tol);
  return inv;
}

// Thin SVD held as explicit factors, optionally capped at max_rank by the
// incremental update below. Singular values are nonincreasing and nonnegative.
struct TruncatedSvd {
  Matrix left;             // m x r, orthonormal columns
  Vector singular_values;  // r
  Matrix right;            // n x r, orthonormal columns
  int max_rank = 0;

  int rows() const { return static_cast<int>(left.rows()); }
  int cols() const { return static_cast<int>(right.rows()); }
  int stored_rank() const { return static_cast<int>(singular_values.size()); }

  int rank(double rel_tol = 1e-12) const {
    if (stored_rank() == 0) return 0;
    const double cutoff = rel_tol * singular_values(0);
    int r = 0;
    for (int i = 0; i < stored_rank(); ++i)
      if (singular_values(i) > cutoff) ++r;
    return r;
  }

  Matrix reconstruct() const {
    if (stored_rank() == 0) return Matrix::Zero(left.rows(), right.rows());
    return left * singular_values.asDiagonal() * right.transpose();
  }

  static TruncatedSvd zero(int m, int n, int max_rank) {
    if (m < 1 || n < 1 || max_rank < 0)
      throw InvalidSpec("TruncatedSvd::zero: bad shape");
    TruncatedSvd s;
    s.left = Matrix::Zero(m, 0);
    s.singular_values = Vector::Zero(0);
    s.right = Matrix::Zero(n, 0);
    s.max_rank = max_rank;
    return s;
  }
};

// Thin SVD of a dense matrix via Eigen's one-sided Jacobi. Keeps the full
// min(m, n) spectrum including exact zeros unless max_rank says otherwise.
inline TruncatedSvd svd(const Matrix& m, int max_rank = -1) {
  if (m.rows() < 1 || m.cols() < 1) throw DimensionMismatch("svd: empty matrix");
  check_finite(m, "svd input");
  Eigen::JacobiSVD<Matrix> dec(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const int full = static_cast<int>(dec.singularValues().size());
  if (max_rank < 0) max_rank = full;
  const int r = std::min(full, max_rank);
  TruncatedSvd out;
  out.left = dec.matrixU().leftCols(r);
  out.singular_values = dec.singularValues().head(r);
  out.right = dec.matrixV().leftCols(r);
  out.max_rank = max_rank;
  return out;
}

// x = V diag(1/sigma) U^T y with singular values at or below
// rel_tol * sigma_max treated as zero.
inline Vector apply_pseudo_inverse(const TruncatedSvd& s, const Vector& y,
                                   double rel_tol = 1e-12) {
  if (y.size() != s.rows()) throw DimensionMismatch("apply_pseudo_inverse: bad y");
  Vector x = Vector::Zero(s.cols());
  if (s.stored_rank() == 0) return x;
  const double cutoff = rel_tol * s.singular_values(0);
  for (int i = 0; i < s.stored_rank(); ++i) {
    const double sv = s.singular_values(i);
    if (sv <= cutoff || sv == 0.0) continue;
    x.noalias() += s.right.col(i) * (s.left.col(i).dot(y) / sv);
  }
  return x;
}

// Minimum-norm least-squares solution A^+ b through the SVD route.
inline Vector pseudo_inverse_solve(const Matrix& a, const Vector& b,
                                   double rank_tol = 1e-12) {
  if (b.size() != a.rows()) throw DimensionMismatch("pseudo_inverse_solve: bad b");
  check_finite(b, "pseudo_inverse_solve b");
  return apply_pseudo_inverse(svd(a), b, rank_tol);
}

inline Matrix pseudo_inverse(const Matrix& a, double rank_tol = 1e-12) {
  TruncatedSvd s = svd(a);
  Matrix out = Matrix::Zero(a.cols(), a.rows());
  if (s.stored_rank() == 0) return out;
  const double cutoff = rank_tol * s.singular_values(0);
  for (int i = 0; i < s.stored_rank(); ++i) {
    const double sv = s.singular_values(i);
    if (sv <= cutoff || sv == 0.0) continue;
    out.noalias() += (s.right.col(i) / sv) * s.left.col(i).transpose();
  }
  return out;
}

// Minimum-norm solution of the underdetermined system atil w = btil through
// the normal equations: w = atil^T (atil atil^T + ridge I)^-1 btil.
// Requires k <= d. With ridge = 0 the k x k gram must be invertible
// (i.e. atil has full row rank); otherwise SingularGram.
inline Vector min_norm_solve(const Matrix& atil, const Vector& btil, double ridge) {
  const auto k = atil.rows();
  const auto d = atil.cols();
  if (k > d) throw DimensionMismatch("min_norm_solve: more rows than columns");
  if (btil.size() != k) throw DimensionMismatch("min_norm_solve: bad btil");
  if (!(ridge >= 0.0)) throw InvalidSpec("min_norm_solve: ridge must be >= 0");
  check_finite(atil, "min_norm_solve atil");
  check_finite(btil, "min_norm_solve btil");
  Matrix gram = atil * atil.transpose();
  gram.diagonal().array() += ridge;
  Vector y;
  if (ridge > 0.0) {
    y = gram.llt().solve(btil);
  } else {
    Eigen::FullPivLU<Matrix> lu(gram);
    if (!lu.isInvertible())
      throw SingularGram("min_norm_solve: gram matrix numerically singular");
    y = lu.solve(btil);
  }
  return atil.transpose() * y;
}

// Rank-1 update of a truncated SVD: factors of M + u v^T from factors of M.
// Expands the bases with the orthogonal residuals of u and v, re-diagonalizes
// the small core, then truncates back to max_rank and drops singular values
// below drop_tol * sigma_max. Residuals below 1e-10 * sigma_max are treated
// as lying in the current span (no rank growth). Cost O((m + n) r^2 + r^3).
inline TruncatedSvd rank1_svd_update(const TruncatedSvd& s, const Vector& u,
                                     const Vector& v, double drop_tol = 1e-8) {
  const int m = s.rows();
  const int n = s.cols();
  if (u.size() != m || v.size() != n)
    throw DimensionMismatch("rank1_svd_update: u, v must match factor shapes");
  check_finite(u, "rank1_svd_update u");
  check_finite(v, "rank1_svd_update v");
  const int r = s.stored_rank();
  const double sigma_max = r > 0 ? s.singular_values(0) : 0.0;
  const double res_tol = 1e-10 * sigma_max;

  Vector p = s.left.transpose() * u;
  Vector u_res = u - s.left * p;
  double pu = u_res.norm();
  Vector q = s.right.transpose() * v;
  Vector v_res = v - s.right * q;
  double qv = v_res.norm();
  if (u.norm() == 0.0 || v.norm() == 0.0) pu = qv = 0.0;
  const bool grow_u = pu > res_tol && pu > 0.0;
  const bool grow_v = qv > res_tol && qv > 0.0;

  const int ru = r + (grow_u ? 1 : 0);
  const int rv = r + (grow_v ? 1 : 0);
  Matrix core = Matrix::Zero(ru, rv);
  core.topLeftCorner(r, r).diagonal() = s.singular_values;
  Vector pe = Vector::Zero(ru);
  pe.head(r) = p;
  if (grow_u) pe(r) = pu;
  Vector qe = Vector::Zero(rv);
  qe.head(r) = q;
  if (grow_v) qe(r) = qv;
  if (u.norm() != 0.0 && v.norm() != 0.0) core.noalias() += pe * qe.transpose();

  TruncatedSvd out;
  out.max_rank = s.max_rank;
  if (core.size() == 0) {
    out.left = Matrix::Zero(m, 0);
    out.singular_values = Vector::Zero(0);
    out.right = Matrix::Zero(n, 0);
    return out;
  }
  Eigen::JacobiSVD<Matrix> dec(core, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& sv = dec.singularValues();
  const double new_max = sv.size() > 0 ? sv(0) : 0.0;
  const double cutoff = drop_tol * new_max;
  int keep = 0;
  while (keep < sv.size() && keep < s.max_rank && sv(keep) > cutoff && sv(keep) > 0.0) ++keep;

  Matrix left_ext(m, ru);
  left_ext.leftCols(r) = s.left;
  if (grow_u) left_ext.col(r) = u_res / pu;
  Matrix right_ext(n, rv);
  right_ext.leftCols(r) = s.right;
  if (grow_v) right_ext.col(r) = v_res / qv;

  out.left = left_ext * dec.matrixU().leftCols(keep);
  out.singular_values = sv.head(keep);
  out.right = right_ext * dec.matrixV().leftCols(keep);
  return out;
}

// Restores orthonormality of the factors after long update chains. QR both
// bases, fold the triangular parts into the core, re-diagonalize. The
// represented matrix is unchanged up to roundoff.
inline void reorthonormalize(TruncatedSvd& s) {
  const int r = s.stored_rank();
  if (r == 0) return;
  Eigen::HouseholderQR<Matrix> qr_l(s.left);
  Eigen::HouseholderQR<Matrix> qr_r(s.right);
  Matrix rl = qr_l.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  Matrix rr = qr_r.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  Matrix core = rl * s.singular_values.asDiagonal() * rr.transpose();
  Eigen::JacobiSVD<Matrix> dec(core, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix ql = qr_l.householderQ() * Matrix::Identity(s.rows(), r);
  Matrix qv = qr_r.householderQ() * Matrix::Identity(s.cols(), r);
  int keep = 0;
  while (keep < r && dec.singularValues()(keep) > 0.0) ++keep;
  s.left = ql * dec.matrixU().leftCols(keep);
  s.singular_values = dec.singularValues().head(keep);
  s.right = qv * dec.matrixV().leftCols(keep);
}

// Fixed point of the damped sketched expected update
//   w <- w + (alpha (S A)^+ S + eta I)(b - A w).
// Iterates until ||b - A w|| <= tol; throws NoConvergence when the budget is
// exhausted or the residual plateaus above tol. alpha must lie in (0, 1/2)
// and eta must be positive; keeping eta <= 1 / (2 lambda_max(A)) is the
// caller's responsibility.
inline Vector expected_update_fixed_point(const Matrix& a, const Vector& b,
                                          const Matrix& sk, double alpha, double eta,
                                          int max_iters, double tol) {
  const auto d = a.rows();
  if (a.cols() != d) throw DimensionMismatch("expected_update_fixed_point: A must be square");
  if (b.size() != d || sk.cols() != d)
    throw DimensionMismatch("expected_update_fixed_point: b or S does not match A");
  if (!(alpha > 0.0 && alpha < 0.5))
    throw InvalidSpec("expected_update_fixed_point: alpha must be in (0, 1/2)");
  if (!(eta > 0.0)) throw InvalidSpec("expected_update_fixed_point: eta must be positive");
  if (max_iters < 1 || !(tol > 0.0))
    throw InvalidSpec("expected_update_fixed_point: bad budget or tolerance");
  check_finite(a, "expected_update_fixed_point A");
  check_finite(b, "expected_update_fixed_point b");
  check_finite(sk, "expected_update_fixed_point S");

  Matrix bmat = alpha * pseudo_inverse(sk * a) * sk;
  bmat.diagonal().array() += eta;

  Vector w = Vector::Zero(d);
  double best = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int it = 0; it < max_iters; ++it) {
    Vector res = b - a * w;
    const double rn = res.norm();
    if (!std::isfinite(rn)) throw NoConvergence("expected_update_fixed_point: diverged");
    if (rn <= tol) return w;
    if (rn < best * (1.0 - 1e-12)) {
      best = rn;
      stalled = 0;
    } else if (++stalled > 200) {
      throw NoConvergence("expected_update_fixed_point: residual plateau at " +
                          std::to_string(rn));
    }
    w.noalias() += bmat * res;
  }
  throw NoConvergence("expected_update_fixed_point: budget exhausted");
}

}  // namespace sketchtd::linalg
