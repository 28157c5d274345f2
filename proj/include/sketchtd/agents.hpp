#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>

#include "sketchtd/envs.hpp"
#include "sketchtd/errors.hpp"
#include "sketchtd/features.hpp"
#include "sketchtd/linalg.hpp"
#include "sketchtd/sketch.hpp"
#include "sketchtd/types.hpp"

namespace sketchtd::agents {

inline constexpr double kDivergenceGuard = 1e10;
inline constexpr double kDegenerateTol = 1e-10;

// Eligibility trace e = gamma * lambda * e_prev + x, where gamma is the
// discount of the transition that led into the current state; equivalently
// the trace is zeroed at episode starts.
struct TraceState {
  Vector trace;
  double lambda = 0.0;
  double prev_gamma = 0.0;

  TraceState(int dim, double lambda_in) : trace(Vector::Zero(dim)), lambda(lambda_in) {
    if (lambda < 0.0 || lambda > 1.0) throw InvalidSpec("TraceState: lambda in [0,1]");
  }

  void update(const features::FeatureVector& x, bool episode_start, double gamma_next) {
    decay(episode_start);
    x.add_scaled_to(trace, 1.0);
    prev_gamma = gamma_next;
  }

  void update(const Vector& x, bool episode_start, double gamma_next) {
    decay(episode_start);
    trace += x;
    prev_gamma = gamma_next;
  }

 private:
  void decay(bool episode_start) {
    if (episode_start)
      trace.setZero();
    else
      trace *= prev_gamma * lambda;
  }
};

class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string name() const = 0;
  virtual void observe(const envs::Transition& tr) = 0;
  virtual double value(const features::FeatureVector& x) const = 0;
  // Count of degenerate rank-1 updates that forced a rebuild; 0 for
  // stepsize-based learners.
  virtual long degenerate_events() const { return 0; }
};

namespace detail {

inline void guard_weights(const Vector& w, const char* who) {
  if (!w.allFinite() || w.norm() > kDivergenceGuard)
    throw DivergenceError(std::string(who) + ": weight norm exceeded divergence guard");
}

// Scatters x - gamma_next * x_next into a dense scratch vector.
inline void build_dvec(const envs::Transition& tr, Vector& dvec) {
  dvec.setZero();
  tr.x.add_scaled_to(dvec, 1.0);
  if (tr.gamma_next != 0.0) tr.x_next.add_scaled_to(dvec, -tr.gamma_next);
}

}  // namespace detail

class TdAgent final : public Agent {
 public:
  TdAgent(int dim, double alpha, double lambda)
      : w_(Vector::Zero(dim)), trace_(dim, lambda), alpha_(alpha) {
    if (alpha < 0.0) throw InvalidSpec("td: alpha must be >= 0");
  }

  std::string name() const override { return "td"; }

  void observe(const envs::Transition& tr) override {
    if (tr.x.dim != w_.size()) throw DimensionMismatch("td: feature dim mismatch");
    const double delta =
        tr.reward + tr.gamma_next * tr.x_next.dot(w_) - tr.x.dot(w_);
    trace_.update(tr.x, tr.episode_start, tr.gamma_next);
    w_.noalias() += (alpha_ * delta) * trace_.trace;
    detail::guard_weights(w_, "td");
  }

  double value(const features::FeatureVector& x) const override { return x.dot(w_); }

  const Vector& weights() const { return w_; }

 private:
  Vector w_;
  TraceState trace_;
  double alpha_;
};

// Running inverse of (xi^-1 I + sum_t e_t d_t^T) with the sum itself kept
// alongside so a degenerate rank-1 update can fall back to direct inversion.
// Initial inverse is xi * I; larger xi means weaker early damping.
class FullSystem {
 public:
  FullSystem(int dim, double xi)
      : inv_(Matrix::Identity(dim, dim) * xi),
        a_acc_(Matrix::Zero(dim, dim)),
        b_acc_(Vector::Zero(dim)),
        xi_(xi) {
    if (!(xi > 0.0)) throw InvalidSpec("FullSystem: xi must be positive");
  }

  int dim() const { return static_cast<int>(b_acc_.size()); }
  long steps() const { return steps_; }
  long degenerate_events() const { return degenerate_events_; }
  const Matrix& inverse() const { return inv_; }
  const Vector& b() const { return b_acc_; }

  void observe(const Vector& e, const Vector& d, double reward) {
    a_acc_.noalias() += e * d.transpose();
    b_acc_.noalias() += reward * e;
    try {
      linalg::sherman_morrison_in_place(inv_, e, d, kDegenerateTol);
    } catch (const DegenerateUpdate&) {
      ++degenerate_events_;
      rebuild();
    }
    ++steps_;
  }

  Vector solve() const { return inv_ * b_acc_; }

 private:
  // Pseudo-inverse keeps inv finite even if the accumulated matrix passes
  // through an exactly singular point.
  void rebuild() {
    Matrix m = a_acc_;
    m.diagonal().array() += 1.0 / xi_;
    inv_ = m.completeOrthogonalDecomposition().pseudoInverse();
  }

  Matrix inv_;
  Matrix a_acc_;
  Vector b_acc_;
  double xi_;
  long steps_ = 0;
  long degenerate_events_ = 0;
};

class LstdAgent final : public Agent {
 public:
  LstdAgent(int dim, double xi, double lambda)
      : sys_(dim, xi), trace_(dim, lambda), dvec_(dim), w_(Vector::Zero(dim)) {}

  std::string name() const override { return "lstd"; }

  void observe(const envs::Transition& tr) override {
    if (tr.x.dim != sys_.dim()) throw DimensionMismatch("lstd: feature dim mismatch");
    trace_.update(tr.x, tr.episode_start, tr.gamma_next);
    detail::build_dvec(tr, dvec_);
    sys_.observe(trace_.trace, dvec_, tr.reward);
    dirty_ = true;
  }

  double value(const features::FeatureVector& x) const override {
    refresh();
    return x.dot(w_);
  }

  const Vector& weights() const {
    refresh();
    return w_;
  }

  long degenerate_events() const override { return sys_.degenerate_events(); }
  const FullSystem& system() const { return sys_; }

 private:
  void refresh() const {
    if (!dirty_) return;
    w_ = sys_.solve();
    detail::guard_weights(w_, "lstd");
    dirty_ = false;
  }

  FullSystem sys_;
  TraceState trace_;
  Vector dvec_;
  mutable Vector w_;
  mutable bool dirty_ = false;
};

// Two-sided feature sketching: the learner lives entirely in the k-dim space
// of sketched features Sx, so it is FullSystem at dimension k. Biased but
// cheap; the bias shrinks as k grows.
class LstdPAgent final : public Agent {
 public:
  LstdPAgent(sketch::SketchMatrix s, double xi, double lambda)
      : s_(std::move(s)),
        sys_(s_.k(), xi),
        trace_(s_.k(), lambda),
        w_(Vector::Zero(s_.k())) {}

  std::string name() const override { return "lstd-p"; }

  void observe(const envs::Transition& tr) override {
    if (tr.x.dim != s_.d()) throw DimensionMismatch("lstd-p: feature dim mismatch");
    Vector xt = s_.apply_sparse(tr.x.entries);
    trace_.update(xt, tr.episode_start, tr.gamma_next);
    Vector v = std::move(xt);
    if (tr.gamma_next != 0.0) v.noalias() -= tr.gamma_next * s_.apply_sparse(tr.x_next.entries);
    sys_.observe(trace_.trace, v, tr.reward);
    dirty_ = true;
  }

  double value(const features::FeatureVector& x) const override {
    if (x.dim != s_.d()) throw DimensionMismatch("lstd-p: feature dim mismatch");
    refresh();
    return s_.apply_sparse(x.entries).dot(w_);
  }

  const Vector& sketched_weights() const {
    refresh();
    return w_;
  }

  long degenerate_events() const override { return sys_.degenerate_events(); }
  const sketch::SketchMatrix& sketch_matrix() const { return s_; }
  const FullSystem& system() const { return sys_; }

 private:
  void refresh() const {
    if (!dirty_) return;
    w_ = sys_.solve();
    detail::guard_weights(w_, "lstd-p");
    dirty_ = false;
  }

  sketch::SketchMatrix s_;
  FullSystem sys_;
  TraceState trace_;
  mutable Vector w_;
  mutable bool dirty_ = false;
};

// Left-sketched system: accumulates Atil = S * sum(e d^T) and btil = S * sum(R e)
// row by row while keeping gram_inv = (xi^-1 I + Atil Atil^T)^-1 current via
// three Sherman-Morrison applications per step (the gram grows by
// etil h^T + h etil^T + ||d||^2 etil etil^T with h = Atil_pre * d). Theta(dk)
// time and space per step.
class SketchedSystem {
 public:
  SketchedSystem(sketch::SketchMatrix s, double xi)
      : s_(std::move(s)),
        atil_(Matrix::Zero(s_.k(), s_.d())),
        btil_(Vector::Zero(s_.k())),
        gram_inv_(Matrix::Identity(s_.k(), s_.k()) * xi),
        xi_(xi) {
    if (!(xi > 0.0)) throw InvalidSpec("SketchedSystem: xi must be positive");
  }

  int k() const { return s_.k(); }
  int d() const { return s_.d(); }
  long steps() const { return steps_; }
  long degenerate_events() const { return degenerate_events_; }
  const Matrix& atil() const { return atil_; }
  const Vector& btil() const { return btil_; }
  const Matrix& gram_inv() const { return gram_inv_; }
  const sketch::SketchMatrix& sketch_matrix() const { return s_; }

  // Returns S * e for reuse by the caller (valid until the next observe).
  const Vector& observe(const Vector& e, const Vector& d, double reward) {
    etil_ = s_.apply(e);
    h_ = atil_ * d;
    const double dsq = d.squaredNorm();
    atil_.noalias() += etil_ * d.transpose();
    btil_.noalias() += reward * etil_;
    gram_backup_ = gram_inv_;
    try {
      linalg::sherman_morrison_in_place(gram_inv_, etil_, h_, kDegenerateTol);
      linalg::sherman_morrison_in_place(gram_inv_, h_, etil_, kDegenerateTol);
      linalg::sherman_morrison_in_place(gram_inv_, etil_, Vector(dsq * etil_), kDegenerateTol);
      // The exact gram inverse is symmetric; fold roundoff drift back.
      gram_inv_ = 0.5 * (gram_inv_ + gram_inv_.transpose()).eval();
    } catch (const DegenerateUpdate&) {
      ++degenerate_events_;
      gram_inv_ = gram_backup_;
      rebuild();
    }
    ++steps_;
    return etil_;
  }

  // Minimum-norm weights Atil^T (xi^-1 I + Atil Atil^T)^-1 btil; O(dk).
  Vector min_norm_weights() const { return atil_.transpose() * (gram_inv_ * btil_); }

  // Preconditioned direction Atil^T gram_inv y for a k-vector y; O(dk).
  Vector lift(const Vector& y) const { return atil_.transpose() * (gram_inv_ * y); }

 private:
  void rebuild() {
    Matrix gram = atil_ * atil_.transpose();
    gram.diagonal().array() += 1.0 / xi_;
    gram_inv_ = gram.llt().solve(Matrix::Identity(k(), k()));
    gram_inv_ = 0.5 * (gram_inv_ + gram_inv_.transpose()).eval();
  }

  sketch::SketchMatrix s_;
  Matrix atil_;
  Vector btil_;
  Matrix gram_inv_;
  double xi_;
  Vector etil_, h_;
  Matrix gram_backup_;
  long steps_ = 0;
  long degenerate_events_ = 0;
};

inline Vector lstd_l_weights(const SketchedSystem& sys) { return sys.min_norm_weights(); }

class LstdLAgent final : public Agent {
 public:
  LstdLAgent(sketch::SketchMatrix s, double xi, double lambda)
      : sys_(std::move(s), xi),
        trace_(sys_.d(), lambda),
        dvec_(sys_.d()),
        w_(Vector::Zero(sys_.d())) {}

  std::string name() const override { return "lstd-l"; }

  void observe(const envs::Transition& tr) override {
    if (tr.x.dim != sys_.d()) throw DimensionMismatch("lstd-l: feature dim mismatch");
    trace_.update(tr.x, tr.episode_start, tr.gamma_next);
    detail::build_dvec(tr, dvec_);
    sys_.observe(trace_.trace, dvec_, tr.reward);
    dirty_ = true;
  }

  double value(const features::FeatureVector& x) const override {
    refresh();
    return x.dot(w_);
  }

  const Vector& weights() const {
    refresh();
    return w_;
  }

  long degenerate_events() const override { return sys_.degenerate_events(); }
  const SketchedSystem& system() const { return sys_; }

 private:
  void refresh() const {
    if (!dirty_) return;
    w_ = sys_.min_norm_weights();
    detail::guard_weights(w_, "lstd-l");
    dirty_ = false;
  }

  SketchedSystem sys_;
  TraceState trace_;
  Vector dvec_;
  mutable Vector w_;
  mutable bool dirty_ = false;
};

// Quasi-Newton TD with the left-sketched system as preconditioner:
//   w += Atil^T gram_inv (delta * S e) + eta * delta * e.
// The 1/t stepsize against the sample-average pseudo-inverse cancels exactly
// against the unnormalized accumulation ((t M)^+ = M^+ / t), so no separate
// stepsize appears.
class AtdLAgent final : public Agent {
 public:
  AtdLAgent(sketch::SketchMatrix s, double eta, double lambda, double xi = 1.0,
            bool precondition = true)
      : sys_(std::move(s), xi),
        trace_(sys_.d(), lambda),
        dvec_(sys_.d()),
        w_(Vector::Zero(sys_.d())),
        eta_(eta),
        precondition_(precondition) {
    if (eta < 0.0) throw InvalidSpec("atd-l: eta must be >= 0");
  }

  std::string name() const override { return "atd-l"; }

  void observe(const envs::Transition& tr) override {
    if (tr.x.dim != sys_.d()) throw DimensionMismatch("atd-l: feature dim mismatch");
    const double delta =
        tr.reward + tr.gamma_next * tr.x_next.dot(w_) - tr.x.dot(w_);
    trace_.update(tr.x, tr.episode_start, tr.gamma_next);
    detail::build_dvec(tr, dvec_);
    const Vector& etil = sys_.observe(trace_.trace, dvec_, tr.reward);
    if (precondition_) w_.noalias() += sys_.lift(delta * etil);
    w_.noalias() += (eta_ * delta) * trace_.trace;
    detail::guard_weights(w_, "atd-l");
  }

  double value(const features::FeatureVector& x) const override { return x.dot(w_); }

  const Vector& weights() const { return w_; }
  long degenerate_events() const override { return sys_.degenerate_events(); }
  const SketchedSystem& system() const { return sys_; }

 private:
  SketchedSystem sys_;
  TraceState trace_;
  Vector dvec_;
  Vector w_;
  double eta_;
  bool precondition_;
};

// Quasi-Newton TD preconditioned by a rank-capped SVD of sum(e d^T):
//   w += V Sigma^+ U^T (delta e) + eta * delta * e.
// Factors are re-orthonormalized periodically to stop drift over long update
// chains.
class AtdSvdAgent final : public Agent {
 public:
  AtdSvdAgent(int dim, int max_rank, double eta, double lambda, double drop_tol = 1e-8,
              int reorth_every = 256)
      : svd_(linalg::TruncatedSvd::zero(dim, dim, max_rank)),
        trace_(dim, lambda),
        dvec_(dim),
        w_(Vector::Zero(dim)),
        eta_(eta),
        drop_tol_(drop_tol),
        reorth_every_(reorth_every) {
    if (eta < 0.0) throw InvalidSpec("atd-svd: eta must be >= 0");
    if (max_rank < 0) throw InvalidSpec("atd-svd: max_rank must be >= 0");
  }

  std::string name() const override { return "atd-svd"; }

  void observe(const envs::Transition& tr) override {
    if (tr.x.dim != w_.size()) throw DimensionMismatch("atd-svd: feature dim mismatch");
    const double delta =
        tr.reward + tr.gamma_next * tr.x_next.dot(w_) - tr.x.dot(w_);
    trace_.update(tr.x, tr.episode_start, tr.gamma_next);
    detail::build_dvec(tr, dvec_);
    svd_ = linalg::rank1_svd_update(svd_, trace_.trace, dvec_, drop_tol_);
    if (reorth_every_ > 0 && ++since_reorth_ >= reorth_every_) {
      linalg::reorthonormalize(svd_);
      since_reorth_ = 0;
    }
    w_.noalias() += linalg::apply_pseudo_inverse(svd_, delta * trace_.trace, drop_tol_);
    w_.noalias() += (eta_ * delta) * trace_.trace;
    detail::guard_weights(w_, "atd-svd");
  }

  double value(const features::FeatureVector& x) const override { return x.dot(w_); }

  const Vector& weights() const { return w_; }
  const linalg::TruncatedSvd& approximation() const { return svd_; }

 private:
  linalg::TruncatedSvd svd_;
  TraceState trace_;
  Vector dvec_;
  Vector w_;
  double eta_;
  double drop_tol_;
  int reorth_every_;
  int since_reorth_ = 0;
};

enum class Algorithm { td, lstd, lstd_p, lstd_l, atd_l, atd_svd };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::td: return "td";
    case Algorithm::lstd: return "lstd";
    case Algorithm::lstd_p: return "lstd-p";
    case Algorithm::lstd_l: return "lstd-l";
    case Algorithm::atd_l: return "atd-l";
    case Algorithm::atd_svd: return "atd-svd";
  }
  throw InvalidSpec("unknown algorithm");
}

inline Algorithm algorithm_from_string(const std::string& s) {
  if (s == "td") return Algorithm::td;
  if (s == "lstd") return Algorithm::lstd;
  if (s == "lstd-p") return Algorithm::lstd_p;
  if (s == "lstd-l") return Algorithm::lstd_l;
  if (s == "atd-l") return Algorithm::atd_l;
  if (s == "atd-svd") return Algorithm::atd_svd;
  throw InvalidSpec("unknown algorithm: " + s);
}

inline bool uses_sketch(Algorithm a) {
  return a == Algorithm::lstd_p || a == Algorithm::lstd_l || a == Algorithm::atd_l;
}

inline bool uses_rank(Algorithm a) { return uses_sketch(a) || a == Algorithm::atd_svd; }

struct AgentConfig {
  Algorithm algorithm = Algorithm::td;
  double alpha = 0.0;   // td
  double lambda = 0.0;  // all
  double eta = 0.0;     // atd-l, atd-svd
  double xi = 1.0;      // lstd family; system init for atd-l
  int k = 0;            // sketch size / SVD rank cap
  sketch::Family family = sketch::Family::gaussian;
  double drop_tol = 1e-8;  // atd-svd
};

inline std::unique_ptr<Agent> make_agent(const AgentConfig& cfg, int dim,
                                         std::uint64_t sketch_seed) {
  auto make_sketch = [&] {
    sketch::SketchSpec spec{cfg.family, cfg.k, dim, sketch_seed};
    return sketch::sample_sketch(spec);
  };
  switch (cfg.algorithm) {
    case Algorithm::td:
      return std::make_unique<TdAgent>(dim, cfg.alpha, cfg.lambda);
    case Algorithm::lstd:
      return std::make_unique<LstdAgent>(dim, cfg.xi, cfg.lambda);
    case Algorithm::lstd_p:
      return std::make_unique<LstdPAgent>(make_sketch(), cfg.xi, cfg.lambda);
    case Algorithm::lstd_l:
      return std::make_unique<LstdLAgent>(make_sketch(), cfg.xi, cfg.lambda);
    case Algorithm::atd_l:
      return std::make_unique<AtdLAgent>(make_sketch(), cfg.eta, cfg.lambda, cfg.xi);
    case Algorithm::atd_svd:
      return std::make_unique<AtdSvdAgent>(dim, cfg.k, cfg.eta, cfg.lambda, cfg.drop_tol);
  }
  throw InvalidSpec("unknown algorithm");
}

}  // namespace sketchtd::agents
