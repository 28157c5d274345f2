#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sketchtd/csv.hpp"
#include "sketchtd/errors.hpp"
#include "sketchtd/features.hpp"
#include "sketchtd/rng.hpp"
#include "sketchtd/types.hpp"

namespace sketchtd::envs {

struct StepResult {
  Vector next_state;
  double reward = 0.0;
  bool terminal = false;
};

class Mdp {
 public:
  virtual ~Mdp() = default;
  virtual std::string name() const = 0;
  virtual int state_dim() const = 0;
  virtual features::StateBounds bounds() const = 0;
  virtual int num_actions() const = 0;
  virtual Vector reset(std::mt19937_64& rng) const = 0;
  virtual StepResult step(const Vector& state, int action, std::mt19937_64& rng) const = 0;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual int sample_action(const Vector& state, std::mt19937_64& rng) const = 0;
};

namespace detail {

class MountainCar final : public Mdp {
 public:
  std::string name() const override { return "mountain_car"; }
  int state_dim() const override { return 2; }
  features::StateBounds bounds() const override {
    return features::StateBounds{{{-1.2, 0.5}, {-0.07, 0.07}}};
  }
  int num_actions() const override { return 3; }

  Vector reset(std::mt19937_64& rng) const override {
    std::uniform_real_distribution<double> start(-0.6, -0.4);
    Vector s(2);
    s << start(rng), 0.0;
    return s;
  }

  StepResult step(const Vector& state, int action, std::mt19937_64& rng) const override {
    (void)rng;
    if (action < 0 || action > 2) throw InvalidSpec("mountain_car: action must be 0..2");
    const double a = action - 1;
    double v = state(1) + 0.001 * a - 0.0025 * std::cos(3.0 * state(0));
    v = std::clamp(v, -0.07, 0.07);
    double p = state(0) + v;
    if (p < -1.2) {
      p = -1.2;
      v = 0.0;
    }
    StepResult out;
    out.terminal = p >= 0.5;
    p = std::min(p, 0.5);
    out.next_state = Vector(2);
    out.next_state << p, v;
    out.reward = -1.0;
    return out;
  }
};

class EnergyPumping final : public Policy {
 public:
  explicit EnergyPumping(double randomness) : randomness_(randomness) {
    if (randomness < 0.0 || randomness > 1.0)
      throw InvalidSpec("energy_pumping_policy: randomness in [0,1]");
  }

  std::string name() const override { return "energy_pumping"; }

  int sample_action(const Vector& state, std::mt19937_64& rng) const override {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < randomness_) {
      std::uniform_int_distribution<int> any(0, 2);
      return any(rng);
    }
    // Push along the velocity; from rest, push forward.
    return state(1) >= 0.0 ? 2 : 0;
  }

 private:
  double randomness_;
};

inline double segment_distance(double px, double py, double ax, double ay, double bx,
                               double by) {
  const double vx = bx - ax, vy = by - ay;
  const double wx = px - ax, wy = py - ay;
  const double len_sq = vx * vx + vy * vy;
  const double t = len_sq > 0.0 ? std::clamp((wx * vx + wy * vy) / len_sq, 0.0, 1.0) : 0.0;
  const double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

class PuddleWorld final : public Mdp {
 public:
  std::string name() const override { return "puddle_world"; }
  int state_dim() const override { return 2; }
  features::StateBounds bounds() const override {
    return features::StateBounds{{{0.0, 1.0}, {0.0, 1.0}}};
  }
  int num_actions() const override { return 4; }

  static bool in_goal(const Vector& s) { return s(0) >= 0.95 && s(1) >= 0.95; }

  // Depth of penetration into the deepest puddle; the puddles are two
  // capsules of radius 0.1 around the segments (0.10,0.75)-(0.45,0.75) and
  // (0.45,0.40)-(0.45,0.80).
  static double puddle_penetration(const Vector& s) {
    const double d1 = segment_distance(s(0), s(1), 0.10, 0.75, 0.45, 0.75);
    const double d2 = segment_distance(s(0), s(1), 0.45, 0.40, 0.45, 0.80);
    return std::max({0.1 - d1, 0.1 - d2, 0.0});
  }

  Vector reset(std::mt19937_64& rng) const override {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector s(2);
    do {
      s << u(rng), u(rng);
    } while (in_goal(s));
    return s;
  }

  StepResult step(const Vector& state, int action, std::mt19937_64& rng) const override {
    if (action < 0 || action > 3) throw InvalidSpec("puddle_world: action must be 0..3");
    static const double dx[] = {0.05, -0.05, 0.0, 0.0};
    static const double dy[] = {0.0, 0.0, 0.05, -0.05};
    std::normal_distribution<double> noise(0.0, 0.01);
    Vector next(2);
    next << state(0) + dx[action] + noise(rng), state(1) + dy[action] + noise(rng);
    next(0) = std::clamp(next(0), 0.0, 1.0);
    next(1) = std::clamp(next(1), 0.0, 1.0);
    StepResult out;
    out.next_state = next;
    out.reward = -1.0 - 400.0 * puddle_penetration(next);
    out.terminal = in_goal(next);
    return out;
  }
};

class GreedyDistance final : public Policy {
 public:
  explicit GreedyDistance(double randomness) : randomness_(randomness) {
    if (randomness < 0.0 || randomness > 1.0)
      throw InvalidSpec("greedy_distance_policy: randomness in [0,1]");
  }

  std::string name() const override { return "greedy_distance"; }

  int sample_action(const Vector& state, std::mt19937_64& rng) const override {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < randomness_) {
      std::uniform_int_distribution<int> any(0, 3);
      return any(rng);
    }
    static const double dx[] = {0.05, -0.05, 0.0, 0.0};
    static const double dy[] = {0.0, 0.0, 0.05, -0.05};
    int best = 0;
    double best_sq = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 4; ++a) {
      const double nx = std::clamp(state(0) + dx[a], 0.0, 1.0);
      const double ny = std::clamp(state(1) + dy[a], 0.0, 1.0);
      const double sq = (1.0 - nx) * (1.0 - nx) + (1.0 - ny) * (1.0 - ny);
      if (sq < best_sq) {
        best_sq = sq;
        best = a;
      }
    }
    return best;
  }

 private:
  double randomness_;
};

}  // namespace detail

inline std::unique_ptr<Mdp> mountain_car() { return std::make_unique<detail::MountainCar>(); }

inline std::unique_ptr<Policy> energy_pumping_policy(double randomness = 0.2) {
  return std::make_unique<detail::EnergyPumping>(randomness);
}

inline std::unique_ptr<Mdp> puddle_world() { return std::make_unique<detail::PuddleWorld>(); }

inline std::unique_ptr<Policy> greedy_distance_policy(double randomness = 0.1) {
  return std::make_unique<detail::GreedyDistance>(randomness);
}

inline std::unique_ptr<Mdp> make_mdp(const std::string& name) {
  if (name == "mountain_car") return mountain_car();
  if (name == "puddle_world") return puddle_world();
  throw InvalidSpec("unknown environment: " + name);
}

inline std::unique_ptr<Policy> default_policy(const std::string& env_name,
                                              double randomness = -1.0) {
  if (env_name == "mountain_car")
    return energy_pumping_policy(randomness < 0.0 ? 0.2 : randomness);
  if (env_name == "puddle_world")
    return greedy_distance_policy(randomness < 0.0 ? 0.1 : randomness);
  throw InvalidSpec("unknown environment: " + env_name);
}

// One sample interaction, already featurized. gamma_next is 0 exactly on
// terminal transitions and x_next is then the zero vector.
struct Transition {
  features::FeatureVector x;
  features::FeatureVector x_next;
  double reward = 0.0;
  double gamma_next = 1.0;
  bool episode_start = false;
};

// Concatenates episodes under a fixed policy into an endless transition
// stream; deterministic given the seed.
class TransitionStream {
 public:
  TransitionStream(const Mdp& mdp, const Policy& policy, const features::FeatureMap& map,
                   double discount, std::uint64_t seed)
      : mdp_(&mdp),
        policy_(&policy),
        map_(&map),
        discount_(discount),
        env_rng_(make_rng(seed, Stream::env)),
        policy_rng_(make_rng(seed, Stream::policy)) {
    if (discount < 0.0 || discount > 1.0)
      throw InvalidSpec("TransitionStream: discount in [0,1]");
    state_ = mdp_->reset(env_rng_);
    x_ = map_->featurize(state_);
    fresh_ = true;
  }

  const Vector& state() const { return state_; }

  Transition next() {
    Transition tr;
    tr.x = x_;
    tr.episode_start = fresh_;
    const int action = policy_->sample_action(state_, policy_rng_);
    StepResult r = mdp_->step(state_, action, env_rng_);
    tr.reward = r.reward;
    if (r.terminal) {
      tr.gamma_next = 0.0;
      tr.x_next = features::FeatureVector::zero(map_->dim());
      state_ = mdp_->reset(env_rng_);
      x_ = map_->featurize(state_);
      fresh_ = true;
    } else {
      tr.gamma_next = discount_;
      tr.x_next = map_->featurize(r.next_state);
      state_ = r.next_state;
      x_ = tr.x_next;
      fresh_ = false;
    }
    return tr;
  }

 private:
  const Mdp* mdp_;
  const Policy* policy_;
  const features::FeatureMap* map_;
  double discount_;
  std::mt19937_64 env_rng_;
  std::mt19937_64 policy_rng_;
  Vector state_;
  features::FeatureVector x_;
  bool fresh_ = true;
};

inline std::vector<Transition> generate_transitions(const Mdp& mdp, const Policy& policy,
                                                    const features::FeatureMap& map, long n,
                                                    double discount, std::uint64_t seed) {
  if (n < 1) throw InvalidSpec("generate_transitions: n >= 1");
  TransitionStream stream(mdp, policy, map, discount, seed);
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) out.push_back(stream.next());
  return out;
}

struct GroundTruthOptions {
  int num_states = 500;
  int rollouts_per_state = 200;
  long horizon_cap = 100000;
  double discount = 1.0;
  int pool_factor = 20;  // trajectory pool size = pool_factor * num_states
};

struct GroundTruth {
  std::vector<Vector> states;
  std::vector<double> values;
  long truncated_rollouts = 0;  // horizon-cap warnings across all rollouts
};

// Monte Carlo values: test states sampled uniformly from one long trajectory
// under the policy, each valued by averaging rollout returns. Rollouts use
// per-state derived RNG streams so they can be computed in any order.
inline GroundTruth estimate_ground_truth(const Mdp& mdp, const Policy& policy,
                                         const GroundTruthOptions& opt, std::uint64_t seed) {
  if (opt.num_states < 1 || opt.rollouts_per_state < 1 || opt.horizon_cap < 1)
    throw InvalidSpec("estimate_ground_truth: counts must be >= 1");
  std::mt19937_64 pool_rng = make_rng(seed, Stream::ground_truth);
  const long pool_target = static_cast<long>(opt.pool_factor) * opt.num_states;
  std::vector<Vector> pool;
  pool.reserve(pool_target);
  Vector s = mdp.reset(pool_rng);
  while (static_cast<long>(pool.size()) < pool_target) {
    pool.push_back(s);
    const int a = policy.sample_action(s, pool_rng);
    StepResult r = mdp.step(s, a, pool_rng);
    s = r.terminal ? mdp.reset(pool_rng) : r.next_state;
  }

  GroundTruth out;
  std::uniform_int_distribution<long> pick(0, pool_target - 1);
  for (int i = 0; i < opt.num_states; ++i) out.states.push_back(pool[pick(pool_rng)]);

  out.values.resize(opt.num_states);
  for (int i = 0; i < opt.num_states; ++i) {
    std::mt19937_64 rng = make_rng(seed, Stream::ground_truth, static_cast<std::uint64_t>(i + 1));
    double sum = 0.0;
    for (int r = 0; r < opt.rollouts_per_state; ++r) {
      Vector cur = out.states[i];
      double ret = 0.0;
      double disc = 1.0;
      long t = 0;
      for (; t < opt.horizon_cap; ++t) {
        const int a = policy.sample_action(cur, rng);
        StepResult sr = mdp.step(cur, a, rng);
        ret += disc * sr.reward;
        if (sr.terminal) break;
        disc *= opt.discount;
        cur = sr.next_state;
      }
      if (t == opt.horizon_cap) ++out.truncated_rollouts;
      sum += ret;
    }
    out.values[i] = sum / opt.rollouts_per_state;
  }
  return out;
}

// Cache format: header state_0,...,state_{m-1},value then one row per test
// state at full precision.
inline void write_ground_truth(const GroundTruth& gt, const std::string& path) {
  if (gt.states.empty()) throw InvalidSpec("write_ground_truth: empty ground truth");
  csv::Writer w(path);
  std::vector<std::string> header;
  for (Eigen::Index i = 0; i < gt.states[0].size(); ++i)
    header.push_back("state_" + std::to_string(i));
  header.push_back("value");
  w.row(header);
  for (std::size_t r = 0; r < gt.states.size(); ++r) {
    std::vector<std::string> cells;
    for (Eigen::Index i = 0; i < gt.states[r].size(); ++i)
      cells.push_back(csv::format_double(gt.states[r](i)));
    cells.push_back(csv::format_double(gt.values[r]));
    w.row(cells);
  }
  w.close();
}

inline GroundTruth read_ground_truth(const std::string& path) {
  auto rows = csv::read_rows(path);
  if (rows.size() < 2) throw IoError("ground truth cache " + path + " is empty");
  const std::size_t cols = rows[0].size();
  if (cols < 2 || rows[0].back() != "value")
    throw IoError("ground truth cache " + path + ": bad header");
  GroundTruth gt;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw IoError("ground truth cache " + path + ": ragged row");
    Vector s(cols - 1);
    for (std::size_t i = 0; i + 1 < cols; ++i) s(i) = csv::parse_double(rows[r][i]);
    gt.states.push_back(s);
    gt.values.push_back(csv::parse_double(rows[r].back()));
  }
  return gt;
}

}  // namespace sketchtd::envs
