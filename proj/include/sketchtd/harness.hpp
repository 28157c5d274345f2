#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "sketchtd/agents.hpp"
#include "sketchtd/csv.hpp"
#include "sketchtd/envs.hpp"
#include "sketchtd/errors.hpp"
#include "sketchtd/features.hpp"
#include "sketchtd/types.hpp"

namespace sketchtd::harness {

// Parameter grids swept per algorithm family. Stepsizes are scaled by the
// feature representation's worst-case l1 norm so the same grid works across
// encoders.
struct SweepGrid {
  std::vector<double> alpha;   // 13 values
  std::vector<double> lambda;  // 15 values
  std::vector<double> eta;     // 13 values, 0.1 x the alpha grid
  std::vector<double> xi;      // 13 values, log-spaced
};

inline SweepGrid default_sweep_grid(double feature_l1) {
  if (!(feature_l1 > 0.0)) throw InvalidSpec("default_sweep_grid: feature_l1 must be positive");
  SweepGrid g;
  for (int j = -7; j <= 5; ++j) g.alpha.push_back(0.1 * std::pow(2.0, j) / feature_l1);
  g.lambda = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.93, 0.95, 0.97, 0.99, 1.0};
  for (double a : g.alpha) g.eta.push_back(0.1 * a);
  for (int j = 0; j <= 12; ++j) g.xi.push_back(std::pow(10.0, -5.0 + 0.75 * j));
  return g;
}

struct ParamAssignment {
  double alpha = 0.0;
  double lambda = 0.0;
  double eta = 0.0;
  double xi = 1.0;

  bool operator==(const ParamAssignment& o) const {
    return alpha == o.alpha && lambda == o.lambda && eta == o.eta && xi == o.xi;
  }
};

// The applicable subset per algorithm: td sweeps (alpha, lambda), the lstd
// family (xi, lambda), the atd family (eta, lambda) with xi fixed at 1.
inline std::vector<ParamAssignment> enumerate_assignments(agents::Algorithm alg,
                                                          const SweepGrid& grid) {
  std::vector<ParamAssignment> out;
  switch (alg) {
    case agents::Algorithm::td:
      for (double a : grid.alpha)
        for (double l : grid.lambda) out.push_back({a, l, 0.0, 1.0});
      break;
    case agents::Algorithm::lstd:
    case agents::Algorithm::lstd_p:
    case agents::Algorithm::lstd_l:
      for (double xi : grid.xi)
        for (double l : grid.lambda) out.push_back({0.0, l, 0.0, xi});
      break;
    case agents::Algorithm::atd_l:
    case agents::Algorithm::atd_svd:
      for (double eta : grid.eta)
        for (double l : grid.lambda) out.push_back({0.0, l, eta, 1.0});
      break;
  }
  return out;
}

struct TestSet {
  std::vector<features::FeatureVector> xs;
  std::vector<double> truths;
};

inline TestSet make_test_set(const envs::GroundTruth& gt, const features::FeatureMap& map) {
  TestSet ts;
  ts.xs.reserve(gt.states.size());
  for (const auto& s : gt.states) ts.xs.push_back(map.featurize(s));
  ts.truths = gt.values;
  return ts;
}

inline double rmse(const agents::Agent& agent, const TestSet& ts) {
  if (ts.xs.empty()) throw InvalidSpec("rmse: empty test set");
  double acc = 0.0;
  for (std::size_t i = 0; i < ts.xs.size(); ++i) {
    const double diff = agent.value(ts.xs[i]) - ts.truths[i];
    acc += diff * diff;
  }
  return std::sqrt(acc / static_cast<double>(ts.xs.size()));
}

struct EvalPoint {
  long step = 0;
  double rmse = 0.0;
};

struct RunRecord {
  long run_id = 0;
  std::uint64_t seed = 0;
  std::string algorithm;
  std::string env;
  std::string features;
  int k = 0;
  std::string sketch_family;  // "none" for unsketched algorithms
  ParamAssignment params;
  std::vector<EvalPoint> curve;
  std::string status;  // "completed" | "diverged"
  double step_time_us = std::numeric_limits<double>::quiet_NaN();
};

struct LearningCurve {
  std::vector<long> steps;
  std::vector<double> mean;
  std::vector<double> std_error;  // sample std / sqrt(runs)
  int runs = 0;
};

// Mean and standard error per evaluation step over the completed runs of one
// configuration.
inline LearningCurve aggregate_curve(const std::vector<RunRecord>& group) {
  std::vector<const RunRecord*> done;
  for (const auto& r : group)
    if (r.status == "completed") done.push_back(&r);
  if (done.empty()) throw AllDiverged("aggregate_curve: no completed runs");
  const std::size_t points = done.front()->curve.size();
  for (const auto* r : done)
    if (r->curve.size() != points)
      throw InvalidSpec("aggregate_curve: runs disagree on the evaluation schedule");
  LearningCurve out;
  out.runs = static_cast<int>(done.size());
  for (std::size_t p = 0; p < points; ++p) {
    const long step = done.front()->curve[p].step;
    double mean = 0.0;
    for (const auto* r : done) mean += r->curve[p].rmse;
    mean /= out.runs;
    double var = 0.0;
    for (const auto* r : done) {
      const double diff = r->curve[p].rmse - mean;
      var += diff * diff;
    }
    const double std_err =
        out.runs > 1 ? std::sqrt(var / (out.runs - 1)) / std::sqrt(double(out.runs)) : 0.0;
    out.steps.push_back(step);
    out.mean.push_back(mean);
    out.std_error.push_back(std_err);
  }
  return out;
}

struct ExperimentSpec {
  std::string env = "mountain_car";
  double policy_randomness = -1.0;  // negative: the environment's default
  features::FeatureSpec feature_spec;
  double discount = 1.0;
  agents::AgentConfig agent;
  long total_steps = 10000;
  long eval_every = 100;
  int num_seeds = 10;
  std::uint64_t base_seed = 0;
  bool timing = false;  // wall-clock medians break rerun byte-identity; opt in
};

inline std::string feature_token(const features::FeatureSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, features::RbfGridSpec>)
          return "rbf-" + std::to_string(s.centers_per_dim);
        else if constexpr (std::is_same_v<T, features::TileCodingSpec>)
          return "tile-" + std::to_string(s.tilings) + "x" + std::to_string(s.memory_size);
        else if constexpr (std::is_same_v<T, features::SplineGridSpec>)
          return "spline-" + std::to_string(s.centers_per_dim);
        else
          return "tiledrbf-" + std::to_string(s.tilings) + "x" +
                 std::to_string(s.grid_per_dim);
      },
      spec);
}

// Read-only state shared by every run of one experiment: the feature map is
// built once from the base seed so all seeds and assignments see the same
// representation, and the test set is featurized once.
struct Experiment {
  ExperimentSpec spec;
  features::FeatureMap map;
  TestSet test_set;
};

inline Experiment prepare_experiment(ExperimentSpec spec, const envs::GroundTruth& gt) {
  auto mdp = envs::make_mdp(spec.env);
  features::FeatureMap map =
      features::build_feature_map(spec.feature_spec, mdp->bounds(), spec.base_seed);
  TestSet ts = make_test_set(gt, map);
  return Experiment{std::move(spec), std::move(map), std::move(ts)};
}

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
  return 0.5 * (v[mid - 1] + hi);
}

// Runs fn(0..n-1) on a small thread pool; task order is arbitrary but each
// index runs exactly once, so deterministic per-index outputs are unaffected
// by the job count.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (jobs < 1) jobs = 1;
  jobs = static_cast<int>(std::min<std::size_t>(jobs, n));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace detail

// One (assignment, seed) execution: fresh environment stream, sketch, and
// agent, all derived from base_seed ^ seed_index so a fixed seed index sees
// identical data under every assignment.
inline RunRecord execute_run(const Experiment& exp, const ParamAssignment& pa, int seed_index,
                             long run_id) {
  const ExperimentSpec& spec = exp.spec;
  const std::uint64_t run_seed = spec.base_seed ^ static_cast<std::uint64_t>(seed_index);

  agents::AgentConfig acfg = spec.agent;
  acfg.alpha = pa.alpha;
  acfg.lambda = pa.lambda;
  acfg.eta = pa.eta;
  acfg.xi = pa.xi;
  auto agent = agents::make_agent(acfg, exp.map.dim(), run_seed);

  auto mdp = envs::make_mdp(spec.env);
  auto policy = envs::default_policy(spec.env, spec.policy_randomness);
  envs::TransitionStream stream(*mdp, *policy, exp.map, spec.discount, run_seed);

  RunRecord rec;
  rec.run_id = run_id;
  rec.seed = run_seed;
  rec.algorithm = agents::to_string(acfg.algorithm);
  rec.env = spec.env;
  rec.features = feature_token(spec.feature_spec);
  rec.k = agents::uses_rank(acfg.algorithm) ? acfg.k : 0;
  rec.sketch_family =
      agents::uses_sketch(acfg.algorithm) ? sketch::to_string(acfg.family) : "none";
  rec.params = pa;
  rec.status = "completed";

  std::vector<double> step_times;
  if (spec.timing) step_times.reserve(static_cast<std::size_t>(spec.total_steps));
  try {
    for (long t = 1; t <= spec.total_steps; ++t) {
      const envs::Transition tr = stream.next();
      if (spec.timing) {
        const auto t0 = std::chrono::steady_clock::now();
        agent->observe(tr);
        const auto t1 = std::chrono::steady_clock::now();
        step_times.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
      } else {
        agent->observe(tr);
      }
      if (t % spec.eval_every == 0) rec.curve.push_back({t, rmse(*agent, exp.test_set)});
    }
  } catch (const DivergenceError&) {
    rec.status = "diverged";
  }
  if (spec.timing) rec.step_time_us = detail::median(std::move(step_times));
  return rec;
}

// All seeds of a single assignment.
inline std::vector<RunRecord> run_experiment(const Experiment& exp, const ParamAssignment& pa,
                                             int jobs = 1, long first_run_id = 0) {
  std::vector<RunRecord> out(exp.spec.num_seeds);
  detail::parallel_for(out.size(), jobs, [&](std::size_t i) {
    out[i] = execute_run(exp, pa, static_cast<int>(i), first_run_id + static_cast<long>(i));
  });
  return out;
}

// Assignment-major grid execution; records are ordered by run_id regardless
// of the job count.
inline std::vector<RunRecord> run_grid(const Experiment& exp,
                                       const std::vector<ParamAssignment>& assignments,
                                       int jobs = 1, long first_run_id = 0) {
  const std::size_t seeds = static_cast<std::size_t>(exp.spec.num_seeds);
  std::vector<RunRecord> out(assignments.size() * seeds);
  detail::parallel_for(out.size(), jobs, [&](std::size_t i) {
    const std::size_t a = i / seeds;
    const int s = static_cast<int>(i % seeds);
    out[i] = execute_run(exp, assignments[a], s, first_run_id + static_cast<long>(i));
  });
  return out;
}

enum class SelectionCriterion { full, second_half };

inline SelectionCriterion selection_from_string(const std::string& s) {
  if (s == "full") return SelectionCriterion::full;
  if (s == "second_half") return SelectionCriterion::second_half;
  throw InvalidSpec("unknown selection criterion: " + s);
}

namespace detail {

inline double run_score(const RunRecord& rec, SelectionCriterion crit) {
  if (rec.status != "completed" || rec.curve.empty())
    return std::numeric_limits<double>::infinity();
  const long max_step = rec.curve.back().step;
  double acc = 0.0;
  for (const auto& p : rec.curve) {
    if (crit == SelectionCriterion::second_half && 2 * p.step <= max_step) continue;
    acc += p.rmse;
  }
  return acc;
}

}  // namespace detail

// Lowest summed RMSE, averaged over seeds first; any diverged seed poisons
// its assignment. Ties resolve to the earliest assignment in record order.
inline ParamAssignment select_best_params(const std::vector<RunRecord>& records,
                                          SelectionCriterion crit) {
  std::vector<ParamAssignment> keys;
  std::vector<double> totals;
  std::vector<int> counts;
  for (const auto& rec : records) {
    std::size_t g = 0;
    while (g < keys.size() && !(keys[g] == rec.params)) ++g;
    if (g == keys.size()) {
      keys.push_back(rec.params);
      totals.push_back(0.0);
      counts.push_back(0);
    }
    totals[g] += detail::run_score(rec, crit);
    counts[g] += 1;
  }
  if (keys.empty()) throw InvalidSpec("select_best_params: no records");
  std::size_t best = keys.size();
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < keys.size(); ++g) {
    const double score = totals[g] / counts[g];
    if (score < best_score) {
      best_score = score;
      best = g;
    }
  }
  if (best == keys.size()) throw AllDiverged("select_best_params: every assignment diverged");
  return keys[best];
}

struct SensitivityRow {
  std::string algorithm;
  std::string param_name;
  double param_value = 0.0;
  double best_lambda = 0.0;
  double mean_rmse = 0.0;
  double std_error = 0.0;
};

namespace detail {

inline double param_of(const RunRecord& rec, const std::string& name) {
  if (name == "alpha") return rec.params.alpha;
  if (name == "eta") return rec.params.eta;
  if (name == "xi") return rec.params.xi;
  if (name == "lambda") return rec.params.lambda;
  throw InvalidSpec("unknown swept parameter: " + name);
}

inline double curve_mean(const RunRecord& rec) {
  if (rec.status != "completed" || rec.curve.empty())
    return std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (const auto& p : rec.curve) acc += p.rmse;
  return acc / static_cast<double>(rec.curve.size());
}

}  // namespace detail

// Whole-curve average RMSE at the best lambda for each value of the swept
// parameter; rows appear in the order values first occur in the records.
inline std::vector<SensitivityRow> sensitivity_table(const std::vector<RunRecord>& records,
                                                     const std::string& param_name) {
  std::vector<double> values;
  std::vector<std::string> algs;
  for (const auto& rec : records) {
    const double v = detail::param_of(rec, param_name);
    bool seen = false;
    for (double u : values) seen = seen || u == v;
    if (!seen) {
      values.push_back(v);
      algs.push_back(rec.algorithm);
    }
  }
  std::vector<SensitivityRow> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    std::vector<double> lambdas;
    for (const auto& rec : records) {
      if (detail::param_of(rec, param_name) != v) continue;
      bool seen = false;
      for (double l : lambdas) seen = seen || l == rec.params.lambda;
      if (!seen) lambdas.push_back(rec.params.lambda);
    }
    SensitivityRow row{algs[i], param_name, v, 0.0,
                       std::numeric_limits<double>::infinity(), 0.0};
    for (double l : lambdas) {
      std::vector<double> means;
      for (const auto& rec : records) {
        if (detail::param_of(rec, param_name) != v || rec.params.lambda != l) continue;
        means.push_back(detail::curve_mean(rec));
      }
      double mean = 0.0;
      for (double m : means) mean += m;
      mean /= static_cast<double>(means.size());
      if (mean < row.mean_rmse) {
        double var = 0.0;
        for (double m : means) var += (m - mean) * (m - mean);
        row.best_lambda = l;
        row.mean_rmse = mean;
        row.std_error = means.size() > 1
                            ? std::sqrt(var / (means.size() - 1)) / std::sqrt(double(means.size()))
                            : 0.0;
      }
    }
    out.push_back(row);
  }
  return out;
}

inline const std::vector<std::string>& results_header() {
  static const std::vector<std::string> cols = {
      "run_id", "seed",   "algorithm", "env",  "features", "k",      "sketch_family", "alpha",
      "lambda", "eta",    "xi",        "step", "rmse",     "status", "step_time_us"};
  return cols;
}

// One row per evaluation point; a run that diverged before its first
// evaluation keeps a single placeholder row with step 0 so no record is lost.
inline void write_results(const std::vector<RunRecord>& records, const std::string& path) {
  csv::Writer w(path);
  w.row(results_header());
  for (const auto& rec : records) {
    auto emit = [&](long step, double value) {
      w.row({std::to_string(rec.run_id), std::to_string(rec.seed), rec.algorithm, rec.env,
             rec.features, std::to_string(rec.k), rec.sketch_family,
             csv::format_double(rec.params.alpha), csv::format_double(rec.params.lambda),
             csv::format_double(rec.params.eta), csv::format_double(rec.params.xi),
             std::to_string(step), csv::format_double(value), rec.status,
             csv::format_double(rec.step_time_us)});
    };
    if (rec.curve.empty())
      emit(0, std::numeric_limits<double>::quiet_NaN());
    else
      for (const auto& p : rec.curve) emit(p.step, p.rmse);
  }
  w.close();
}

inline std::vector<RunRecord> read_results(const std::string& path) {
  const auto rows = csv::read_rows(path);
  if (rows.empty() || rows[0] != results_header())
    throw IoError("results file " + path + ": missing or wrong header");
  std::vector<RunRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != results_header().size())
      throw IoError("results file " + path + ": wrong column count on line " +
                    std::to_string(i + 1));
    const long run_id = std::stol(r[0]);
    if (out.empty() || out.back().run_id != run_id) {
      RunRecord rec;
      rec.run_id = run_id;
      rec.seed = std::stoull(r[1]);
      rec.algorithm = r[2];
      rec.env = r[3];
      rec.features = r[4];
      rec.k = std::stoi(r[5]);
      rec.sketch_family = r[6];
      rec.params.alpha = csv::parse_double(r[7]);
      rec.params.lambda = csv::parse_double(r[8]);
      rec.params.eta = csv::parse_double(r[9]);
      rec.params.xi = csv::parse_double(r[10]);
      rec.status = r[13];
      rec.step_time_us = csv::parse_double(r[14]);
      out.push_back(std::move(rec));
    }
    const long step = std::stol(r[11]);
    if (step > 0) out.back().curve.push_back({step, csv::parse_double(r[12])});
  }
  return out;
}

inline void write_sensitivity(const std::vector<SensitivityRow>& rows, const std::string& path) {
  csv::Writer w(path);
  w.row({"algorithm", "param_name", "param_value", "best_lambda", "mean_rmse", "stderr"});
  for (const auto& row : rows)
    w.row({row.algorithm, row.param_name, csv::format_double(row.param_value),
           csv::format_double(row.best_lambda), csv::format_double(row.mean_rmse),
           csv::format_double(row.std_error)});
  w.close();
}

// Aggregated learning curves for every distinct configuration, in first-seen
// order: configuration columns, then per-step mean, standard error, and the
// number of completed runs.
inline void write_curves(const std::vector<RunRecord>& records, const std::string& path) {
  csv::Writer w(path);
  w.row({"algorithm", "env", "features", "k", "sketch_family", "alpha", "lambda", "eta", "xi",
         "step", "mean_rmse", "std_error", "runs"});
  std::vector<std::vector<const RunRecord*>> groups;
  auto same_config = [](const RunRecord& a, const RunRecord& b) {
    return a.algorithm == b.algorithm && a.env == b.env && a.features == b.features &&
           a.k == b.k && a.sketch_family == b.sketch_family && a.params == b.params;
  };
  for (const auto& rec : records) {
    bool placed = false;
    for (auto& g : groups)
      if (same_config(*g.front(), rec)) {
        g.push_back(&rec);
        placed = true;
        break;
      }
    if (!placed) groups.push_back({&rec});
  }
  for (const auto& g : groups) {
    std::vector<RunRecord> group;
    group.reserve(g.size());
    for (const auto* r : g) group.push_back(*r);
    LearningCurve curve;
    try {
      curve = aggregate_curve(group);
    } catch (const AllDiverged&) {
      continue;
    }
    const RunRecord& rep = *g.front();
    for (std::size_t p = 0; p < curve.steps.size(); ++p)
      w.row({rep.algorithm, rep.env, rep.features, std::to_string(rep.k), rep.sketch_family,
             csv::format_double(rep.params.alpha), csv::format_double(rep.params.lambda),
             csv::format_double(rep.params.eta), csv::format_double(rep.params.xi),
             std::to_string(curve.steps[p]), csv::format_double(curve.mean[p]),
             csv::format_double(curve.std_error[p]), std::to_string(curve.runs)});
  }
  w.close();
}

}  // namespace sketchtd::harness
