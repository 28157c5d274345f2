#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "sketchtd/config.hpp"
#include "sketchtd/csv.hpp"
#include "sketchtd/envs.hpp"
#include "sketchtd/errors.hpp"
#include "sketchtd/harness.hpp"
#include "sketchtd/verify.hpp"

namespace fs = std::filesystem;
using namespace sketchtd;

namespace {

struct Options {
  std::string config_path;
  std::string out_dir;
  int jobs = 1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool dry_run = false;
  long max_assignments = -1;
  bool compute_truth = false;
  std::string only;
  bool inject_fault = false;
};

config::ExperimentConfig load_config_with_overrides(const Options& o) {
  config::ExperimentConfig cfg = config::load_config(o.config_path);
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (o.seed_set) cfg.base_seed = o.seed;
  return cfg;
}

// Worst-case feature l1 norm over a deterministic probe grid. Anchoring the
// stepsize grid on probes rather than the ground-truth sample keeps the sweep
// matrix independent of whether the cache exists yet.
double probe_feature_l1(const features::FeatureMap& map, const features::StateBounds& bounds) {
  const int per_dim = 33;
  const int dims = bounds.dims();
  std::vector<Vector> probes;
  std::vector<int> idx(dims, 0);
  while (true) {
    Vector s(dims);
    for (int i = 0; i < dims; ++i)
      s(i) = bounds.low(i) + bounds.range(i) * idx[i] / (per_dim - 1);
    probes.push_back(std::move(s));
    int i = 0;
    while (i < dims && ++idx[i] == per_dim) idx[i++] = 0;
    if (i == dims) break;
  }
  return features::feature_l1_norm(map, probes);
}

envs::GroundTruthOptions gt_options(const config::ExperimentConfig& cfg) {
  envs::GroundTruthOptions opt;
  opt.num_states = cfg.ground_truth.num_states;
  opt.rollouts_per_state = cfg.ground_truth.rollouts_per_state;
  opt.horizon_cap = cfg.ground_truth.horizon_cap;
  opt.discount = cfg.env.discount;
  return opt;
}

envs::GroundTruth compute_truth(const config::ExperimentConfig& cfg) {
  auto mdp = envs::make_mdp(cfg.env.name);
  auto policy = envs::default_policy(cfg.env.name, cfg.env.policy_randomness);
  return envs::estimate_ground_truth(*mdp, *policy, gt_options(cfg), cfg.base_seed);
}

std::string cache_path(const config::ExperimentConfig& cfg) {
  return (fs::path(cfg.out_dir) / cfg.ground_truth.cache).string();
}

envs::GroundTruth load_truth(const config::ExperimentConfig& cfg, bool compute_if_missing) {
  const std::string path = cache_path(cfg);
  if (fs::exists(path)) return envs::read_ground_truth(path);
  if (!compute_if_missing)
    throw ConfigError("ground-truth cache not found at " + path +
                      "; run the ground-truth command first or pass --compute-truth");
  const envs::GroundTruth gt = compute_truth(cfg);
  fs::create_directories(cfg.out_dir);
  envs::write_ground_truth(gt, path);
  std::cout << "computed ground truth: " << gt.states.size() << " states ("
            << gt.truncated_rollouts << " truncated rollouts), cached at " << path << "\n";
  return gt;
}

struct Plan {
  std::vector<std::vector<harness::ParamAssignment>> assignments;  // per algorithm block
};

Plan make_plan(const config::ExperimentConfig& cfg) {
  if (cfg.algorithms.empty())
    throw ConfigError("config: needs at least one [[algorithms]] block");
  if (!cfg.has_features) throw ConfigError("config: [features] section is required");
  auto mdp = envs::make_mdp(cfg.env.name);
  const features::FeatureMap map =
      features::build_feature_map(cfg.feature_spec, mdp->bounds(), cfg.base_seed);
  const double l1 = probe_feature_l1(map, mdp->bounds());
  Plan plan;
  for (const auto& alg : cfg.algorithms)
    plan.assignments.push_back(config::assignments_for(alg, l1));
  return plan;
}

void print_plan(const config::ExperimentConfig& cfg, const Plan& plan) {
  long total = 0;
  for (std::size_t i = 0; i < cfg.algorithms.size(); ++i) {
    for (const auto& pa : plan.assignments[i]) {
      std::cout << cfg.algorithms[i].name << " alpha=" << csv::format_double(pa.alpha)
                << " lambda=" << csv::format_double(pa.lambda)
                << " eta=" << csv::format_double(pa.eta) << " xi=" << csv::format_double(pa.xi)
                << " seeds=" << cfg.run.num_seeds << "\n";
      total += cfg.run.num_seeds;
    }
  }
  std::cout << "planned runs: " << total << "\n";
}

std::string swept_param(const std::string& alg_name) {
  switch (agents::algorithm_from_string(alg_name)) {
    case agents::Algorithm::td:
      return "alpha";
    case agents::Algorithm::lstd:
    case agents::Algorithm::lstd_p:
    case agents::Algorithm::lstd_l:
      return "xi";
    default:
      return "eta";
  }
}

long count_diverged(const std::vector<harness::RunRecord>& records) {
  long n = 0;
  for (const auto& r : records) n += r.status == "diverged" ? 1 : 0;
  return n;
}

void write_best_params(const std::vector<std::pair<std::string, harness::ParamAssignment>>& best,
                       const std::string& criterion, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "algorithm,alpha,lambda,eta,xi,criterion\n";
  for (const auto& [name, pa] : best)
    f << name << ',' << csv::format_double(pa.alpha) << ',' << csv::format_double(pa.lambda)
      << ',' << csv::format_double(pa.eta) << ',' << csv::format_double(pa.xi) << ','
      << criterion << "\n";
}

void write_sensitivity_files(
    const std::vector<std::pair<std::string, std::vector<harness::SensitivityRow>>>& buckets,
    const std::string& out_dir) {
  for (const auto& [param, rows] : buckets) {
    const std::string path = (fs::path(out_dir) / ("sensitivity_" + param + ".csv")).string();
    harness::write_sensitivity(rows, path);
    std::cout << "wrote " << rows.size() << " sensitivity rows to " << path << "\n";
  }
}

// Groups rows per swept parameter, preserving algorithm order.
void bucket_sensitivity(
    std::vector<std::pair<std::string, std::vector<harness::SensitivityRow>>>& buckets,
    const std::string& param, std::vector<harness::SensitivityRow> rows) {
  for (auto& [name, existing] : buckets) {
    if (name != param) continue;
    existing.insert(existing.end(), rows.begin(), rows.end());
    return;
  }
  buckets.emplace_back(param, std::move(rows));
}

int cmd_ground_truth(const Options& o) {
  const auto cfg = load_config_with_overrides(o);
  const envs::GroundTruth gt = compute_truth(cfg);
  fs::create_directories(cfg.out_dir);
  const std::string path = cache_path(cfg);
  envs::write_ground_truth(gt, path);
  std::cout << "wrote " << gt.states.size() << " states to " << path << " ("
            << gt.truncated_rollouts << " truncated rollouts)\n";
  return 0;
}

int cmd_run(const Options& o) {
  const auto cfg = load_config_with_overrides(o);
  const Plan plan = make_plan(cfg);
  for (std::size_t i = 0; i < cfg.algorithms.size(); ++i)
    if (plan.assignments[i].size() != 1)
      throw ConfigError("config: algorithm '" + cfg.algorithms[i].name + "' resolves to " +
                        std::to_string(plan.assignments[i].size()) +
                        " assignments; the run command takes exactly one per algorithm"
                        " (use the sweep command for grids)");
  if (o.dry_run) {
    print_plan(cfg, plan);
    return 0;
  }
  const envs::GroundTruth gt = load_truth(cfg, o.compute_truth);
  std::vector<harness::RunRecord> all;
  long next_id = 0;
  for (std::size_t i = 0; i < cfg.algorithms.size(); ++i) {
    const harness::Experiment exp =
        harness::prepare_experiment(config::to_experiment_spec(cfg, cfg.algorithms[i]), gt);
    auto records = harness::run_experiment(exp, plan.assignments[i][0], o.jobs, next_id);
    next_id += static_cast<long>(records.size());
    std::cout << "ran " << cfg.algorithms[i].name << ": " << records.size() << " seeds, "
              << count_diverged(records) << " diverged\n";
    all.insert(all.end(), records.begin(), records.end());
  }
  fs::create_directories(cfg.out_dir);
  const std::string path = (fs::path(cfg.out_dir) / "results.csv").string();
  harness::write_results(all, path);
  std::cout << "wrote " << all.size() << " runs to " << path << "\n";
  if (count_diverged(all) == static_cast<long>(all.size())) {
    std::cerr << "error: all runs diverged\n";
    return 1;
  }
  return 0;
}

int cmd_sweep(const Options& o) {
  const auto cfg = load_config_with_overrides(o);
  Plan plan = make_plan(cfg);
  if (o.max_assignments >= 0)
    for (auto& as : plan.assignments)
      if (static_cast<long>(as.size()) > o.max_assignments) as.resize(o.max_assignments);
  if (o.dry_run) {
    print_plan(cfg, plan);
    return 0;
  }
  const envs::GroundTruth gt = load_truth(cfg, o.compute_truth);
  const auto crit = harness::selection_from_string(cfg.run.selection);

  std::vector<harness::RunRecord> all;
  std::vector<std::pair<std::string, harness::ParamAssignment>> best;
  std::vector<std::pair<std::string, std::vector<harness::SensitivityRow>>> sens;
  long next_id = 0;
  for (std::size_t i = 0; i < cfg.algorithms.size(); ++i) {
    const std::string& name = cfg.algorithms[i].name;
    const harness::Experiment exp =
        harness::prepare_experiment(config::to_experiment_spec(cfg, cfg.algorithms[i]), gt);
    auto records = harness::run_grid(exp, plan.assignments[i], o.jobs, next_id);
    next_id += static_cast<long>(records.size());
    std::cout << "swept " << name << ": " << plan.assignments[i].size() << " assignments x "
              << cfg.run.num_seeds << " seeds, " << count_diverged(records) << " diverged\n";
    try {
      best.emplace_back(name, harness::select_best_params(records, crit));
    } catch (const AllDiverged&) {
      std::cerr << "warning: every assignment of " << name << " diverged; omitted from best_params\n";
    }
    bucket_sensitivity(sens, swept_param(name),
                       harness::sensitivity_table(records, swept_param(name)));
    all.insert(all.end(), records.begin(), records.end());
  }
  fs::create_directories(cfg.out_dir);
  const std::string results_path = (fs::path(cfg.out_dir) / "sweep_results.csv").string();
  harness::write_results(all, results_path);
  std::cout << "wrote " << all.size() << " runs to " << results_path << "\n";
  const std::string best_path = (fs::path(cfg.out_dir) / "best_params.csv").string();
  write_best_params(best, cfg.run.selection, best_path);
  std::cout << "wrote " << best.size() << " best-parameter rows to " << best_path << "\n";
  write_sensitivity_files(sens, cfg.out_dir);
  if (count_diverged(all) == static_cast<long>(all.size())) {
    std::cerr << "error: all runs diverged\n";
    return 1;
  }
  return 0;
}

int cmd_report(const Options& o) {
  std::string out = "results";
  if (!o.config_path.empty())
    out = load_config_with_overrides(o).out_dir;
  else if (!o.out_dir.empty())
    out = o.out_dir;
  std::string in;
  for (const char* cand : {"sweep_results.csv", "results.csv"}) {
    const std::string p = (fs::path(out) / cand).string();
    if (fs::exists(p)) {
      in = p;
      break;
    }
  }
  if (in.empty())
    throw IoError("no results found in " + out + " (expected sweep_results.csv or results.csv)");
  const auto records = harness::read_results(in);
  const std::string curves_path = (fs::path(out) / "curves.csv").string();
  harness::write_curves(records, curves_path);
  std::cout << "aggregated " << records.size() << " runs from " << in << " into " << curves_path
            << "\n";

  std::vector<std::string> algs;
  for (const auto& rec : records) {
    bool seen = false;
    for (const auto& a : algs) seen = seen || a == rec.algorithm;
    if (!seen) algs.push_back(rec.algorithm);
  }
  std::vector<std::pair<std::string, std::vector<harness::SensitivityRow>>> sens;
  for (const auto& alg : algs) {
    std::vector<harness::RunRecord> group;
    for (const auto& rec : records)
      if (rec.algorithm == alg) group.push_back(rec);
    bucket_sensitivity(sens, swept_param(alg), harness::sensitivity_table(group, swept_param(alg)));
  }
  write_sensitivity_files(sens, out);
  return 0;
}

int cmd_verify(const Options& o) {
  verify::VerifyOptions vo;
  vo.only = o.only;
  if (o.seed_set) vo.seed = o.seed;
  vo.inject_sm_fault = o.inject_fault;
  const auto results = verify::run_battery(vo);
  int passed = 0;
  for (const auto& r : results) {
    std::printf("[%s] %-14s %6.2fs  %s\n", r.passed ? " ok " : "FAIL", r.name.c_str(), r.seconds,
                r.detail.c_str());
    passed += r.passed ? 1 : 0;
  }
  std::printf("%d/%zu checks passed\n", passed, results.size());
  if (!verify::all_passed(results)) {
    std::cerr << "error: failed checks:";
    for (const auto& r : results)
      if (!r.passed) std::cerr << ' ' << r.name;
    std::cerr << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"incremental policy evaluation with sketched linear systems"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--config", o.config_path, "experiment config file");
    if (required) opt->required();
  };
  auto add_out = [&](CLI::App* sub) {
    sub->add_option("--out", o.out_dir, "output directory (overrides the config)");
  };
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "base seed (overrides the config)")
        ->each([&](const std::string&) { o.seed_set = true; });
  };
  auto add_jobs = [&](CLI::App* sub) {
    sub->add_option("--jobs", o.jobs, "parallel runs")->check(CLI::PositiveNumber);
  };

  CLI::App* truth =
      app.add_subcommand("ground-truth", "estimate state values by Monte Carlo rollouts");
  add_config(truth, true);
  add_out(truth);
  add_seed(truth);

  CLI::App* run = app.add_subcommand("run", "execute one assignment per configured algorithm");
  add_config(run, true);
  add_out(run);
  add_seed(run);
  add_jobs(run);
  run->add_flag("--dry-run", o.dry_run, "print the planned run matrix and write nothing");
  run->add_flag("--compute-truth", o.compute_truth,
                "compute the ground-truth cache when it is missing");

  CLI::App* sweep = app.add_subcommand("sweep", "execute parameter grids and select the best");
  add_config(sweep, true);
  add_out(sweep);
  add_seed(sweep);
  add_jobs(sweep);
  sweep->add_flag("--dry-run", o.dry_run, "print the planned run matrix and write nothing");
  sweep->add_flag("--compute-truth", o.compute_truth,
                  "compute the ground-truth cache when it is missing");
  sweep->add_option("--max-assignments", o.max_assignments,
                    "truncate each algorithm's grid to the first N assignments")
      ->check(CLI::PositiveNumber);

  CLI::App* report =
      app.add_subcommand("report", "aggregate result CSVs into curve and sensitivity CSVs");
  add_config(report, false);
  add_out(report);

  CLI::App* verify_cmd = app.add_subcommand("verify", "run the numerical invariant battery");
  verify_cmd->add_option("--only", o.only, "run a single named check");
  add_seed(verify_cmd);
  verify_cmd->add_flag("--inject-fault", o.inject_fault,
                       "corrupt the rank-1 inverse update (negative test of the battery)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (truth->parsed()) return cmd_ground_truth(o);
    if (run->parsed()) return cmd_run(o);
    if (sweep->parsed()) return cmd_sweep(o);
    if (report->parsed()) return cmd_report(o);
    if (verify_cmd->parsed()) return cmd_verify(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
