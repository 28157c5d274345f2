#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sketchtd/agents.hpp"
#include "sketchtd/csv.hpp"
#include "sketchtd/errors.hpp"
#include "sketchtd/features.hpp"
#include "sketchtd/harness.hpp"
#include "sketchtd/sketch.hpp"

namespace sketchtd::config {

struct EnvConfig {
  std::string name = "mountain_car";
  double policy_randomness = -1.0;  // negative: the environment's default
  double discount = 1.0;

  bool operator==(const EnvConfig&) const = default;
};

struct RunConfig {
  long total_steps = 10000;
  long eval_every = 100;
  int num_seeds = 10;
  bool timing = false;
  std::string selection = "full";  // full | second_half

  bool operator==(const RunConfig&) const = default;
};

struct GroundTruthConfig {
  int num_states = 500;
  int rollouts_per_state = 200;
  long horizon_cap = 100000;
  std::string cache = "ground_truth.csv";  // relative to out_dir

  bool operator==(const GroundTruthConfig&) const = default;
};

// One algorithm block. Parameter vectors are explicit grids (one element =
// fixed value); an empty vector means unset, resolved against the default
// sweep grid when sweep = true, or the parameter's default otherwise.
struct AlgorithmConfig {
  std::string name;
  int k = 0;
  std::string sketch = "gaussian";
  bool sweep = false;
  std::vector<double> alpha;
  std::vector<double> lambda;
  std::vector<double> eta;
  std::vector<double> xi;
  double drop_tol = 1e-8;  // atd-svd only

  bool operator==(const AlgorithmConfig&) const = default;
};

struct ExperimentConfig {
  std::uint64_t base_seed = 0;
  std::string out_dir = "results";
  EnvConfig env;
  bool has_features = false;
  features::FeatureSpec feature_spec;
  RunConfig run;
  GroundTruthConfig ground_truth;
  std::vector<AlgorithmConfig> algorithms;

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Removes a trailing comment, honoring quoted strings.
inline std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

[[noreturn]] inline void fail(int line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

inline double to_double(const std::string& tok, int line) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || tok.empty()) fail(line, "expected a number, got '" + tok + "'");
  return v;
}

inline long to_long(const std::string& tok, int line) {
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (end != tok.c_str() + tok.size() || tok.empty()) fail(line, "expected an integer, got '" + tok + "'");
  return v;
}

inline int to_int(const std::string& tok, int line) {
  return static_cast<int>(to_long(tok, line));
}

inline std::uint64_t to_uint64(const std::string& tok, int line) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
  if (end != tok.c_str() + tok.size() || tok.empty())
    fail(line, "expected an unsigned integer, got '" + tok + "'");
  return v;
}

inline bool to_bool(const std::string& tok, int line) {
  if (tok == "true") return true;
  if (tok == "false") return false;
  fail(line, "expected true or false, got '" + tok + "'");
}

inline std::string to_string_value(const std::string& tok, int line) {
  if (tok.size() < 2 || tok.front() != '"' || tok.back() != '"')
    fail(line, "expected a quoted string, got '" + tok + "'");
  std::string out;
  for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
    if (tok[i] == '\\' && i + 2 < tok.size() && (tok[i + 1] == '"' || tok[i + 1] == '\\')) {
      out.push_back(tok[i + 1]);
      ++i;
    } else {
      out.push_back(tok[i]);
    }
  }
  return out;
}

// Accepts either a bare number or a bracketed list of numbers.
inline std::vector<double> to_double_list(const std::string& tok, int line) {
  if (tok.empty()) fail(line, "expected a number or array");
  if (tok.front() != '[') return {to_double(tok, line)};
  if (tok.back() != ']') fail(line, "unterminated array");
  std::vector<double> out;
  std::string body = tok.substr(1, tok.size() - 2);
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(trim(item), line));
  if (out.empty()) fail(line, "array must not be empty");
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::string section;
  AlgorithmConfig* alg = nullptr;
  std::set<std::string> seen;
  std::map<std::string, std::pair<std::string, int>> feature_kv;
  bool saw_features = false;

  std::stringstream lines(text);
  std::string raw;
  int line = 0;
  while (std::getline(lines, raw)) {
    ++line;
    const std::string s = detail::trim(detail::strip_comment(raw));
    if (s.empty()) continue;

    if (s.size() >= 4 && s.substr(0, 2) == "[[" && s.substr(s.size() - 2) == "]]") {
      const std::string name = detail::trim(s.substr(2, s.size() - 4));
      if (name != "algorithms") detail::fail(line, "unknown block '" + name + "'");
      cfg.algorithms.emplace_back();
      alg = &cfg.algorithms.back();
      section = "algorithms";
      continue;
    }
    if (s.front() == '[' && s.back() == ']') {
      section = detail::trim(s.substr(1, s.size() - 2));
      alg = nullptr;
      if (section != "env" && section != "features" && section != "run" &&
          section != "ground_truth")
        detail::fail(line, "unknown section [" + section + "]");
      if (section == "features") saw_features = true;
      continue;
    }

    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) detail::fail(line, "expected key = value");
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string val = detail::trim(s.substr(eq + 1));
    if (key.empty() || val.empty()) detail::fail(line, "expected key = value");

    std::string dedup_key = section + "." + key;
    if (section == "algorithms")
      dedup_key += "#" + std::to_string(cfg.algorithms.size() - 1);
    if (!seen.insert(dedup_key).second) detail::fail(line, "duplicate key '" + key + "'");

    if (section.empty()) {
      if (key == "base_seed")
        cfg.base_seed = detail::to_uint64(val, line);
      else if (key == "out_dir")
        cfg.out_dir = detail::to_string_value(val, line);
      else
        detail::fail(line, "unknown top-level key '" + key + "'");
    } else if (section == "env") {
      if (key == "name")
        cfg.env.name = detail::to_string_value(val, line);
      else if (key == "policy_randomness")
        cfg.env.policy_randomness = detail::to_double(val, line);
      else if (key == "discount")
        cfg.env.discount = detail::to_double(val, line);
      else
        detail::fail(line, "unknown key '" + key + "' in [env]");
    } else if (section == "features") {
      feature_kv[key] = {val, line};
    } else if (section == "run") {
      if (key == "total_steps")
        cfg.run.total_steps = detail::to_long(val, line);
      else if (key == "eval_every")
        cfg.run.eval_every = detail::to_long(val, line);
      else if (key == "num_seeds")
        cfg.run.num_seeds = detail::to_int(val, line);
      else if (key == "timing")
        cfg.run.timing = detail::to_bool(val, line);
      else if (key == "selection")
        cfg.run.selection = detail::to_string_value(val, line);
      else
        detail::fail(line, "unknown key '" + key + "' in [run]");
    } else if (section == "ground_truth") {
      if (key == "num_states")
        cfg.ground_truth.num_states = detail::to_int(val, line);
      else if (key == "rollouts_per_state")
        cfg.ground_truth.rollouts_per_state = detail::to_int(val, line);
      else if (key == "horizon_cap")
        cfg.ground_truth.horizon_cap = detail::to_long(val, line);
      else if (key == "cache")
        cfg.ground_truth.cache = detail::to_string_value(val, line);
      else
        detail::fail(line, "unknown key '" + key + "' in [ground_truth]");
    } else {
      if (!alg) detail::fail(line, "key outside any [[algorithms]] block");
      if (key == "name")
        alg->name = detail::to_string_value(val, line);
      else if (key == "k")
        alg->k = detail::to_int(val, line);
      else if (key == "sketch")
        alg->sketch = detail::to_string_value(val, line);
      else if (key == "sweep")
        alg->sweep = detail::to_bool(val, line);
      else if (key == "alpha")
        alg->alpha = detail::to_double_list(val, line);
      else if (key == "lambda")
        alg->lambda = detail::to_double_list(val, line);
      else if (key == "eta")
        alg->eta = detail::to_double_list(val, line);
      else if (key == "xi")
        alg->xi = detail::to_double_list(val, line);
      else if (key == "drop_tol")
        alg->drop_tol = detail::to_double(val, line);
      else
        detail::fail(line, "unknown key '" + key + "' in [[algorithms]]");
    }
  }

  if (saw_features) {
    auto take = [&](const char* key) -> const std::pair<std::string, int>* {
      auto it = feature_kv.find(key);
      if (it == feature_kv.end()) return nullptr;
      return &it->second;
    };
    const auto* kind = take("kind");
    if (!kind) throw ConfigError("config: [features] requires key 'kind'");
    std::set<std::string> allowed = {"kind"};
    const std::string k = detail::to_string_value(kind->first, kind->second);
    if (k == "rbf") {
      allowed.insert({"centers_per_dim", "width", "normalize_per_dim"});
      features::RbfGridSpec spec;
      if (const auto* p = take("centers_per_dim")) spec.centers_per_dim = detail::to_int(p->first, p->second);
      if (const auto* p = take("width")) spec.width = detail::to_double(p->first, p->second);
      if (const auto* p = take("normalize_per_dim")) spec.normalize_per_dim = detail::to_bool(p->first, p->second);
      cfg.feature_spec = spec;
    } else if (k == "tile") {
      allowed.insert({"tilings", "tiles_per_dim", "memory_size"});
      features::TileCodingSpec spec;
      if (const auto* p = take("tilings")) spec.tilings = detail::to_int(p->first, p->second);
      if (const auto* p = take("tiles_per_dim")) spec.tiles_per_dim = detail::to_int(p->first, p->second);
      if (const auto* p = take("memory_size")) spec.memory_size = detail::to_int(p->first, p->second);
      cfg.feature_spec = spec;
    } else if (k == "spline") {
      allowed.insert({"centers_per_dim", "width"});
      features::SplineGridSpec spec;
      if (const auto* p = take("centers_per_dim")) spec.centers_per_dim = detail::to_int(p->first, p->second);
      if (const auto* p = take("width")) spec.width = detail::to_double(p->first, p->second);
      cfg.feature_spec = spec;
    } else if (k == "tiledrbf") {
      allowed.insert({"tilings", "grid_per_dim", "width"});
      features::TiledRbfSpec spec;
      if (const auto* p = take("tilings")) spec.tilings = detail::to_int(p->first, p->second);
      if (const auto* p = take("grid_per_dim")) spec.grid_per_dim = detail::to_int(p->first, p->second);
      if (const auto* p = take("width")) spec.width = detail::to_double(p->first, p->second);
      cfg.feature_spec = spec;
    } else {
      throw ConfigError("config: unknown feature kind '" + k + "'");
    }
    for (const auto& [key, vp] : feature_kv)
      if (!allowed.count(key))
        detail::fail(vp.second, "key '" + key + "' does not apply to feature kind '" + k + "'");
    cfg.has_features = true;
  }

  // Cross-field validation with key names in every message.
  for (std::size_t i = 0; i < cfg.algorithms.size(); ++i) {
    AlgorithmConfig& a = cfg.algorithms[i];
    const std::string where = "algorithms[" + std::to_string(i) + "]";
    if (a.name.empty()) throw ConfigError("config: " + where + " is missing key 'name'");
    agents::Algorithm algo;
    try {
      algo = agents::algorithm_from_string(a.name);
    } catch (const InvalidSpec&) {
      throw ConfigError("config: " + where + ": unknown algorithm '" + a.name + "'");
    }
    if (agents::uses_sketch(algo)) {
      try {
        sketch::family_from_string(a.sketch);
      } catch (const InvalidSpec&) {
        throw ConfigError("config: " + where + ": unknown sketch family '" + a.sketch + "'");
      }
    }
    if (agents::uses_rank(algo) && a.k <= 0)
      throw ConfigError("config: " + where + " requires k >= 1");
    if (!agents::uses_rank(algo) && a.k != 0)
      throw ConfigError("config: " + where + ": key 'k' does not apply to " + a.name);
    if (!agents::uses_sketch(algo) && a.sketch != "gaussian")
      throw ConfigError("config: " + where + ": key 'sketch' does not apply to " + a.name);
    auto forbid = [&](const std::vector<double>& v, const char* key, bool ok) {
      if (!v.empty() && !ok)
        throw ConfigError("config: " + where + ": key '" + std::string(key) +
                          "' does not apply to " + a.name);
    };
    const bool is_td = algo == agents::Algorithm::td;
    const bool is_lstd = algo == agents::Algorithm::lstd || algo == agents::Algorithm::lstd_p ||
                         algo == agents::Algorithm::lstd_l;
    const bool is_atd = algo == agents::Algorithm::atd_l || algo == agents::Algorithm::atd_svd;
    forbid(a.alpha, "alpha", is_td);
    forbid(a.eta, "eta", is_atd);
    forbid(a.xi, "xi", is_lstd);
    if (algo != agents::Algorithm::atd_svd && a.drop_tol != 1e-8)
      throw ConfigError("config: " + where + ": key 'drop_tol' only applies to atd-svd");
  }
  if (cfg.run.selection != "full" && cfg.run.selection != "second_half")
    throw ConfigError("config: run.selection must be \"full\" or \"second_half\"");
  if (cfg.env.name != "mountain_car" && cfg.env.name != "puddle_world")
    throw ConfigError("config: unknown env.name '" + cfg.env.name + "'");
  if (cfg.run.total_steps < 1 || cfg.run.eval_every < 1 || cfg.run.num_seeds < 1)
    throw ConfigError("config: run.total_steps, run.eval_every, run.num_seeds must be >= 1");
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace detail {

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string list(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += csv::format_double(v[i]);
  }
  return out + "]";
}

}  // namespace detail

inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  out += "base_seed = " + std::to_string(cfg.base_seed) + "\n";
  out += "out_dir = " + detail::quote(cfg.out_dir) + "\n";
  out += "\n[env]\n";
  out += "name = " + detail::quote(cfg.env.name) + "\n";
  out += "policy_randomness = " + csv::format_double(cfg.env.policy_randomness) + "\n";
  out += "discount = " + csv::format_double(cfg.env.discount) + "\n";
  if (cfg.has_features) {
    out += "\n[features]\n";
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, features::RbfGridSpec>) {
            out += "kind = \"rbf\"\n";
            out += "centers_per_dim = " + std::to_string(s.centers_per_dim) + "\n";
            out += "width = " + csv::format_double(s.width) + "\n";
            out += std::string("normalize_per_dim = ") + (s.normalize_per_dim ? "true" : "false") +
                   "\n";
          } else if constexpr (std::is_same_v<T, features::TileCodingSpec>) {
            out += "kind = \"tile\"\n";
            out += "tilings = " + std::to_string(s.tilings) + "\n";
            out += "tiles_per_dim = " + std::to_string(s.tiles_per_dim) + "\n";
            out += "memory_size = " + std::to_string(s.memory_size) + "\n";
          } else if constexpr (std::is_same_v<T, features::SplineGridSpec>) {
            out += "kind = \"spline\"\n";
            out += "centers_per_dim = " + std::to_string(s.centers_per_dim) + "\n";
            out += "width = " + csv::format_double(s.width) + "\n";
          } else {
            out += "kind = \"tiledrbf\"\n";
            out += "tilings = " + std::to_string(s.tilings) + "\n";
            out += "grid_per_dim = " + std::to_string(s.grid_per_dim) + "\n";
            out += "width = " + csv::format_double(s.width) + "\n";
          }
        },
        cfg.feature_spec);
  }
  out += "\n[run]\n";
  out += "total_steps = " + std::to_string(cfg.run.total_steps) + "\n";
  out += "eval_every = " + std::to_string(cfg.run.eval_every) + "\n";
  out += "num_seeds = " + std::to_string(cfg.run.num_seeds) + "\n";
  out += std::string("timing = ") + (cfg.run.timing ? "true" : "false") + "\n";
  out += "selection = " + detail::quote(cfg.run.selection) + "\n";
  out += "\n[ground_truth]\n";
  out += "num_states = " + std::to_string(cfg.ground_truth.num_states) + "\n";
  out += "rollouts_per_state = " + std::to_string(cfg.ground_truth.rollouts_per_state) + "\n";
  out += "horizon_cap = " + std::to_string(cfg.ground_truth.horizon_cap) + "\n";
  out += "cache = " + detail::quote(cfg.ground_truth.cache) + "\n";
  for (const auto& a : cfg.algorithms) {
    out += "\n[[algorithms]]\n";
    out += "name = " + detail::quote(a.name) + "\n";
    const auto algo = agents::algorithm_from_string(a.name);
    if (agents::uses_rank(algo)) out += "k = " + std::to_string(a.k) + "\n";
    if (agents::uses_sketch(algo)) out += "sketch = " + detail::quote(a.sketch) + "\n";
    out += std::string("sweep = ") + (a.sweep ? "true" : "false") + "\n";
    if (!a.alpha.empty()) out += "alpha = " + detail::list(a.alpha) + "\n";
    if (!a.lambda.empty()) out += "lambda = " + detail::list(a.lambda) + "\n";
    if (!a.eta.empty()) out += "eta = " + detail::list(a.eta) + "\n";
    if (!a.xi.empty()) out += "xi = " + detail::list(a.xi) + "\n";
    if (algo == agents::Algorithm::atd_svd && a.drop_tol != 1e-8)
      out += "drop_tol = " + csv::format_double(a.drop_tol) + "\n";
  }
  return out;
}

// Resolves one algorithm block to its parameter assignments. Unset fields
// fall back to the default sweep grid when sweep = true, otherwise to the
// single default value (lambda 0, xi 1); a fixed stepsize has no default and
// must be listed.
inline std::vector<harness::ParamAssignment> assignments_for(const AlgorithmConfig& a,
                                                             double feature_l1) {
  const auto algo = agents::algorithm_from_string(a.name);
  const harness::SweepGrid grid = harness::default_sweep_grid(feature_l1);
  auto resolve = [&](const std::vector<double>& given, const std::vector<double>& swept,
                     std::vector<double> fallback, const char* key) {
    if (!given.empty()) return given;
    if (a.sweep) return swept;
    if (fallback.empty())
      throw ConfigError("config: algorithm '" + a.name + "' needs '" + std::string(key) +
                        "' (or sweep = true)");
    return fallback;
  };
  const std::vector<double> lambdas = resolve(a.lambda, grid.lambda, {0.0}, "lambda");
  std::vector<harness::ParamAssignment> out;
  switch (algo) {
    case agents::Algorithm::td: {
      for (double al : resolve(a.alpha, grid.alpha, {}, "alpha"))
        for (double l : lambdas) out.push_back({al, l, 0.0, 1.0});
      break;
    }
    case agents::Algorithm::lstd:
    case agents::Algorithm::lstd_p:
    case agents::Algorithm::lstd_l: {
      for (double xi : resolve(a.xi, grid.xi, {1.0}, "xi"))
        for (double l : lambdas) out.push_back({0.0, l, 0.0, xi});
      break;
    }
    case agents::Algorithm::atd_l:
    case agents::Algorithm::atd_svd: {
      for (double eta : resolve(a.eta, grid.eta, {}, "eta"))
        for (double l : lambdas) out.push_back({0.0, l, eta, 1.0});
      break;
    }
  }
  return out;
}

inline harness::ExperimentSpec to_experiment_spec(const ExperimentConfig& cfg,
                                                  const AlgorithmConfig& a) {
  if (!cfg.has_features) throw ConfigError("config: [features] section is required");
  harness::ExperimentSpec spec;
  spec.env = cfg.env.name;
  spec.policy_randomness = cfg.env.policy_randomness;
  spec.feature_spec = cfg.feature_spec;
  spec.discount = cfg.env.discount;
  spec.agent.algorithm = agents::algorithm_from_string(a.name);
  spec.agent.k = a.k;
  if (agents::uses_sketch(spec.agent.algorithm))
    spec.agent.family = sketch::family_from_string(a.sketch);
  spec.agent.drop_tol = a.drop_tol;
  spec.total_steps = cfg.run.total_steps;
  spec.eval_every = cfg.run.eval_every;
  spec.num_seeds = cfg.run.num_seeds;
  spec.base_seed = cfg.base_seed;
  spec.timing = cfg.run.timing;
  return spec;
}

}  // namespace sketchtd::config
