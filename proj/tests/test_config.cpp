#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "sketchtd/config.hpp"
#include "sketchtd/errors.hpp"

using namespace sketchtd;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;

namespace {

const char* kFullConfig = R"(# experiment description
base_seed = 7
out_dir = "out/run1"   # trailing comment

[env]
name = "puddle_world"
policy_randomness = 0.15
discount = 0.99

[features]
kind = "rbf"
centers_per_dim = 8
width = 0.25
normalize_per_dim = true

[run]
total_steps = 5000
eval_every = 250
num_seeds = 3
timing = true
selection = "second_half"

[ground_truth]
num_states = 100
rollouts_per_state = 50
horizon_cap = 20000
cache = "gt.csv"

[[algorithms]]
name = "td"
alpha = [0.1, 0.2]
lambda = 0.5

[[algorithms]]
name = "lstd-p"
k = 50
sketch = "count"
sweep = true
)";

config::ExperimentConfig parse(const std::string& text) { return config::parse_config(text); }

}  // namespace

TEST_CASE("full config parses with every section bound") {
  const auto cfg = parse(kFullConfig);
  CHECK(cfg.base_seed == 7);
  CHECK(cfg.out_dir == "out/run1");
  CHECK(cfg.env.name == "puddle_world");
  CHECK(cfg.env.policy_randomness == 0.15);
  CHECK(cfg.env.discount == 0.99);
  REQUIRE(cfg.has_features);
  const auto& spec = std::get<features::RbfGridSpec>(cfg.feature_spec);
  CHECK(spec.centers_per_dim == 8);
  CHECK(spec.width == 0.25);
  CHECK(spec.normalize_per_dim);
  CHECK(cfg.run.total_steps == 5000);
  CHECK(cfg.run.eval_every == 250);
  CHECK(cfg.run.num_seeds == 3);
  CHECK(cfg.run.timing);
  CHECK(cfg.run.selection == "second_half");
  CHECK(cfg.ground_truth.num_states == 100);
  CHECK(cfg.ground_truth.rollouts_per_state == 50);
  CHECK(cfg.ground_truth.horizon_cap == 20000);
  CHECK(cfg.ground_truth.cache == "gt.csv");
  REQUIRE(cfg.algorithms.size() == 2);
  CHECK(cfg.algorithms[0].name == "td");
  CHECK(cfg.algorithms[0].alpha == std::vector<double>{0.1, 0.2});
  CHECK(cfg.algorithms[0].lambda == std::vector<double>{0.5});
  CHECK_FALSE(cfg.algorithms[0].sweep);
  CHECK(cfg.algorithms[1].name == "lstd-p");
  CHECK(cfg.algorithms[1].k == 50);
  CHECK(cfg.algorithms[1].sketch == "count");
  CHECK(cfg.algorithms[1].sweep);
}

TEST_CASE("empty config yields defaults") {
  const auto cfg = parse("");
  CHECK(cfg.base_seed == 0);
  CHECK(cfg.out_dir == "results");
  CHECK(cfg.env.name == "mountain_car");
  CHECK(cfg.env.policy_randomness == -1.0);
  CHECK(cfg.env.discount == 1.0);
  CHECK_FALSE(cfg.has_features);
  CHECK(cfg.run.total_steps == 10000);
  CHECK(cfg.run.eval_every == 100);
  CHECK(cfg.run.num_seeds == 10);
  CHECK_FALSE(cfg.run.timing);
  CHECK(cfg.run.selection == "full");
  CHECK(cfg.ground_truth.num_states == 500);
  CHECK(cfg.ground_truth.rollouts_per_state == 200);
  CHECK(cfg.ground_truth.horizon_cap == 100000);
  CHECK(cfg.ground_truth.cache == "ground_truth.csv");
  CHECK(cfg.algorithms.empty());
}

TEST_CASE("parse serialize parse is the identity") {
  auto check_roundtrip = [](const config::ExperimentConfig& cfg) {
    const std::string text = config::serialize_config(cfg);
    const auto again = config::parse_config(text);
    CHECK(again == cfg);
    CHECK(config::serialize_config(again) == text);
  };
  check_roundtrip(parse(kFullConfig));
  check_roundtrip(parse(""));

  const char* other = R"(
[features]
kind = "tile"
tilings = 10
tiles_per_dim = 10
memory_size = 1024

[[algorithms]]
name = "atd-svd"
k = 25
eta = 0.01
drop_tol = 1e-6
)";
  check_roundtrip(parse(other));
}

TEST_CASE("every feature kind binds its own keys") {
  const auto tile = parse("[features]\nkind = \"tile\"\ntilings = 4\ntiles_per_dim = 6\nmemory_size = 512\n");
  const auto& t = std::get<features::TileCodingSpec>(tile.feature_spec);
  CHECK(t.tilings == 4);
  CHECK(t.tiles_per_dim == 6);
  CHECK(t.memory_size == 512);

  const auto spline = parse("[features]\nkind = \"spline\"\ncenters_per_dim = 9\nwidth = 0.5\n");
  const auto& s = std::get<features::SplineGridSpec>(spline.feature_spec);
  CHECK(s.centers_per_dim == 9);
  CHECK(s.width == 0.5);

  const auto trbf = parse("[features]\nkind = \"tiledrbf\"\ntilings = 3\ngrid_per_dim = 5\nwidth = 0.3\n");
  const auto& r = std::get<features::TiledRbfSpec>(trbf.feature_spec);
  CHECK(r.tilings == 3);
  CHECK(r.grid_per_dim == 5);
  CHECK(r.width == 0.3);
}

TEST_CASE("unknown keys and sections are rejected by name") {
  CHECK_THROWS_MATCHES(parse("bogus = 3\n"), ConfigError, MessageMatches(ContainsSubstring("bogus")));
  CHECK_THROWS_MATCHES(parse("[env]\nspeed = 3\n"), ConfigError, MessageMatches(ContainsSubstring("speed")));
  CHECK_THROWS_MATCHES(parse("[rnu]\n"), ConfigError, MessageMatches(ContainsSubstring("rnu")));
  CHECK_THROWS_MATCHES(parse("[[algos]]\n"), ConfigError, MessageMatches(ContainsSubstring("algos")));
  CHECK_THROWS_MATCHES(parse("[[algorithms]]\nname = \"td\"\nalpha = 0.1\nturbo = true\n"),
                       ConfigError, MessageMatches(ContainsSubstring("turbo")));
  CHECK_THROWS_MATCHES(parse("[features]\nkind = \"rbf\"\ntilings = 4\n"), ConfigError,
                       MessageMatches(ContainsSubstring("tilings")));
  CHECK_THROWS_MATCHES(parse("[features]\nkind = \"hex\"\n"), ConfigError,
                       MessageMatches(ContainsSubstring("hex")));
  CHECK_THROWS_MATCHES(parse("[features]\nwidth = 0.2\n"), ConfigError, MessageMatches(ContainsSubstring("kind")));
}

TEST_CASE("errors carry the offending line number") {
  CHECK_THROWS_MATCHES(parse("base_seed = 1\n\nmystery = 2\n"), ConfigError,
                       MessageMatches(ContainsSubstring("line 3")));
}

TEST_CASE("duplicate keys are rejected, but reuse across blocks is fine") {
  CHECK_THROWS_MATCHES(parse("[run]\nnum_seeds = 2\nnum_seeds = 3\n"), ConfigError,
                       MessageMatches(ContainsSubstring("duplicate")));
  const auto cfg = parse(
      "[[algorithms]]\nname = \"td\"\nalpha = 0.1\n"
      "[[algorithms]]\nname = \"td\"\nalpha = 0.2\n");
  REQUIRE(cfg.algorithms.size() == 2);
  CHECK(cfg.algorithms[1].alpha == std::vector<double>{0.2});
}

TEST_CASE("malformed values are rejected") {
  CHECK_THROWS_AS(parse("[env]\nname = mountain_car\n"), ConfigError);
  CHECK_THROWS_AS(parse("[run]\ntiming = yes\n"), ConfigError);
  CHECK_THROWS_AS(parse("[run]\ntotal_steps = ten\n"), ConfigError);
  CHECK_THROWS_AS(parse("[[algorithms]]\nname = \"td\"\nalpha = [0.1, 0.2\n"), ConfigError);
  CHECK_THROWS_AS(parse("[[algorithms]]\nname = \"td\"\nalpha = []\n"), ConfigError);
  CHECK_THROWS_AS(parse("[env]\nname\n"), ConfigError);
}

TEST_CASE("string escapes round-trip") {
  const auto cfg = parse("out_dir = \"a\\\"b\\\\c\"\n");
  CHECK(cfg.out_dir == "a\"b\\c");
  const auto again = config::parse_config(config::serialize_config(cfg));
  CHECK(again.out_dir == cfg.out_dir);
}

TEST_CASE("parameters that do not apply to an algorithm are rejected") {
  CHECK_THROWS_MATCHES(parse("[[algorithms]]\nname = \"lstd\"\nalpha = 0.1\n"), ConfigError,
                       MessageMatches(ContainsSubstring("alpha")));
  CHECK_THROWS_MATCHES(parse("[[algorithms]]\nname = \"td\"\nxi = 1.0\n"), ConfigError,
                       MessageMatches(ContainsSubstring("xi")));
  CHECK_THROWS_MATCHES(parse("[[algorithms]]\nname = \"lstd\"\neta = 0.1\n"), ConfigError,
                       MessageMatches(ContainsSubstring("eta")));
  CHECK_THROWS_MATCHES(parse("[[algorithms]]\nname = \"td\"\nk = 5\n"), ConfigError,
                       MessageMatches(ContainsSubstring("k")));
  CHECK_THROWS_MATCHES(parse("[[algorithms]]\nname = \"atd-svd\"\nk = 5\nsketch = \"count\"\n"),
                       ConfigError, MessageMatches(ContainsSubstring("sketch")));
  CHECK_THROWS_MATCHES(parse("[[algorithms]]\nname = \"td\"\nalpha = 0.1\ndrop_tol = 1e-6\n"),
                       ConfigError, MessageMatches(ContainsSubstring("drop_tol")));
  CHECK_THROWS_MATCHES(parse("[[algorithms]]\nname = \"lstd-p\"\nsweep = true\n"), ConfigError,
                       MessageMatches(ContainsSubstring("k >= 1")));
  CHECK_THROWS_MATCHES(parse("[[algorithms]]\nname = \"mystery\"\n"), ConfigError,
                       MessageMatches(ContainsSubstring("mystery")));
  CHECK_THROWS_MATCHES(parse("[[algorithms]]\nname = \"lstd-l\"\nk = 3\nsketch = \"dense\"\n"),
                       ConfigError, MessageMatches(ContainsSubstring("dense")));
  CHECK_THROWS_MATCHES(parse("[[algorithms]]\nsweep = true\n"), ConfigError,
                       MessageMatches(ContainsSubstring("name")));
  CHECK_THROWS_MATCHES(parse("name = \"td\"\n"), ConfigError, MessageMatches(ContainsSubstring("name")));
}

TEST_CASE("cross-field validation") {
  CHECK_THROWS_MATCHES(parse("[env]\nname = \"gridworld\"\n"), ConfigError,
                       MessageMatches(ContainsSubstring("gridworld")));
  CHECK_THROWS_MATCHES(parse("[run]\nselection = \"best\"\n"), ConfigError,
                       MessageMatches(ContainsSubstring("selection")));
  CHECK_THROWS_AS(parse("[run]\nnum_seeds = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse("[run]\ntotal_steps = 0\n"), ConfigError);
}

TEST_CASE("assignments resolve fixed values, lists, and sweep grids") {
  const double l1 = 1.0;

  auto one = config::assignments_for(
      parse("[[algorithms]]\nname = \"td\"\nalpha = 0.1\nlambda = 0.9\n").algorithms[0], l1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == harness::ParamAssignment{0.1, 0.9, 0.0, 1.0});

  auto cross = config::assignments_for(
      parse("[[algorithms]]\nname = \"td\"\nalpha = [0.1, 0.2]\nlambda = [0.0, 0.5, 0.9]\n")
          .algorithms[0],
      l1);
  REQUIRE(cross.size() == 6);
  CHECK(cross[0] == harness::ParamAssignment{0.1, 0.0, 0.0, 1.0});
  CHECK(cross[5] == harness::ParamAssignment{0.2, 0.9, 0.0, 1.0});

  auto lstd_default = config::assignments_for(
      parse("[[algorithms]]\nname = \"lstd\"\n").algorithms[0], l1);
  REQUIRE(lstd_default.size() == 1);
  CHECK(lstd_default[0] == harness::ParamAssignment{0.0, 0.0, 0.0, 1.0});

  auto atd_fixed = config::assignments_for(
      parse("[[algorithms]]\nname = \"atd-l\"\nk = 10\neta = 0.01\n").algorithms[0], l1);
  REQUIRE(atd_fixed.size() == 1);
  CHECK(atd_fixed[0] == harness::ParamAssignment{0.0, 0.0, 0.01, 1.0});

  const auto grid = harness::default_sweep_grid(l1);
  auto td_sweep = config::assignments_for(
      parse("[[algorithms]]\nname = \"td\"\nsweep = true\n").algorithms[0], l1);
  CHECK(td_sweep.size() == grid.alpha.size() * grid.lambda.size());
  auto lstd_sweep = config::assignments_for(
      parse("[[algorithms]]\nname = \"lstd\"\nsweep = true\n").algorithms[0], l1);
  CHECK(lstd_sweep.size() == grid.xi.size() * grid.lambda.size());
  auto atd_sweep = config::assignments_for(
      parse("[[algorithms]]\nname = \"atd-svd\"\nk = 25\nsweep = true\n").algorithms[0], l1);
  CHECK(atd_sweep.size() == grid.eta.size() * grid.lambda.size());
  for (const auto& pa : atd_sweep) CHECK(pa.xi == 1.0);

  auto partial = config::assignments_for(
      parse("[[algorithms]]\nname = \"lstd\"\nsweep = true\nlambda = 0.8\n").algorithms[0], l1);
  CHECK(partial.size() == grid.xi.size());
  for (const auto& pa : partial) CHECK(pa.lambda == 0.8);

  CHECK_THROWS_MATCHES(
      config::assignments_for(parse("[[algorithms]]\nname = \"td\"\n").algorithms[0], l1),
      ConfigError, MessageMatches(ContainsSubstring("alpha")));
  CHECK_THROWS_MATCHES(
      config::assignments_for(parse("[[algorithms]]\nname = \"atd-l\"\nk = 5\n").algorithms[0],
                              l1),
      ConfigError, MessageMatches(ContainsSubstring("eta")));
}

TEST_CASE("experiment spec carries env, features, run, and agent settings") {
  const auto cfg = parse(kFullConfig);
  const auto spec = config::to_experiment_spec(cfg, cfg.algorithms[1]);
  CHECK(spec.env == "puddle_world");
  CHECK(spec.policy_randomness == 0.15);
  CHECK(spec.discount == 0.99);
  CHECK(std::get<features::RbfGridSpec>(spec.feature_spec).centers_per_dim == 8);
  CHECK(spec.agent.algorithm == agents::Algorithm::lstd_p);
  CHECK(spec.agent.k == 50);
  CHECK(spec.agent.family == sketch::Family::count);
  CHECK(spec.total_steps == 5000);
  CHECK(spec.eval_every == 250);
  CHECK(spec.num_seeds == 3);
  CHECK(spec.base_seed == 7);
  CHECK(spec.timing);

  const auto bare = parse("[[algorithms]]\nname = \"td\"\nalpha = 0.1\n");
  CHECK_THROWS_MATCHES(config::to_experiment_spec(bare, bare.algorithms[0]), ConfigError,
                       MessageMatches(ContainsSubstring("features")));
}

TEST_CASE("missing config file reports its path") {
  CHECK_THROWS_MATCHES(config::load_config("/nonexistent/cfg.toml"), ConfigError,
                       MessageMatches(ContainsSubstring("/nonexistent/cfg.toml")));
}
