#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "opa/baselines.hpp"
#include "opa/env.hpp"
#include "opa/model.hpp"
#include "opa/oracle.hpp"
#include "opa/rng.hpp"
#include "testutil.hpp"

using namespace opa;
using testutil::capacity;
using testutil::make_instance;
using testutil::make_parcel;
using testutil::make_route;
using testutil::proportion;

namespace {

baselines::DaySolver exact_solver() {
  return [](const model::Instance& day) { return oracle::solve_exact(day); };
}

// One OD (A -> B) served by routes ra and rb with the given per-parcel costs.
model::Instance two_route_day(const std::string& label,
                              const std::vector<std::pair<double, double>>& costs) {
  std::vector<model::Parcel> parcels;
  for (int i = 0; i < static_cast<int>(costs.size()); ++i) {
    parcels.push_back(make_parcel(i, "A", "B", 1.0,
                                  {{"ra", costs[i].first}, {"rb", costs[i].second}}));
  }
  return make_instance(label,
                       {make_route("ra", {"H0"}, "P", "A", "B"),
                        make_route("rb", {"H1"}, "Q", "A", "B")},
                       std::move(parcels), {});
}

std::vector<int> greedy_rollout(const model::Instance& ins) {
  std::vector<int> actions;
  for (const model::Parcel& p : ins.parcels) actions.push_back(baselines::greedy_assign(p));
  return actions;
}

std::vector<int> pdo_rollout(const env::EnvModel& compiled, baselines::DualPrices duals) {
  env::Env env(compiled);
  while (!env.done()) {
    const int action =
        baselines::pdo_assign(duals, compiled, static_cast<int>(env.t()));
    env.step(action);
    baselines::pdo_update(duals, compiled, env.state());
  }
  return env.state().assignment_log;
}

}  // namespace

TEST_CASE("greedy picks the cheapest candidate and breaks ties by route id") {
  const auto p = make_parcel(0, "A", "B", 1.0, {{"r1", 3.0}, {"r2", 1.0}, {"r3", 2.0}});
  CHECK(baselines::greedy_assign(p) == 1);

  // Equal costs: the lexicographically smaller route id wins even though it
  // is listed second.
  const auto tie = make_parcel(0, "A", "B", 1.0, {{"rb", 2.0}, {"ra", 2.0}});
  CHECK(baselines::greedy_assign(tie) == 1);

  const auto single = make_parcel(0, "A", "B", 1.0, {{"r1", 5.0}});
  CHECK(baselines::greedy_assign(single) == 0);
}

TEST_CASE("greedy attains the exact optimum when no constraints are active") {
  rng::Rng rng(404);
  for (int trial = 0; trial < 30; ++trial) {
    model::Instance ins = testutil::random_tiny_instance(rng);
    ins.constraints.clear();
    model::validate(ins);

    const oracle::OfflineSolution opt = oracle::solve_exact(ins);
    REQUIRE(opt.feasible);
    double greedy_cost = 0.0;
    for (const model::Parcel& p : ins.parcels) {
      greedy_cost += p.candidates[baselines::greedy_assign(p)].cost;
    }
    CHECK(greedy_cost == opt.objective);
  }
}

TEST_CASE("fitted proportions reproduce the offline route frequencies") {
  // Day 1 sends both parcels down ra, day 2 sends both down rb.
  const std::vector<model::Instance> history = {
      two_route_day("d1", {{1.0, 2.0}, {1.0, 2.0}}),
      two_route_day("d2", {{2.0, 1.0}, {2.0, 1.0}}),
  };
  const baselines::ProportionTable table =
      baselines::fit_proportions(history, exact_solver());
  REQUIRE(table.size() == 1);

  const model::Parcel probe = history[0].parcels[0];
  CHECK(table.contains(probe));
  const std::vector<double> probs = table.probabilities(probe);
  REQUIRE(probs.size() == 2);
  CHECK(probs[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(0.5).epsilon(1e-12));

  // A type whose optimum is always ra gets the degenerate vector.
  const baselines::ProportionTable sure = baselines::fit_proportions(
      {two_route_day("d3", {{1.0, 2.0}, {1.0, 9.0}})}, exact_solver());
  const std::vector<double> sure_probs = sure.probabilities(probe);
  CHECK(sure_probs[0] == 1.0);
  CHECK(sure_probs[1] == 0.0);
}

TEST_CASE("probability vectors follow the parcel's candidate order") {
  const baselines::ProportionTable table = baselines::fit_proportions(
      {two_route_day("d", {{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}, {2.0, 1.0}})},
      exact_solver());

  // Same type, but the candidates are listed rb-first: the vector must
  // re-align by route id, not by position.
  const auto flipped = make_parcel(0, "A", "B", 1.0, {{"rb", 5.0}, {"ra", 5.0}});
  const std::vector<double> probs = table.probabilities(flipped);
  REQUIRE(probs.size() == 2);
  CHECK(probs[0] == doctest::Approx(0.25).epsilon(1e-12));  // rb
  CHECK(probs[1] == doctest::Approx(0.75).epsilon(1e-12));  // ra
}

TEST_CASE("unseen parcel types fall back to the uniform vector") {
  baselines::ProportionTable table;
  const auto p = make_parcel(0, "X", "Y", 1.0, {{"r1", 1.0}, {"r2", 1.0}, {"r3", 1.0}, {"r4", 1.0}});
  CHECK_FALSE(table.contains(p));
  const std::vector<double> probs = table.probabilities(p);
  REQUIRE(probs.size() == 4);
  for (const double v : probs) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("unsolvable history days are skipped; fitting fails only when all are") {
  const std::vector<model::Instance> history = {
      two_route_day("good", {{1.0, 2.0}}),
      two_route_day("bad", {{2.0, 1.0}}),
  };
  const baselines::DaySolver flaky = [](const model::Instance& day) {
    if (day.label == "bad") throw std::runtime_error("solver exploded");
    return oracle::solve_exact(day);
  };

  std::vector<std::string> skipped;
  const baselines::ProportionTable table =
      baselines::fit_proportions(history, flaky, &skipped);
  REQUIRE(skipped == std::vector<std::string>{"bad"});
  // Only the good day contributes, so ra carries all the mass.
  CHECK(table.probabilities(history[0].parcels[0])[0] == 1.0);

  const baselines::DaySolver broken = [](const model::Instance&) -> oracle::OfflineSolution {
    throw std::runtime_error("solver exploded");
  };
  CHECK_THROWS_WITH_AS(baselines::fit_proportions(history, broken),
                       "baselines: fit_proportions: no history day could be solved",
                       std::runtime_error);
  CHECK_THROWS_AS(baselines::fit_proportions({}, exact_solver()), std::runtime_error);
}

TEST_CASE("sampling follows the stored vector and never picks zero entries") {
  const model::Parcel probe = two_route_day("d", {{1.0, 2.0}}).parcels[0];

  baselines::ProportionTable half;
  half.entries_[baselines::ProportionTable::type_key(probe)] = {{"ra", "rb"}, {0.5, 0.5}};
  rng::Rng rng(2024);
  int first = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    if (baselines::proportion_assign(half, probe, rng) == 0) ++first;
  }
  CHECK(std::abs(first / static_cast<double>(draws) - 0.5) < 0.02);

  baselines::ProportionTable sure;
  sure.entries_[baselines::ProportionTable::type_key(probe)] = {{"ra", "rb"}, {0.0, 1.0}};
  for (int i = 0; i < 1000; ++i) {
    CHECK(baselines::proportion_assign(sure, probe, rng) == 1);
  }

  // Same seed, same draw sequence.
  rng::Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) {
    CHECK(baselines::proportion_assign(half, probe, a) ==
          baselines::proportion_assign(half, probe, b));
  }
}

TEST_CASE("proportion tables round-trip through their text form") {
  const baselines::ProportionTable table = baselines::fit_proportions(
      {two_route_day("d1", {{1.0, 2.0}, {1.0, 2.0}, {2.0, 1.0}}),
       two_route_day("d2", {{2.0, 1.0}, {1.0, 3.0}})},
      exact_solver());

  std::ostringstream out;
  baselines::write_proportions(table, out);
  std::istringstream in(out.str());
  const baselines::ProportionTable back = baselines::read_proportions(in, "mem");
  CHECK(back == table);

  const auto dir = std::filesystem::temp_directory_path() / "opa_baselines_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "table.txt").string();
  baselines::save_proportions(table, path);
  CHECK(baselines::load_proportions(path) == table);
  std::filesystem::remove_all(dir);

  // A vector with thirds survives the round trip exactly.
  baselines::ProportionTable thirds;
  thirds.entries_["A\x1f" "B\x1f" "r1\x1f" "r2\x1f" "r3"] = {
      {"r1", "r2", "r3"}, {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}};
  std::ostringstream out2;
  baselines::write_proportions(thirds, out2);
  std::istringstream in2(out2.str());
  CHECK(baselines::read_proportions(in2, "mem") == thirds);
}

TEST_CASE("malformed proportion files are rejected with line numbers") {
  const auto read = [](const std::string& text) {
    std::istringstream in(text);
    return baselines::read_proportions(in, "mem");
  };
  CHECK_THROWS_WITH_AS(read("wrong\n"), "mem:1: expected header 'opa-proportions v1'",
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(read("opa-proportions v1\ntypes 1\ntype A B 2 ra rb 0.7 0.2\nend\n"),
                       "mem:3: probabilities must sum to 1", std::runtime_error);
  CHECK_THROWS_WITH_AS(read("opa-proportions v1\ntypes 1\ntype A B 2 rb ra 0.5 0.5\nend\n"),
                       "mem:3: route ids must be sorted and unique", std::runtime_error);
  CHECK_THROWS_WITH_AS(
      read("opa-proportions v1\ntypes 2\ntype A B 1 ra 1\ntype A B 1 ra 1\nend\n"),
      "mem:4: duplicate type", std::runtime_error);
  CHECK_THROWS_WITH_AS(read("opa-proportions v1\ntypes 1\ntype A B 2 ra rb 0.5 0.5\n"),
                       "mem:3: unexpected end of file", std::runtime_error);
  CHECK_THROWS_WITH_AS(read("opa-proportions v1\ntypes 1\ntype A B 2 ra rb -0.5 1.5\nend\n"),
                       "mem:3: probabilities must be nonnegative", std::runtime_error);
}

TEST_CASE("zero-step PDO reduces to greedy over whole rollouts") {
  rng::Rng rng(911);
  for (int trial = 0; trial < 20; ++trial) {
    const model::Instance ins = testutil::random_tiny_instance(rng);
    const env::EnvModel compiled(ins);
    baselines::DualPrices duals = baselines::make_duals(compiled);
    duals.eta = 0.0;
    CHECK(pdo_rollout(compiled, duals) == greedy_rollout(ins));
  }
}

TEST_CASE("a sufficient dual step steers PDO off the saturated hub") {
  const model::Instance ins = testutil::two_parcel_hand_instance();
  const env::EnvModel compiled(ins);

  // Greedy loads hub H twice: one parcel over capacity, total cost 2.
  {
    const env::Report report = env::score_assignment(compiled, greedy_rollout(ins));
    CHECK(report.violating_parcels == 1);
    CHECK(report.total_cost == 2.0);
  }

  // After parcel 0 the hub is at 1 of capacity 1 while the pacing target is
  // 0.5, so mu gains eta * 0.5. With eta = 3 the detour (cost 2) undercuts
  // the reduced cost 1 + 1.5 and PDO ends feasible at the optimum cost 3.
  {
    baselines::DualPrices duals = baselines::make_duals(compiled, 3.0);
    const std::vector<int> actions = pdo_rollout(compiled, duals);
    CHECK(actions == std::vector<int>{0, 1});
    const env::Report report = env::score_assignment(compiled, actions);
    CHECK(report.violating_parcels == 0);
    CHECK(report.total_cost == 3.0);
  }

  // eta = 0.1 only lifts the reduced cost to 1.05, not enough to beat 2.
  {
    baselines::DualPrices duals = baselines::make_duals(compiled, 0.1);
    const std::vector<int> actions = pdo_rollout(compiled, duals);
    CHECK(actions == std::vector<int>{0, 0});
    CHECK(env::score_assignment(compiled, actions).violating_parcels == 1);
  }
}

TEST_CASE("reduced-cost ties fall back to raw cost, then route id") {
  // Routes x (via hub H) and y (hub-free) for the same OD; with mu_H = 1 the
  // reduced costs tie at 3 and the cheaper raw cost must win.
  const model::Instance ins = make_instance(
      "ties",
      {make_route("x", {"H"}, "P", "A", "B"), make_route("y", {"G"}, "P", "A", "B"),
       make_route("z", {"G"}, "P", "A", "B")},
      {make_parcel(0, "A", "B", 1.0, {{"x", 2.0}, {"y", 3.0}}),
       make_parcel(1, "A", "B", 1.0, {{"z", 3.0}, {"y", 3.0}})},
      {capacity("capH", "H", 1)});
  const env::EnvModel compiled(ins);
  baselines::DualPrices duals = baselines::make_duals(compiled, 1.0);
  duals.cap_upper[0] = 1.0;
  CHECK(baselines::pdo_assign(duals, compiled, 0) == 0);  // cost 2 beats cost 3
  CHECK(baselines::pdo_assign(duals, compiled, 1) == 1);  // route id y beats z
}

TEST_CASE("dual prices track the pacing targets") {
  const model::Instance ins = make_instance(
      "pace",
      {make_route("r1", {"H"}, "P", "A", "B"), make_route("r2", {"G"}, "Q", "A", "B")},
      {make_parcel(0, "A", "B", 1.0, {{"r1", 1.0}, {"r2", 1.0}}),
       make_parcel(1, "A", "B", 1.0, {{"r1", 1.0}, {"r2", 1.0}})},
      {capacity("capH", "H", 1), proportion("propP", "A", "B", "P", 0.4, 0.6)});
  const env::EnvModel compiled(ins);

  baselines::DualPrices duals = baselines::make_duals(compiled, 0.5);
  duals.m = 100;

  env::EnvState state;
  state.t = 10;
  state.hub_used = {20};                 // pacing target is 1 * 10/100 = 0.1
  state.prop_counters = {{10, 9}};       // share 0.9 above the 0.6 band
  baselines::pdo_update(duals, compiled, state);
  CHECK(duals.cap_upper[0] == doctest::Approx(0.5 * (20.0 - 0.1)).epsilon(1e-12));
  CHECK(duals.prop_upper[0] == doctest::Approx(0.5 * (9.0 - 6.0)).epsilon(1e-12));
  CHECK(duals.prop_lower[0] == 0.0);
  const double mu_before = duals.cap_upper[0];
  baselines::pdo_update(duals, compiled, state);
  CHECK(duals.cap_upper[0] > mu_before);  // still above pacing: strictly grows

  // Under-consumption: the upper multipliers project back to zero while the
  // proportion lower multiplier activates.
  baselines::DualPrices idle = baselines::make_duals(compiled, 0.5);
  idle.m = 100;
  env::EnvState quiet;
  quiet.t = 10;
  quiet.hub_used = {0};
  quiet.prop_counters = {{10, 1}};  // share 0.1 below the 0.4 band
  baselines::pdo_update(idle, compiled, quiet);
  CHECK(idle.cap_upper[0] == 0.0);
  CHECK(idle.prop_upper[0] == 0.0);
  CHECK(idle.prop_lower[0] == doctest::Approx(0.5 * (4.0 - 1.0)).epsilon(1e-12));

  baselines::DualPrices zero_m = baselines::make_duals(compiled);
  zero_m.m = 0;
  CHECK_THROWS_WITH_AS(baselines::pdo_update(zero_m, compiled, state),
                       "baselines: pdo_update: day volume m must be positive",
                       std::runtime_error);
}

TEST_CASE("the default dual step is one over mean candidate cost times volume") {
  const model::Instance ins = make_instance(
      "eta",
      {make_route("r1", {"H"}, "P", "A", "B"), make_route("r2", {"G"}, "Q", "A", "B")},
      {make_parcel(0, "A", "B", 1.0, {{"r1", 2.0}}),
       make_parcel(1, "A", "B", 1.0, {{"r2", 4.0}})},
      {});
  const env::EnvModel compiled(ins);
  const baselines::DualPrices duals = baselines::make_duals(compiled);
  CHECK(duals.m == 2);
  CHECK(duals.eta == doctest::Approx(1.0 / (3.0 * 2.0)).epsilon(1e-12));
  CHECK(duals.cap_upper.empty());
  CHECK(duals.prop_upper.empty());

  const baselines::DualPrices fixed = baselines::make_duals(compiled, 0.25);
  CHECK(fixed.eta == 0.25);
}
