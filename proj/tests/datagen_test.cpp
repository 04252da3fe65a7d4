#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "opa/datagen.hpp"
#include "opa/env.hpp"
#include "opa/model.hpp"
#include "opa/rng.hpp"

using namespace opa;
using datagen::GenConfig;

namespace {

GenConfig small_config(std::uint64_t seed) {
  GenConfig c;
  c.seed = seed;
  c.label = "small";
  c.n_parcels = 120;
  c.n_hubs = 8;
  c.n_od_pairs = 6;
  c.n_providers = 3;
  return c;
}

std::string to_text(const model::Instance& ins) {
  std::ostringstream out;
  model::write_instance(ins, out);
  return out.str();
}

// route id -> deduplicated hub ids, as the environment counts capacity usage.
std::unordered_map<std::string, std::vector<std::string>> hubs_by_route(
    const model::Instance& ins) {
  std::unordered_map<std::string, std::vector<std::string>> map;
  for (const model::Route& r : ins.routes) {
    std::vector<std::string>& hubs = map[r.id];
    for (const std::string& h : r.hub_ids)
      if (std::find(hubs.begin(), hubs.end(), h) == hubs.end()) hubs.push_back(h);
  }
  return map;
}

}  // namespace

TEST_CASE("the same config and seed produce byte-identical instances") {
  const GenConfig config = small_config(17);
  const std::string a = to_text(datagen::generate(config));
  const std::string b = to_text(datagen::generate(config));
  CHECK(a == b);

  GenConfig other = config;
  other.seed = 18;
  CHECK(to_text(datagen::generate(other)) != a);
}

TEST_CASE("generated instances satisfy the model invariants and the config shape") {
  rng::Rng meta(99);
  for (int trial = 0; trial < 8; ++trial) {
    GenConfig c;
    c.seed = 1000 + trial;
    c.label = "shape";
    c.n_parcels = 30 + static_cast<int>(meta.below(150));
    c.n_hubs = 3 + static_cast<int>(meta.below(8));
    c.n_od_pairs = 2 + static_cast<int>(meta.below(7));
    c.n_providers = 2 + static_cast<int>(meta.below(3));
    c.routes_min = 1 + static_cast<int>(meta.below(2));
    c.routes_max = c.routes_min + 1 + static_cast<int>(meta.below(2));
    c.capacity_fraction = meta.uniform(0.0, 0.7);
    c.proportion_fraction = meta.uniform(0.0, 1.0);
    c.capacity_tightness = meta.uniform(0.5, 2.0);
    CAPTURE(trial);

    const model::Instance ins = datagen::generate(c);
    model::validate(ins);
    CHECK(static_cast<int>(ins.parcels.size()) == c.n_parcels);

    std::map<std::pair<std::string, std::string>, int> od_count;
    for (const model::Parcel& p : ins.parcels) {
      const int n = static_cast<int>(p.candidates.size());
      CHECK(n >= c.routes_min);
      CHECK(n <= c.routes_max);
      CHECK(p.weight >= 0.1);
      CHECK(p.weight <= 2.0);
      for (const model::Candidate& cand : p.candidates) CHECK(cand.cost > 0.0);
      ++od_count[{p.origin, p.destination}];
    }
    for (const model::ConstraintSpec& k : ins.constraints) {
      if (k.kind == model::ConstraintKind::Capacity) {
        CHECK(k.upper_bound >= 1);
      } else {
        // Bands only appear on ODs with enough parcels to make the band
        // attainable as an integer share.
        CHECK(od_count[{k.od_origin, k.od_destination}] >= 10);
        CHECK(k.p_upper - k.p_lower >= 0.2);
      }
    }
  }
}

TEST_CASE("uniform assignment stays under capacity at tightness one half") {
  // Expected hub load is half of every bound, so a uniformly random
  // assignment should stay strictly below all bounds on every seed.
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    GenConfig c;
    c.seed = seed;
    c.capacity_tightness = 0.5;
    const model::Instance ins = datagen::generate(c);
    const auto route_hubs = hubs_by_route(ins);

    rng::Rng policy = rng::Rng::derive(seed, {777});
    std::unordered_map<std::string, long long> load;
    for (const model::Parcel& p : ins.parcels) {
      const int a = static_cast<int>(policy.below(p.candidates.size()));
      for (const std::string& h : route_hubs.at(p.candidates[a].route_id)) ++load[h];
    }
    for (const model::ConstraintSpec& k : ins.constraints)
      if (k.kind == model::ConstraintKind::Capacity) {
        CAPTURE(seed);
        CAPTURE(k.id);
        CHECK(load[k.hub_id] < k.upper_bound);
      }
  }
}

TEST_CASE("one OD pair with a fixed route count gives uniform candidate sets") {
  GenConfig c;
  c.seed = 5;
  c.n_parcels = 50;
  c.n_hubs = 6;
  c.n_od_pairs = 1;
  c.n_providers = 2;
  c.routes_min = 3;
  c.routes_max = 3;
  c.proportion_fraction = 0.0;
  const model::Instance ins = datagen::generate(c);
  CHECK(ins.n_r_max == 3);
  const std::string origin = ins.parcels[0].origin;
  const std::string destination = ins.parcels[0].destination;
  for (const model::Parcel& p : ins.parcels) {
    CHECK(p.candidates.size() == 3);
    CHECK(p.origin == origin);
    CHECK(p.destination == destination);
  }
}

TEST_CASE("histories share one world and vary day volumes") {
  GenConfig c = small_config(23);
  c.n_parcels = 100;
  const std::vector<model::Instance> days = datagen::generate_history(c, 30);
  REQUIRE(days.size() == 30);

  bool any_volume_differs = false;
  for (const model::Instance& day : days) {
    CHECK(day.routes == days[0].routes);  // shared route catalog
    const double m = static_cast<double>(day.parcels.size());
    CHECK(m >= 0.8 * c.n_parcels - 1);
    CHECK(m <= 1.2 * c.n_parcels + 1);
    if (day.parcels.size() != days[0].parcels.size()) any_volume_differs = true;
  }
  CHECK(any_volume_differs);
  CHECK(days[0].label == "small-d00");
  CHECK(days[29].label == "small-d29");

  // Proportion bands are identical wherever they appear.
  std::map<std::string, std::pair<double, double>> bands;
  for (const model::Instance& day : days)
    for (const model::ConstraintSpec& k : day.constraints)
      if (k.kind == model::ConstraintKind::Proportion) {
        const auto [it, inserted] = bands.insert({k.id, {k.p_lower, k.p_upper}});
        if (!inserted) CHECK(it->second == std::make_pair(k.p_lower, k.p_upper));
      }

  CHECK(datagen::generate_history(c, 30) == days);
}

TEST_CASE("escape routes admit a violation-free assignment") {
  GenConfig c;
  c.seed = 31;
  c.n_parcels = 2000;
  c.proportion_fraction = 0.5;
  const model::Instance ins = datagen::generate(c);

  std::unordered_map<std::string, std::string> provider_of;
  for (const model::Route& r : ins.routes) provider_of[r.id] = r.provider_id;
  std::map<std::pair<std::string, std::string>, const model::ConstraintSpec*> bands;
  int band_count = 0;
  for (const model::ConstraintSpec& k : ins.constraints)
    if (k.kind == model::ConstraintKind::Proportion) {
      bands[{k.od_origin, k.od_destination}] = &k;
      ++band_count;
    }
  REQUIRE(band_count > 0);

  // Ride the escape routes only: capacity-free by construction, and for
  // banded ODs pick the banded provider whenever the upper bound allows.
  std::map<std::pair<std::string, std::string>, std::pair<int, int>> tally;  // seen, target
  std::vector<int> log;
  for (const model::Parcel& p : ins.parcels) {
    const auto it = bands.find({p.origin, p.destination});
    if (it == bands.end()) {
      log.push_back(0);
      continue;
    }
    const model::ConstraintSpec& k = *it->second;
    const int p_idx = provider_of.at(p.candidates[0].route_id) == k.provider_id ? 0 : 1;
    const int np_idx = 1 - p_idx;
    REQUIRE(provider_of.at(p.candidates[p_idx].route_id) == k.provider_id);
    REQUIRE(provider_of.at(p.candidates[np_idx].route_id) != k.provider_id);
    auto& [seen, target] = tally[{p.origin, p.destination}];
    const bool take = target + 1 <= k.p_upper * (seen + 1) + 1e-9;
    log.push_back(take ? p_idx : np_idx);
    ++seen;
    if (take) ++target;
  }

  env::EnvModel compiled(ins);
  const env::Report report = env::score_assignment(compiled, log);
  CHECK(report.violating_parcels == 0);
  CHECK(report.violation_rate == 0.0);
}

TEST_CASE("gen config files round-trip and reject malformed input") {
  GenConfig c = small_config(42);
  c.cost_noise = 0.31;
  c.p_lower_min = 0.1;
  c.p_lower_max = 0.3;
  c.p_upper_min = 0.6;
  c.p_upper_max = 0.9;

  std::ostringstream out;
  datagen::write_gen_config(c, out);
  std::istringstream in(out.str());
  CHECK(datagen::read_gen_config(in, "mem") == c);

  SUBCASE("missing keys keep their defaults") {
    std::istringstream min_in("opa-genconfig v1\nend\n");
    CHECK(datagen::read_gen_config(min_in, "mem") == GenConfig{});
  }
  SUBCASE("unknown key") {
    std::istringstream bad("opa-genconfig v1\nbogus 3\nend\n");
    CHECK_THROWS_WITH_AS(datagen::read_gen_config(bad, "cfg"), "cfg:2: unknown key 'bogus'",
                         std::runtime_error);
  }
  SUBCASE("duplicate key") {
    std::istringstream bad("opa-genconfig v1\nseed 1\nseed 2\nend\n");
    CHECK_THROWS_WITH_AS(datagen::read_gen_config(bad, "cfg"), "cfg:3: duplicate key 'seed'",
                         std::runtime_error);
  }
  SUBCASE("inverted route range") {
    std::istringstream bad("opa-genconfig v1\nroutes_per_parcel 3 2\nend\n");
    CHECK_THROWS_WITH_AS(datagen::read_gen_config(bad, "cfg"),
                         "genconfig: routes_per_parcel must satisfy 1 <= min <= max",
                         std::runtime_error);
  }
  SUBCASE("band ranges must be ordered") {
    GenConfig bad = c;
    bad.p_lower_max = 0.7;  // overlaps [p_upper_min, p_upper_max]
    CHECK_THROWS_AS(datagen::validate(bad), std::runtime_error);
  }
  SUBCASE("no hub left for escape routes") {
    GenConfig bad = c;
    bad.capacity_fraction = 1.0;
    CHECK_THROWS_WITH_AS(datagen::validate(bad),
                         "genconfig: capacity_fraction leaves no unconstrained hub for escape "
                         "routes",
                         std::runtime_error);
  }
  SUBCASE("proportion constraints need a provider choice") {
    GenConfig bad = c;
    bad.n_providers = 1;
    CHECK_THROWS_WITH_AS(datagen::validate(bad),
                         "genconfig: proportion constraints need at least two providers",
                         std::runtime_error);
  }
}
