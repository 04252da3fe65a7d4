#include "opa/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "opa/rng.hpp"
#include "opa/textio.hpp"

namespace opa::datagen {
namespace {

using model::ConstraintKind;
using model::ConstraintSpec;
using model::Instance;
using model::Parcel;
using model::Route;

// Stream tags for rng::Rng::derive so world construction, day volumes, and
// per-day parcel draws never share a stream.
constexpr std::uint64_t kStreamWorld = 1;
constexpr std::uint64_t kStreamDay = 2;
constexpr std::uint64_t kStreamVolume = 3;

constexpr double kHubCostLo = 0.8;   // per-leg hub cost multiplier range
constexpr double kHubCostHi = 1.25;
constexpr double kEscapeSurcharge = 1.25;  // escape legs are deliberately pricier
constexpr double kWeightLo = 0.1;
constexpr double kWeightHi = 2.0;
constexpr double kWeightFactor = 0.25;  // cost multiplier is 1 + kWeightFactor * weight
constexpr double kNoiseSigma = 0.75;    // lognormal shape of the additive noise
constexpr double kVolumeJitter = 0.2;   // +-20% day volumes in histories
constexpr int kPoolSize = 3;            // candidate sets per OD pair
// Proportion constraints are only emitted for ODs with at least this many
// parcels on the day; below it a band of the configured width may contain no
// attainable integer share.
constexpr int kMinProportionParcels = 10;

[[noreturn]] void fail(const std::string& message) {
  throw std::runtime_error("genconfig: " + message);
}

std::string tag(const char* prefix, int index, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, index);
  return buf;
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

// One route catalog entry: the model route plus its pre-noise base cost.
struct CatalogRoute {
  Route route;
  double base_cost = 0.0;
};

// Everything shared across the days of one history.
struct World {
  std::vector<std::string> locations;
  std::vector<std::string> hubs;
  std::vector<std::string> providers;
  std::vector<double> hub_multiplier;
  std::vector<int> capacity_hubs;              // hub indices carrying bounds
  std::vector<std::pair<int, int>> od_pairs;   // location index pairs
  std::vector<int> band_provider;              // per OD: provider index or -1
  std::vector<double> band_lower, band_upper;  // per OD, meaningful when banded
  std::vector<std::vector<CatalogRoute>> catalog;     // per OD
  std::vector<std::vector<std::vector<int>>> pools;   // per OD: sets of catalog indices
};

int smallest_location_count(int n_od_pairs) {
  int n = 2;
  while (static_cast<long long>(n) * (n - 1) < n_od_pairs) ++n;
  return n;
}

std::vector<int> distinct_sample(rng::Rng& rng, int population, int count) {
  std::vector<int> ids(population);
  std::iota(ids.begin(), ids.end(), 0);
  rng.shuffle(ids);
  ids.resize(count);
  return ids;
}

World build_world(const GenConfig& config, rng::Rng& rng) {
  World w;
  const int n_loc = smallest_location_count(config.n_od_pairs);
  for (int i = 0; i < n_loc; ++i) w.locations.push_back(tag("L", i, 2));
  for (int i = 0; i < config.n_hubs; ++i) w.hubs.push_back(tag("H", i, 2));
  for (int i = 0; i < config.n_providers; ++i) w.providers.push_back(tag("PV", i, 1));

  w.hub_multiplier.resize(config.n_hubs);
  for (double& m : w.hub_multiplier) m = rng.uniform(kHubCostLo, kHubCostHi);

  // Capacity bounds go on the cheapest hubs so that greedy assignment floods
  // exactly the constrained ones.
  const int n_cap = static_cast<int>(std::llround(config.capacity_fraction * config.n_hubs));
  std::vector<int> by_cost(config.n_hubs);
  std::iota(by_cost.begin(), by_cost.end(), 0);
  std::sort(by_cost.begin(), by_cost.end(), [&](int a, int b) {
    if (w.hub_multiplier[a] != w.hub_multiplier[b])
      return w.hub_multiplier[a] < w.hub_multiplier[b];
    return a < b;
  });
  w.capacity_hubs.assign(by_cost.begin(), by_cost.begin() + n_cap);
  std::sort(w.capacity_hubs.begin(), w.capacity_hubs.end());
  std::vector<char> constrained(config.n_hubs, 0);
  for (int h : w.capacity_hubs) constrained[h] = 1;
  std::vector<int> free_hubs;
  for (int h = 0; h < config.n_hubs; ++h)
    if (!constrained[h]) free_hubs.push_back(h);

  // OD pairs: a shuffled sample of all ordered location pairs.
  std::vector<std::pair<int, int>> all_pairs;
  for (int a = 0; a < n_loc; ++a)
    for (int b = 0; b < n_loc; ++b)
      if (a != b) all_pairs.emplace_back(a, b);
  rng.shuffle(all_pairs);
  w.od_pairs.assign(all_pairs.begin(), all_pairs.begin() + config.n_od_pairs);

  // Proportion bands on a shuffled sample of ODs.
  const int n_band =
      static_cast<int>(std::llround(config.proportion_fraction * config.n_od_pairs));
  w.band_provider.assign(config.n_od_pairs, -1);
  w.band_lower.assign(config.n_od_pairs, 0.0);
  w.band_upper.assign(config.n_od_pairs, 0.0);
  for (int od : distinct_sample(rng, config.n_od_pairs, n_band)) {
    w.band_provider[od] = static_cast<int>(rng.below(config.n_providers));
    w.band_lower[od] = rng.uniform(config.p_lower_min, config.p_lower_max);
    w.band_upper[od] = rng.uniform(config.p_upper_min, config.p_upper_max);
  }

  // Per-OD route catalogs and candidate-set pools.
  w.catalog.resize(config.n_od_pairs);
  w.pools.resize(config.n_od_pairs);
  const int max_legs = std::min(3, config.n_hubs);
  for (int od = 0; od < config.n_od_pairs; ++od) {
    const auto [origin_idx, dest_idx] = w.od_pairs[od];
    const int banded = w.band_provider[od];
    const int n_escapes = banded >= 0 ? 2 : 1;
    const std::string od_name = tag("od", od, 2);

    auto add_route = [&](const std::string& suffix, const std::vector<int>& hub_idx,
                         int provider, double surcharge) {
      CatalogRoute cr;
      cr.route.id = od_name + "-" + suffix;
      for (int h : hub_idx) {
        cr.route.hub_ids.push_back(w.hubs[h]);
        cr.base_cost += config.leg_cost_base * w.hub_multiplier[h] * surcharge;
      }
      cr.route.provider_id = w.providers[provider];
      cr.route.origin = w.locations[origin_idx];
      cr.route.destination = w.locations[dest_idx];
      w.catalog[od].push_back(std::move(cr));
    };

    // Escape routes stay on unconstrained hubs; a banded OD gets one per side
    // of the provider split so any attainable share is reachable without
    // touching a capacity bound.
    for (int e = 0; e < n_escapes; ++e) {
      const int legs = 1 + static_cast<int>(rng.below(std::min(2, (int)free_hubs.size())));
      std::vector<int> hub_idx;
      for (int pos : distinct_sample(rng, static_cast<int>(free_hubs.size()), legs))
        hub_idx.push_back(free_hubs[pos]);
      int provider;
      if (banded >= 0)
        provider = e == 0 ? banded
                          : static_cast<int>((banded + 1 + rng.below(config.n_providers - 1)) %
                                             config.n_providers);
      else
        provider = static_cast<int>(rng.below(config.n_providers));
      add_route(tag("e", e, 1), hub_idx, provider, kEscapeSurcharge);
    }

    // Regular routes over all hubs; banded ODs alternate the constrained
    // provider with the rest so both sides of the band stay reachable.
    const int n_regular = config.routes_max + 2;
    for (int j = 0; j < n_regular; ++j) {
      const int legs = 1 + static_cast<int>(rng.below(max_legs));
      const std::vector<int> hub_idx = distinct_sample(rng, config.n_hubs, legs);
      int provider;
      if (banded >= 0)
        provider = j % 2 == 0 ? banded
                              : static_cast<int>((banded + 1 + rng.below(config.n_providers - 1)) %
                                                 config.n_providers);
      else
        provider = static_cast<int>(rng.below(config.n_providers));
      add_route(tag("r", j, 2), hub_idx, provider, 1.0);
    }

    // Candidate-set pool: every set opens with the escape routes.
    for (int s = 0; s < kPoolSize; ++s) {
      int size = config.routes_min +
                 static_cast<int>(rng.below(config.routes_max - config.routes_min + 1));
      size = std::max(size, n_escapes);
      std::vector<int> members(n_escapes);
      std::iota(members.begin(), members.end(), 0);
      for (int pos : distinct_sample(rng, n_regular, size - n_escapes))
        members.push_back(n_escapes + pos);
      std::sort(members.begin(), members.end());
      w.pools[od].push_back(std::move(members));
    }
  }
  return w;
}

Instance generate_day(const GenConfig& config, const World& w, const std::string& label,
                      std::uint64_t day, int volume) {
  rng::Rng rng = rng::Rng::derive(config.seed, {kStreamDay, day});
  Instance ins;
  ins.label = label;

  for (const auto& od_catalog : w.catalog)
    for (const CatalogRoute& cr : od_catalog) ins.routes.push_back(cr.route);

  std::vector<int> od_count(config.n_od_pairs, 0);
  ins.parcels.reserve(volume);
  for (int t = 0; t < volume; ++t) {
    const int od = static_cast<int>(rng.below(config.n_od_pairs));
    ++od_count[od];
    Parcel p;
    p.id = t;
    p.origin = w.locations[w.od_pairs[od].first];
    p.destination = w.locations[w.od_pairs[od].second];
    p.weight = round6(rng.uniform(kWeightLo, kWeightHi));
    const auto& members = w.pools[od][rng.below(kPoolSize)];
    for (int m : members) {
      const CatalogRoute& cr = w.catalog[od][m];
      const double noise =
          config.leg_cost_base * config.cost_noise * rng.lognormal(0.0, kNoiseSigma);
      p.candidates.push_back(
          {cr.route.id, round6(cr.base_cost * (1.0 + kWeightFactor * p.weight) + noise)});
    }
    ins.n_r_max = std::max(ins.n_r_max, static_cast<int>(p.candidates.size()));
    ins.parcels.push_back(std::move(p));
  }

  // Capacity bounds from realized demand: expected hub load under a uniform
  // candidate choice equals capacity_tightness * U_k.
  std::unordered_map<std::string, std::vector<int>> route_hubs;  // deduped hub indices
  for (const auto& od_catalog : w.catalog)
    for (const CatalogRoute& cr : od_catalog) {
      std::vector<int>& hubs = route_hubs[cr.route.id];
      for (const std::string& hub : cr.route.hub_ids) {
        const int h = static_cast<int>(std::find(w.hubs.begin(), w.hubs.end(), hub) -
                                       w.hubs.begin());
        if (std::find(hubs.begin(), hubs.end(), h) == hubs.end()) hubs.push_back(h);
      }
    }
  std::vector<double> expected_load(config.n_hubs, 0.0);
  for (const Parcel& p : ins.parcels) {
    const double share = 1.0 / static_cast<double>(p.candidates.size());
    for (const model::Candidate& c : p.candidates)
      for (int h : route_hubs.at(c.route_id)) expected_load[h] += share;
  }
  for (int h : w.capacity_hubs) {
    ConstraintSpec k;
    k.id = "cap-" + w.hubs[h];
    k.kind = ConstraintKind::Capacity;
    k.hub_id = w.hubs[h];
    k.upper_bound =
        std::max(1LL, std::llround(expected_load[h] / config.capacity_tightness));
    ins.constraints.push_back(std::move(k));
  }

  for (int od = 0; od < config.n_od_pairs; ++od) {
    if (w.band_provider[od] < 0 || od_count[od] < kMinProportionParcels) continue;
    ConstraintSpec k;
    k.id = "prop-" + tag("od", od, 2);
    k.kind = ConstraintKind::Proportion;
    k.od_origin = w.locations[w.od_pairs[od].first];
    k.od_destination = w.locations[w.od_pairs[od].second];
    k.provider_id = w.providers[w.band_provider[od]];
    k.p_lower = round6(w.band_lower[od]);
    k.p_upper = round6(w.band_upper[od]);
    ins.constraints.push_back(std::move(k));
  }

  model::validate(ins);
  return ins;
}

}  // namespace

void validate(const GenConfig& config) {
  auto positive_count = [](int v, const char* name) {
    if (v < 1) fail(std::string(name) + " must be >= 1");
  };
  positive_count(config.n_parcels, "n_parcels");
  positive_count(config.n_hubs, "n_hubs");
  positive_count(config.n_od_pairs, "n_od_pairs");
  positive_count(config.n_providers, "n_providers");
  if (config.routes_min < 1 || config.routes_max < config.routes_min)
    fail("routes_per_parcel must satisfy 1 <= min <= max");
  auto positive_real = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) fail(std::string(name) + " must be positive and finite");
  };
  positive_real(config.leg_cost_base, "leg_cost_base");
  positive_real(config.capacity_tightness, "capacity_tightness");
  if (!(config.cost_noise >= 0.0) || !std::isfinite(config.cost_noise))
    fail("cost_noise must be nonnegative and finite");
  auto fraction = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) fail(std::string(name) + " must lie in [0, 1]");
  };
  fraction(config.capacity_fraction, "capacity_fraction");
  fraction(config.proportion_fraction, "proportion_fraction");
  const double& pl0 = config.p_lower_min;
  const double& pl1 = config.p_lower_max;
  const double& pu0 = config.p_upper_min;
  const double& pu1 = config.p_upper_max;
  if (!(0.0 <= pl0 && pl0 <= pl1 && pl1 <= pu0 && pu0 <= pu1 && pu1 <= 1.0))
    fail("proportion band ranges must satisfy 0 <= p_lower_min <= p_lower_max"
         " <= p_upper_min <= p_upper_max <= 1");
  if (std::llround(config.capacity_fraction * config.n_hubs) >= config.n_hubs)
    fail("capacity_fraction leaves no unconstrained hub for escape routes");
  if (config.proportion_fraction > 0.0) {
    if (config.n_providers < 2) fail("proportion constraints need at least two providers");
    if (config.routes_max < 2)
      fail("proportion constraints need routes_per_parcel max >= 2 for a provider choice");
  }
  if (config.label.empty()) fail("label must be non-empty");
}

Instance generate(const GenConfig& config) {
  validate(config);
  rng::Rng world_rng = rng::Rng::derive(config.seed, {kStreamWorld});
  const World w = build_world(config, world_rng);
  return generate_day(config, w, config.label, 0, config.n_parcels);
}

std::vector<Instance> generate_history(const GenConfig& config, int n_days) {
  validate(config);
  if (n_days < 1) fail("n_days must be >= 1");
  rng::Rng world_rng = rng::Rng::derive(config.seed, {kStreamWorld});
  const World w = build_world(config, world_rng);
  std::vector<Instance> days;
  days.reserve(n_days);
  for (int d = 0; d < n_days; ++d) {
    rng::Rng volume_rng = rng::Rng::derive(config.seed, {kStreamVolume, (std::uint64_t)d});
    const double jitter = volume_rng.uniform(-kVolumeJitter, kVolumeJitter);
    const int volume =
        std::max(1, static_cast<int>(std::llround(config.n_parcels * (1.0 + jitter))));
    days.push_back(generate_day(config, w, config.label + "-" + tag("d", d, 2),
                                static_cast<std::uint64_t>(d), volume));
  }
  return days;
}

// ---------------------------------------------------------------------------
// Config (de)serialization
//
//   opa-genconfig v1
//   seed 42
//   label synthetic
//   n_parcels 10000
//   n_hubs 20
//   n_od_pairs 40
//   n_providers 4
//   routes_per_parcel 2 3
//   leg_cost_base 10
//   cost_noise 0.12
//   capacity_tightness 1.2
//   capacity_fraction 0.6
//   proportion_fraction 0.25
//   p_lower_range 0.2 0.35
//   p_upper_range 0.55 0.75
//   end
//
// Every key is optional and defaults to the GenConfig initializer; unknown or
// repeated keys are rejected.
// ---------------------------------------------------------------------------

void write_gen_config(const GenConfig& config, std::ostream& out) {
  using textio::format_double;
  out << "opa-genconfig v1\n";
  out << "seed " << config.seed << "\n";
  out << "label " << config.label << "\n";
  out << "n_parcels " << config.n_parcels << "\n";
  out << "n_hubs " << config.n_hubs << "\n";
  out << "n_od_pairs " << config.n_od_pairs << "\n";
  out << "n_providers " << config.n_providers << "\n";
  out << "routes_per_parcel " << config.routes_min << " " << config.routes_max << "\n";
  out << "leg_cost_base " << format_double(config.leg_cost_base) << "\n";
  out << "cost_noise " << format_double(config.cost_noise) << "\n";
  out << "capacity_tightness " << format_double(config.capacity_tightness) << "\n";
  out << "capacity_fraction " << format_double(config.capacity_fraction) << "\n";
  out << "proportion_fraction " << format_double(config.proportion_fraction) << "\n";
  out << "p_lower_range " << format_double(config.p_lower_min) << " "
      << format_double(config.p_lower_max) << "\n";
  out << "p_upper_range " << format_double(config.p_upper_min) << " "
      << format_double(config.p_upper_max) << "\n";
  out << "end\n";
}

GenConfig read_gen_config(std::istream& in, const std::string& origin_name) {
  using textio::parse_int;
  using textio::parse_real;
  using textio::split_tokens;
  textio::LineReader reader(in, origin_name);
  if (reader.next_line() != "opa-genconfig v1") reader.error("expected header 'opa-genconfig v1'");
  GenConfig config;
  std::set<std::string> seen;
  while (true) {
    const std::string line = reader.next_line();
    if (line == "end") break;
    const std::vector<std::string> toks = split_tokens(line);
    const std::string& key = toks[0];
    if (!seen.insert(key).second) reader.error("duplicate key '" + key + "'");
    auto want = [&](std::size_t n) {
      if (toks.size() != n + 1)
        reader.error("'" + key + "' expects " + std::to_string(n) + " value(s)");
    };
    if (key == "seed") {
      want(1);
      const long long v = parse_int(reader, toks[1], "seed");
      if (v < 0) reader.error("seed must be nonnegative");
      config.seed = static_cast<std::uint64_t>(v);
    } else if (key == "label") {
      config.label = line.size() > 6 ? line.substr(6) : "";
    } else if (key == "n_parcels") {
      want(1);
      config.n_parcels = static_cast<int>(parse_int(reader, toks[1], key.c_str()));
    } else if (key == "n_hubs") {
      want(1);
      config.n_hubs = static_cast<int>(parse_int(reader, toks[1], key.c_str()));
    } else if (key == "n_od_pairs") {
      want(1);
      config.n_od_pairs = static_cast<int>(parse_int(reader, toks[1], key.c_str()));
    } else if (key == "n_providers") {
      want(1);
      config.n_providers = static_cast<int>(parse_int(reader, toks[1], key.c_str()));
    } else if (key == "routes_per_parcel") {
      want(2);
      config.routes_min = static_cast<int>(parse_int(reader, toks[1], key.c_str()));
      config.routes_max = static_cast<int>(parse_int(reader, toks[2], key.c_str()));
    } else if (key == "leg_cost_base") {
      want(1);
      config.leg_cost_base = parse_real(reader, toks[1], key.c_str());
    } else if (key == "cost_noise") {
      want(1);
      config.cost_noise = parse_real(reader, toks[1], key.c_str());
    } else if (key == "capacity_tightness") {
      want(1);
      config.capacity_tightness = parse_real(reader, toks[1], key.c_str());
    } else if (key == "capacity_fraction") {
      want(1);
      config.capacity_fraction = parse_real(reader, toks[1], key.c_str());
    } else if (key == "proportion_fraction") {
      want(1);
      config.proportion_fraction = parse_real(reader, toks[1], key.c_str());
    } else if (key == "p_lower_range") {
      want(2);
      config.p_lower_min = parse_real(reader, toks[1], key.c_str());
      config.p_lower_max = parse_real(reader, toks[2], key.c_str());
    } else if (key == "p_upper_range") {
      want(2);
      config.p_upper_min = parse_real(reader, toks[1], key.c_str());
      config.p_upper_max = parse_real(reader, toks[2], key.c_str());
    } else {
      reader.error("unknown key '" + key + "'");
    }
  }
  validate(config);
  return config;
}

GenConfig load_gen_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open gen config file: " + path);
  return read_gen_config(in, path);
}

void save_gen_config(const GenConfig& config, const std::string& path) {
  validate(config);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open gen config file for writing: " + path);
  write_gen_config(config, out);
  out.flush();
  if (!out) throw std::runtime_error("failed writing gen config file: " + path);
}

}  // namespace opa::datagen
