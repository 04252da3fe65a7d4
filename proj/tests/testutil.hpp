#pragma once

// Shared helpers for the test suites: compact instance builders and the
// random tiny-instance sampler used by the solver and environment suites.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "opa/model.hpp"
#include "opa/rng.hpp"

namespace opa::testutil {

using model::Candidate;
using model::ConstraintKind;
using model::ConstraintSpec;
using model::Instance;
using model::Parcel;
using model::Route;

inline Route make_route(std::string id, std::vector<std::string> hubs, std::string provider,
                        std::string origin, std::string destination) {
  Route r;
  r.id = std::move(id);
  r.hub_ids = std::move(hubs);
  r.provider_id = std::move(provider);
  r.origin = std::move(origin);
  r.destination = std::move(destination);
  return r;
}

inline Parcel make_parcel(int id, std::string origin, std::string destination, double weight,
                          std::vector<Candidate> candidates) {
  Parcel p;
  p.id = id;
  p.origin = std::move(origin);
  p.destination = std::move(destination);
  p.weight = weight;
  p.candidates = std::move(candidates);
  return p;
}

inline ConstraintSpec capacity(std::string id, std::string hub, long long upper) {
  ConstraintSpec k;
  k.id = std::move(id);
  k.kind = ConstraintKind::Capacity;
  k.hub_id = std::move(hub);
  k.upper_bound = upper;
  return k;
}

inline ConstraintSpec proportion(std::string id, std::string origin, std::string destination,
                                 std::string provider, double p_lower, double p_upper) {
  ConstraintSpec k;
  k.id = std::move(id);
  k.kind = ConstraintKind::Proportion;
  k.od_origin = std::move(origin);
  k.od_destination = std::move(destination);
  k.provider_id = std::move(provider);
  k.p_lower = p_lower;
  k.p_upper = p_upper;
  return k;
}

inline Instance make_instance(std::string label, std::vector<Route> routes,
                              std::vector<Parcel> parcels,
                              std::vector<ConstraintSpec> constraints) {
  Instance ins;
  ins.label = std::move(label);
  ins.routes = std::move(routes);
  ins.parcels = std::move(parcels);
  ins.constraints = std::move(constraints);
  int max_cands = 1;
  for (const Parcel& p : ins.parcels)
    max_cands = std::max(max_cands, static_cast<int>(p.candidates.size()));
  ins.n_r_max = max_cands;
  model::validate(ins);
  return ins;
}

// The two-parcel, one-shared-hub instance used as a hand oracle in several
// suites: hub H has capacity 1; both parcels' cheapest route goes through H.
// The constrained optimum is cost 3 (parcel 0 -> r1 via H, parcel 1 -> r2b);
// cost-greedy picks both H routes for total cost 2 and one violating parcel.
inline Instance two_parcel_hand_instance() {
  std::vector<Route> routes = {
      make_route("r1", {"H"}, "P", "A", "B"),
      make_route("r2", {"G"}, "Q", "A", "B"),
      make_route("r1b", {"H"}, "P", "A", "C"),
      make_route("r2b", {"G"}, "Q", "A", "C"),
  };
  std::vector<Parcel> parcels = {
      make_parcel(0, "A", "B", 1.0, {{"r1", 1.0}, {"r2", 3.0}}),
      make_parcel(1, "A", "C", 1.0, {{"r1b", 1.0}, {"r2b", 2.0}}),
  };
  return make_instance("hand2", std::move(routes), std::move(parcels),
                       {capacity("capH", "H", 1)});
}

// Random tiny instances (<= max_parcels parcels, <= 3 candidate routes each)
// with a mix of capacity and proportion constraints. Feasibility is NOT
// guaranteed; the solver suites exercise both outcomes.
inline Instance random_tiny_instance(rng::Rng& rng, int max_parcels = 10) {
  const int n_hubs = 2 + static_cast<int>(rng.below(3));        // 2..4
  const int n_providers = 1 + static_cast<int>(rng.below(3));   // 1..3
  const int n_od = 1 + static_cast<int>(rng.below(2));          // 1..2
  const int n_parcels = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_parcels)));

  std::vector<std::string> hubs, providers;
  for (int h = 0; h < n_hubs; ++h) hubs.push_back("H" + std::to_string(h));
  for (int p = 0; p < n_providers; ++p) providers.push_back("P" + std::to_string(p));
  std::vector<std::pair<std::string, std::string>> ods;
  for (int o = 0; o < n_od; ++o) ods.emplace_back("o" + std::to_string(o), "d" + std::to_string(o));

  // 3 routes per OD, each through 1-2 hubs.
  std::vector<Route> routes;
  std::map<int, std::vector<std::string>> od_routes;
  for (int o = 0; o < n_od; ++o) {
    for (int j = 0; j < 3; ++j) {
      std::string id = "r" + std::to_string(o) + "_" + std::to_string(j);
      std::vector<std::string> route_hubs;
      route_hubs.push_back(hubs[rng.below(static_cast<std::uint64_t>(n_hubs))]);
      if (rng.uniform() < 0.5) {
        std::string extra = hubs[rng.below(static_cast<std::uint64_t>(n_hubs))];
        if (extra != route_hubs[0]) route_hubs.push_back(extra);
      }
      const std::string provider = providers[rng.below(static_cast<std::uint64_t>(n_providers))];
      routes.push_back(make_route(id, route_hubs, provider, ods[o].first, ods[o].second));
      od_routes[o].push_back(id);
    }
  }

  std::vector<Parcel> parcels;
  for (int i = 0; i < n_parcels; ++i) {
    const int o = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_od)));
    const int n_cands = 1 + static_cast<int>(rng.below(3));  // 1..3
    std::vector<std::string> pool = od_routes[o];
    rng.shuffle(pool);
    std::vector<Candidate> cands;
    for (int c = 0; c < n_cands; ++c) cands.push_back({pool[c], rng.uniform(1.0, 10.0)});
    std::sort(cands.begin(), cands.end(),
              [](const Candidate& a, const Candidate& b) { return a.route_id < b.route_id; });
    parcels.push_back(make_parcel(i, ods[o].first, ods[o].second, rng.uniform(0.1, 5.0),
                                  std::move(cands)));
  }

  std::vector<ConstraintSpec> constraints;
  const int n_caps = static_cast<int>(rng.below(3));  // 0..2
  std::set<std::string> used_hubs;
  for (int c = 0; c < n_caps; ++c) {
    const std::string hub = hubs[rng.below(static_cast<std::uint64_t>(n_hubs))];
    if (!used_hubs.insert(hub).second) continue;
    const long long upper = 1 + static_cast<long long>(rng.below(
                                    static_cast<std::uint64_t>(std::max(1, n_parcels))));
    constraints.push_back(capacity("cap_" + hub, hub, upper));
  }
  if (rng.uniform() < 0.5) {
    const int o = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_od)));
    const std::string provider = providers[rng.below(static_cast<std::uint64_t>(n_providers))];
    const double lo = rng.uniform(0.0, 0.4);
    const double hi = lo + rng.uniform(0.2, 0.6);
    constraints.push_back(proportion("prop_" + std::to_string(o) + "_" + provider, ods[o].first,
                                     ods[o].second, provider, lo, std::min(1.0, hi)));
  }

  return make_instance("tiny", std::move(routes), std::move(parcels), std::move(constraints));
}

}  // namespace opa::testutil
