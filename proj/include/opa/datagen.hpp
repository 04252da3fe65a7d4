#pragma once

// Synthetic benchmark instance generation with controllable tightness.
//
// A generated world consists of locations, hubs (each with a per-leg cost
// multiplier), providers, and a set of origin-destination (OD) pairs. Each OD
// pair owns a small catalog of routes and a pool of candidate sets drawn from
// that catalog; parcels of the same OD share one of the pooled sets and
// differ only in weight and per-parcel cost noise, so the cheapest candidate
// varies from parcel to parcel.
//
// Constraint placement is adversarial on purpose: capacity bounds sit on the
// cheapest hubs (a cost-greedy policy floods exactly those), and every bound
// U_k is derived from the realized demand so that assigning each parcel to a
// uniformly random candidate would load the hub to capacity_tightness * U_k.
// Every OD also carries an escape route through unconstrained, pricier hubs —
// two with distinct providers when the OD has a proportion band — so every
// instance is feasible by construction.
//
// All generation is a pure function of (config, seed): the same config yields
// byte-identical instance files.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "opa/model.hpp"

namespace opa::datagen {

struct GenConfig {
  std::uint64_t seed = 1;
  std::string label = "synthetic";

  int n_parcels = 10000;
  int n_hubs = 20;
  int n_od_pairs = 40;
  int n_providers = 4;
  int routes_min = 2;  // candidate-set size range, escape routes included
  int routes_max = 3;

  double leg_cost_base = 10.0;  // base cost of one route leg before hub multipliers
  double cost_noise = 0.12;     // scale of the additive per-parcel lognormal noise

  double capacity_tightness = 1.2;    // expected uniform-assignment hub load / U_k
  double capacity_fraction = 0.6;     // fraction of hubs carrying a capacity bound
  double proportion_fraction = 0.25;  // fraction of OD pairs carrying a proportion band
  double p_lower_min = 0.2;           // proportion band edges are drawn uniformly
  double p_lower_max = 0.35;          // from [p_lower_min, p_lower_max] and
  double p_upper_min = 0.55;          // [p_upper_min, p_upper_max]
  double p_upper_max = 0.75;

  bool operator==(const GenConfig&) const = default;
};

// Throws std::runtime_error on the first violated invariant: positive counts,
// 1 <= routes_min <= routes_max, positive finite cost/tightness parameters,
// fractions within [0,1], band ranges satisfying
// 0 <= p_lower_min <= p_lower_max <= p_upper_min <= p_upper_max <= 1, at
// least one unconstrained hub left for escape routes, and (when proportion
// constraints are requested) at least two providers and routes_max >= 2.
void validate(const GenConfig& config);

// One day of parcels with exactly config.n_parcels arrivals. The result
// passes model::validate.
model::Instance generate(const GenConfig& config);

// n_days instances sharing one world (route catalogs, constrained hubs,
// proportion bands). Day volumes vary by +-20% around config.n_parcels, and
// capacity bounds are re-derived from each day's realized demand so the
// configured tightness holds day by day.
std::vector<model::Instance> generate_history(const GenConfig& config, int n_days);

// Plain-text config format (documented in README.md). Missing keys keep their
// defaults; unknown or duplicate keys are errors with line numbers.
GenConfig read_gen_config(std::istream& in, const std::string& origin_name);
GenConfig load_gen_config(const std::string& path);
void write_gen_config(const GenConfig& config, std::ostream& out);
void save_gen_config(const GenConfig& config, const std::string& path);

}  // namespace opa::datagen
