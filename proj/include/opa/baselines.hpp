#pragma once

// Non-learned comparison policies: cost-greedy assignment, the Proportion
// policy (sample routes with the empirical frequencies of offline solutions
// on historical days), and PDO (primal-dual online assignment with reduced
// costs and pacing targets).
//
// PDO maintains one upper multiplier per capacity bound and an upper/lower
// pair per proportion band. Assignment is the argmin of reduced cost
// c_ij + sum of mu_upper - mu_lower over the constraints the candidate
// touches; after every environment step the multipliers take a projected
// subgradient step against linear pacing targets: capacity usage is paced to
// U_k * t / m using the known day volume m, and a band's provider count is
// paced to [p_lower, p_upper] of the OD parcels seen so far (the band's true
// denominator is unknown online).

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "opa/env.hpp"
#include "opa/model.hpp"
#include "opa/oracle.hpp"
#include "opa/rng.hpp"

namespace opa::baselines {

// Index of the cheapest candidate; ties go to the lexicographically smallest
// route id.
int greedy_assign(const model::Parcel& parcel);

// ---------------------------------------------------------------------------
// Proportion policy
// ---------------------------------------------------------------------------

// Empirical route frequencies per parcel type, where a type is
// (origin, destination, sorted candidate route-id signature). Stored vectors
// are aligned with the sorted signature; queries re-align to the parcel's
// candidate order. Unseen types fall back to the uniform vector.
class ProportionTable {
 public:
  struct Entry {
    std::vector<std::string> routes;  // sorted signature
    std::vector<double> probs;        // nonnegative, sums to 1 within 1e-9

    bool operator==(const Entry&) const = default;
  };

  // Probabilities aligned with parcel.candidates.
  std::vector<double> probabilities(const model::Parcel& parcel) const;

  bool contains(const model::Parcel& parcel) const;
  std::size_t size() const { return entries_.size(); }

  static std::string type_key(const model::Parcel& parcel);

  // Ordered map keeps serialization deterministic.
  std::map<std::string, Entry> entries_;

  bool operator==(const ProportionTable&) const = default;
};

using DaySolver = std::function<oracle::OfflineSolution(const model::Instance&)>;

// Solves each historical day offline and pools the chosen routes into
// per-type frequencies. A day is skipped (label appended to *skipped when
// given) if the solver throws or returns an incomplete assignment; throws
// when every day is skipped or the history is empty.
ProportionTable fit_proportions(const std::vector<model::Instance>& history,
                                const DaySolver& solver,
                                std::vector<std::string>* skipped = nullptr);

// Samples a candidate index from the parcel's type vector (uniform for
// unseen types). Zero-probability candidates are never chosen.
int proportion_assign(const ProportionTable& table, const model::Parcel& parcel, rng::Rng& rng);

// Text round-trip (format documented in README.md).
void write_proportions(const ProportionTable& table, std::ostream& out);
ProportionTable read_proportions(std::istream& in, const std::string& origin_name);
void save_proportions(const ProportionTable& table, const std::string& path);
ProportionTable load_proportions(const std::string& path);

// ---------------------------------------------------------------------------
// PDO
// ---------------------------------------------------------------------------

struct DualPrices {
  std::vector<double> cap_upper;   // per capacity slot, >= 0
  std::vector<double> prop_upper;  // per proportion slot, >= 0
  std::vector<double> prop_lower;  // per proportion slot, >= 0
  double eta = 0.0;                // subgradient step size
  long long m = 0;                 // known day volume

  bool operator==(const DualPrices&) const = default;
};

// Zero-initialized duals. eta_override <= 0 selects the default step
// 1 / (mean candidate cost * m), which keeps dual increments commensurate
// with costs.
DualPrices make_duals(const env::EnvModel& compiled, double eta_override = 0.0);

// Argmin of reduced cost over the parcel's candidates; ties by raw cost,
// then route id.
int pdo_assign(const DualPrices& duals, const env::EnvModel& compiled, int parcel_id);

// Projected subgradient step after the state-advancing step at time
// state.t. Throws when duals.m <= 0.
void pdo_update(DualPrices& duals, const env::EnvModel& compiled, const env::EnvState& state);

}  // namespace opa::baselines
