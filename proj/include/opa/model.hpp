#pragma once

// Core domain types shared by all modules, plus instance (de)serialization.
//
// An Instance is one day of parcels in arrival order together with the route
// catalog and the active constraint configuration. Parcel ids double as time
// steps: parcel t is the t-th arrival. All identifiers are opaque,
// whitespace-free strings. Instances are immutable after load and safe for
// concurrent reads.

#include <iosfwd>
#include <string>
#include <vector>

namespace opa::model {

// A candidate delivery route: an ordered chain of hubs operated by one
// provider, serving a single origin-destination pair.
struct Route {
  std::string id;
  std::vector<std::string> hub_ids;  // non-empty
  std::string provider_id;
  std::string origin;
  std::string destination;

  bool operator==(const Route&) const = default;
};

// One assignable option for a parcel. Costs are per (parcel, route): the same
// route may cost differently for different parcels (weight, surcharges).
struct Candidate {
  std::string route_id;
  double cost = 0.0;  // nonnegative

  bool operator==(const Candidate&) const = default;
};

struct Parcel {
  int id = 0;  // arrival ordinal; equals the environment time step t
  std::string origin;
  std::string destination;
  double weight = 0.0;  // nonnegative
  std::vector<Candidate> candidates;  // non-empty; all share the parcel's OD

  bool operator==(const Parcel&) const = default;
};

enum class ConstraintKind { Capacity, Proportion };

// A business constraint. Capacity: at most upper_bound parcels may be routed
// through hub_id over the day (lower bound fixed at 0). Proportion: the share
// of the OD pair's parcels served by provider_id must end the day within
// [p_lower, p_upper].
struct ConstraintSpec {
  std::string id;
  ConstraintKind kind = ConstraintKind::Capacity;

  // Capacity fields.
  std::string hub_id;
  long long upper_bound = 0;  // >= 1

  // Proportion fields.
  std::string od_origin;
  std::string od_destination;
  std::string provider_id;
  double p_lower = 0.0;  // 0 <= p_lower <= p_upper <= 1
  double p_upper = 0.0;

  bool operator==(const ConstraintSpec&) const = default;
};

struct Instance {
  std::string label;
  std::vector<Parcel> parcels;      // arrival order; ids 0..m-1
  std::vector<Route> routes;
  std::vector<ConstraintSpec> constraints;
  int n_r_max = 0;  // fixed route-slot width; >= every parcel's candidate count

  bool operator==(const Instance&) const = default;
};

// Throws std::runtime_error describing the first violated invariant:
// resolvable candidate route ids, matching ODs, non-empty candidate lists,
// candidate counts within n_r_max, parcel ids equal to their positions,
// m >= 1, unique route ids, non-empty hub lists, valid constraint bounds.
void validate(const Instance& instance);

// The candidate routes of `parcel` that consume constraint `k`:
// capacity k -> candidates whose route traverses k.hub_id; proportion k ->
// candidates with k's provider, and only when the parcel's OD matches k's OD.
// Returned in candidate order. Throws on unresolvable route ids.
std::vector<std::string> routes_touching_constraint(const Instance& instance,
                                                    const ConstraintSpec& k,
                                                    const Parcel& parcel);

// Plain-text instance format (documented in README.md). Costs and weights are
// printed with full precision so that load(save(x)) == x exactly. Parse errors
// report the offending line number. save_instance validates before writing;
// load_instance validates after reading.
void save_instance(const Instance& instance, const std::string& path);
Instance load_instance(const std::string& path);

// Stream-based variants used by the file functions and tests.
void write_instance(const Instance& instance, std::ostream& out);
Instance read_instance(std::istream& in, const std::string& origin_name);

}  // namespace opa::model
