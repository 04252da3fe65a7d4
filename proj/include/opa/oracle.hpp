#pragma once

// Offline solvers for the day-level assignment problem: pick one candidate
// per parcel minimizing total cost subject to the hub capacity bounds and the
// provider proportion bands. Offline, each band's denominator n_k (the number
// of the day's parcels matching the band's OD pair) is known up front, so a
// proportion band turns into integer bounds on the provider's parcel count:
// ceil(p_lower * n_k) <= target_k <= floor(p_upper * n_k), with the shared
// guarded rounding of opa/rounding.hpp.
//
// solve_exact enumerates assignments depth-first in (parcel id, candidate
// index) order with cost and constraint pruning, so the first optimum found
// is the lexicographically smallest one. solve_bound runs projected
// subgradient ascent on the Lagrangian dual (relaxing all coupling
// constraints), which separates into per-parcel reduced-cost argmins; its
// dual value is a valid lower bound on the optimum, and each iterate is
// greedily repaired into a primal incumbent.

#include <iosfwd>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "opa/model.hpp"

namespace opa::oracle {

inline constexpr long long kDefaultBudget = 1'000'000;

struct OfflineSolution {
  // Candidate index per parcel, aligned with parcel ids; empty when the
  // instance admits no feasible assignment (exact tier only).
  std::vector<int> assignment;
  // Total cost of `assignment`; +inf when `assignment` is empty.
  double objective = std::numeric_limits<double>::infinity();
  // Lower bound on the optimal total cost; equals `objective` for the exact
  // tier, and the best dual value for the bound tier.
  double bound = std::numeric_limits<double>::infinity();
  bool feasible = false;

  bool operator==(const OfflineSolution&) const = default;
};

// Thrown by solve_exact when the search space exceeds the budget.
class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exhaustive search. `budget` caps the product of candidate counts; an
// instance past the cap throws BudgetExceeded before any search (constraint-
// free instances skip the search entirely and take per-parcel minima). When
// no feasible assignment exists, returns feasible=false with an empty
// assignment and infinite objective/bound.
OfflineSolution solve_exact(const model::Instance& instance, long long budget = kDefaultBudget);

// Lagrangian dual bound plus repaired primal incumbent. `iterations` counts
// dual evaluations (>= 1); multipliers start at zero, so one iteration yields
// the unconstrained bound (sum of per-parcel minimum costs). The step size is
// eta_0 / (sqrt(s) * ||g||) with eta_0 the instance's mean candidate cost and
// g the subgradient. feasible=false means greedy repair never produced a
// feasible iterate; the bound is valid regardless.
OfflineSolution solve_bound(const model::Instance& instance, int iterations);

struct FeasibilityReport {
  bool feasible = true;
  std::vector<std::string> violated_ids;  // constraint ids in instance order

  bool operator==(const FeasibilityReport&) const = default;
};

// Recomputes every constraint's final count/share from scratch for a complete
// assignment (candidate index per parcel). Throws when the assignment does
// not cover every parcel with a valid candidate index.
FeasibilityReport check_feasible(const model::Instance& instance,
                                 const std::vector<int>& assignment);

// Relative cost gap of a policy against an offline reference:
// (policy average cost - reference average cost) / reference average cost,
// returned as a fraction (0.01 == 1%). The reference average is bound /
// parcel count — for the exact tier the bound equals the optimum. Negative
// gaps are possible when the policy violates constraints the reference
// respects. Throws when the reference is unusable (no assignment, or a
// non-positive or non-finite bound).
double ip_gap(double policy_average_cost, const OfflineSolution& reference);

// Total cost of a complete assignment (no constraint checking).
double solution_cost(const model::Instance& instance, const std::vector<int>& assignment);

// Solution file: a summary block plus one `assign <parcel_id> <route_id>`
// line per parcel (format documented in README.md). Reading resolves route
// ids back to candidate indices against `instance` and rejects mismatches.
void write_solution(const OfflineSolution& solution, const model::Instance& instance,
                    std::ostream& out);
OfflineSolution read_solution(std::istream& in, const model::Instance& instance,
                              const std::string& origin_name);
void save_solution(const OfflineSolution& solution, const model::Instance& instance,
                   const std::string& path);
OfflineSolution load_solution(const std::string& path, const model::Instance& instance);

}  // namespace opa::oracle
