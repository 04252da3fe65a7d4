#pragma once

// The online assignment environment. Parcels arrive one at a time in id
// order; the policy picks one candidate route per parcel; the environment
// tracks cumulative hub usage and per-constraint provider-share counters,
// emits shaped rewards, and scores the finished day.
//
// Reward for assigning parcel t to candidate a:
//   r_t = -cost(a) + sum over constraints touched by route(a) of
//           lambda_kind * shaping(constraint)
// where shaping is evaluated on the state BEFORE the assignment is applied:
//   capacity k:    exp(-used_k / U_k)                  in (0, 1]
//   proportion k:  (pL - p) if p < pL, -(p - pU) if p > pU, else 0
// with p = assigned_to_provider / max(parcels_of_od_seen, 1).
//
// A route "touches" a capacity constraint when it traverses the constrained
// hub, and a proportion constraint when both the OD pair and the provider
// match.
//
// EnvModel is an immutable compiled view of an Instance (slot indices,
// per-parcel candidate resolution, feature normalizers); many Envs may share
// one EnvModel concurrently, one Env per rollout.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "opa/model.hpp"
#include "opa/neural.hpp"

namespace opa::env {

inline constexpr int kParcelFeatDim = 4;
inline constexpr int kRouteFeatDim = 4;

// Shaping weights per constraint kind.
struct RewardWeights {
  double lambda_cap = 10.0;
  double lambda_prop = 300.0;
};

// What the policy sees for one parcel: a parcel feature vector, one feature
// row per candidate route slot, and a mask marking the real candidates.
// Masked rows are all-zero.
//
// parcel_feat: [weight / max_weight, origin_slot, destination_slot,
//               candidate_count / n_r]
// route_feats: [cost / max_cost, max used/U over the route's constrained
//               hubs, proportion-band deviation of the route's proportion
//               constraint (0 if none), provider_slot]
// Location and provider slots are the index normalized to [0, 1].
struct Observation {
  std::vector<double> parcel_feat;  // kParcelFeatDim
  neural::Tensor2 route_feats;      // n_r x kRouteFeatDim
  std::vector<std::uint8_t> mask;   // n_r; 1 = real candidate
};

struct PropCounter {
  long long seen = 0;    // parcels of the constraint's OD observed so far
  long long target = 0;  // of those, assigned to the constraint's provider

  bool operator==(const PropCounter&) const = default;
};

// Mutable rollout state. hub_used and prop_counters are indexed by the
// EnvModel's capacity / proportion slots; assignment_log holds the chosen
// candidate index of every assigned parcel. Recomputing the counters from
// assignment_log reproduces them exactly.
struct EnvState {
  long long t = 0;
  std::vector<long long> hub_used;
  std::vector<PropCounter> prop_counters;
  std::vector<int> assignment_log;

  bool operator==(const EnvState&) const = default;
};

// One assignment, as recorded for rollout logs: the raw (unweighted) shaping
// value of every constraint the chosen route touches, keyed by constraint id.
struct StepRecord {
  long long t = 0;
  int parcel_id = 0;
  std::string route_id;
  int action = 0;  // candidate index
  double cost = 0.0;
  double reward = 0.0;
  std::vector<std::pair<std::string, double>> shaping_terms;
};

// End-of-day standing of one constraint. value is used/U for capacity and
// the final provider share p for proportion.
struct ConstraintOutcome {
  std::string id;
  model::ConstraintKind kind = model::ConstraintKind::Capacity;
  double value = 0.0;
  long long violating = 0;  // parcels this constraint flags (before dedup)
};

// Day-level score. violation_rate = |union of flagged parcels| / m.
struct Report {
  long long parcels_assigned = 0;
  double total_cost = 0.0;
  double average_cost = 0.0;
  long long violating_parcels = 0;
  double violation_rate = 0.0;
  std::vector<ConstraintOutcome> constraints;
  std::vector<int> violating_parcel_ids;  // sorted ascending, deduplicated
};

// Immutable compiled instance: dense slots for constraints, locations and
// providers, per-route and per-parcel constraint membership, and the feature
// normalizers. Validates the instance on construction.
class EnvModel {
 public:
  explicit EnvModel(const model::Instance& instance);

  const model::Instance& instance() const { return *instance_; }
  int n_r() const { return instance_->n_r_max; }
  long long parcel_count() const {
    return static_cast<long long>(instance_->parcels.size());
  }

  int capacity_count() const { return static_cast<int>(caps_.size()); }
  int proportion_count() const { return static_cast<int>(props_.size()); }
  const model::ConstraintSpec& capacity(int slot) const { return *caps_[slot]; }
  const model::ConstraintSpec& proportion(int slot) const {
    return *props_[slot];
  }

  int location_count() const { return static_cast<int>(locations_.size()); }
  int provider_count() const { return static_cast<int>(providers_.size()); }

  // Dense route slot for a route id; routes are indexed in catalog order.
  int route_slot(const std::string& route_id) const;
  const model::Route& route(int slot) const { return *routes_[slot]; }
  // Capacity slots the route consumes (one per constrained hub traversed).
  const std::vector<int>& route_capacities(int route_slot) const {
    return route_caps_[route_slot];
  }
  // Proportion slots whose OD and provider both match the route's.
  const std::vector<int>& route_proportions(int route_slot) const {
    return route_props_[route_slot];
  }

  // Candidate index -> route slot for one parcel.
  int candidate_route(int parcel_id, int candidate) const {
    return parcel_route_slots_[parcel_id][candidate];
  }
  // Proportion slots whose OD matches the parcel's OD (seen-counter targets).
  const std::vector<int>& parcel_proportions(int parcel_id) const {
    return parcel_props_[parcel_id];
  }

  double max_cost() const { return max_cost_; }
  double max_weight() const { return max_weight_; }
  double location_slot_value(const std::string& location) const;
  double provider_slot_value(const std::string& provider) const;

 private:
  const model::Instance* instance_;
  std::vector<const model::Route*> routes_;
  std::unordered_map<std::string, int> route_slots_;
  std::vector<const model::ConstraintSpec*> caps_;
  std::vector<const model::ConstraintSpec*> props_;
  std::vector<std::string> locations_;  // sorted unique
  std::vector<std::string> providers_;  // sorted unique
  std::vector<std::vector<int>> route_caps_;
  std::vector<std::vector<int>> route_props_;
  std::vector<std::vector<int>> parcel_route_slots_;
  std::vector<std::vector<int>> parcel_props_;
  std::vector<int> parcel_origin_idx_;
  std::vector<int> parcel_dest_idx_;
  double max_cost_ = 0.0;
  double max_weight_ = 0.0;

  friend class Env;
};

// One rollout over an EnvModel. Single-writer; construct one Env per
// concurrent trajectory.
class Env {
 public:
  explicit Env(const EnvModel& compiled_model,
               RewardWeights weights = RewardWeights{});
  // The Env keeps a pointer to the compiled model; never pass a temporary.
  explicit Env(EnvModel&&, RewardWeights = RewardWeights{}) = delete;

  void reset();
  bool done() const { return state_.t >= compiled_->parcel_count(); }
  long long t() const { return state_.t; }
  const EnvState& state() const { return state_; }
  const EnvModel& compiled_model() const { return *compiled_; }
  const RewardWeights& weights() const { return weights_; }
  const model::Parcel& current_parcel() const;

  // Featurization of the pending parcel. Throws when the episode has ended.
  Observation observe() const;

  // Shaping terms on the current (pre-assignment) state.
  double capacity_shaping(int capacity_slot) const;
  double proportion_shaping(int proportion_slot) const;

  // Reward of assigning the pending parcel to candidate `action`, without
  // applying it. Throws std::out_of_range when action is masked.
  double reward(int action) const;

  // Applies the assignment: reward, counter updates, advance to the next
  // parcel. Throws std::logic_error after the episode ends and
  // std::out_of_range on a masked action.
  StepRecord step(int action);

  // Day-level score; callable only when done() (throws otherwise).
  Report finalize() const;

 private:
  const EnvModel* compiled_;
  RewardWeights weights_;
  EnvState state_;
};

// Recomputes a Report directly from an assignment log (chosen candidate index
// per parcel, in arrival order). Env::finalize is a thin wrapper over this.
Report score_assignment(const EnvModel& compiled_model,
                        const std::vector<int>& assignment_log);

// Rollout log: one delimited text record per step plus a header naming the
// instance, policy, seed, and shaping weights. Read back by the standalone
// recount verifier.
void write_rollout_log(std::ostream& out, const std::string& instance_label,
                       const std::string& policy, std::uint64_t seed,
                       const RewardWeights& weights,
                       const std::vector<StepRecord>& steps);

}  // namespace opa::env
