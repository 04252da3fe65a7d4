#include "opa/env.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "opa/rounding.hpp"
#include "opa/textio.hpp"

namespace opa::env {

namespace {

using rounding::ceil_guarded;
using rounding::floor_guarded;

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error(what); }

int sorted_index(const std::vector<std::string>& sorted, const std::string& key) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), key);
  if (it == sorted.end() || *it != key) fail("unknown identifier '" + key + "'");
  return static_cast<int>(it - sorted.begin());
}

double slot_value(int index, int count) {
  return count > 1 ? static_cast<double>(index) / (count - 1) : 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// EnvModel
// ---------------------------------------------------------------------------

EnvModel::EnvModel(const model::Instance& instance) : instance_(&instance) {
  model::validate(instance);

  std::unordered_map<std::string, int> route_slots;
  routes_.reserve(instance.routes.size());
  for (const model::Route& r : instance.routes) {
    route_slots.emplace(r.id, static_cast<int>(routes_.size()));
    routes_.push_back(&r);
  }
  route_slots_ = std::move(route_slots);

  std::unordered_map<std::string, std::vector<int>> hub_caps;
  for (const model::ConstraintSpec& k : instance.constraints) {
    if (k.kind == model::ConstraintKind::Capacity) {
      hub_caps[k.hub_id].push_back(static_cast<int>(caps_.size()));
      caps_.push_back(&k);
    } else {
      props_.push_back(&k);
    }
  }

  for (const model::Route& r : instance.routes) {
    locations_.push_back(r.origin);
    locations_.push_back(r.destination);
    providers_.push_back(r.provider_id);
  }
  for (const model::Parcel& p : instance.parcels) {
    locations_.push_back(p.origin);
    locations_.push_back(p.destination);
  }
  for (const model::ConstraintSpec* k : props_) {
    locations_.push_back(k->od_origin);
    locations_.push_back(k->od_destination);
    providers_.push_back(k->provider_id);
  }
  auto sort_unique = [](std::vector<std::string>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  sort_unique(locations_);
  sort_unique(providers_);

  route_caps_.resize(routes_.size());
  route_props_.resize(routes_.size());
  for (std::size_t s = 0; s < routes_.size(); ++s) {
    const model::Route& r = *routes_[s];
    std::vector<int>& caps = route_caps_[s];
    for (const std::string& hub : r.hub_ids) {
      const auto it = hub_caps.find(hub);
      if (it == hub_caps.end()) continue;
      for (int slot : it->second)
        if (std::find(caps.begin(), caps.end(), slot) == caps.end()) caps.push_back(slot);
    }
    std::sort(caps.begin(), caps.end());
    for (std::size_t j = 0; j < props_.size(); ++j) {
      const model::ConstraintSpec& k = *props_[j];
      if (k.od_origin == r.origin && k.od_destination == r.destination &&
          k.provider_id == r.provider_id)
        route_props_[s].push_back(static_cast<int>(j));
    }
  }

  parcel_route_slots_.resize(instance.parcels.size());
  parcel_props_.resize(instance.parcels.size());
  parcel_origin_idx_.resize(instance.parcels.size());
  parcel_dest_idx_.resize(instance.parcels.size());
  for (std::size_t i = 0; i < instance.parcels.size(); ++i) {
    const model::Parcel& p = instance.parcels[i];
    parcel_origin_idx_[i] = sorted_index(locations_, p.origin);
    parcel_dest_idx_[i] = sorted_index(locations_, p.destination);
    parcel_route_slots_[i].reserve(p.candidates.size());
    for (const model::Candidate& c : p.candidates) {
      parcel_route_slots_[i].push_back(route_slots_.at(c.route_id));
      max_cost_ = std::max(max_cost_, c.cost);
    }
    max_weight_ = std::max(max_weight_, p.weight);
    for (std::size_t j = 0; j < props_.size(); ++j) {
      const model::ConstraintSpec& k = *props_[j];
      if (k.od_origin == p.origin && k.od_destination == p.destination)
        parcel_props_[i].push_back(static_cast<int>(j));
    }
  }
}

int EnvModel::route_slot(const std::string& route_id) const {
  const auto it = route_slots_.find(route_id);
  if (it == route_slots_.end()) fail("unknown route '" + route_id + "'");
  return it->second;
}

double EnvModel::location_slot_value(const std::string& location) const {
  return slot_value(sorted_index(locations_, location), location_count());
}

double EnvModel::provider_slot_value(const std::string& provider) const {
  return slot_value(sorted_index(providers_, provider), provider_count());
}

// ---------------------------------------------------------------------------
// Env
// ---------------------------------------------------------------------------

Env::Env(const EnvModel& compiled_model, RewardWeights weights)
    : compiled_(&compiled_model), weights_(weights) {
  reset();
}

void Env::reset() {
  state_ = EnvState{};
  state_.hub_used.assign(compiled_->capacity_count(), 0);
  state_.prop_counters.assign(compiled_->proportion_count(), PropCounter{});
  state_.assignment_log.reserve(compiled_->instance().parcels.size());
}

const model::Parcel& Env::current_parcel() const {
  if (done()) fail("episode has ended; no pending parcel");
  return compiled_->instance().parcels[static_cast<std::size_t>(state_.t)];
}

double Env::capacity_shaping(int capacity_slot) const {
  const double used = static_cast<double>(state_.hub_used[capacity_slot]);
  const double bound = static_cast<double>(compiled_->capacity(capacity_slot).upper_bound);
  return std::exp(-used / bound);
}

double Env::proportion_shaping(int proportion_slot) const {
  const PropCounter& c = state_.prop_counters[proportion_slot];
  const model::ConstraintSpec& k = compiled_->proportion(proportion_slot);
  const double p = static_cast<double>(c.target) / static_cast<double>(std::max<long long>(c.seen, 1));
  if (p < k.p_lower) return k.p_lower - p;
  if (p > k.p_upper) return -(p - k.p_upper);
  return 0.0;
}

Observation Env::observe() const {
  const model::Parcel& parcel = current_parcel();
  const int n_r = compiled_->n_r();
  const int n_cand = static_cast<int>(parcel.candidates.size());

  Observation obs;
  obs.parcel_feat.resize(kParcelFeatDim);
  const double weight_denom = compiled_->max_weight() > 0.0 ? compiled_->max_weight() : 1.0;
  obs.parcel_feat[0] = parcel.weight / weight_denom;
  obs.parcel_feat[1] = slot_value(compiled_->parcel_origin_idx_[parcel.id],
                                  compiled_->location_count());
  obs.parcel_feat[2] =
      slot_value(compiled_->parcel_dest_idx_[parcel.id], compiled_->location_count());
  obs.parcel_feat[3] = static_cast<double>(n_cand) / n_r;

  obs.route_feats = neural::Tensor2(n_r, kRouteFeatDim);
  obs.mask.assign(static_cast<std::size_t>(n_r), 0);
  const double cost_denom = compiled_->max_cost() > 0.0 ? compiled_->max_cost() : 1.0;
  for (int a = 0; a < n_cand; ++a) {
    obs.mask[a] = 1;
    const int rs = compiled_->candidate_route(parcel.id, a);
    double* row = obs.route_feats.row(a);
    row[0] = parcel.candidates[a].cost / cost_denom;
    double util = 0.0;
    for (int slot : compiled_->route_capacities(rs)) {
      const double u = static_cast<double>(state_.hub_used[slot]) /
                       static_cast<double>(compiled_->capacity(slot).upper_bound);
      util = std::max(util, u);
    }
    row[1] = util;
    double deviation = 0.0;
    for (int slot : compiled_->route_proportions(rs)) deviation += proportion_shaping(slot);
    row[2] = deviation;
    row[3] = compiled_->provider_slot_value(compiled_->route(rs).provider_id);
  }
  return obs;
}

double Env::reward(int action) const {
  const model::Parcel& parcel = current_parcel();
  if (action < 0 || action >= static_cast<int>(parcel.candidates.size()))
    throw std::out_of_range("action " + std::to_string(action) + " is masked for parcel " +
                            std::to_string(parcel.id));
  const int rs = compiled_->candidate_route(parcel.id, action);
  double r = -parcel.candidates[action].cost;
  for (int slot : compiled_->route_capacities(rs)) r += weights_.lambda_cap * capacity_shaping(slot);
  for (int slot : compiled_->route_proportions(rs))
    r += weights_.lambda_prop * proportion_shaping(slot);
  return r;
}

StepRecord Env::step(int action) {
  if (done()) throw std::logic_error("step after episode end");
  const model::Parcel& parcel = current_parcel();
  if (action < 0 || action >= static_cast<int>(parcel.candidates.size()))
    throw std::out_of_range("action " + std::to_string(action) + " is masked for parcel " +
                            std::to_string(parcel.id));
  const int rs = compiled_->candidate_route(parcel.id, action);

  StepRecord rec;
  rec.t = state_.t;
  rec.parcel_id = parcel.id;
  rec.route_id = compiled_->route(rs).id;
  rec.action = action;
  rec.cost = parcel.candidates[action].cost;
  double r = -rec.cost;
  for (int slot : compiled_->route_capacities(rs)) {
    const double f = capacity_shaping(slot);
    rec.shaping_terms.emplace_back(compiled_->capacity(slot).id, f);
    r += weights_.lambda_cap * f;
  }
  for (int slot : compiled_->route_proportions(rs)) {
    const double f = proportion_shaping(slot);
    rec.shaping_terms.emplace_back(compiled_->proportion(slot).id, f);
    r += weights_.lambda_prop * f;
  }
  rec.reward = r;

  for (int slot : compiled_->route_capacities(rs)) ++state_.hub_used[slot];
  const std::vector<int>& route_props = compiled_->route_proportions(rs);
  for (int slot : compiled_->parcel_proportions(parcel.id)) {
    PropCounter& c = state_.prop_counters[slot];
    ++c.seen;
    if (std::find(route_props.begin(), route_props.end(), slot) != route_props.end()) ++c.target;
  }
  state_.assignment_log.push_back(action);
  ++state_.t;
  return rec;
}

Report Env::finalize() const {
  if (!done()) throw std::logic_error("finalize before episode end");
  return score_assignment(*compiled_, state_.assignment_log);
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

Report score_assignment(const EnvModel& compiled_model,
                        const std::vector<int>& assignment_log) {
  const model::Instance& instance = compiled_model.instance();
  const std::size_t m = instance.parcels.size();
  if (assignment_log.size() != m)
    fail("assignment log covers " + std::to_string(assignment_log.size()) + " of " +
         std::to_string(m) + " parcels");

  std::vector<int> chosen_route(m);
  std::vector<long long> used(compiled_model.capacity_count(), 0);
  std::vector<PropCounter> counters(compiled_model.proportion_count());

  Report report;
  report.parcels_assigned = static_cast<long long>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const model::Parcel& p = instance.parcels[i];
    const int action = assignment_log[i];
    if (action < 0 || action >= static_cast<int>(p.candidates.size()))
      fail("parcel " + std::to_string(p.id) + ": logged action " + std::to_string(action) +
           " is out of range");
    const int rs = compiled_model.candidate_route(p.id, action);
    chosen_route[i] = rs;
    report.total_cost += p.candidates[action].cost;
    for (int slot : compiled_model.route_capacities(rs)) ++used[slot];
    const std::vector<int>& route_props = compiled_model.route_proportions(rs);
    for (int slot : compiled_model.parcel_proportions(p.id)) {
      ++counters[slot].seen;
      if (std::find(route_props.begin(), route_props.end(), slot) != route_props.end())
        ++counters[slot].target;
    }
  }
  report.average_cost = report.total_cost / static_cast<double>(m);

  std::vector<char> flagged(m, 0);

  // Capacity: the chronologically last overflow assignments are the violators.
  for (int slot = 0; slot < compiled_model.capacity_count(); ++slot) {
    const model::ConstraintSpec& k = compiled_model.capacity(slot);
    ConstraintOutcome outcome;
    outcome.id = k.id;
    outcome.kind = model::ConstraintKind::Capacity;
    outcome.value = static_cast<double>(used[slot]) / static_cast<double>(k.upper_bound);
    long long overflow = used[slot] - k.upper_bound;
    outcome.violating = std::max<long long>(overflow, 0);
    for (std::size_t i = m; i-- > 0 && overflow > 0;) {
      const std::vector<int>& caps = compiled_model.route_capacities(chosen_route[i]);
      if (std::find(caps.begin(), caps.end(), slot) != caps.end()) {
        flagged[i] = 1;
        --overflow;
      }
    }
    report.constraints.push_back(std::move(outcome));
  }

  // Proportion: when the final share p = target/seen leaves [pL, pU], the
  // violator count is the number of misdirected parcels, ceil(|p - bound| *
  // seen); over-share flags the last parcels routed to the provider,
  // under-share the last matching-OD parcels routed elsewhere.
  for (int slot = 0; slot < compiled_model.proportion_count(); ++slot) {
    const model::ConstraintSpec& k = compiled_model.proportion(slot);
    const PropCounter& c = counters[slot];
    ConstraintOutcome outcome;
    outcome.id = k.id;
    outcome.kind = model::ConstraintKind::Proportion;
    outcome.value =
        static_cast<double>(c.target) / static_cast<double>(std::max<long long>(c.seen, 1));
    const long long over = c.target - floor_guarded(k.p_upper * static_cast<double>(c.seen));
    const long long under = ceil_guarded(k.p_lower * static_cast<double>(c.seen)) - c.target;
    long long remaining = 0;
    bool flag_provider_matches = true;
    if (over > 0) {
      remaining = over;
      flag_provider_matches = true;
    } else if (under > 0) {
      remaining = under;
      flag_provider_matches = false;
    }
    outcome.violating = remaining;
    for (std::size_t i = m; i-- > 0 && remaining > 0;) {
      const std::vector<int>& parcel_props =
          compiled_model.parcel_proportions(instance.parcels[i].id);
      if (std::find(parcel_props.begin(), parcel_props.end(), slot) == parcel_props.end())
        continue;  // OD mismatch
      const std::vector<int>& route_props = compiled_model.route_proportions(chosen_route[i]);
      const bool provider_match =
          std::find(route_props.begin(), route_props.end(), slot) != route_props.end();
      if (provider_match == flag_provider_matches) {
        flagged[i] = 1;
        --remaining;
      }
    }
    report.constraints.push_back(std::move(outcome));
  }

  for (std::size_t i = 0; i < m; ++i)
    if (flagged[i]) report.violating_parcel_ids.push_back(instance.parcels[i].id);
  report.violating_parcels = static_cast<long long>(report.violating_parcel_ids.size());
  report.violation_rate = static_cast<double>(report.violating_parcels) / static_cast<double>(m);
  return report;
}

// ---------------------------------------------------------------------------
// Rollout log
//
// Line-oriented text:
//   opa-rollout v1
//   label <instance label>
//   policy <name>
//   seed <u64>
//   lambda_cap <real>
//   lambda_prop <real>
//   steps <count>
//   <t> <parcel_id> <route_id> <action> <cost> <reward> <n_terms> [<constraint_id> <f>]...
//   end
// ---------------------------------------------------------------------------

void write_rollout_log(std::ostream& out, const std::string& instance_label,
                       const std::string& policy, std::uint64_t seed,
                       const RewardWeights& weights,
                       const std::vector<StepRecord>& steps) {
  out << "opa-rollout v1\n";
  out << "label " << instance_label << "\n";
  out << "policy " << policy << "\n";
  out << "seed " << seed << "\n";
  out << "lambda_cap " << textio::format_double(weights.lambda_cap) << "\n";
  out << "lambda_prop " << textio::format_double(weights.lambda_prop) << "\n";
  out << "steps " << steps.size() << "\n";
  for (const StepRecord& rec : steps) {
    out << rec.t << ' ' << rec.parcel_id << ' ' << rec.route_id << ' ' << rec.action << ' '
        << textio::format_double(rec.cost) << ' ' << textio::format_double(rec.reward) << ' '
        << rec.shaping_terms.size();
    for (const auto& [id, f] : rec.shaping_terms)
      out << ' ' << id << ' ' << textio::format_double(f);
    out << "\n";
  }
  out << "end\n";
}

}  // namespace opa::env
