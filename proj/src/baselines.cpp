#include "opa/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "opa/textio.hpp"

namespace opa::baselines {
namespace {

constexpr double kProbSumTolerance = 1e-9;

[[noreturn]] void fail(const std::string& message) {
  throw std::runtime_error("baselines: " + message);
}

std::vector<std::string> sorted_signature(const model::Parcel& parcel) {
  std::vector<std::string> routes;
  routes.reserve(parcel.candidates.size());
  for (const auto& cand : parcel.candidates) routes.push_back(cand.route_id);
  std::sort(routes.begin(), routes.end());
  return routes;
}

// Position of a candidate's route inside the sorted signature.
int signature_slot(const std::vector<std::string>& routes, const std::string& route_id) {
  const auto it = std::lower_bound(routes.begin(), routes.end(), route_id);
  if (it == routes.end() || *it != route_id) {
    fail("route '" + route_id + "' is missing from its own type signature");
  }
  return static_cast<int>(it - routes.begin());
}

}  // namespace

int greedy_assign(const model::Parcel& parcel) {
  if (parcel.candidates.empty()) fail("greedy_assign: parcel has no candidates");
  int best = 0;
  for (int j = 1; j < static_cast<int>(parcel.candidates.size()); ++j) {
    const auto& cand = parcel.candidates[j];
    const auto& inc = parcel.candidates[best];
    if (cand.cost < inc.cost ||
        (cand.cost == inc.cost && cand.route_id < inc.route_id)) {
      best = j;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Proportion policy
// ---------------------------------------------------------------------------

std::string ProportionTable::type_key(const model::Parcel& parcel) {
  std::string key = parcel.origin;
  key += '\x1f';
  key += parcel.destination;
  for (const auto& route : sorted_signature(parcel)) {
    key += '\x1f';
    key += route;
  }
  return key;
}

bool ProportionTable::contains(const model::Parcel& parcel) const {
  return entries_.find(type_key(parcel)) != entries_.end();
}

std::vector<double> ProportionTable::probabilities(const model::Parcel& parcel) const {
  const int n = static_cast<int>(parcel.candidates.size());
  if (n == 0) fail("probabilities: parcel has no candidates");
  const auto it = entries_.find(type_key(parcel));
  if (it == entries_.end()) {
    return std::vector<double>(n, 1.0 / n);
  }
  const Entry& entry = it->second;
  std::vector<double> probs(n, 0.0);
  for (int j = 0; j < n; ++j) {
    probs[j] = entry.probs[signature_slot(entry.routes, parcel.candidates[j].route_id)];
  }
  return probs;
}

ProportionTable fit_proportions(const std::vector<model::Instance>& history,
                                const DaySolver& solver,
                                std::vector<std::string>* skipped) {
  if (history.empty()) fail("fit_proportions: history is empty");
  if (!solver) fail("fit_proportions: no day solver given");

  // Pool raw counts first, normalize once at the end.
  std::map<std::string, ProportionTable::Entry> counts;
  int solved_days = 0;
  for (const auto& day : history) {
    oracle::OfflineSolution solution;
    try {
      solution = solver(day);
    } catch (const std::exception&) {
      if (skipped != nullptr) skipped->push_back(day.label);
      continue;
    }
    if (solution.assignment.size() != day.parcels.size()) {
      if (skipped != nullptr) skipped->push_back(day.label);
      continue;
    }
    ++solved_days;
    for (std::size_t i = 0; i < day.parcels.size(); ++i) {
      const model::Parcel& parcel = day.parcels[i];
      auto [it, inserted] = counts.try_emplace(ProportionTable::type_key(parcel));
      ProportionTable::Entry& entry = it->second;
      if (inserted) {
        entry.routes = sorted_signature(parcel);
        entry.probs.assign(entry.routes.size(), 0.0);
      }
      const int action = solution.assignment[i];
      if (action < 0 || action >= static_cast<int>(parcel.candidates.size())) {
        fail("fit_proportions: day '" + day.label + "' assignment leaves candidate range");
      }
      entry.probs[signature_slot(entry.routes, parcel.candidates[action].route_id)] += 1.0;
    }
  }
  if (solved_days == 0) fail("fit_proportions: no history day could be solved");

  ProportionTable table;
  for (auto& [key, entry] : counts) {
    double total = 0.0;
    for (const double c : entry.probs) total += c;
    for (double& c : entry.probs) c /= total;
    table.entries_.emplace(key, std::move(entry));
  }
  return table;
}

int proportion_assign(const ProportionTable& table, const model::Parcel& parcel,
                      rng::Rng& rng) {
  return rng.sample_weighted(table.probabilities(parcel));
}

void write_proportions(const ProportionTable& table, std::ostream& out) {
  out << "opa-proportions v1\n";
  out << "types " << table.entries_.size() << "\n";
  for (const auto& [key, entry] : table.entries_) {
    const auto sep = key.find('\x1f');
    const auto sep2 = key.find('\x1f', sep + 1);
    out << "type " << key.substr(0, sep) << ' '
        << key.substr(sep + 1, sep2 - sep - 1) << ' ' << entry.routes.size();
    for (const auto& route : entry.routes) out << ' ' << route;
    for (const double p : entry.probs) out << ' ' << textio::format_double(p);
    out << "\n";
  }
  out << "end\n";
}

ProportionTable read_proportions(std::istream& in, const std::string& origin_name) {
  textio::LineReader reader(in, origin_name);
  if (reader.next_line() != "opa-proportions v1") {
    reader.error("expected header 'opa-proportions v1'");
  }

  auto header = textio::split_tokens(reader.next_line());
  if (header.size() != 2 || header[0] != "types") reader.error("expected 'types <count>'");
  const long long n_types = textio::parse_int(reader, header[1], "type count");
  if (n_types < 0) reader.error("type count must be nonnegative");

  ProportionTable table;
  for (long long i = 0; i < n_types; ++i) {
    auto tokens = textio::split_tokens(reader.next_line());
    if (tokens.size() < 4 || tokens[0] != "type") {
      reader.error("expected 'type <origin> <destination> <k> <routes...> <probs...>'");
    }
    const std::string& origin = tokens[1];
    const std::string& destination = tokens[2];
    const long long k = textio::parse_int(reader, tokens[3], "route count");
    if (k < 1) reader.error("type needs at least one route");
    if (static_cast<long long>(tokens.size()) != 4 + 2 * k) {
      reader.error("expected " + std::to_string(4 + 2 * k) + " tokens, got " +
                   std::to_string(tokens.size()));
    }

    ProportionTable::Entry entry;
    std::string key = origin;
    key += '\x1f';
    key += destination;
    for (long long j = 0; j < k; ++j) {
      const std::string& route = tokens[4 + j];
      if (j > 0 && !(entry.routes.back() < route)) {
        reader.error("route ids must be sorted and unique");
      }
      entry.routes.push_back(route);
      key += '\x1f';
      key += route;
    }
    double total = 0.0;
    for (long long j = 0; j < k; ++j) {
      const double p = textio::parse_real(reader, tokens[4 + k + j], "probability");
      if (p < 0.0) reader.error("probabilities must be nonnegative");
      entry.probs.push_back(p);
      total += p;
    }
    if (std::abs(total - 1.0) > kProbSumTolerance) {
      reader.error("probabilities must sum to 1");
    }
    if (!table.entries_.emplace(std::move(key), std::move(entry)).second) {
      reader.error("duplicate type");
    }
  }
  if (reader.next_line() != "end") reader.error("expected trailing 'end'");
  return table;
}

void save_proportions(const ProportionTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot open '" + path + "' for writing");
  write_proportions(table, out);
  out.flush();
  if (!out) fail("failed writing '" + path + "'");
}

ProportionTable load_proportions(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '" + path + "'");
  return read_proportions(in, path);
}

// ---------------------------------------------------------------------------
// PDO
// ---------------------------------------------------------------------------

DualPrices make_duals(const env::EnvModel& compiled, double eta_override) {
  DualPrices duals;
  duals.cap_upper.assign(compiled.capacity_count(), 0.0);
  duals.prop_upper.assign(compiled.proportion_count(), 0.0);
  duals.prop_lower.assign(compiled.proportion_count(), 0.0);
  duals.m = compiled.parcel_count();
  if (eta_override > 0.0) {
    duals.eta = eta_override;
  } else {
    double total_cost = 0.0;
    long long n_cands = 0;
    for (const auto& parcel : compiled.instance().parcels) {
      for (const auto& cand : parcel.candidates) {
        total_cost += cand.cost;
        ++n_cands;
      }
    }
    const double mean_cost = total_cost / static_cast<double>(n_cands);
    duals.eta = mean_cost > 0.0
                    ? 1.0 / (mean_cost * static_cast<double>(duals.m))
                    : 1.0;
  }
  return duals;
}

int pdo_assign(const DualPrices& duals, const env::EnvModel& compiled, int parcel_id) {
  const model::Parcel& parcel = compiled.instance().parcels.at(parcel_id);
  int best = -1;
  double best_reduced = 0.0;
  for (int j = 0; j < static_cast<int>(parcel.candidates.size()); ++j) {
    const int rs = compiled.candidate_route(parcel_id, j);
    double reduced = parcel.candidates[j].cost;
    for (const int k : compiled.route_capacities(rs)) reduced += duals.cap_upper[k];
    for (const int k : compiled.route_proportions(rs)) {
      reduced += duals.prop_upper[k] - duals.prop_lower[k];
    }
    if (best < 0) {
      best = j;
      best_reduced = reduced;
      continue;
    }
    const auto& cand = parcel.candidates[j];
    const auto& inc = parcel.candidates[best];
    if (reduced < best_reduced ||
        (reduced == best_reduced &&
         (cand.cost < inc.cost ||
          (cand.cost == inc.cost && cand.route_id < inc.route_id)))) {
      best = j;
      best_reduced = reduced;
    }
  }
  if (best < 0) fail("pdo_assign: parcel has no candidates");
  return best;
}

void pdo_update(DualPrices& duals, const env::EnvModel& compiled,
                const env::EnvState& state) {
  if (duals.m <= 0) fail("pdo_update: day volume m must be positive");
  const double progress =
      static_cast<double>(state.t) / static_cast<double>(duals.m);
  for (int k = 0; k < compiled.capacity_count(); ++k) {
    const double target =
        static_cast<double>(compiled.capacity(k).upper_bound) * progress;
    const double g = static_cast<double>(state.hub_used[k]) - target;
    duals.cap_upper[k] = std::max(0.0, duals.cap_upper[k] + duals.eta * g);
  }
  for (int k = 0; k < compiled.proportion_count(); ++k) {
    const model::ConstraintSpec& spec = compiled.proportion(k);
    const auto& counter = state.prop_counters[k];
    const auto seen = static_cast<double>(counter.seen);
    const auto used = static_cast<double>(counter.target);
    const double g_upper = used - spec.p_upper * seen;
    const double g_lower = spec.p_lower * seen - used;
    duals.prop_upper[k] = std::max(0.0, duals.prop_upper[k] + duals.eta * g_upper);
    duals.prop_lower[k] = std::max(0.0, duals.prop_lower[k] + duals.eta * g_lower);
  }
}

}  // namespace opa::baselines
