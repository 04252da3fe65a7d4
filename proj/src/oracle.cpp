#include "opa/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "opa/env.hpp"
#include "opa/rounding.hpp"
#include "opa/textio.hpp"

namespace opa::oracle {
namespace {

using model::Instance;
using rounding::ceil_guarded;
using rounding::floor_guarded;

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error(what); }

// Constraint incidence of every (parcel, candidate) pair, with proportion
// bands already converted to integer bounds on the provider's parcel count
// (the band denominators n_k are known offline). Slot index vectors are
// borrowed from the compiled model and must not outlive it.
struct Incidence {
  int m = 0;
  int kc = 0;  // capacity slots
  int kp = 0;  // proportion slots
  std::vector<int> ncand;
  std::vector<std::vector<double>> cost;                     // [parcel][cand]
  std::vector<std::vector<const std::vector<int>*>> caps;    // capacity slots touched
  std::vector<std::vector<const std::vector<int>*>> props;   // proportion slots touched
  std::vector<const std::vector<int>*> parcel_props;         // OD-matching proportion slots
  std::vector<long long> cap_upper;                          // per capacity slot
  std::vector<long long> prop_lo, prop_hi;                   // integer share bounds
  double mean_cost = 1.0;
};

Incidence build_incidence(const env::EnvModel& compiled) {
  Incidence inc;
  inc.m = static_cast<int>(compiled.parcel_count());
  inc.kc = compiled.capacity_count();
  inc.kp = compiled.proportion_count();
  const auto& parcels = compiled.instance().parcels;

  inc.ncand.resize(inc.m);
  inc.cost.resize(inc.m);
  inc.caps.resize(inc.m);
  inc.props.resize(inc.m);
  inc.parcel_props.resize(inc.m);
  double total_cost = 0.0;
  long long total_cands = 0;
  std::vector<long long> n_od(inc.kp, 0);
  for (int i = 0; i < inc.m; ++i) {
    const model::Parcel& p = parcels[i];
    inc.ncand[i] = static_cast<int>(p.candidates.size());
    inc.parcel_props[i] = &compiled.parcel_proportions(i);
    for (int k : *inc.parcel_props[i]) ++n_od[k];
    for (int j = 0; j < inc.ncand[i]; ++j) {
      const int slot = compiled.candidate_route(i, j);
      inc.cost[i].push_back(p.candidates[j].cost);
      inc.caps[i].push_back(&compiled.route_capacities(slot));
      inc.props[i].push_back(&compiled.route_proportions(slot));
      total_cost += p.candidates[j].cost;
      ++total_cands;
    }
  }
  inc.mean_cost = total_cands > 0 ? total_cost / static_cast<double>(total_cands) : 1.0;

  for (int k = 0; k < inc.kc; ++k) inc.cap_upper.push_back(compiled.capacity(k).upper_bound);
  for (int k = 0; k < inc.kp; ++k) {
    const model::ConstraintSpec& spec = compiled.proportion(k);
    const double n = static_cast<double>(n_od[k]);
    inc.prop_lo.push_back(ceil_guarded(spec.p_lower * n));
    inc.prop_hi.push_back(floor_guarded(spec.p_upper * n));
  }
  return inc;
}

double assignment_cost(const Incidence& inc, const std::vector<int>& x) {
  double total = 0.0;
  for (int i = 0; i < inc.m; ++i) total += inc.cost[i][x[i]];
  return total;
}

// Running constraint counts for one assignment.
struct Counts {
  std::vector<long long> cap;     // parcels through each capacity slot
  std::vector<long long> target;  // provider-matching parcels per proportion slot

  explicit Counts(const Incidence& inc) : cap(inc.kc, 0), target(inc.kp, 0) {}

  void add(const Incidence& inc, int i, int j, long long delta) {
    for (int k : *inc.caps[i][j]) cap[k] += delta;
    for (int k : *inc.props[i][j]) target[k] += delta;
  }

  long long excess(const Incidence& inc) const {
    long long total = 0;
    for (int k = 0; k < inc.kc; ++k) total += std::max(0LL, cap[k] - inc.cap_upper[k]);
    for (int k = 0; k < inc.kp; ++k) {
      total += std::max(0LL, target[k] - inc.prop_hi[k]);
      total += std::max(0LL, inc.prop_lo[k] - target[k]);
    }
    return total;
  }
};

Counts counts_of(const Incidence& inc, const std::vector<int>& x) {
  Counts c(inc);
  for (int i = 0; i < inc.m; ++i) c.add(inc, i, x[i], +1);
  return c;
}

// ---------------------------------------------------------------------------
// Exact search
// ---------------------------------------------------------------------------

struct ExactSearch {
  const Incidence& inc;
  Counts counts;
  std::vector<double> suffix_min;                      // cheapest completion from parcel i on
  std::vector<std::vector<long long>> suffix_reach;    // [prop][i]: parcels >= i able to hit it
  std::vector<int> current, best_x;
  double cur = 0.0;
  double best = kInf;

  explicit ExactSearch(const Incidence& i)
      : inc(i), counts(i), suffix_min(i.m + 1, 0.0), current(i.m, -1) {
    for (int p = inc.m - 1; p >= 0; --p) {
      double lo = kInf;
      for (double c : inc.cost[p]) lo = std::min(lo, c);
      suffix_min[p] = suffix_min[p + 1] + lo;
    }
    suffix_reach.assign(inc.kp, std::vector<long long>(inc.m + 1, 0));
    for (int k = 0; k < inc.kp; ++k)
      for (int p = inc.m - 1; p >= 0; --p) {
        bool can = false;
        for (int j = 0; j < inc.ncand[p] && !can; ++j)
          can = std::find(inc.props[p][j]->begin(), inc.props[p][j]->end(), k) !=
                inc.props[p][j]->end();
        suffix_reach[k][p] = suffix_reach[k][p + 1] + (can ? 1 : 0);
      }
  }

  bool root_feasible() const {
    for (int k = 0; k < inc.kp; ++k) {
      if (inc.prop_lo[k] > inc.prop_hi[k]) return false;
      if (suffix_reach[k][0] < inc.prop_lo[k]) return false;
    }
    return true;
  }

  void dfs(int i) {
    if (i == inc.m) {
      // The cost prune admits only strictly better leaves, so the first
      // optimum found — the lexicographically smallest — is never replaced
      // by an equal-cost assignment.
      best = cur;
      best_x = current;
      return;
    }
    for (int j = 0; j < inc.ncand[i]; ++j) {
      if (cur + inc.cost[i][j] + suffix_min[i + 1] >= best) continue;
      bool ok = true;
      for (int k : *inc.caps[i][j])
        if (counts.cap[k] + 1 > inc.cap_upper[k]) {
          ok = false;
          break;
        }
      if (!ok) continue;
      for (int k : *inc.props[i][j])
        if (counts.target[k] + 1 > inc.prop_hi[k]) {
          ok = false;
          break;
        }
      if (!ok) continue;
      counts.add(inc, i, j, +1);
      for (int k = 0; k < inc.kp && ok; ++k)
        if (counts.target[k] + suffix_reach[k][i + 1] < inc.prop_lo[k]) ok = false;
      if (ok) {
        cur += inc.cost[i][j];
        current[i] = j;
        dfs(i + 1);
        cur -= inc.cost[i][j];
        current[i] = -1;
      }
      counts.add(inc, i, j, -1);
    }
  }
};

// ---------------------------------------------------------------------------
// Greedy repair for solve_bound iterates
// ---------------------------------------------------------------------------

// Change in total violation if parcel i moves from its current candidate to
// j_new. Only the touched slots are rescored.
long long move_delta(const Incidence& inc, const Counts& counts, int i, int j_old, int j_new) {
  long long delta = 0;
  auto cap_excess = [&](int k, long long c) { return std::max(0LL, c - inc.cap_upper[k]); };
  auto prop_excess = [&](int k, long long t) {
    return std::max(0LL, t - inc.prop_hi[k]) + std::max(0LL, inc.prop_lo[k] - t);
  };
  auto shift = [](const std::vector<int>& minus, const std::vector<int>& plus, int k) {
    long long d = 0;
    for (int s : minus)
      if (s == k) --d;
    for (int s : plus)
      if (s == k) ++d;
    return d;
  };
  auto visit = [&](const std::vector<int>& slots, bool is_cap, bool second_pass) {
    for (int k : slots) {
      if (second_pass) {
        // Slots already scored in the removal pass must not be double counted.
        const auto& old_slots = is_cap ? *inc.caps[i][j_old] : *inc.props[i][j_old];
        if (std::find(old_slots.begin(), old_slots.end(), k) != old_slots.end()) continue;
      }
      const auto& minus = is_cap ? *inc.caps[i][j_old] : *inc.props[i][j_old];
      const auto& plus = is_cap ? *inc.caps[i][j_new] : *inc.props[i][j_new];
      const long long d = shift(minus, plus, k);
      if (d == 0) continue;
      if (is_cap)
        delta += cap_excess(k, counts.cap[k] + d) - cap_excess(k, counts.cap[k]);
      else
        delta += prop_excess(k, counts.target[k] + d) - prop_excess(k, counts.target[k]);
    }
  };
  visit(*inc.caps[i][j_old], true, false);
  visit(*inc.caps[i][j_new], true, true);
  visit(*inc.props[i][j_old], false, false);
  visit(*inc.props[i][j_new], false, true);
  return delta;
}

// Cheapest alternative for parcel i that strictly reduces total violation.
// Returns (candidate, cost delta) or candidate -1.
std::pair<int, double> cheapest_fixing_move(const Incidence& inc, const Counts& counts,
                                            const std::vector<int>& x, int i) {
  int best_j = -1;
  double best_delta = kInf;
  for (int j = 0; j < inc.ncand[i]; ++j) {
    if (j == x[i]) continue;
    if (move_delta(inc, counts, i, x[i], j) >= 0) continue;
    const double delta = inc.cost[i][j] - inc.cost[i][x[i]];
    if (delta < best_delta) {
      best_delta = delta;
      best_j = j;
    }
  }
  return {best_j, best_delta};
}

bool contains(const std::vector<int>& slots, int k) {
  return std::find(slots.begin(), slots.end(), k) != slots.end();
}

// Drains one violated constraint: collects the parcels able to relieve it,
// orders them by the cost of their cheapest violation-reducing move, and
// applies moves (re-verified against the current counts) until the
// constraint holds or no move helps. Every applied move strictly reduces the
// total violation, so repair terminates.
void drain_constraint(const Incidence& inc, Counts& counts, std::vector<int>& x, bool is_cap,
                      int k, bool under) {
  auto violated = [&] {
    if (is_cap) return counts.cap[k] > inc.cap_upper[k];
    return under ? counts.target[k] < inc.prop_lo[k] : counts.target[k] > inc.prop_hi[k];
  };
  if (!violated()) return;

  std::vector<int> movers;
  for (int i = 0; i < inc.m; ++i) {
    if (is_cap) {
      if (contains(*inc.caps[i][x[i]], k)) movers.push_back(i);
    } else if (!under) {
      if (contains(*inc.props[i][x[i]], k)) movers.push_back(i);
    } else if (!contains(*inc.props[i][x[i]], k) && contains(*inc.parcel_props[i], k)) {
      for (int j = 0; j < inc.ncand[i]; ++j)
        if (contains(*inc.props[i][j], k)) {
          movers.push_back(i);
          break;
        }
    }
  }

  struct Move {
    double delta;
    int parcel;
  };
  std::vector<Move> queue;
  for (int i : movers) {
    const auto [j, delta] = cheapest_fixing_move(inc, counts, x, i);
    if (j >= 0) queue.push_back({delta, i});
  }
  std::sort(queue.begin(), queue.end(), [](const Move& a, const Move& b) {
    if (a.delta != b.delta) return a.delta < b.delta;
    return a.parcel < b.parcel;
  });

  std::size_t next = 0;
  while (violated() && next < queue.size()) {
    const int i = queue[next++].parcel;
    // Counts have shifted since the queue was built; re-verify the move.
    const auto [j, delta] = cheapest_fixing_move(inc, counts, x, i);
    if (j < 0) continue;
    counts.add(inc, i, x[i], -1);
    counts.add(inc, i, j, +1);
    x[i] = j;
  }
}

// Greedy repair: sweep the violated constraints, moving parcels to their
// cheapest violation-reducing alternatives, until feasible or a full sweep
// makes no progress.
bool repair(const Incidence& inc, std::vector<int>& x) {
  Counts counts = counts_of(inc, x);
  long long excess = counts.excess(inc);
  while (excess > 0) {
    for (int k = 0; k < inc.kc; ++k) drain_constraint(inc, counts, x, true, k, false);
    for (int k = 0; k < inc.kp; ++k) {
      drain_constraint(inc, counts, x, false, k, false);
      drain_constraint(inc, counts, x, false, k, true);
    }
    const long long now = counts.excess(inc);
    if (now >= excess) return false;
    excess = now;
  }
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

OfflineSolution solve_exact(const Instance& instance, long long budget) {
  const env::EnvModel compiled(instance);
  const Incidence inc = build_incidence(compiled);

  OfflineSolution out;
  if (instance.constraints.empty()) {
    // Without coupling constraints the problem separates per parcel.
    out.assignment.resize(inc.m);
    double total = 0.0;
    for (int i = 0; i < inc.m; ++i) {
      int arg = 0;
      for (int j = 1; j < inc.ncand[i]; ++j)
        if (inc.cost[i][j] < inc.cost[i][arg]) arg = j;
      out.assignment[i] = arg;
      total += inc.cost[i][arg];
    }
    out.objective = out.bound = total;
    out.feasible = true;
    return out;
  }

  long long space = 1;
  for (int i = 0; i < inc.m; ++i) {
    if (space > budget / std::max(1, inc.ncand[i])) {
      space = budget + 1;
      break;
    }
    space *= inc.ncand[i];
  }
  if (space > budget)
    throw BudgetExceeded("solve_exact: search space exceeds budget of " +
                         std::to_string(budget) + " combinations");

  ExactSearch search(inc);
  if (search.root_feasible()) search.dfs(0);
  if (search.best_x.empty()) return out;  // infeasible: defaults say it all
  out.assignment = std::move(search.best_x);
  out.objective = assignment_cost(inc, out.assignment);
  out.bound = out.objective;
  out.feasible = true;
  return out;
}

OfflineSolution solve_bound(const Instance& instance, int iterations) {
  if (iterations < 1) fail("solve_bound: iterations must be >= 1");
  const env::EnvModel compiled(instance);
  const Incidence inc = build_incidence(compiled);

  std::vector<double> lam(inc.kc, 0.0), mu_hi(inc.kp, 0.0), mu_lo(inc.kp, 0.0);
  double best_bound = -kInf;
  std::vector<int> dual_x;  // iterate at the best dual value
  double best_primal = kInf;
  std::vector<int> primal_x;

  std::vector<int> x(inc.m, 0);
  for (int s = 1; s <= iterations; ++s) {
    // The relaxed problem separates: per-parcel argmin of reduced cost.
    double dual = 0.0;
    Counts counts(inc);
    for (int i = 0; i < inc.m; ++i) {
      int arg = -1;
      double best_rc = kInf;
      for (int j = 0; j < inc.ncand[i]; ++j) {
        double rc = inc.cost[i][j];
        for (int k : *inc.caps[i][j]) rc += lam[k];
        for (int k : *inc.props[i][j]) rc += mu_hi[k] - mu_lo[k];
        if (rc < best_rc) {
          best_rc = rc;
          arg = j;
        }
      }
      x[i] = arg;
      dual += best_rc;
      counts.add(inc, i, arg, +1);
    }
    for (int k = 0; k < inc.kc; ++k) dual -= lam[k] * static_cast<double>(inc.cap_upper[k]);
    for (int k = 0; k < inc.kp; ++k)
      dual += -mu_hi[k] * static_cast<double>(inc.prop_hi[k]) +
              mu_lo[k] * static_cast<double>(inc.prop_lo[k]);
    if (dual > best_bound) {
      best_bound = dual;
      dual_x = x;
    }

    // Repair is the expensive half of an iteration; sampling iterates (plus
    // the first and last) trades a little incumbent quality for speed.
    if (s == 1 || s == iterations || s % 5 == 0) {
      std::vector<int> repaired = x;
      if (repair(inc, repaired)) {
        const double cost = assignment_cost(inc, repaired);
        if (cost < best_primal) {
          best_primal = cost;
          primal_x = std::move(repaired);
        }
      }
    }

    // Projected subgradient step on all multipliers at once.
    double norm_sq = 0.0;
    std::vector<double> g_lam(inc.kc), g_hi(inc.kp), g_lo(inc.kp);
    for (int k = 0; k < inc.kc; ++k) {
      g_lam[k] = static_cast<double>(counts.cap[k] - inc.cap_upper[k]);
      norm_sq += g_lam[k] * g_lam[k];
    }
    for (int k = 0; k < inc.kp; ++k) {
      g_hi[k] = static_cast<double>(counts.target[k] - inc.prop_hi[k]);
      g_lo[k] = static_cast<double>(inc.prop_lo[k] - counts.target[k]);
      norm_sq += g_hi[k] * g_hi[k] + g_lo[k] * g_lo[k];
    }
    if (norm_sq == 0.0) break;  // relaxed minimizer satisfies every bound exactly
    const double step = inc.mean_cost / (std::sqrt(static_cast<double>(s)) * std::sqrt(norm_sq));
    for (int k = 0; k < inc.kc; ++k) lam[k] = std::max(0.0, lam[k] + step * g_lam[k]);
    for (int k = 0; k < inc.kp; ++k) {
      mu_hi[k] = std::max(0.0, mu_hi[k] + step * g_hi[k]);
      mu_lo[k] = std::max(0.0, mu_lo[k] + step * g_lo[k]);
    }
  }

  OfflineSolution out;
  out.bound = best_bound;
  if (!primal_x.empty()) {
    out.assignment = std::move(primal_x);
    out.objective = best_primal;
    out.feasible = true;
  } else {
    out.assignment = std::move(dual_x);
    out.objective = assignment_cost(inc, out.assignment);
    out.feasible = false;
  }
  return out;
}

FeasibilityReport check_feasible(const Instance& instance, const std::vector<int>& assignment) {
  const env::EnvModel compiled(instance);
  const Incidence inc = build_incidence(compiled);
  if (static_cast<int>(assignment.size()) != inc.m)
    fail("check_feasible: assignment covers " + std::to_string(assignment.size()) + " of " +
         std::to_string(inc.m) + " parcels");
  for (int i = 0; i < inc.m; ++i)
    if (assignment[i] < 0 || assignment[i] >= inc.ncand[i])
      fail("check_feasible: parcel " + std::to_string(i) + " has no candidate " +
           std::to_string(assignment[i]));

  const Counts counts = counts_of(inc, assignment);
  FeasibilityReport report;
  int cap_slot = 0, prop_slot = 0;
  for (const model::ConstraintSpec& k : instance.constraints) {
    bool violated;
    if (k.kind == model::ConstraintKind::Capacity) {
      violated = counts.cap[cap_slot] > inc.cap_upper[cap_slot];
      ++cap_slot;
    } else {
      violated = counts.target[prop_slot] > inc.prop_hi[prop_slot] ||
                 counts.target[prop_slot] < inc.prop_lo[prop_slot];
      ++prop_slot;
    }
    if (violated) report.violated_ids.push_back(k.id);
  }
  report.feasible = report.violated_ids.empty();
  return report;
}

double ip_gap(double policy_average_cost, const OfflineSolution& reference) {
  if (reference.assignment.empty()) fail("ip_gap: reference has no assignment");
  const double ref_average =
      reference.bound / static_cast<double>(reference.assignment.size());
  if (!std::isfinite(ref_average) || ref_average <= 0.0)
    fail("ip_gap: reference average cost must be positive and finite");
  return (policy_average_cost - ref_average) / ref_average;
}

double solution_cost(const Instance& instance, const std::vector<int>& assignment) {
  if (assignment.size() != instance.parcels.size())
    fail("solution_cost: assignment covers " + std::to_string(assignment.size()) + " of " +
         std::to_string(instance.parcels.size()) + " parcels");
  double total = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const auto& cands = instance.parcels[i].candidates;
    if (assignment[i] < 0 || assignment[i] >= static_cast<int>(cands.size()))
      fail("solution_cost: parcel " + std::to_string(i) + " has no candidate " +
           std::to_string(assignment[i]));
    total += cands[assignment[i]].cost;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Solution files
//
//   opa-solution v1
//   label <instance label>
//   feasible 0|1
//   objective <value or 'none'>
//   bound <value or 'none'>
//   parcels <count>
//   assign <parcel_id> <route_id>   (one line per parcel)
//   end
// ---------------------------------------------------------------------------

void write_solution(const OfflineSolution& solution, const Instance& instance,
                    std::ostream& out) {
  using textio::format_double;
  out << "opa-solution v1\n";
  out << "label " << instance.label << "\n";
  out << "feasible " << (solution.feasible ? 1 : 0) << "\n";
  out << "objective "
      << (std::isfinite(solution.objective) ? format_double(solution.objective) : "none") << "\n";
  out << "bound " << (std::isfinite(solution.bound) ? format_double(solution.bound) : "none")
      << "\n";
  out << "parcels " << solution.assignment.size() << "\n";
  for (std::size_t i = 0; i < solution.assignment.size(); ++i) {
    const auto& cands = instance.parcels[i].candidates;
    const int j = solution.assignment[i];
    if (j < 0 || j >= static_cast<int>(cands.size()))
      fail("write_solution: parcel " + std::to_string(i) + " has no candidate " +
           std::to_string(j));
    out << "assign " << instance.parcels[i].id << " " << cands[j].route_id << "\n";
  }
  out << "end\n";
}

OfflineSolution read_solution(std::istream& in, const Instance& instance,
                              const std::string& origin_name) {
  using textio::parse_int;
  using textio::parse_real;
  using textio::split_tokens;
  textio::LineReader reader(in, origin_name);
  if (reader.next_line() != "opa-solution v1") reader.error("expected header 'opa-solution v1'");

  auto keyed = [&](const char* key, std::size_t n_values) {
    const std::string line = reader.next_line();
    const std::vector<std::string> toks = split_tokens(line);
    if (toks[0] != key) reader.error(std::string("expected '") + key + "'");
    if (toks.size() != n_values + 1)
      reader.error(std::string("'") + key + "' expects " + std::to_string(n_values) +
                   " value(s)");
    return toks;
  };

  OfflineSolution solution;
  keyed("label", 1);  // informational; the instance is authoritative
  const std::string feasible_tok = keyed("feasible", 1)[1];
  if (feasible_tok != "0" && feasible_tok != "1") reader.error("feasible must be 0 or 1");
  solution.feasible = feasible_tok == "1";
  const std::string objective_tok = keyed("objective", 1)[1];
  solution.objective = objective_tok == "none" ? kInf : parse_real(reader, objective_tok, "objective");
  const std::string bound_tok = keyed("bound", 1)[1];
  solution.bound = bound_tok == "none" ? kInf : parse_real(reader, bound_tok, "bound");
  const long long parcels = parse_int(reader, keyed("parcels", 1)[1], "parcels");
  if (parcels != 0 && parcels != static_cast<long long>(instance.parcels.size()))
    reader.error("parcels " + std::to_string(parcels) + " does not match instance with " +
                 std::to_string(instance.parcels.size()));
  for (long long i = 0; i < parcels; ++i) {
    const std::vector<std::string> toks = keyed("assign", 2);
    if (parse_int(reader, toks[1], "parcel id") != i)
      reader.error("assign lines must appear in parcel id order");
    const auto& cands = instance.parcels[i].candidates;
    int candidate = -1;
    for (std::size_t j = 0; j < cands.size(); ++j)
      if (cands[j].route_id == toks[2]) {
        candidate = static_cast<int>(j);
        break;
      }
    if (candidate < 0)
      reader.error("route '" + toks[2] + "' is not a candidate of parcel " + std::to_string(i));
    solution.assignment.push_back(candidate);
  }
  if (reader.next_line() != "end") reader.error("expected trailing 'end'");
  return solution;
}

void save_solution(const OfflineSolution& solution, const Instance& instance,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot open solution file for writing: " + path);
  write_solution(solution, instance, out);
  out.flush();
  if (!out) fail("failed writing solution file: " + path);
}

OfflineSolution load_solution(const std::string& path, const Instance& instance) {
  std::ifstream in(path);
  if (!in) fail("cannot open solution file: " + path);
  return read_solution(in, instance, path);
}

}  // namespace opa::oracle
