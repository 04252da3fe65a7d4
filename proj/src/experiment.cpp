#include "opa/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

#include "opa/rng.hpp"
#include "opa/textio.hpp"

namespace opa::experiment {
namespace {

namespace fs = std::filesystem;

// Stream tags for rng::Rng::derive: per-seed world generation, per-policy
// training seeds, and per-(day, policy) rollout seeds.
constexpr std::uint64_t kStreamWorld = 1;
constexpr std::uint64_t kStreamTrain = 2;
constexpr std::uint64_t kStreamRollout = 3;

constexpr const char* kReportCsvHeader = "algorithm,average_cost,ip_gap,violation_rate";
constexpr const char* kSummaryCsvHeader = "seed,day,algorithm,average_cost,ip_gap,violation_rate";
constexpr const char* kMetricsCsvHeader =
    "episode,mean_shaped_return,average_cost,violation_rate,reward_mse";

[[noreturn]] void fail_config(const std::string& what) { throw ConfigError("experiment: " + what); }

void note(std::ostream* progress, const std::string& line) {
  if (progress != nullptr) *progress << line << '\n' << std::flush;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string lpad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string rpad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string read_file(const std::string& path, const char* what) {
  if (!fs::exists(path))
    throw MissingFile(std::string("experiment: missing ") + what + " file: " + path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("experiment: cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("experiment: cannot write file: " + path);
  out << content;
  out.close();
  if (!out) throw std::runtime_error("experiment: cannot write file: " + path);
}

std::uint64_t parse_u64(const textio::LineReader& reader, const std::string& tok,
                        const char* what) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    reader.error(std::string("expected unsigned integer for ") + what + ", got '" + tok + "'");
  return value;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> pieces;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      pieces.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  pieces.push_back(cur);
  return pieces;
}

// Rest-of-line value for keys whose value may contain spaces (paths, labels).
std::string line_value(const textio::LineReader& reader, const std::string& line,
                       const std::string& key) {
  if (line.size() <= key.size() + 1) reader.error("'" + key + "' expects a value");
  std::string v = line.substr(key.size() + 1);
  while (!v.empty() && std::isspace(static_cast<unsigned char>(v.front()))) v.erase(v.begin());
  while (!v.empty() && std::isspace(static_cast<unsigned char>(v.back()))) v.pop_back();
  if (v.empty()) reader.error("'" + key + "' expects a value");
  return v;
}

bool has_policy(const ExperimentConfig& config, Policy policy) {
  return std::find(config.policies.begin(), config.policies.end(), policy) !=
         config.policies.end();
}

}  // namespace

// ---------------------------------------------------------------------------
// Selectors
// ---------------------------------------------------------------------------

std::string policy_name(Policy policy) {
  switch (policy) {
    case Policy::Greedy: return "greedy";
    case Policy::Proportion: return "proportion";
    case Policy::Pdo: return "pdo";
    case Policy::PpoOpa: return "ppo-opa";
    case Policy::PpoPd: return "ppo-pd";
  }
  throw std::logic_error("experiment: invalid policy value");
}

Policy parse_policy(const std::string& name) {
  for (Policy p : kAllPolicies)
    if (policy_name(p) == name) return p;
  fail_config("unknown policy '" + name +
              "' (expected greedy, proportion, pdo, ppo-opa or ppo-pd)");
}

std::string tier_name(OracleTier tier) {
  return tier == OracleTier::Exact ? "exact" : "bound";
}

OracleTier parse_tier(const std::string& name) {
  if (name == "exact") return OracleTier::Exact;
  if (name == "bound") return OracleTier::Bound;
  fail_config("unknown oracle tier '" + name + "' (expected exact or bound)");
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void validate(const ExperimentConfig& config) {
  if (config.policies.empty()) fail_config("at least one policy is required");
  for (std::size_t i = 0; i < config.policies.size(); ++i)
    for (std::size_t j = i + 1; j < config.policies.size(); ++j)
      if (config.policies[i] == config.policies[j])
        fail_config("duplicate policy '" + policy_name(config.policies[i]) + "'");
  if (config.seeds.empty()) fail_config("at least one seed is required");
  for (std::size_t i = 0; i < config.seeds.size(); ++i)
    for (std::size_t j = i + 1; j < config.seeds.size(); ++j)
      if (config.seeds[i] == config.seeds[j])
        fail_config("duplicate seed " + std::to_string(config.seeds[i]));
  if (config.bound_iterations < 1) fail_config("bound_iterations must be >= 1");
  if (config.exact_budget < 1) fail_config("exact_budget must be >= 1");
  if (config.eval_workers < 0) fail_config("eval_workers must be >= 0");

  const bool wants_prop = has_policy(config, Policy::Proportion);
  const bool wants_ppo = has_policy(config, Policy::PpoOpa) || has_policy(config, Policy::PpoPd);
  if (config.file_mode()) {
    if (config.eval_instances.empty()) fail_config("file mode requires at least one eval_instance");
    if (wants_ppo && config.train_instance.empty())
      fail_config("policies ppo-opa/ppo-pd require a train_instance");
    if (wants_prop && config.history_instances.empty())
      fail_config("policy proportion requires at least one history_instance");
    if (!config.train_instance.empty()) {
      const fs::path train = fs::path(config.train_instance).lexically_normal();
      for (const std::string& e : config.eval_instances)
        if (fs::path(e).lexically_normal() == train)
          fail_config("training day '" + e + "' appears among the evaluation days");
    }
  } else {
    if (config.eval_days < 1) fail_config("eval_days must be >= 1");
    if (config.history_days < 0) fail_config("history_days must be >= 0");
    if (wants_prop && config.history_days < 1)
      fail_config("policy proportion requires history_days >= 1");
    try {
      datagen::validate(config.gen);
    } catch (const std::exception& e) {
      fail_config(e.what());
    }
  }
  try {
    ppo::validate(config.train);
  } catch (const std::exception& e) {
    fail_config(e.what());
  }
}

// ---------------------------------------------------------------------------
// Config text format
//
//   opa-experiment v1
//   history_days 4            (generator mode)
//   eval_days 3               (generator mode)
//   train_instance <path>     (file mode)
//   eval_instance <path>      (file mode; repeatable)
//   history_instance <path>   (file mode; repeatable)
//   policies greedy,proportion,pdo,ppo-opa,ppo-pd
//   oracle_tier bound
//   bound_iterations 400
//   exact_budget 1000000
//   exact_fallback 1
//   seeds 1,2,3,4,5
//   argmax 0
//   eval_workers 0
//   gen                       (or: gen_config <path>)
//   <embedded opa-genconfig v1 document>
//   train                     (or: train_config <path>)
//   <embedded opa-trainconfig v1 document>
//   end
//
// Every key is optional and defaults to the ExperimentConfig initializer.
// Relative paths resolve against the config file's directory. The embedded
// generator template is ignored (but allowed) in file mode.
// ---------------------------------------------------------------------------

void write_experiment_config(const ExperimentConfig& config, std::ostream& out) {
  out << "opa-experiment v1\n";
  if (config.file_mode()) {
    if (!config.train_instance.empty()) out << "train_instance " << config.train_instance << "\n";
    for (const std::string& p : config.eval_instances) out << "eval_instance " << p << "\n";
    for (const std::string& p : config.history_instances) out << "history_instance " << p << "\n";
  } else {
    out << "history_days " << config.history_days << "\n";
    out << "eval_days " << config.eval_days << "\n";
  }
  out << "policies ";
  for (std::size_t i = 0; i < config.policies.size(); ++i)
    out << (i > 0 ? "," : "") << policy_name(config.policies[i]);
  out << "\n";
  out << "oracle_tier " << tier_name(config.tier) << "\n";
  out << "bound_iterations " << config.bound_iterations << "\n";
  out << "exact_budget " << config.exact_budget << "\n";
  out << "exact_fallback " << (config.exact_fallback ? 1 : 0) << "\n";
  out << "seeds ";
  for (std::size_t i = 0; i < config.seeds.size(); ++i)
    out << (i > 0 ? "," : "") << config.seeds[i];
  out << "\n";
  out << "argmax " << (config.argmax ? 1 : 0) << "\n";
  out << "eval_workers " << config.eval_workers << "\n";
  out << "gen\n";
  datagen::write_gen_config(config.gen, out);
  out << "train\n";
  ppo::write_train_config(config.train, out);
  out << "end\n";
}

ExperimentConfig read_experiment_config(std::istream& in, const std::string& origin_name) {
  using textio::parse_int;
  using textio::split_tokens;
  textio::LineReader reader(in, origin_name);
  if (reader.next_line() != "opa-experiment v1")
    reader.error("expected header 'opa-experiment v1'");

  const fs::path base = fs::path(origin_name).parent_path();
  const auto resolve = [&](const std::string& p) {
    if (base.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
  };

  ExperimentConfig config;
  std::set<std::string> seen;
  for (;;) {
    const std::string line = reader.next_line();
    if (line == "end") break;
    const std::vector<std::string> toks = split_tokens(line);
    const std::string& key = toks[0];
    // eval_instance / history_instance repeat; gen and gen_config (and the
    // train pair) are two spellings of one logical key.
    std::string logical = key;
    if (key == "gen_config") logical = "gen";
    if (key == "train_config") logical = "train";
    if (logical != "eval_instance" && logical != "history_instance" &&
        !seen.insert(logical).second)
      reader.error("duplicate key '" + logical + "'");
    const auto one_int = [&](const char* what) {
      if (toks.size() != 2) reader.error("'" + key + "' expects one value");
      return parse_int(reader, toks[1], what);
    };
    const auto one_flag = [&](const char* what) {
      if (toks.size() != 2 || (toks[1] != "0" && toks[1] != "1"))
        reader.error(std::string("'") + what + "' expects 0 or 1");
      return toks[1] == "1";
    };
    if (key == "history_days") {
      config.history_days = static_cast<int>(one_int(key.c_str()));
    } else if (key == "eval_days") {
      config.eval_days = static_cast<int>(one_int(key.c_str()));
    } else if (key == "train_instance") {
      config.train_instance = resolve(line_value(reader, line, key));
    } else if (key == "eval_instance") {
      config.eval_instances.push_back(resolve(line_value(reader, line, key)));
    } else if (key == "history_instance") {
      config.history_instances.push_back(resolve(line_value(reader, line, key)));
    } else if (key == "policies") {
      if (toks.size() != 2) reader.error("'policies' expects one comma-separated list");
      config.policies.clear();
      for (const std::string& piece : split_commas(toks[1])) {
        try {
          config.policies.push_back(parse_policy(piece));
        } catch (const ConfigError& e) {
          reader.error(e.what());
        }
      }
    } else if (key == "oracle_tier") {
      if (toks.size() != 2) reader.error("'oracle_tier' expects one value");
      try {
        config.tier = parse_tier(toks[1]);
      } catch (const ConfigError& e) {
        reader.error(e.what());
      }
    } else if (key == "bound_iterations") {
      config.bound_iterations = static_cast<int>(one_int(key.c_str()));
    } else if (key == "exact_budget") {
      config.exact_budget = one_int(key.c_str());
    } else if (key == "exact_fallback") {
      config.exact_fallback = one_flag(key.c_str());
    } else if (key == "seeds") {
      if (toks.size() != 2) reader.error("'seeds' expects one comma-separated list");
      config.seeds.clear();
      for (const std::string& piece : split_commas(toks[1]))
        config.seeds.push_back(parse_u64(reader, piece, "seeds"));
    } else if (key == "argmax") {
      config.argmax = one_flag(key.c_str());
    } else if (key == "eval_workers") {
      config.eval_workers = static_cast<int>(one_int(key.c_str()));
    } else if (key == "gen") {
      config.gen = datagen::read_gen_config(in, origin_name + ": gen block");
    } else if (key == "train") {
      config.train = ppo::read_train_config(in, origin_name + ": train block");
    } else if (key == "gen_config") {
      const std::string path = resolve(line_value(reader, line, key));
      if (!fs::exists(path)) throw MissingFile("experiment: missing gen_config file: " + path);
      try {
        config.gen = datagen::load_gen_config(path);
      } catch (const std::exception& e) {
        reader.error(e.what());
      }
    } else if (key == "train_config") {
      const std::string path = resolve(line_value(reader, line, key));
      if (!fs::exists(path)) throw MissingFile("experiment: missing train_config file: " + path);
      try {
        config.train = ppo::load_train_config(path);
      } catch (const std::exception& e) {
        reader.error(e.what());
      }
    } else {
      reader.error("unknown key '" + key + "'");
    }
  }
  if (!reader.at_end()) reader.error("trailing content after 'end'");
  try {
    validate(config);
  } catch (const ConfigError& e) {
    reader.error(e.what());
  }
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  if (!fs::exists(path)) throw MissingFile("experiment: missing experiment config file: " + path);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("experiment: cannot open file: " + path);
  return read_experiment_config(in, path);
}

void save_experiment_config(const ExperimentConfig& config, const std::string& path) {
  std::ostringstream ss;
  write_experiment_config(config, ss);
  write_file(path, ss.str());
}

// ---------------------------------------------------------------------------
// Single-policy evaluation
// ---------------------------------------------------------------------------

EvalOutcome evaluate(Policy policy, const PolicyArtifacts& artifacts,
                     const env::EnvModel& compiled, std::uint64_t seed,
                     const env::RewardWeights& weights, bool argmax) {
  const nets::ActorParams* actor = nullptr;
  if (policy == Policy::PpoOpa || policy == Policy::PpoPd) {
    actor = artifacts.actor;
    if (actor == nullptr)
      throw PolicyMismatch("experiment: policy " + policy_name(policy) +
                           " requires an actor checkpoint");
    const nets::NetConfig want = nets::config_for(compiled);
    if (actor->config != want)
      throw PolicyMismatch(
          "experiment: actor checkpoint does not fit instance '" + compiled.instance().label +
          "' (instance wants n_r=" + std::to_string(want.n_r) +
          " locations=" + std::to_string(want.location_count) +
          " providers=" + std::to_string(want.provider_count) +
          "; checkpoint has n_r=" + std::to_string(actor->config.n_r) +
          " locations=" + std::to_string(actor->config.location_count) +
          " providers=" + std::to_string(actor->config.provider_count) + ")");
  }
  if (policy == Policy::Proportion && artifacts.table == nullptr)
    throw PolicyMismatch("experiment: policy proportion requires a fitted proportion table");

  env::Env env(compiled, weights);
  EvalOutcome out;
  out.steps.reserve(static_cast<std::size_t>(compiled.parcel_count()));
  rng::Rng rng(seed);
  baselines::DualPrices duals;
  if (policy == Policy::Pdo) duals = baselines::make_duals(compiled);

  while (!env.done()) {
    int action = 0;
    switch (policy) {
      case Policy::Greedy:
        action = baselines::greedy_assign(env.current_parcel());
        break;
      case Policy::Proportion:
        action = baselines::proportion_assign(*artifacts.table, env.current_parcel(), rng);
        break;
      case Policy::Pdo:
        action = baselines::pdo_assign(duals, compiled, static_cast<int>(env.t()));
        break;
      case Policy::PpoOpa:
      case Policy::PpoPd: {
        const env::Observation obs = env.observe();
        const std::vector<double> probs = nets::actor_forward(*actor, obs);
        if (argmax) {
          action = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
        } else {
          action = rng.sample_weighted(probs);
        }
        break;
      }
    }
    out.steps.push_back(env.step(action));
    if (policy == Policy::Pdo) baselines::pdo_update(duals, compiled, env.state());
  }
  out.report = env.finalize();
  return out;
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

std::string render_report_csv(const std::vector<EvalRow>& rows) {
  using textio::format_double;
  std::string s = std::string(kReportCsvHeader) + "\n";
  for (const EvalRow& row : rows) {
    s += policy_name(row.policy) + "," + format_double(row.report.average_cost) + "," +
         format_double(row.ip_gap) + "," + format_double(row.report.violation_rate) + "\n";
  }
  return s;
}

std::string render_report_table(const ReportHeader& header, const std::vector<EvalRow>& rows) {
  const std::string oracle_label =
      header.tier == OracleTier::Exact ? "ip-exact(offline)" : "lagrangian-bound(offline)";
  std::size_t algo_w = std::string("algorithm").size();
  for (const EvalRow& row : rows) algo_w = std::max(algo_w, policy_name(row.policy).size());
  algo_w = std::max(algo_w, oracle_label.size()) + 2;
  const std::size_t cost_w = 14, gap_w = 12, viol_w = 16;

  std::string s = "eval day " + std::to_string(header.day_index) + " -- instance " +
                  header.label + ", " + std::to_string(header.parcels) + " parcels, oracle " +
                  tier_name(header.tier) + "\n";
  s += rpad("algorithm", algo_w) + lpad("average cost", cost_w) + lpad("ip gap", gap_w) +
       lpad("violation rate", viol_w) + "\n";
  for (const EvalRow& row : rows) {
    s += rpad(policy_name(row.policy), algo_w) + lpad(fmt("%.5g", row.report.average_cost), cost_w) +
         lpad(fmt("%.4f%%", row.ip_gap * 100.0), gap_w) +
         lpad(fmt("%.2f%%", row.report.violation_rate * 100.0), viol_w) + "\n";
  }
  const double reference_avg =
      header.parcels > 0 ? header.bound_total / static_cast<double>(header.parcels) : 0.0;
  s += rpad(oracle_label, algo_w) + lpad(fmt("%.5g", reference_avg), cost_w) + "\n";
  return s;
}

std::string render_metrics_csv(const std::vector<ppo::EpisodeMetrics>& episodes) {
  using textio::format_double;
  std::string s = std::string(kMetricsCsvHeader) + "\n";
  for (const ppo::EpisodeMetrics& m : episodes) {
    s += std::to_string(m.episode) + "," + format_double(m.mean_shaped_return) + "," +
         format_double(m.average_cost) + "," + format_double(m.violation_rate) + "," +
         format_double(m.reward_mse) + "\n";
  }
  return s;
}

namespace {

// Cross-seed summary, ordered by ascending seed value then day index. The
// human variant reports per-policy means over all (seed, day) rows.
std::vector<const SeedResult*> seeds_by_value(const std::vector<SeedResult>& seeds) {
  std::vector<const SeedResult*> ordered;
  ordered.reserve(seeds.size());
  for (const SeedResult& s : seeds) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(),
            [](const SeedResult* a, const SeedResult* b) { return a->seed < b->seed; });
  return ordered;
}

std::string render_summary_csv(const std::vector<SeedResult>& seeds) {
  using textio::format_double;
  std::string s = std::string(kSummaryCsvHeader) + "\n";
  for (const SeedResult* seed : seeds_by_value(seeds))
    for (const DayResult& day : seed->days)
      for (const EvalRow& row : day.rows)
        s += std::to_string(seed->seed) + "," + std::to_string(day.day_index) + "," +
             policy_name(row.policy) + "," + format_double(row.report.average_cost) + "," +
             format_double(row.ip_gap) + "," + format_double(row.report.violation_rate) + "\n";
  return s;
}

std::string render_summary_table(const std::vector<SeedResult>& seeds, OracleTier tier) {
  const std::vector<const SeedResult*> ordered = seeds_by_value(seeds);
  std::size_t day_count = 0;
  std::vector<Policy> policies;
  std::map<int, std::vector<const EvalRow*>> by_policy_index;
  for (const SeedResult* seed : ordered) {
    day_count = std::max(day_count, seed->days.size());
    for (const DayResult& day : seed->days)
      for (std::size_t i = 0; i < day.rows.size(); ++i) {
        if (i >= policies.size()) policies.push_back(day.rows[i].policy);
        by_policy_index[static_cast<int>(i)].push_back(&day.rows[i]);
      }
  }
  std::size_t algo_w = std::string("algorithm").size();
  for (Policy p : policies) algo_w = std::max(algo_w, policy_name(p).size());
  algo_w += 2;
  const std::size_t cost_w = 19, gap_w = 13, viol_w = 21;

  std::string s = "benchmark summary -- " + std::to_string(ordered.size()) + " seed(s) x " +
                  std::to_string(day_count) + " eval day(s), oracle " + tier_name(tier) + "\n";
  s += rpad("algorithm", algo_w) + lpad("mean average cost", cost_w) + lpad("mean ip gap", gap_w) +
       lpad("mean violation rate", viol_w) + "\n";
  for (std::size_t i = 0; i < policies.size(); ++i) {
    const std::vector<const EvalRow*>& rows = by_policy_index[static_cast<int>(i)];
    double cost = 0.0, gap = 0.0, viol = 0.0;
    for (const EvalRow* row : rows) {
      cost += row->report.average_cost;
      gap += row->ip_gap;
      viol += row->report.violation_rate;
    }
    const double n = static_cast<double>(rows.size());
    s += rpad(policy_name(policies[i]), algo_w) + lpad(fmt("%.5g", cost / n), cost_w) +
         lpad(fmt("%.4f%%", gap / n * 100.0), gap_w) +
         lpad(fmt("%.2f%%", viol / n * 100.0), viol_w) + "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Protocol internals
// ---------------------------------------------------------------------------

std::pair<oracle::OfflineSolution, OracleTier> solve_day(const model::Instance& instance,
                                                         const ExperimentConfig& config) {
  if (config.tier == OracleTier::Exact) {
    try {
      return {oracle::solve_exact(instance, config.exact_budget), OracleTier::Exact};
    } catch (const oracle::BudgetExceeded&) {
      if (!config.exact_fallback) throw;
      return {oracle::solve_bound(instance, config.bound_iterations), OracleTier::Bound};
    }
  }
  return {oracle::solve_bound(instance, config.bound_iterations), OracleTier::Bound};
}

model::Instance load_instance_checked(const std::string& path) {
  if (!fs::exists(path)) throw MissingFile("experiment: missing instance file: " + path);
  try {
    return model::load_instance(path);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("experiment: ") + e.what());
  }
}

ppo::TrainResult run_training(const env::EnvModel& compiled, const ppo::TrainConfig& train_config,
                              bool primal_dual, const std::string& tag, std::ostream* progress) {
  ppo::EpisodeHook hook;
  if (progress != nullptr) {
    hook = [&](const ppo::EpisodeMetrics& m, const nets::ActorParams&,
               const nets::RewardNetParams&) {
      note(progress, tag + " episode " + std::to_string(m.episode) + ": return " +
                         fmt("%.6g", m.mean_shaped_return) + " cost " +
                         fmt("%.6g", m.average_cost) + " violation " +
                         fmt("%.4f", m.violation_rate) + " mse " + fmt("%.6g", m.reward_mse));
    };
  }
  ppo::TrainResult result;
  try {
    if (primal_dual) {
      ppo::DualState duals = ppo::make_dual_state(compiled);
      result = ppo::train_ppo_pd(compiled, train_config, duals, hook);
    } else {
      result = ppo::train(compiled, train_config, hook);
    }
  } catch (const std::exception& e) {
    throw TrainingFailure("experiment: " + tag + " training failed: " + e.what());
  }
  for (const ppo::EpisodeMetrics& m : result.episodes) {
    if (!std::isfinite(m.mean_shaped_return) || !std::isfinite(m.average_cost) ||
        !std::isfinite(m.violation_rate) || !std::isfinite(m.reward_mse))
      throw TrainingFailure("experiment: " + tag + " training diverged: non-finite metrics at episode " +
                            std::to_string(m.episode));
  }
  return result;
}

struct DayJobResult {
  DayResult day;
  std::vector<std::pair<Policy, std::string>> logs;  // policy -> rendered rollout log
};

SeedResult run_seed(const ExperimentConfig& config, std::uint64_t seed,
                    const std::string& out_root, std::ostream* progress,
                    std::vector<std::string>& report_files) {
  SeedResult result;
  result.seed = seed;
  const std::string dir = join_path(out_root, "seed" + std::to_string(seed));
  fs::create_directories(dir);
  const std::string tag = "[seed " + std::to_string(seed) + "]";

  // ---- Data: history days, training day T, evaluation days T+1..T+k.
  std::vector<model::Instance> history;
  std::vector<model::Instance> evals;
  model::Instance train_instance;  // validate() guarantees it exists when PPO trains
  if (!config.file_mode()) {
    datagen::GenConfig gen = config.gen;
    gen.seed = rng::Rng::derive(config.gen.seed, {kStreamWorld, seed}).next_u64();
    const int total_days = config.history_days + 1 + config.eval_days;
    note(progress, tag + " generating " + std::to_string(total_days) + " days (world seed " +
                       std::to_string(gen.seed) + ")");
    std::vector<model::Instance> days = datagen::generate_history(gen, total_days);
    // The slot width is realized per day; unify it so actor checkpoints
    // trained on day T fit every sibling day.
    int n_r = 0;
    for (const model::Instance& d : days) n_r = std::max(n_r, d.n_r_max);
    for (model::Instance& d : days) d.n_r_max = n_r;
    for (int i = 0; i < config.history_days; ++i) history.push_back(std::move(days[i]));
    train_instance = std::move(days[config.history_days]);
    for (int i = 0; i < config.eval_days; ++i)
      evals.push_back(std::move(days[config.history_days + 1 + i]));
    datagen::save_gen_config(gen, join_path(dir, "gen_config.txt"));
    model::save_instance(train_instance, join_path(dir, "instance_train.txt"));
  } else {
    for (const std::string& p : config.history_instances)
      history.push_back(load_instance_checked(p));
    if (!config.train_instance.empty())
      train_instance = load_instance_checked(config.train_instance);
    for (const std::string& p : config.eval_instances) evals.push_back(load_instance_checked(p));
  }
  for (std::size_t i = 0; i < evals.size(); ++i)
    model::save_instance(evals[i], join_path(dir, "instance_eval" + std::to_string(i + 1) + ".txt"));

  // ---- Policy artifacts: fitted proportion table, trained PPO actors.
  PolicyArtifacts artifacts;
  baselines::ProportionTable table;
  if (has_policy(config, Policy::Proportion)) {
    const baselines::DaySolver solver = [&config](const model::Instance& day) {
      return solve_day(day, config).first;
    };
    std::vector<std::string> skipped;
    table = baselines::fit_proportions(history, solver, &skipped);
    note(progress, tag + " fitted proportion table on " + std::to_string(history.size()) +
                       " history day(s), " + std::to_string(skipped.size()) + " skipped");
    baselines::save_proportions(table, join_path(dir, "proportions.txt"));
    artifacts.table = &table;
  }

  nets::ActorParams actor_opa;
  nets::ActorParams actor_pd;
  const bool wants_opa = has_policy(config, Policy::PpoOpa);
  const bool wants_pd = has_policy(config, Policy::PpoPd);
  if (wants_opa || wants_pd) {
    const env::EnvModel compiled_train(train_instance);
    if (wants_opa) {
      ppo::TrainConfig tc = config.train;
      tc.seed = rng::Rng::derive(seed, {kStreamTrain, 0}).next_u64();
      ppo::save_train_config(tc, join_path(dir, "train_config_ppo-opa.txt"));
      note(progress, tag + " training ppo-opa on '" + train_instance.label + "' (" +
                         std::to_string(tc.episodes) + " episodes x " +
                         std::to_string(tc.trajectories_per_episode) + " trajectories)");
      ppo::TrainResult tr = run_training(compiled_train, tc, false, tag + " ppo-opa", progress);
      result.ppo_opa_episodes = tr.episodes;
      neural::save_checkpoint(nets::to_checkpoint(tr.actor), join_path(dir, "actor_ppo-opa.ckpt"));
      neural::save_checkpoint(nets::to_checkpoint(tr.reward_net),
                              join_path(dir, "reward_ppo-opa.ckpt"));
      write_file(join_path(dir, "metrics_ppo-opa.csv"), render_metrics_csv(tr.episodes));
      actor_opa = std::move(tr.actor);
    }
    if (wants_pd) {
      ppo::TrainConfig tc = config.train;
      tc.seed = rng::Rng::derive(seed, {kStreamTrain, 1}).next_u64();
      ppo::save_train_config(tc, join_path(dir, "train_config_ppo-pd.txt"));
      note(progress, tag + " training ppo-pd on '" + train_instance.label + "' (" +
                         std::to_string(tc.episodes) + " episodes x " +
                         std::to_string(tc.trajectories_per_episode) + " trajectories)");
      ppo::TrainResult tr = run_training(compiled_train, tc, true, tag + " ppo-pd", progress);
      result.ppo_pd_episodes = tr.episodes;
      neural::save_checkpoint(nets::to_checkpoint(tr.actor), join_path(dir, "actor_ppo-pd.ckpt"));
      neural::save_checkpoint(nets::to_checkpoint(tr.reward_net),
                              join_path(dir, "reward_ppo-pd.ckpt"));
      write_file(join_path(dir, "metrics_ppo-pd.csv"), render_metrics_csv(tr.episodes));
      actor_pd = std::move(tr.actor);
    }
  }

  // ---- Evaluation days: oracle solve plus one rollout per policy. Days are
  // independent pure jobs; they may run in parallel, and the single writer
  // below assembles files in day order so output is deterministic either way.
  std::vector<env::EnvModel> compiled_evals;
  compiled_evals.reserve(evals.size());
  for (const model::Instance& ins : evals) compiled_evals.emplace_back(ins);
  const env::RewardWeights weights{config.train.lambda_cap, config.train.lambda_prop};

  const auto day_job = [&](int di) {
    const model::Instance& ins = evals[static_cast<std::size_t>(di)];
    const env::EnvModel& compiled = compiled_evals[static_cast<std::size_t>(di)];
    DayJobResult r;
    r.day.label = ins.label;
    r.day.day_index = di + 1;
    r.day.parcels = static_cast<long long>(ins.parcels.size());
    auto [solution, tier_used] = solve_day(ins, config);
    r.day.solution = std::move(solution);
    r.day.tier_used = tier_used;
    for (Policy policy : config.policies) {
      EvalRow row;
      row.policy = policy;
      PolicyArtifacts day_artifacts = artifacts;
      if (policy == Policy::PpoOpa) day_artifacts.actor = &actor_opa;
      if (policy == Policy::PpoPd) day_artifacts.actor = &actor_pd;
      row.rollout_seed =
          rng::Rng::derive(seed, {kStreamRollout, static_cast<std::uint64_t>(di + 1),
                                  static_cast<std::uint64_t>(policy)})
              .next_u64();
      EvalOutcome outcome =
          evaluate(policy, day_artifacts, compiled, row.rollout_seed, weights, config.argmax);
      row.report = std::move(outcome.report);
      row.ip_gap = oracle::ip_gap(row.report.average_cost, r.day.solution);
      std::ostringstream log;
      env::write_rollout_log(log, ins.label, policy_name(policy), row.rollout_seed, weights,
                             outcome.steps);
      r.logs.emplace_back(policy, log.str());
      r.day.rows.push_back(std::move(row));
    }
    return r;
  };

  const int n_days = static_cast<int>(evals.size());
  int workers = config.eval_workers > 0
                    ? config.eval_workers
                    : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, n_days));
  std::vector<DayJobResult> day_results(static_cast<std::size_t>(n_days));
  if (workers == 1) {
    for (int i = 0; i < n_days; ++i) day_results[static_cast<std::size_t>(i)] = day_job(i);
  } else {
    for (int start = 0; start < n_days; start += workers) {
      const int stop = std::min(start + workers, n_days);
      std::vector<std::future<DayJobResult>> futures;
      for (int i = start; i < stop; ++i)
        futures.push_back(std::async(std::launch::async, day_job, i));
      for (int i = start; i < stop; ++i)
        day_results[static_cast<std::size_t>(i)] = futures[static_cast<std::size_t>(i - start)].get();
    }
  }

  for (int di = 0; di < n_days; ++di) {
    DayJobResult& r = day_results[static_cast<std::size_t>(di)];
    const std::string idx = std::to_string(di + 1);
    oracle::save_solution(r.day.solution, evals[static_cast<std::size_t>(di)],
                          join_path(dir, "solution_eval" + idx + ".txt"));
    for (const auto& [policy, log] : r.logs)
      write_file(join_path(dir, "rollout_eval" + idx + "_" + policy_name(policy) + ".log"), log);
    const ReportHeader header{r.day.label,     r.day.day_index,
                              r.day.parcels,   r.day.tier_used,
                              r.day.solution.bound, r.day.solution.objective,
                              r.day.solution.feasible};
    const std::string csv_path = join_path(dir, "report_eval" + idx + ".csv");
    write_file(csv_path, render_report_csv(r.day.rows));
    write_file(join_path(dir, "report_eval" + idx + ".txt"),
               render_report_table(header, r.day.rows));
    report_files.push_back(csv_path);
    note(progress, tag + " eval day " + idx + " '" + r.day.label + "' oracle " +
                       tier_name(r.day.tier_used) + ": bound avg " +
                       fmt("%.6g", r.day.solution.bound / static_cast<double>(r.day.parcels)));
    for (const EvalRow& row : r.day.rows)
      note(progress, tag + "   " + policy_name(row.policy) + ": cost " +
                         fmt("%.6g", row.report.average_cost) + " gap " +
                         fmt("%.4f%%", row.ip_gap * 100.0) + " violation " +
                         fmt("%.2f%%", row.report.violation_rate * 100.0));
    result.days.push_back(std::move(r.day));
  }
  return result;
}

}  // namespace

RunResult run(const ExperimentConfig& config, const std::string& out_dir,
              std::ostream* progress) {
  validate(config);
  fs::create_directories(out_dir);
  save_experiment_config(config, join_path(out_dir, "experiment_config.txt"));

  RunResult result;
  for (std::uint64_t seed : config.seeds)
    result.seeds.push_back(run_seed(config, seed, out_dir, progress, result.report_files));

  write_file(join_path(out_dir, "summary.csv"), render_summary_csv(result.seeds));
  write_file(join_path(out_dir, "summary.txt"),
             render_summary_table(result.seeds, config.tier));
  note(progress, "wrote " + std::to_string(result.report_files.size()) + " report(s) under " +
                     out_dir);
  return result;
}

// ---------------------------------------------------------------------------
// Independent verification
// ---------------------------------------------------------------------------

namespace {

struct RolloutLog {
  std::string label;
  std::string policy;
  std::uint64_t seed = 0;
  double lambda_cap = 0.0;
  double lambda_prop = 0.0;
  std::vector<env::StepRecord> steps;
};

RolloutLog read_rollout_log(const std::string& path) {
  if (!fs::exists(path)) throw MissingFile("experiment: missing rollout log file: " + path);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("experiment: cannot open file: " + path);
  textio::LineReader reader(in, path);
  using textio::parse_int;
  using textio::parse_real;
  using textio::split_tokens;

  RolloutLog log;
  if (reader.next_line() != "opa-rollout v1") reader.error("expected header 'opa-rollout v1'");
  const auto keyed = [&](const char* key) {
    const std::string line = reader.next_line();
    const std::vector<std::string> toks = split_tokens(line);
    if (toks[0] != std::string(key)) reader.error(std::string("expected '") + key + "'");
    if (toks.size() != 2) reader.error(std::string("'") + key + "' expects one value");
    return toks[1];
  };
  log.label = keyed("label");
  log.policy = keyed("policy");
  log.seed = parse_u64(reader, keyed("seed"), "seed");
  log.lambda_cap = parse_real(reader, keyed("lambda_cap"), "lambda_cap");
  log.lambda_prop = parse_real(reader, keyed("lambda_prop"), "lambda_prop");
  const long long n = parse_int(reader, keyed("steps"), "steps");
  if (n < 0) reader.error("steps must be nonnegative");
  log.steps.reserve(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i) {
    const std::vector<std::string> toks = split_tokens(reader.next_line());
    if (toks.size() < 7) reader.error("step record expects at least 7 fields");
    env::StepRecord rec;
    rec.t = parse_int(reader, toks[0], "t");
    rec.parcel_id = static_cast<int>(parse_int(reader, toks[1], "parcel_id"));
    rec.route_id = toks[2];
    rec.action = static_cast<int>(parse_int(reader, toks[3], "action"));
    rec.cost = parse_real(reader, toks[4], "cost");
    rec.reward = parse_real(reader, toks[5], "reward");
    const long long terms = parse_int(reader, toks[6], "shaping term count");
    if (terms < 0 || toks.size() != static_cast<std::size_t>(7 + 2 * terms))
      reader.error("step record has " + std::to_string(toks.size()) + " fields, expected " +
                   std::to_string(7 + 2 * std::max(terms, 0LL)));
    for (long long k = 0; k < terms; ++k)
      rec.shaping_terms.emplace_back(
          toks[static_cast<std::size_t>(7 + 2 * k)],
          parse_real(reader, toks[static_cast<std::size_t>(8 + 2 * k)], "shaping value"));
    log.steps.push_back(std::move(rec));
  }
  if (reader.next_line() != "end") reader.error("expected 'end'");
  if (!reader.at_end()) reader.error("trailing content after 'end'");
  return log;
}

[[noreturn]] void fail_recount(const std::string& what) {
  throw RecountMismatch("experiment: recount: " + what);
}

// Byte comparison with a first-differing-line diagnosis.
void compare_bytes(const std::string& path, const std::string& recomputed,
                   const std::string& on_disk) {
  if (recomputed == on_disk) return;
  std::istringstream a(recomputed), b(on_disk);
  std::string la, lb;
  int line = 0;
  for (;;) {
    ++line;
    const bool ga = static_cast<bool>(std::getline(a, la));
    const bool gb = static_cast<bool>(std::getline(b, lb));
    if (!ga && !gb) break;  // differ only in trailing bytes
    if (!ga || !gb || la != lb) {
      fail_recount(path + " line " + std::to_string(line) + ": recomputed '" +
                   (ga ? la : std::string("<eof>")) + "' but file has '" +
                   (gb ? lb : std::string("<eof>")) + "'");
    }
  }
  fail_recount(path + ": files differ in whitespace or trailing bytes");
}

struct VerifiedReport {
  int day_index = 0;
  std::vector<EvalRow> rows;
};

VerifiedReport verify_report(const std::string& dir, int index, RecountStats& stats,
                             std::ostream* progress) {
  const std::string idx = std::to_string(index);
  const std::string csv_path = join_path(dir, "report_eval" + idx + ".csv");
  const std::string disk_csv = read_file(csv_path, "report");

  // Row order comes from the report under test; every number is recomputed.
  std::vector<std::string> names;
  {
    std::istringstream in(disk_csv);
    std::string line;
    if (!std::getline(in, line) || line != kReportCsvHeader)
      fail_recount(csv_path + ": unexpected header line");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      names.push_back(line.substr(0, line.find(',')));
    }
    if (names.empty()) fail_recount(csv_path + ": no report rows");
  }

  const std::string instance_path = join_path(dir, "instance_eval" + idx + ".txt");
  if (!fs::exists(instance_path))
    throw MissingFile("experiment: missing instance file: " + instance_path);
  model::Instance instance;
  oracle::OfflineSolution solution;
  try {
    instance = model::load_instance(instance_path);
  } catch (const std::exception& e) {
    fail_recount(std::string("unreadable instance: ") + e.what());
  }
  const env::EnvModel compiled(instance);
  const std::string solution_path = join_path(dir, "solution_eval" + idx + ".txt");
  if (!fs::exists(solution_path))
    throw MissingFile("experiment: missing solution file: " + solution_path);
  try {
    solution = oracle::load_solution(solution_path, instance);
  } catch (const std::exception& e) {
    fail_recount(std::string("unreadable solution: ") + e.what());
  }

  VerifiedReport verified;
  verified.day_index = index;
  const long long m = static_cast<long long>(instance.parcels.size());
  for (const std::string& name : names) {
    Policy policy = Policy::Greedy;
    try {
      policy = parse_policy(name);
    } catch (const ConfigError& e) {
      fail_recount(csv_path + ": " + e.what());
    }
    const std::string log_path = join_path(dir, "rollout_eval" + idx + "_" + name + ".log");
    RolloutLog log;
    try {
      log = read_rollout_log(log_path);
    } catch (const MissingFile&) {
      throw;
    } catch (const std::exception& e) {
      fail_recount(std::string("unreadable rollout log: ") + e.what());
    }
    if (log.policy != name)
      fail_recount(log_path + ": log policy '" + log.policy + "' does not match row '" + name +
                   "'");
    if (log.label != instance.label)
      fail_recount(log_path + ": log label '" + log.label + "' does not match instance '" +
                   instance.label + "'");
    if (static_cast<long long>(log.steps.size()) != m)
      fail_recount(log_path + ": " + std::to_string(log.steps.size()) + " steps for " +
                   std::to_string(m) + " parcels");
    std::vector<int> assignment(static_cast<std::size_t>(m), -1);
    for (long long t = 0; t < m; ++t) {
      const env::StepRecord& rec = log.steps[static_cast<std::size_t>(t)];
      const model::Parcel& parcel = instance.parcels[static_cast<std::size_t>(t)];
      if (rec.t != t)
        fail_recount(log_path + ": step " + std::to_string(t) + " carries t=" +
                     std::to_string(rec.t));
      if (rec.parcel_id != parcel.id)
        fail_recount(log_path + ": step " + std::to_string(t) + " parcel id " +
                     std::to_string(rec.parcel_id) + " != instance id " +
                     std::to_string(parcel.id));
      if (rec.action < 0 || rec.action >= static_cast<int>(parcel.candidates.size()))
        fail_recount(log_path + ": step " + std::to_string(t) + " has no candidate " +
                     std::to_string(rec.action));
      const model::Candidate& cand = parcel.candidates[static_cast<std::size_t>(rec.action)];
      if (cand.route_id != rec.route_id)
        fail_recount(log_path + ": step " + std::to_string(t) + " route '" + rec.route_id +
                     "' != candidate route '" + cand.route_id + "'");
      if (cand.cost != rec.cost)
        fail_recount(log_path + ": step " + std::to_string(t) + " cost " +
                     textio::format_double(rec.cost) + " != candidate cost " +
                     textio::format_double(cand.cost));
      assignment[static_cast<std::size_t>(t)] = rec.action;
    }
    EvalRow row;
    row.policy = policy;
    row.rollout_seed = log.seed;
    row.report = env::score_assignment(compiled, assignment);
    try {
      row.ip_gap = oracle::ip_gap(row.report.average_cost, solution);
    } catch (const std::exception& e) {
      fail_recount(std::string("oracle reference unusable: ") + e.what());
    }
    verified.rows.push_back(std::move(row));
  }

  compare_bytes(csv_path, render_report_csv(verified.rows), disk_csv);

  // The human table embeds the oracle tier, which no primary artifact
  // records; accept the render under either tier, byte-compared.
  const std::string table_path = join_path(dir, "report_eval" + idx + ".txt");
  const std::string disk_table = read_file(table_path, "report table");
  bool table_ok = false;
  for (OracleTier tier : {OracleTier::Exact, OracleTier::Bound}) {
    const ReportHeader header{instance.label, index,          m, tier, solution.bound,
                              solution.objective, solution.feasible};
    if (render_report_table(header, verified.rows) == disk_table) {
      table_ok = true;
      break;
    }
  }
  if (!table_ok) {
    const ReportHeader header{instance.label, index,          m, OracleTier::Bound, solution.bound,
                              solution.objective, solution.feasible};
    compare_bytes(table_path, render_report_table(header, verified.rows), disk_table);
  }

  ++stats.reports;
  stats.rows += static_cast<int>(verified.rows.size());
  note(progress, "ok: " + csv_path + " (" + std::to_string(verified.rows.size()) + " rows)");
  return verified;
}

}  // namespace

RecountStats recount(const std::string& out_dir, std::ostream* progress) {
  if (!fs::exists(out_dir))
    throw MissingFile("experiment: missing output directory: " + out_dir);

  struct Found {
    std::string dir;
    int index;
  };
  std::vector<Found> found;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() <= 15 || name.rfind("report_eval", 0) != 0 ||
        name.substr(name.size() - 4) != ".csv")
      continue;
    const std::string digits = name.substr(11, name.size() - 15);
    if (digits.empty() ||
        digits.find_first_not_of("0123456789") != std::string::npos)
      continue;
    found.push_back({entry.path().parent_path().string(), std::stoi(digits)});
  }
  std::sort(found.begin(), found.end(), [](const Found& a, const Found& b) {
    return a.dir != b.dir ? a.dir < b.dir : a.index < b.index;
  });
  if (found.empty()) throw MissingFile("experiment: no report files under " + out_dir);

  RecountStats stats;
  std::map<std::string, std::vector<VerifiedReport>> by_dir;
  for (const Found& f : found)
    by_dir[f.dir].push_back(verify_report(f.dir, f.index, stats, progress));

  // Rebuild the cross-seed summary when the directory has the benchmark
  // layout: seed<value> directories directly under the root.
  const std::string summary_path = join_path(out_dir, "summary.csv");
  if (fs::exists(summary_path)) {
    std::vector<SeedResult> seeds;
    bool bench_layout = true;
    for (const auto& [dir, reports] : by_dir) {
      const fs::path p(dir);
      const std::string name = p.filename().string();
      if (p.parent_path() != fs::path(out_dir).lexically_normal() &&
          p.parent_path() != fs::path(out_dir))
        bench_layout = false;
      if (name.rfind("seed", 0) != 0 ||
          name.substr(4).find_first_not_of("0123456789") != std::string::npos ||
          name.size() == 4)
        bench_layout = false;
      if (!bench_layout) break;
      SeedResult seed;
      seed.seed = std::stoull(name.substr(4));
      for (const VerifiedReport& report : reports) {
        DayResult day;
        day.day_index = report.day_index;
        day.rows = report.rows;
        seed.days.push_back(std::move(day));
      }
      seeds.push_back(std::move(seed));
    }
    if (bench_layout) {
      compare_bytes(summary_path, render_summary_csv(seeds), read_file(summary_path, "summary"));
      const std::string table_path = join_path(out_dir, "summary.txt");
      const std::string disk_table = read_file(table_path, "summary table");
      if (render_summary_table(seeds, OracleTier::Exact) != disk_table)
        compare_bytes(table_path, render_summary_table(seeds, OracleTier::Bound), disk_table);
      stats.summary_checked = true;
      note(progress, "ok: " + summary_path);
    } else {
      note(progress, "note: summary.csv present but the layout is not benchmark-shaped; skipped");
    }
  }
  return stats;
}

}  // namespace opa::experiment
