// opa -- command-line laboratory for the online parcel assignment problem.
//
// Subcommands:
//   gen      generate synthetic instance files from a generator config
//   train    train a PPO policy on one instance
//   eval     evaluate one policy on one instance and write report files
//   bench    run the full multi-seed benchmark protocol
//   solve    solve one instance offline (exact search or Lagrangian bound)
//   recount  re-derive report files from rollout logs and byte-compare
//
// Exit codes:
//   0  success
//   1  usage error (unknown command or flag, missing required flag)
//   2  a referenced input file does not exist
//   3  unparseable or invalid configuration / data
//   4  training failed or diverged
//   5  exact oracle budget exceeded with no bound fallback
//   6  policy artifact does not fit the instance
//   7  recount found a report that does not match its rollout logs
//   10 unexpected internal error

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "opa/experiment.hpp"

namespace {

namespace fs = std::filesystem;
using namespace opa;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitMissingFile = 2;
constexpr int kExitBadConfig = 3;
constexpr int kExitTrainingFailure = 4;
constexpr int kExitBudgetExceeded = 5;
constexpr int kExitPolicyMismatch = 6;
constexpr int kExitRecountMismatch = 7;
constexpr int kExitInternal = 10;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr const char* kTopUsage =
    "usage: opa <command> [flags]\n"
    "\n"
    "commands:\n"
    "  gen      generate synthetic instance files from a generator config\n"
    "  train    train a PPO policy on one instance\n"
    "  eval     evaluate one policy on one instance and write report files\n"
    "  bench    run the full multi-seed benchmark protocol\n"
    "  solve    solve one instance offline (exact search or Lagrangian bound)\n"
    "  recount  re-derive report files from rollout logs and byte-compare\n"
    "\n"
    "run 'opa <command> --help' for the command's flags.\n";

constexpr const char* kGenUsage =
    "usage: opa gen --config <gen.cfg> --out <path> [flags]\n"
    "\n"
    "Generates one instance file (--out is the file path) or, with --days N,\n"
    "N consecutive days of one synthetic world (--out is a directory that\n"
    "receives one file per day, named after the day label).\n"
    "\n"
    "flags:\n"
    "  --config <path>  generator config file (required)\n"
    "  --out <path>     output file, or directory when --days > 1 (required)\n"
    "  --seed <n>       override the config's seed\n"
    "  --days <n>       number of consecutive days to generate (default 1)\n";

constexpr const char* kTrainUsage =
    "usage: opa train --instance <instance.txt> --out <dir> [flags]\n"
    "\n"
    "Trains a PPO policy on the instance and writes actor.ckpt, reward.ckpt,\n"
    "metrics.csv and train_config.txt into the output directory.\n"
    "\n"
    "flags:\n"
    "  --instance <path>      training day instance file (required)\n"
    "  --out <dir>            output directory (required)\n"
    "  --config <path>        training config file (defaults apply without it)\n"
    "  --pd                   train the primal-dual variant (bare-cost reward\n"
    "                         plus learned Lagrangian multipliers)\n"
    "  --seed <n>             override the training seed\n"
    "  --episodes <n>         override the episode count\n"
    "  --trajectories <n>     override trajectories per episode\n"
    "  --minibatch <n>        override the minibatch size\n"
    "  --lambda-cap <x>       override the capacity shaping weight\n"
    "  --lambda-prop <x>      override the proportion shaping weight\n"
    "  --clip-eps <x>         override the clipping radius\n";

constexpr const char* kEvalUsage =
    "usage: opa eval --policy <name> --instance <instance.txt> --out <dir> [flags]\n"
    "\n"
    "Runs one policy over one day, solves the day offline for the IP gap, and\n"
    "writes the instance copy, oracle solution, rollout log and report files\n"
    "into the output directory. Prints the report table.\n"
    "\n"
    "flags:\n"
    "  --policy <name>        greedy | proportion | pdo | ppo-opa | ppo-pd (required)\n"
    "  --instance <path>      evaluation day instance file (required)\n"
    "  --out <dir>            output directory (required)\n"
    "  --actor <path>         actor checkpoint (required for ppo-opa / ppo-pd)\n"
    "  --table <path>         proportion table file (required for proportion)\n"
    "  --seed <n>             rollout seed for sampling policies (default 1)\n"
    "  --argmax               PPO picks the highest-probability candidate\n"
    "  --oracle-tier <t>      exact | bound (default bound); exact does not\n"
    "                         fall back when the budget is exceeded\n"
    "  --budget <n>           exact-tier enumeration budget\n"
    "  --iterations <n>       bound-tier subgradient iterations (default 400)\n"
    "  --lambda-cap <x>       capacity shaping weight in the rollout log\n"
    "  --lambda-prop <x>      proportion shaping weight in the rollout log\n"
    "  --day <n>              day index used in file names (default 1)\n";

constexpr const char* kBenchUsage =
    "usage: opa bench --config <experiment.cfg> --out <dir> [flags]\n"
    "\n"
    "Runs the full protocol: per seed, generate (or load) history, training\n"
    "and evaluation days, fit/train the requested policies on the training\n"
    "day only, evaluate every policy on every evaluation day against the\n"
    "offline oracle, and write per-day report files plus a cross-seed\n"
    "summary.\n"
    "\n"
    "flags:\n"
    "  --config <path>        experiment config file (required)\n"
    "  --out <dir>            output directory (required)\n"
    "  --seed <n>             replace the config's seed list with one seed\n"
    "  --oracle-tier <t>      override the oracle tier (exact | bound)\n"
    "  --episodes <n>         override training episodes\n"
    "  --lambda-cap <x>       override the capacity shaping weight\n"
    "  --lambda-prop <x>      override the proportion shaping weight\n"
    "  --clip-eps <x>         override the clipping radius\n"
    "  --argmax               PPO policies evaluate with argmax decoding\n"
    "  --workers <n>          evaluation-day worker threads (0 = all cores)\n"
    "  --quiet                suppress progress lines\n";

constexpr const char* kSolveUsage =
    "usage: opa solve --instance <instance.txt> --out <solution.txt> [flags]\n"
    "\n"
    "Solves the day offline and writes the solution file.\n"
    "\n"
    "flags:\n"
    "  --instance <path>      instance file (required)\n"
    "  --out <path>           solution file to write (required)\n"
    "  --oracle-tier <t>      exact | bound (default exact); exact does not\n"
    "                         fall back when the budget is exceeded\n"
    "  --budget <n>           exact-tier enumeration budget\n"
    "  --iterations <n>       bound-tier subgradient iterations (default 400)\n";

constexpr const char* kRecountUsage =
    "usage: opa recount --out <dir>\n"
    "\n"
    "Recursively finds report CSVs under the directory, recomputes every\n"
    "metric from the primary artifacts (instance, oracle solution, rollout\n"
    "logs) and byte-compares the result against the files on disk, including\n"
    "the human tables and the cross-seed summary. Exits 7 on the first\n"
    "mismatch.\n"
    "\n"
    "flags:\n"
    "  --out <dir>            directory holding report files (required)\n"
    "  --quiet                suppress per-report progress lines\n";

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Flag parsing
// ---------------------------------------------------------------------------

class Flags {
 public:
  Flags(int argc, char** argv, const std::set<std::string>& value_keys,
        const std::set<std::string>& bool_keys) {
    for (int i = 2; i < argc; ++i) {
      std::string tok = argv[i];
      if (tok.rfind("--", 0) != 0)
        throw UsageError("unexpected argument '" + tok + "' (flags start with --)");
      tok = tok.substr(2);
      if (bool_keys.count(tok) != 0) {
        bools_.insert(tok);
      } else if (value_keys.count(tok) != 0) {
        if (i + 1 >= argc) throw UsageError("flag --" + tok + " expects a value");
        if (!values_.emplace(tok, argv[++i]).second)
          throw UsageError("flag --" + tok + " given twice");
      } else {
        throw UsageError("unknown flag --" + tok);
      }
    }
  }

  bool flag(const std::string& name) const { return bools_.count(name) != 0; }
  bool has(const std::string& name) const { return values_.count(name) != 0; }

  std::string value(const std::string& name) const {
    const auto it = values_.find(name);
    if (it == values_.end()) throw UsageError("flag --" + name + " is required");
    return it->second;
  }

  std::string value_or(const std::string& name, const std::string& def) const {
    const auto it = values_.find(name);
    return it == values_.end() ? def : it->second;
  }

  long long int_or(const std::string& name, long long def) const {
    if (!has(name)) return def;
    return parse_ll(name, value(name));
  }

  std::uint64_t u64_or(const std::string& name, std::uint64_t def) const {
    if (!has(name)) return def;
    const std::string s = value(name);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw UsageError("flag --" + name + " expects an unsigned integer, got '" + s + "'");
    return v;
  }

  double real_or(const std::string& name, double def) const {
    if (!has(name)) return def;
    const std::string s = value(name);
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw UsageError("flag --" + name + " expects a finite real, got '" + s + "'");
    }
  }

 private:
  static long long parse_ll(const std::string& name, const std::string& s) {
    long long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw UsageError("flag --" + name + " expects an integer, got '" + s + "'");
    return v;
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> bools_;
};

bool wants_help(int argc, char** argv) {
  for (int i = 2; i < argc; ++i)
    if (std::string(argv[i]) == "--help") return true;
  return false;
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path))
    throw experiment::MissingFile(std::string("missing ") + what + ": " + path);
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
}

experiment::OracleTier tier_flag(const Flags& flags, const std::string& def) {
  const std::string name = flags.value_or("oracle-tier", def);
  try {
    return experiment::parse_tier(name);
  } catch (const experiment::ConfigError&) {
    throw UsageError("flag --oracle-tier expects exact or bound, got '" + name + "'");
  }
}

void check_finite_metrics(const std::vector<ppo::EpisodeMetrics>& episodes) {
  for (const ppo::EpisodeMetrics& m : episodes)
    if (!std::isfinite(m.mean_shaped_return) || !std::isfinite(m.average_cost) ||
        !std::isfinite(m.violation_rate) || !std::isfinite(m.reward_mse))
      throw experiment::TrainingFailure("training diverged: non-finite metrics at episode " +
                                        std::to_string(m.episode));
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_gen(int argc, char** argv) {
  if (wants_help(argc, argv)) {
    std::cout << kGenUsage;
    return kExitOk;
  }
  const Flags flags(argc, argv, {"config", "out", "seed", "days"}, {});
  const std::string config_path = flags.value("config");
  require_file(config_path, "generator config");
  datagen::GenConfig gen = datagen::load_gen_config(config_path);
  gen.seed = flags.u64_or("seed", gen.seed);
  const long long days = flags.int_or("days", 1);
  if (days < 1) throw UsageError("flag --days must be >= 1");
  const std::string out = flags.value("out");
  if (days == 1) {
    const model::Instance instance = datagen::generate(gen);
    if (const fs::path parent = fs::path(out).parent_path(); !parent.empty())
      fs::create_directories(parent);
    model::save_instance(instance, out);
    std::cout << "wrote " << out << " (" << instance.parcels.size() << " parcels, "
              << instance.routes.size() << " routes, " << instance.constraints.size()
              << " constraints)\n";
  } else {
    fs::create_directories(out);
    for (const model::Instance& day : datagen::generate_history(gen, static_cast<int>(days))) {
      const std::string path = join_path(out, day.label + ".txt");
      model::save_instance(day, path);
      std::cout << "wrote " << path << " (" << day.parcels.size() << " parcels)\n";
    }
  }
  return kExitOk;
}

int cmd_train(int argc, char** argv) {
  if (wants_help(argc, argv)) {
    std::cout << kTrainUsage;
    return kExitOk;
  }
  const Flags flags(argc, argv,
                    {"config", "instance", "out", "seed", "episodes", "trajectories", "minibatch",
                     "lambda-cap", "lambda-prop", "clip-eps"},
                    {"pd"});
  ppo::TrainConfig config;
  if (flags.has("config")) {
    require_file(flags.value("config"), "training config");
    config = ppo::load_train_config(flags.value("config"));
  }
  config.seed = flags.u64_or("seed", config.seed);
  config.episodes = static_cast<int>(flags.int_or("episodes", config.episodes));
  config.trajectories_per_episode =
      static_cast<int>(flags.int_or("trajectories", config.trajectories_per_episode));
  config.minibatch = static_cast<int>(flags.int_or("minibatch", config.minibatch));
  config.lambda_cap = flags.real_or("lambda-cap", config.lambda_cap);
  config.lambda_prop = flags.real_or("lambda-prop", config.lambda_prop);
  config.clip_eps = flags.real_or("clip-eps", config.clip_eps);
  ppo::validate(config);

  const std::string instance_path = flags.value("instance");
  require_file(instance_path, "instance");
  const model::Instance instance = model::load_instance(instance_path);
  const env::EnvModel compiled(instance);

  const std::string out = flags.value("out");
  fs::create_directories(out);
  ppo::save_train_config(config, join_path(out, "train_config.txt"));

  const ppo::EpisodeHook hook = [](const ppo::EpisodeMetrics& m, const nets::ActorParams&,
                                   const nets::RewardNetParams&) {
    std::cout << "episode " << m.episode << ": return " << fmt("%.6g", m.mean_shaped_return)
              << " cost " << fmt("%.6g", m.average_cost) << " violation "
              << fmt("%.4f", m.violation_rate) << " mse " << fmt("%.6g", m.reward_mse) << "\n"
              << std::flush;
  };
  ppo::TrainResult result;
  try {
    if (flags.flag("pd")) {
      ppo::DualState duals = ppo::make_dual_state(compiled);
      result = ppo::train_ppo_pd(compiled, config, duals, hook);
    } else {
      result = ppo::train(compiled, config, hook);
    }
  } catch (const std::exception& e) {
    throw experiment::TrainingFailure(std::string("training failed: ") + e.what());
  }
  check_finite_metrics(result.episodes);

  neural::save_checkpoint(nets::to_checkpoint(result.actor), join_path(out, "actor.ckpt"));
  neural::save_checkpoint(nets::to_checkpoint(result.reward_net), join_path(out, "reward.ckpt"));
  write_file(join_path(out, "metrics.csv"), experiment::render_metrics_csv(result.episodes));
  std::cout << "wrote " << join_path(out, "actor.ckpt") << ", reward.ckpt, metrics.csv and "
            << "train_config.txt\n";
  return kExitOk;
}

int cmd_eval(int argc, char** argv) {
  if (wants_help(argc, argv)) {
    std::cout << kEvalUsage;
    return kExitOk;
  }
  const Flags flags(argc, argv,
                    {"policy", "instance", "out", "actor", "table", "seed", "oracle-tier",
                     "budget", "iterations", "lambda-cap", "lambda-prop", "day"},
                    {"argmax"});
  experiment::Policy policy;
  try {
    policy = experiment::parse_policy(flags.value("policy"));
  } catch (const experiment::ConfigError& e) {
    throw UsageError(e.what());
  }
  const std::string instance_path = flags.value("instance");
  require_file(instance_path, "instance");
  const model::Instance instance = model::load_instance(instance_path);
  const env::EnvModel compiled(instance);
  const int day = static_cast<int>(flags.int_or("day", 1));
  if (day < 1) throw UsageError("flag --day must be >= 1");

  experiment::PolicyArtifacts artifacts;
  nets::ActorParams actor;
  baselines::ProportionTable table;
  if (policy == experiment::Policy::PpoOpa || policy == experiment::Policy::PpoPd) {
    if (!flags.has("actor"))
      throw UsageError("policy " + experiment::policy_name(policy) +
                       " requires --actor <checkpoint>");
    require_file(flags.value("actor"), "actor checkpoint");
    actor = nets::actor_from_checkpoint(neural::load_checkpoint(flags.value("actor")));
    artifacts.actor = &actor;
  }
  if (policy == experiment::Policy::Proportion) {
    if (!flags.has("table")) throw UsageError("policy proportion requires --table <path>");
    require_file(flags.value("table"), "proportion table");
    table = baselines::load_proportions(flags.value("table"));
    artifacts.table = &table;
  }

  const experiment::OracleTier tier = tier_flag(flags, "bound");
  const oracle::OfflineSolution solution =
      tier == experiment::OracleTier::Exact
          ? oracle::solve_exact(instance, flags.int_or("budget", oracle::kDefaultBudget))
          : oracle::solve_bound(instance,
                                static_cast<int>(flags.int_or("iterations", 400)));

  env::RewardWeights weights;
  weights.lambda_cap = flags.real_or("lambda-cap", weights.lambda_cap);
  weights.lambda_prop = flags.real_or("lambda-prop", weights.lambda_prop);
  const std::uint64_t seed = flags.u64_or("seed", 1);
  const experiment::EvalOutcome outcome =
      experiment::evaluate(policy, artifacts, compiled, seed, weights, flags.flag("argmax"));

  experiment::EvalRow row;
  row.policy = policy;
  row.rollout_seed = seed;
  row.report = outcome.report;
  row.ip_gap = oracle::ip_gap(row.report.average_cost, solution);

  const std::string out = flags.value("out");
  fs::create_directories(out);
  const std::string idx = std::to_string(day);
  model::save_instance(instance, join_path(out, "instance_eval" + idx + ".txt"));
  oracle::save_solution(solution, instance, join_path(out, "solution_eval" + idx + ".txt"));
  {
    std::ostringstream log;
    env::write_rollout_log(log, instance.label, experiment::policy_name(policy), seed, weights,
                           outcome.steps);
    write_file(join_path(out, "rollout_eval" + idx + "_" + experiment::policy_name(policy) +
                                  ".log"),
               log.str());
  }
  const std::vector<experiment::EvalRow> rows{row};
  const experiment::ReportHeader header{instance.label,
                                        day,
                                        static_cast<long long>(instance.parcels.size()),
                                        tier,
                                        solution.bound,
                                        solution.objective,
                                        solution.feasible};
  write_file(join_path(out, "report_eval" + idx + ".csv"), experiment::render_report_csv(rows));
  const std::string table_text = experiment::render_report_table(header, rows);
  write_file(join_path(out, "report_eval" + idx + ".txt"), table_text);
  std::cout << table_text;
  return kExitOk;
}

int cmd_bench(int argc, char** argv) {
  if (wants_help(argc, argv)) {
    std::cout << kBenchUsage;
    return kExitOk;
  }
  const Flags flags(argc, argv,
                    {"config", "out", "seed", "oracle-tier", "episodes", "lambda-cap",
                     "lambda-prop", "clip-eps", "workers"},
                    {"argmax", "quiet"});
  const std::string config_path = flags.value("config");
  require_file(config_path, "experiment config");
  experiment::ExperimentConfig config = experiment::load_experiment_config(config_path);
  if (flags.has("seed")) config.seeds = {flags.u64_or("seed", 0)};
  if (flags.has("oracle-tier")) config.tier = tier_flag(flags, "bound");
  config.train.episodes = static_cast<int>(flags.int_or("episodes", config.train.episodes));
  config.train.lambda_cap = flags.real_or("lambda-cap", config.train.lambda_cap);
  config.train.lambda_prop = flags.real_or("lambda-prop", config.train.lambda_prop);
  config.train.clip_eps = flags.real_or("clip-eps", config.train.clip_eps);
  if (flags.flag("argmax")) config.argmax = true;
  config.eval_workers = static_cast<int>(flags.int_or("workers", config.eval_workers));

  const std::string out = flags.value("out");
  std::ostream* progress = flags.flag("quiet") ? nullptr : &std::cout;
  experiment::run(config, out, progress);
  std::ifstream summary(join_path(out, "summary.txt"));
  std::cout << summary.rdbuf();
  return kExitOk;
}

int cmd_solve(int argc, char** argv) {
  if (wants_help(argc, argv)) {
    std::cout << kSolveUsage;
    return kExitOk;
  }
  const Flags flags(argc, argv, {"instance", "out", "oracle-tier", "budget", "iterations"}, {});
  const std::string instance_path = flags.value("instance");
  require_file(instance_path, "instance");
  const model::Instance instance = model::load_instance(instance_path);
  const experiment::OracleTier tier = tier_flag(flags, "exact");
  const oracle::OfflineSolution solution =
      tier == experiment::OracleTier::Exact
          ? oracle::solve_exact(instance, flags.int_or("budget", oracle::kDefaultBudget))
          : oracle::solve_bound(instance,
                                static_cast<int>(flags.int_or("iterations", 400)));
  const std::string out = flags.value("out");
  if (const fs::path parent = fs::path(out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  oracle::save_solution(solution, instance, out);
  std::cout << "instance " << instance.label << ": "
            << (solution.feasible ? "feasible" : "infeasible");
  if (solution.feasible) std::cout << ", objective " << fmt("%.6g", solution.objective);
  std::cout << ", bound " << fmt("%.6g", solution.bound) << "\n";
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

int cmd_recount(int argc, char** argv) {
  if (wants_help(argc, argv)) {
    std::cout << kRecountUsage;
    return kExitOk;
  }
  const Flags flags(argc, argv, {"out"}, {"quiet"});
  std::ostream* progress = flags.flag("quiet") ? nullptr : &std::cout;
  const experiment::RecountStats stats = experiment::recount(flags.value("out"), progress);
  std::cout << "verified " << stats.reports << " report(s), " << stats.rows
            << " policy row(s)" << (stats.summary_checked ? ", and the cross-seed summary" : "")
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << kTopUsage;
    return kExitUsage;
  }
  const std::string command = argv[1];
  if (command == "help" || command == "--help") {
    std::cout << kTopUsage;
    return kExitOk;
  }
  try {
    if (command == "gen") return cmd_gen(argc, argv);
    if (command == "train") return cmd_train(argc, argv);
    if (command == "eval") return cmd_eval(argc, argv);
    if (command == "bench") return cmd_bench(argc, argv);
    if (command == "solve") return cmd_solve(argc, argv);
    if (command == "recount") return cmd_recount(argc, argv);
    std::cerr << "error: unknown command '" << command << "'\n\n" << kTopUsage;
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\nrun 'opa " << command << " --help' for flags\n";
    return kExitUsage;
  } catch (const experiment::MissingFile& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingFile;
  } catch (const experiment::TrainingFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitTrainingFailure;
  } catch (const oracle::BudgetExceeded& e) {
    std::cerr << "error: " << e.what() << " (use --oracle-tier bound or raise --budget)\n";
    return kExitBudgetExceeded;
  } catch (const experiment::PolicyMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPolicyMismatch;
  } catch (const experiment::RecountMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRecountMismatch;
  } catch (const experiment::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
