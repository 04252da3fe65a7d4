#pragma once

// Experiment orchestration: generate (or load) a training day, history days
// and evaluation days, train the PPO policies on the training day only, run
// every requested policy on each evaluation day, score the rollouts against
// the offline oracle, and emit per-day report files.
//
// Per evaluation day the runner writes
//   - a machine-readable CSV (algorithm, average_cost, ip_gap,
//     violation_rate; one row per policy, full %.17g precision), and
//   - a human-readable table with the same rows at display precision plus an
//     offline-oracle reference row,
// alongside the instance file, the oracle solution file, and one rollout log
// per policy. Every number in the CSV is recomputable from those artifacts;
// recount() does exactly that and fails loudly on the first byte that
// differs. Runs are deterministic: the same config and seeds produce
// byte-identical files.
//
// Error taxonomy (each mapped to a distinct CLI exit code): MissingFile for
// absent inputs, ConfigError for unparseable or invalid configuration,
// TrainingFailure for non-finite training dynamics, BudgetExceeded
// (oracle module) for an exact solve past its node budget with the bound
// fallback disabled, PolicyMismatch for artifacts evaluated against an
// instance they were not built for, and RecountMismatch for verification
// failures.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "opa/baselines.hpp"
#include "opa/datagen.hpp"
#include "opa/env.hpp"
#include "opa/nets.hpp"
#include "opa/oracle.hpp"
#include "opa/ppo.hpp"

namespace opa::experiment {

// ---------------------------------------------------------------------------
// Error classes
// ---------------------------------------------------------------------------

class MissingFile : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PolicyMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RecountMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Policy and oracle-tier selectors
// ---------------------------------------------------------------------------

enum class Policy { Greedy, Proportion, Pdo, PpoOpa, PpoPd };

inline constexpr Policy kAllPolicies[] = {Policy::Greedy, Policy::Proportion, Policy::Pdo,
                                          Policy::PpoOpa, Policy::PpoPd};

std::string policy_name(Policy policy);
Policy parse_policy(const std::string& name);  // throws ConfigError

enum class OracleTier { Exact, Bound };

std::string tier_name(OracleTier tier);
OracleTier parse_tier(const std::string& name);  // throws ConfigError

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

// Data can come from the generator (history_days + 1 + eval_days consecutive
// days sharing one synthetic world per experiment seed) or from explicit
// instance files (one fixed data set; seeds then vary only training and
// evaluation sampling). Setting any instance path switches to file mode; the
// embedded generator template is then ignored.
struct ExperimentConfig {
  datagen::GenConfig gen;  // world template; per-seed worlds derive from gen.seed
  int history_days = 4;    // days before T used to fit the proportion table
  int eval_days = 3;       // days T+1 .. T+eval_days

  std::string train_instance;                 // day T (required for PPO policies)
  std::vector<std::string> eval_instances;    // days T+1, T+2, ...
  std::vector<std::string> history_instances; // days before T

  std::vector<Policy> policies{Policy::Greedy, Policy::Proportion, Policy::Pdo,
                               Policy::PpoOpa, Policy::PpoPd};
  OracleTier tier = OracleTier::Bound;
  int bound_iterations = 400;                      // subgradient budget per day
  long long exact_budget = oracle::kDefaultBudget; // exact-tier node budget
  bool exact_fallback = true;  // past the budget: fall back to the bound tier?

  std::vector<std::uint64_t> seeds{1};
  ppo::TrainConfig train;  // seed field is overridden per experiment seed
  bool argmax = false;     // PPO evaluation decoding (default: sample)
  int eval_workers = 0;    // parallel eval-day jobs; 0 = hardware concurrency

  bool operator==(const ExperimentConfig&) const = default;

  bool file_mode() const {
    return !train_instance.empty() || !eval_instances.empty() || !history_instances.empty();
  }
};

// Throws ConfigError on the first violated invariant: a consistent data mode,
// at least one eval day and one policy, no duplicate policies or seeds,
// history data present when the proportion policy is requested, a training
// day present when a PPO policy is requested, positive oracle budgets, a
// valid generator/training configuration, and (file mode) a training day
// disjoint from the evaluation days.
void validate(const ExperimentConfig& config);

// Plain-text config format (documented in README.md). Relative paths in the
// file resolve against the file's directory. Missing keys keep their
// defaults; unknown or duplicate keys are errors with line numbers.
ExperimentConfig read_experiment_config(std::istream& in, const std::string& origin_name);
ExperimentConfig load_experiment_config(const std::string& path);
void write_experiment_config(const ExperimentConfig& config, std::ostream& out);
void save_experiment_config(const ExperimentConfig& config, const std::string& path);

// ---------------------------------------------------------------------------
// Single-policy evaluation
// ---------------------------------------------------------------------------

// Borrowed trained artifacts; only the fields a policy needs must be set
// (actor for ppo-opa / ppo-pd, table for proportion). Missing or mismatched
// artifacts raise PolicyMismatch.
struct PolicyArtifacts {
  const nets::ActorParams* actor = nullptr;
  const baselines::ProportionTable* table = nullptr;
};

struct EvalOutcome {
  env::Report report;
  std::vector<env::StepRecord> steps;
};

// One full rollout of `policy` over the compiled day. Greedy and PDO act
// deterministically (the seed is unused); proportion samples from its table;
// PPO policies sample from the actor's probabilities, or take the highest-
// probability candidate when `argmax` is set. The weights only shape the
// logged per-step rewards; report metrics are weight-independent.
EvalOutcome evaluate(Policy policy, const PolicyArtifacts& artifacts,
                     const env::EnvModel& compiled, std::uint64_t seed,
                     const env::RewardWeights& weights, bool argmax = false);

// ---------------------------------------------------------------------------
// Full protocol
// ---------------------------------------------------------------------------

struct EvalRow {
  Policy policy = Policy::Greedy;
  std::uint64_t rollout_seed = 0;
  env::Report report;
  double ip_gap = 0.0;  // fraction; negative when violations buy cost
};

struct DayResult {
  std::string label;       // instance label
  int day_index = 1;       // 1-based offset from the training day
  long long parcels = 0;
  OracleTier tier_used = OracleTier::Bound;  // after any budget fallback
  oracle::OfflineSolution solution;
  std::vector<EvalRow> rows;  // config policy order
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<ppo::EpisodeMetrics> ppo_opa_episodes;
  std::vector<ppo::EpisodeMetrics> ppo_pd_episodes;
  std::vector<DayResult> days;
};

struct RunResult {
  std::vector<SeedResult> seeds;
  std::vector<std::string> report_files;  // machine CSVs, write order
};

// Runs the full protocol into out_dir: one subdirectory per seed holding the
// day instances, oracle solutions, trained checkpoints, per-episode training
// metrics, the fitted proportion table, rollout logs and report files, plus
// a cross-seed summary at the top level. `progress`, when non-null, receives
// human-oriented progress lines.
RunResult run(const ExperimentConfig& config, const std::string& out_dir,
              std::ostream* progress = nullptr);

// ---------------------------------------------------------------------------
// Report rendering (shared by the runner and the recount verifier)
// ---------------------------------------------------------------------------

struct ReportHeader {
  std::string label;
  int day_index = 0;  // 0 = standalone evaluation (no day offset)
  long long parcels = 0;
  OracleTier tier = OracleTier::Bound;
  double bound_total = 0.0;
  double objective_total = 0.0;  // +inf when no incumbent exists
  bool feasible = false;
};

// Machine CSV: header line plus one full-precision row per policy.
std::string render_report_csv(const std::vector<EvalRow>& rows);
// Human table: day heading, one row per policy at display precision
// (cost %.5g, percentages), and an offline-oracle reference row.
std::string render_report_table(const ReportHeader& header, const std::vector<EvalRow>& rows);
// Training curve CSV: one row per episode.
std::string render_metrics_csv(const std::vector<ppo::EpisodeMetrics>& episodes);

// ---------------------------------------------------------------------------
// Independent verification
// ---------------------------------------------------------------------------

struct RecountStats {
  int reports = 0;  // report CSVs verified
  int rows = 0;     // policy rows recomputed
  bool summary_checked = false;

  bool operator==(const RecountStats&) const = default;
};

// Re-derives every report CSV under out_dir from primary artifacts only --
// instance file, oracle solution file, rollout logs -- and byte-compares the
// renders against the files on disk (including the human tables and the
// cross-seed summary when present). Throws RecountMismatch on the first
// difference (an unreadable artifact counts as one) and MissingFile when an
// artifact is absent.
RecountStats recount(const std::string& out_dir, std::ostream* progress = nullptr);

}  // namespace opa::experiment
