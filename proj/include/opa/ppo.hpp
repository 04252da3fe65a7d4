#pragma once

// Policy-gradient training for the assignment environment.
//
// One training episode: roll out `trajectories_per_episode` independent
// trajectories under the current actor (workers share a read-only parameter
// snapshot; worker w draws from its own RNG stream, so results are identical
// however the workers are scheduled), compute per-step advantages
//     A_t = r_t - R_phi(s_t, o_t)
// against the reward network (no discounting, no bootstrapping), shuffle all
// steps into one buffer, ascend the clipped surrogate
//     mean_t min(rho_t, clip(rho_t, 1 - eps, 1 + eps)) * A_t,
//     rho_t = exp(log pi_theta(a_t) - log pi_behavior(a_t))
// in minibatches, then refit the reward network on the same buffer by
// minibatch MSE regression. Note the min is taken over the RATIO and its
// clipped value (collapsing to min(rho, 1 + eps)) before multiplying by the
// advantage; gradients flow only where the raw ratio attains the min.
//
// train_ppo_pd is the Lagrangian variant: the environment reward is the bare
// negative cost, each step additionally pays lambda_k per unit of constraint
// consumption, and after every episode the multipliers take a projected
// subgradient step against the batch-measured consumption. Its dual step is
// normalized per constraint by the bound magnitude.
//
// All forward evaluations run through the fixed-tile matmuls, so log-probs,
// advantages, and ratios are bitwise independent of how steps are batched;
// at unchanged parameters the ratio is exactly 1.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "opa/env.hpp"
#include "opa/nets.hpp"
#include "opa/neural.hpp"

namespace opa::ppo {

struct TrainConfig {
  int episodes = 20;
  int trajectories_per_episode = 50;
  int minibatch = 2048;
  int update_passes = 1;  // gradient passes over each episode buffer
  double clip_eps = 0.2;
  double lambda_cap = 10.0;
  double lambda_prop = 300.0;
  double actor_lr = 1e-3;
  double reward_lr = 1e-3;
  double lr_decay = 1.0;  // per-episode multiplier on actor_lr; 1 keeps it constant
  double gamma = 1.0;  // reserved; the advantage estimator is undiscounted
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
};

// Throws std::runtime_error naming the first invalid field.
void validate(const TrainConfig& config);

void write_train_config(const TrainConfig& config, std::ostream& out);
TrainConfig read_train_config(std::istream& in, const std::string& origin_name);
void save_train_config(const TrainConfig& config, const std::string& path);
TrainConfig load_train_config(const std::string& path);

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct TrajectoryStep {
  env::Observation obs;
  int action = 0;
  double behavior_log_prob = 0.0;  // log pi(a | obs) under the collecting actor
  double reward = 0.0;
};

struct Trajectory {
  std::string instance_label;
  std::uint64_t seed = 0;  // collect() seed; the worker stream is (seed, worker)
  int worker = 0;
  std::vector<TrajectoryStep> steps;        // length m
  std::vector<int> assignment_log;          // chosen candidate per parcel
  double total_cost = 0.0;
};

// n rollouts sampling actions from the actor's probabilities. Worker w is
// seeded from (seed, w) only; trajectories are deterministic in that pair and
// independent of n. The workers advance in lockstep so each time step is one
// batched forward pass.
std::vector<Trajectory> collect(const nets::ActorParams& actor,
                                const env::EnvModel& compiled, int n,
                                std::uint64_t seed,
                                const env::RewardWeights& weights = {});

// A_t = r_t - R_phi(obs_t) for every step, flattened in (trajectory, step)
// order. Evaluated in large batches; bitwise equal to per-step evaluation.
std::vector<double> advantages(const std::vector<Trajectory>& trajectories,
                               const nets::RewardNetParams& reward_net);

// ---------------------------------------------------------------------------
// Updates
// ---------------------------------------------------------------------------

// Flat step batch for the surrogate objective; parallel arrays.
struct ClipBatch {
  std::vector<const env::Observation*> obs;
  std::vector<int> actions;
  std::vector<double> behavior_log_probs;
  std::vector<double> advantages;

  std::size_t size() const { return obs.size(); }
};

struct ClipResult {
  double objective = 0.0;      // batch mean of the per-step terms
  std::vector<double> terms;   // per-step min(rho, clip(rho)) * A
  nets::ActorGrads grads;      // d(objective)/d(params): ascent direction
};

// Clipped surrogate value and gradient at `params`. The gradient flows only
// through steps where the raw ratio attains the min. Throws on an empty
// batch or a non-finite ratio.
ClipResult clip_objective(const nets::ActorParams& params, const ClipBatch& batch,
                          double clip_eps);

// Minibatch Adam regression of the reward network onto `targets` (one scalar
// per observation, MSE loss), in the given order, one pass. Returns each
// minibatch's pre-update MSE. `adam` must be sized for the network (init with
// span_param_count). Throws on empty/mismatched inputs or non-finite loss.
std::vector<double> fit_reward_net(nets::RewardNetParams& params,
                                   neural::AdamState& adam,
                                   const std::vector<const env::Observation*>& obs,
                                   const std::vector<double>& targets,
                                   int minibatch);

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

struct EpisodeMetrics {
  int episode = 0;                 // 0-based
  double mean_shaped_return = 0.0; // mean over trajectories of summed rewards
  double average_cost = 0.0;       // mean per-parcel cost over all trajectories
  double violation_rate = 0.0;     // mean over trajectories
  double reward_mse = 0.0;         // buffer MSE before this episode's updates
};

struct TrainResult {
  nets::ActorParams actor;
  nets::RewardNetParams reward_net;
  std::vector<EpisodeMetrics> episodes;
};

// Called after each episode's updates with the metrics and the current
// parameters (for logging / checkpointing).
using EpisodeHook = std::function<void(const EpisodeMetrics&, const nets::ActorParams&,
                                       const nets::RewardNetParams&)>;

// Full training loop; deterministic in config.seed. Rewards are shaped with
// (config.lambda_cap, config.lambda_prop).
TrainResult train(const env::EnvModel& compiled, const TrainConfig& config,
                  const EpisodeHook& hook = nullptr);

// Lagrangian multipliers for the primal-dual variant, one per constraint
// slot of the compiled model; lower multipliers exist for proportion bands
// only (capacity lower bounds are 0). consumption_* hold the batch-mean
// end-of-day usage measured by the last dual update.
struct DualState {
  std::vector<double> lambda_cap;
  std::vector<double> lambda_prop_upper;
  std::vector<double> lambda_prop_lower;
  double eta = 1e-4;  // base dual step; per-constraint step is eta / bound
  std::vector<double> consumption_cap;
  std::vector<double> consumption_prop;
};

DualState make_dual_state(const env::EnvModel& compiled, double eta = 1e-4);

// Batch-mean end-of-day consumption per constraint slot, plus the (arrival-
// determined, trajectory-independent) final seen count per proportion slot.
struct Consumption {
  std::vector<double> cap;        // mean final hub usage
  std::vector<double> prop;       // mean final provider count
  std::vector<double> prop_seen;  // final OD parcel count
};

Consumption measure_consumption(const env::EnvModel& compiled,
                                const std::vector<Trajectory>& trajectories);

// Projected subgradient step: lambda <- max(0, lambda + step * (J - bound))
// with step = eta / max(1, |bound|); proportion bounds are p * seen.
void dual_update(DualState& duals, const env::EnvModel& compiled,
                 const Consumption& consumption);

// Primal-dual training: bare negative-cost reward, minus the lambda-weighted
// consumption of the chosen route; duals updated after every episode.
// config.lambda_cap / lambda_prop are ignored.
TrainResult train_ppo_pd(const env::EnvModel& compiled, const TrainConfig& config,
                         DualState& duals, const EpisodeHook& hook = nullptr);

}  // namespace opa::ppo
