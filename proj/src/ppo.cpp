#include "opa/ppo.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "opa/textio.hpp"

namespace opa::ppo {
namespace {

// RNG stream tags under a training seed.
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamCollect = 2;
constexpr std::uint64_t kStreamActorShuffle = 3;
constexpr std::uint64_t kStreamRewardShuffle = 4;

// Observations per forward pass when sweeping a whole buffer.
constexpr std::size_t kEvalChunk = 2048;

[[noreturn]] void fail(const std::string& message) {
  throw std::runtime_error("ppo: " + message);
}

}  // namespace

void validate(const TrainConfig& config) {
  const auto bad = [](const std::string& message) {
    throw std::runtime_error("trainconfig: " + message);
  };
  if (config.episodes < 1) bad("episodes must be at least 1");
  if (config.trajectories_per_episode < 1) bad("trajectories_per_episode must be at least 1");
  if (config.minibatch < 1) bad("minibatch must be at least 1");
  if (config.update_passes < 1) bad("update_passes must be at least 1");
  if (!(config.clip_eps > 0.0) || !(config.clip_eps < 1.0)) bad("clip_eps must lie in (0, 1)");
  if (!std::isfinite(config.lambda_cap) || config.lambda_cap < 0.0)
    bad("lambda_cap must be finite and nonnegative");
  if (!std::isfinite(config.lambda_prop) || config.lambda_prop < 0.0)
    bad("lambda_prop must be finite and nonnegative");
  if (!std::isfinite(config.actor_lr) || config.actor_lr <= 0.0)
    bad("actor_lr must be positive");
  if (!std::isfinite(config.reward_lr) || config.reward_lr <= 0.0)
    bad("reward_lr must be positive");
  if (!std::isfinite(config.lr_decay) || config.lr_decay <= 0.0 || config.lr_decay > 1.0)
    bad("lr_decay must lie in (0, 1]");
  if (!(config.gamma >= 0.0) || !(config.gamma <= 1.0)) bad("gamma must lie in [0, 1]");
}

void write_train_config(const TrainConfig& config, std::ostream& out) {
  using textio::format_double;
  out << "opa-trainconfig v1\n";
  out << "episodes " << config.episodes << "\n";
  out << "trajectories " << config.trajectories_per_episode << "\n";
  out << "minibatch " << config.minibatch << "\n";
  out << "update_passes " << config.update_passes << "\n";
  out << "clip_eps " << format_double(config.clip_eps) << "\n";
  out << "lambda_cap " << format_double(config.lambda_cap) << "\n";
  out << "lambda_prop " << format_double(config.lambda_prop) << "\n";
  out << "actor_lr " << format_double(config.actor_lr) << "\n";
  out << "reward_lr " << format_double(config.reward_lr) << "\n";
  out << "lr_decay " << format_double(config.lr_decay) << "\n";
  out << "gamma " << format_double(config.gamma) << "\n";
  out << "seed " << config.seed << "\n";
  out << "end\n";
}

TrainConfig read_train_config(std::istream& in, const std::string& origin_name) {
  textio::LineReader reader(in, origin_name);
  if (reader.next_line() != "opa-trainconfig v1") {
    reader.error("expected header 'opa-trainconfig v1'");
  }
  TrainConfig config;
  std::vector<std::string> seen;
  for (;;) {
    const std::string line = reader.next_line();
    if (line == "end") break;
    const std::vector<std::string> toks = textio::split_tokens(line);
    const std::string& key = toks[0];
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
      reader.error("duplicate key '" + key + "'");
    }
    seen.push_back(key);
    const auto one_int = [&](const char* what) {
      if (toks.size() != 2) reader.error("'" + key + "' expects one value");
      return textio::parse_int(reader, toks[1], what);
    };
    const auto one_real = [&](const char* what) {
      if (toks.size() != 2) reader.error("'" + key + "' expects one value");
      return textio::parse_real(reader, toks[1], what);
    };
    if (key == "episodes") {
      config.episodes = static_cast<int>(one_int("episodes"));
    } else if (key == "trajectories") {
      config.trajectories_per_episode = static_cast<int>(one_int("trajectories"));
    } else if (key == "minibatch") {
      config.minibatch = static_cast<int>(one_int("minibatch"));
    } else if (key == "update_passes") {
      config.update_passes = static_cast<int>(one_int("update_passes"));
    } else if (key == "clip_eps") {
      config.clip_eps = one_real("clip_eps");
    } else if (key == "lambda_cap") {
      config.lambda_cap = one_real("lambda_cap");
    } else if (key == "lambda_prop") {
      config.lambda_prop = one_real("lambda_prop");
    } else if (key == "actor_lr") {
      config.actor_lr = one_real("actor_lr");
    } else if (key == "reward_lr") {
      config.reward_lr = one_real("reward_lr");
    } else if (key == "gamma") {
      config.gamma = one_real("gamma");
    } else if (key == "seed") {
      if (toks.size() != 2) reader.error("'seed' expects one value");
      std::uint64_t value = 0;
      const auto [ptr, ec] =
          std::from_chars(toks[1].data(), toks[1].data() + toks[1].size(), value);
      if (ec != std::errc() || ptr != toks[1].data() + toks[1].size()) {
        reader.error("expected unsigned integer for seed, got '" + toks[1] + "'");
      }
      config.seed = value;
    } else {
      reader.error("unknown key '" + key + "'");
    }
  }
  try {
    validate(config);
  } catch (const std::exception& e) {
    reader.error(e.what());
  }
  return config;
}

void save_train_config(const TrainConfig& config, const std::string& path) {
  validate(config);
  std::ofstream out(path);
  if (!out) fail("cannot open '" + path + "' for writing");
  write_train_config(config, out);
  out.flush();
  if (!out) fail("failed writing '" + path + "'");
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '" + path + "'");
  return read_train_config(in, path);
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

std::vector<Trajectory> collect(const nets::ActorParams& actor,
                                const env::EnvModel& compiled, int n,
                                std::uint64_t seed, const env::RewardWeights& weights) {
  if (n < 1) fail("collect: need at least one trajectory");
  const long long m = compiled.parcel_count();

  std::vector<env::Env> envs;
  std::vector<rng::Rng> rngs;
  std::vector<Trajectory> out(static_cast<std::size_t>(n));
  envs.reserve(n);
  rngs.reserve(n);
  for (int w = 0; w < n; ++w) {
    envs.emplace_back(compiled, weights);
    rngs.push_back(rng::Rng::derive(seed, {static_cast<std::uint64_t>(w)}));
    out[w].instance_label = compiled.instance().label;
    out[w].seed = seed;
    out[w].worker = w;
    out[w].steps.reserve(m);
  }

  // All workers sit at the same parcel, so each time step is one batched
  // forward; the fixed forward tiles make the per-worker probabilities
  // bitwise equal to a stand-alone evaluation.
  std::vector<env::Observation> observations(static_cast<std::size_t>(n));
  nets::ActorCache cache;
  for (long long t = 0; t < m; ++t) {
    for (int w = 0; w < n; ++w) observations[w] = envs[w].observe();
    const nets::ObsBatch batch = nets::pack(actor.config, observations);
    nets::actor_forward_batch(actor, batch, cache);
    for (int w = 0; w < n; ++w) {
      const int action = rngs[w].sample_weighted(cache.probs.row(w), cache.probs.cols);
      const env::StepRecord record = envs[w].step(action);
      out[w].steps.push_back({std::move(observations[w]), action,
                              std::log(cache.probs.at(w, action)), record.reward});
      out[w].total_cost += record.cost;
    }
  }
  for (int w = 0; w < n; ++w) out[w].assignment_log = envs[w].state().assignment_log;
  return out;
}

std::vector<double> advantages(const std::vector<Trajectory>& trajectories,
                               const nets::RewardNetParams& reward_net) {
  std::vector<const env::Observation*> obs;
  std::vector<double> rewards;
  for (const Trajectory& traj : trajectories) {
    for (const TrajectoryStep& step : traj.steps) {
      obs.push_back(&step.obs);
      rewards.push_back(step.reward);
    }
  }
  std::vector<double> out(obs.size());
  nets::RewardCache cache;
  for (std::size_t begin = 0; begin < obs.size(); begin += kEvalChunk) {
    const std::size_t end = std::min(begin + kEvalChunk, obs.size());
    const std::vector<const env::Observation*> chunk(obs.begin() + begin, obs.begin() + end);
    const nets::ObsBatch batch = nets::pack(reward_net.config, chunk);
    const std::vector<double> predicted = nets::reward_forward_batch(reward_net, batch, cache);
    for (std::size_t i = begin; i < end; ++i) out[i] = rewards[i] - predicted[i - begin];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Updates
// ---------------------------------------------------------------------------

ClipResult clip_objective(const nets::ActorParams& params, const ClipBatch& batch,
                          double clip_eps) {
  const std::size_t count = batch.size();
  if (count == 0) fail("clip_objective: empty batch");
  if (batch.actions.size() != count || batch.behavior_log_probs.size() != count ||
      batch.advantages.size() != count) {
    fail("clip_objective: batch arrays disagree in length");
  }
  if (!(clip_eps > 0.0) || !(clip_eps < 1.0)) fail("clip_objective: clip_eps must lie in (0, 1)");

  const nets::ObsBatch packed = nets::pack(params.config, batch.obs);
  nets::ActorCache cache;
  nets::actor_forward_batch(params, packed, cache);

  ClipResult result;
  result.terms.resize(count);
  result.grads = nets::make_actor_grads(params);
  neural::Tensor2 dprobs(static_cast<int>(count), params.config.n_r);

  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const int action = batch.actions[i];
    const double p = cache.probs.at(static_cast<int>(i), action);
    if (!(p > 0.0)) fail("clip_objective: zero probability at a taken action");
    const double ratio = std::exp(std::log(p) - batch.behavior_log_probs[i]);
    if (!std::isfinite(ratio)) fail("clip_objective: non-finite probability ratio");
    const double advantage = batch.advantages[i];
    // The min is over the ratio and its clipped value, then scaled by the
    // advantage; it collapses to min(rho, 1 + eps) since the lower clip edge
    // never undercuts rho itself.
    const double capped = std::min(ratio, std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps));
    const double term = capped * advantage;
    result.terms[i] = term;
    sum += term;
    // d term / d p = A * rho / p while the raw ratio attains the min; once
    // the clip edge takes over the step contributes no gradient.
    if (ratio <= capped) {
      dprobs.at(static_cast<int>(i), action) =
          advantage * ratio / p / static_cast<double>(count);
    }
  }
  result.objective = sum / static_cast<double>(count);
  nets::actor_backward_batch(params, packed, cache, dprobs, result.grads);
  return result;
}

std::vector<double> fit_reward_net(nets::RewardNetParams& params, neural::AdamState& adam,
                                   const std::vector<const env::Observation*>& obs,
                                   const std::vector<double>& targets, int minibatch) {
  if (obs.empty()) fail("fit_reward_net: empty batch");
  if (obs.size() != targets.size()) fail("fit_reward_net: one target per observation required");
  if (minibatch < 1) fail("fit_reward_net: minibatch must be at least 1");

  std::vector<double> losses;
  nets::RewardCache cache;
  nets::RewardGrads grads = nets::make_reward_grads(params);
  for (std::size_t begin = 0; begin < obs.size(); begin += static_cast<std::size_t>(minibatch)) {
    const std::size_t end = std::min(begin + static_cast<std::size_t>(minibatch), obs.size());
    const std::vector<const env::Observation*> chunk(obs.begin() + begin, obs.begin() + end);
    const nets::ObsBatch packed = nets::pack(params.config, chunk);
    const std::vector<double> predicted = nets::reward_forward_batch(params, packed, cache);

    const auto n = static_cast<double>(end - begin);
    double mse = 0.0;
    std::vector<double> upstream(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      const double diff = predicted[i - begin] - targets[i];
      mse += diff * diff;
      upstream[i - begin] = 2.0 * diff / n;
    }
    mse /= n;
    if (!std::isfinite(mse)) fail("fit_reward_net: non-finite regression loss");
    losses.push_back(mse);

    grads.zero();
    nets::reward_backward_batch(params, packed, cache, upstream, grads);
    neural::adam_step(nets::param_spans(params), nets::grad_spans(grads), adam);
  }
  return losses;
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

namespace {

void negate(nets::TrunkGrads& grads) {
  for (double& v : grads.embed.d_weight.data) v = -v;
  for (double& v : grads.embed.d_bias) v = -v;
  for (neural::DenseGrads& layer : grads.mlp) {
    for (double& v : layer.d_weight.data) v = -v;
    for (double& v : layer.d_bias) v = -v;
  }
}

void negate(nets::ActorGrads& grads) {
  negate(grads.parcel);
  negate(grads.route);
  for (double& v : grads.scorer.d_weight.data) v = -v;
  for (double& v : grads.scorer.d_bias) v = -v;
}

// Subtracts the lambda-weighted constraint consumption of each chosen route
// from the logged rewards (the per-step Lagrangian penalty).
void apply_dual_penalties(const DualState& duals, const env::EnvModel& compiled,
                          std::vector<Trajectory>& trajectories) {
  for (Trajectory& traj : trajectories) {
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const int route_slot = compiled.candidate_route(static_cast<int>(t),
                                                      traj.steps[t].action);
      double penalty = 0.0;
      for (const int k : compiled.route_capacities(route_slot)) penalty += duals.lambda_cap[k];
      for (const int k : compiled.route_proportions(route_slot)) {
        penalty += duals.lambda_prop_upper[k] - duals.lambda_prop_lower[k];
      }
      traj.steps[t].reward -= penalty;
    }
  }
}

TrainResult train_impl(const env::EnvModel& compiled, const TrainConfig& config,
                       DualState* duals, const EpisodeHook& hook) {
  validate(config);
  const nets::NetConfig net_config = nets::config_for(compiled);

  rng::Rng actor_init = rng::Rng::derive(config.seed, {kStreamInit, 0});
  rng::Rng reward_init = rng::Rng::derive(config.seed, {kStreamInit, 1});
  TrainResult result{nets::make_actor(net_config, actor_init),
                     nets::make_reward_net(net_config, reward_init),
                     {}};

  neural::AdamState actor_adam;
  actor_adam.init(nets::span_param_count(nets::param_spans(result.actor)), config.actor_lr);
  neural::AdamState reward_adam;
  reward_adam.init(nets::span_param_count(nets::param_spans(result.reward_net)),
                   config.reward_lr);

  // The primal-dual variant starts from the bare negative-cost reward and
  // adds its own penalties; plain training shapes inside the environment.
  const env::RewardWeights weights =
      duals != nullptr ? env::RewardWeights{0.0, 0.0}
                       : env::RewardWeights{config.lambda_cap, config.lambda_prop};

  const long long m = compiled.parcel_count();
  const auto n_traj = static_cast<double>(config.trajectories_per_episode);

  for (int episode = 0; episode < config.episodes; ++episode) {
    const std::uint64_t collect_seed =
        rng::Rng::derive(config.seed, {kStreamCollect, static_cast<std::uint64_t>(episode)})
            .next_u64();
    std::vector<Trajectory> trajectories = collect(
        result.actor, compiled, config.trajectories_per_episode, collect_seed, weights);
    if (duals != nullptr) apply_dual_penalties(*duals, compiled, trajectories);

    const std::vector<double> adv = advantages(trajectories, result.reward_net);

    EpisodeMetrics metrics;
    metrics.episode = episode;
    for (const Trajectory& traj : trajectories) {
      double shaped_return = 0.0;
      for (const TrajectoryStep& step : traj.steps) shaped_return += step.reward;
      metrics.mean_shaped_return += shaped_return / n_traj;
      metrics.average_cost += traj.total_cost / (n_traj * static_cast<double>(m));
      metrics.violation_rate +=
          env::score_assignment(compiled, traj.assignment_log).violation_rate / n_traj;
    }
    for (const double a : adv) metrics.reward_mse += a * a;
    metrics.reward_mse /= static_cast<double>(adv.size());

    // Flatten the episode buffer once; minibatches index into it.
    std::vector<const env::Observation*> obs_flat;
    std::vector<int> action_flat;
    std::vector<double> logp_flat;
    std::vector<double> reward_flat;
    obs_flat.reserve(adv.size());
    for (const Trajectory& traj : trajectories) {
      for (const TrajectoryStep& step : traj.steps) {
        obs_flat.push_back(&step.obs);
        action_flat.push_back(step.action);
        logp_flat.push_back(step.behavior_log_prob);
        reward_flat.push_back(step.reward);
      }
    }

    rng::Rng shuffle_rng = rng::Rng::derive(
        config.seed, {kStreamActorShuffle, static_cast<std::uint64_t>(episode)});
    std::vector<std::size_t> order(obs_flat.size());
    for (int pass = 0; pass < config.update_passes; ++pass) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      shuffle_rng.shuffle(order);
      for (std::size_t begin = 0; begin < order.size();
           begin += static_cast<std::size_t>(config.minibatch)) {
        const std::size_t end =
            std::min(begin + static_cast<std::size_t>(config.minibatch), order.size());
        ClipBatch minib;
        minib.obs.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
          const std::size_t s = order[i];
          minib.obs.push_back(obs_flat[s]);
          minib.actions.push_back(action_flat[s]);
          minib.behavior_log_probs.push_back(logp_flat[s]);
          minib.advantages.push_back(adv[s]);
        }
        ClipResult step = clip_objective(result.actor, minib, config.clip_eps);
        negate(step.grads);  // Adam descends; the surrogate is ascended
        neural::adam_step(nets::param_spans(result.actor), nets::grad_spans(step.grads),
                          actor_adam);
      }
    }

    rng::Rng reward_rng = rng::Rng::derive(
        config.seed, {kStreamRewardShuffle, static_cast<std::uint64_t>(episode)});
    std::iota(order.begin(), order.end(), std::size_t{0});
    reward_rng.shuffle(order);
    std::vector<const env::Observation*> obs_shuffled(order.size());
    std::vector<double> target_shuffled(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      obs_shuffled[i] = obs_flat[order[i]];
      target_shuffled[i] = reward_flat[order[i]];
    }
    fit_reward_net(result.reward_net, reward_adam, obs_shuffled, target_shuffled,
                   config.minibatch);

    if (duals != nullptr) {
      dual_update(*duals, compiled, measure_consumption(compiled, trajectories));
    }

    result.episodes.push_back(metrics);
    if (hook) hook(metrics, result.actor, result.reward_net);
  }
  return result;
}

}  // namespace

TrainResult train(const env::EnvModel& compiled, const TrainConfig& config,
                  const EpisodeHook& hook) {
  return train_impl(compiled, config, nullptr, hook);
}

DualState make_dual_state(const env::EnvModel& compiled, double eta) {
  if (!std::isfinite(eta) || eta < 0.0) fail("make_dual_state: eta must be finite and nonnegative");
  DualState duals;
  duals.lambda_cap.assign(compiled.capacity_count(), 0.0);
  duals.lambda_prop_upper.assign(compiled.proportion_count(), 0.0);
  duals.lambda_prop_lower.assign(compiled.proportion_count(), 0.0);
  duals.eta = eta;
  duals.consumption_cap.assign(compiled.capacity_count(), 0.0);
  duals.consumption_prop.assign(compiled.proportion_count(), 0.0);
  return duals;
}

Consumption measure_consumption(const env::EnvModel& compiled,
                                const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) fail("measure_consumption: no trajectories");
  Consumption consumption;
  consumption.cap.assign(compiled.capacity_count(), 0.0);
  consumption.prop.assign(compiled.proportion_count(), 0.0);
  consumption.prop_seen.assign(compiled.proportion_count(), 0.0);

  for (const Trajectory& traj : trajectories) {
    if (traj.assignment_log.size() != static_cast<std::size_t>(compiled.parcel_count())) {
      fail("measure_consumption: trajectory does not cover the instance");
    }
    for (std::size_t t = 0; t < traj.assignment_log.size(); ++t) {
      const int route_slot =
          compiled.candidate_route(static_cast<int>(t), traj.assignment_log[t]);
      for (const int k : compiled.route_capacities(route_slot)) consumption.cap[k] += 1.0;
      for (const int k : compiled.route_proportions(route_slot)) consumption.prop[k] += 1.0;
    }
  }
  const auto n = static_cast<double>(trajectories.size());
  for (double& v : consumption.cap) v /= n;
  for (double& v : consumption.prop) v /= n;

  for (int t = 0; t < compiled.parcel_count(); ++t) {
    for (const int k : compiled.parcel_proportions(t)) consumption.prop_seen[k] += 1.0;
  }
  return consumption;
}

void dual_update(DualState& duals, const env::EnvModel& compiled,
                 const Consumption& consumption) {
  if (static_cast<int>(duals.lambda_cap.size()) != compiled.capacity_count() ||
      static_cast<int>(duals.lambda_prop_upper.size()) != compiled.proportion_count() ||
      static_cast<int>(duals.lambda_prop_lower.size()) != compiled.proportion_count()) {
    fail("dual_update: dual state does not match the compiled model");
  }
  if (static_cast<int>(consumption.cap.size()) != compiled.capacity_count() ||
      static_cast<int>(consumption.prop.size()) != compiled.proportion_count()) {
    fail("dual_update: consumption does not match the compiled model");
  }

  for (int k = 0; k < compiled.capacity_count(); ++k) {
    const auto upper = static_cast<double>(compiled.capacity(k).upper_bound);
    const double step = duals.eta / std::max(1.0, upper);
    duals.lambda_cap[k] =
        std::max(0.0, duals.lambda_cap[k] + step * (consumption.cap[k] - upper));
  }
  for (int k = 0; k < compiled.proportion_count(); ++k) {
    const model::ConstraintSpec& spec = compiled.proportion(k);
    const double upper = spec.p_upper * consumption.prop_seen[k];
    const double lower = spec.p_lower * consumption.prop_seen[k];
    duals.lambda_prop_upper[k] =
        std::max(0.0, duals.lambda_prop_upper[k] +
                          duals.eta / std::max(1.0, upper) * (consumption.prop[k] - upper));
    duals.lambda_prop_lower[k] =
        std::max(0.0, duals.lambda_prop_lower[k] +
                          duals.eta / std::max(1.0, lower) * (lower - consumption.prop[k]));
  }
  duals.consumption_cap = consumption.cap;
  duals.consumption_prop = consumption.prop;
}

TrainResult train_ppo_pd(const env::EnvModel& compiled, const TrainConfig& config,
                         DualState& duals, const EpisodeHook& hook) {
  if (static_cast<int>(duals.lambda_cap.size()) != compiled.capacity_count() ||
      static_cast<int>(duals.lambda_prop_upper.size()) != compiled.proportion_count() ||
      static_cast<int>(duals.lambda_prop_lower.size()) != compiled.proportion_count()) {
    fail("train_ppo_pd: dual state does not match the compiled model");
  }
  return train_impl(compiled, config, &duals, hook);
}

}  // namespace opa::ppo
