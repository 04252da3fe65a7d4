#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "opa/datagen.hpp"
#include "opa/env.hpp"
#include "opa/nets.hpp"
#include "opa/ppo.hpp"
#include "opa/rng.hpp"
#include "testutil.hpp"

using namespace opa;
using testutil::capacity;
using testutil::make_instance;
using testutil::make_parcel;
using testutil::make_route;
using testutil::proportion;

namespace {

// Twelve parcels over two routes with a binding hub capacity and a provider
// band, so rewards carry non-trivial shaping terms.
model::Instance fixed_instance() {
  std::vector<model::Parcel> parcels;
  for (int i = 0; i < 12; ++i) {
    const double base = 1.0 + 0.25 * (i % 4);
    parcels.push_back(make_parcel(i, "A", "B", 0.5 + 0.1 * i,
                                  {{"ra", base}, {"rb", base + 0.5}}));
  }
  return make_instance("fixed12",
                       {make_route("ra", {"H"}, "P", "A", "B"),
                        make_route("rb", {"G"}, "Q", "A", "B")},
                       std::move(parcels),
                       {capacity("capH", "H", 5), proportion("bandP", "A", "B", "P", 0.2, 0.8)});
}

model::Instance single_candidate_instance() {
  std::vector<model::Parcel> parcels;
  for (int i = 0; i < 8; ++i) {
    parcels.push_back(make_parcel(i, "A", "B", 1.0, {{"ra", 2.0 + i}}));
  }
  return make_instance("forced8", {make_route("ra", {"H"}, "P", "A", "B")},
                       std::move(parcels), {});
}

// Reduced widths keep finite-difference sweeps fast; shape fields still match
// the compiled instance.
nets::NetConfig small_config(const env::EnvModel& compiled) {
  nets::NetConfig config = nets::config_for(compiled);
  config.embed_dim = 8;
  config.parcel_hidden = 12;
  config.route_hidden1 = 16;
  config.route_hidden2 = 12;
  config.attention_dim = 8;
  config.reward_hidden = 8;
  return config;
}

struct FlatSpan {
  double* data;
  std::size_t size;
};

std::vector<FlatSpan> actor_spans(nets::ActorParams& params) {
  std::vector<FlatSpan> spans;
  for (auto& [ptr, size] : nets::param_spans(params)) spans.push_back({ptr, size});
  return spans;
}

}  // namespace

TEST_CASE("train configs validate and round-trip through text") {
  ppo::TrainConfig config;
  CHECK_NOTHROW(ppo::validate(config));

  config.episodes = 3;
  config.trajectories_per_episode = 7;
  config.minibatch = 512;
  config.update_passes = 2;
  config.clip_eps = 0.15;
  config.lambda_cap = 4.0;
  config.lambda_prop = 120.0;
  config.actor_lr = 5e-4;
  config.reward_lr = 2e-3;
  config.gamma = 0.9;
  config.seed = 123456789;

  std::ostringstream out;
  ppo::write_train_config(config, out);
  std::istringstream in(out.str());
  CHECK(ppo::read_train_config(in, "mem") == config);

  const auto dir = std::filesystem::temp_directory_path() / "opa_ppo_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "train.cfg").string();
  ppo::save_train_config(config, path);
  CHECK(ppo::load_train_config(path) == config);
  std::filesystem::remove_all(dir);

  const auto read = [](const std::string& text) {
    std::istringstream bad(text);
    return ppo::read_train_config(bad, "mem");
  };
  CHECK_THROWS_WITH_AS(read("nope\n"), "mem:1: expected header 'opa-trainconfig v1'",
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(read("opa-trainconfig v1\nepisodes 2\nepisodes 3\nend\n"),
                       "mem:3: duplicate key 'episodes'", std::runtime_error);
  CHECK_THROWS_WITH_AS(read("opa-trainconfig v1\nwidgets 2\nend\n"),
                       "mem:2: unknown key 'widgets'", std::runtime_error);
  CHECK_THROWS_WITH_AS(read("opa-trainconfig v1\nclip_eps 1.0\nend\n"),
                       "mem:3: trainconfig: clip_eps must lie in (0, 1)", std::runtime_error);

  ppo::TrainConfig invalid;
  invalid.episodes = 0;
  CHECK_THROWS_WITH_AS(ppo::validate(invalid), "trainconfig: episodes must be at least 1",
                       std::runtime_error);
  invalid = ppo::TrainConfig{};
  invalid.minibatch = 0;
  CHECK_THROWS_AS(ppo::validate(invalid), std::runtime_error);
  invalid = ppo::TrainConfig{};
  invalid.gamma = 1.5;
  CHECK_THROWS_AS(ppo::validate(invalid), std::runtime_error);
  invalid = ppo::TrainConfig{};
  invalid.lambda_cap = -1.0;
  CHECK_THROWS_AS(ppo::validate(invalid), std::runtime_error);
}

TEST_CASE("collection is deterministic per worker and its bookkeeping is exact") {
  const model::Instance ins = fixed_instance();
  const env::EnvModel compiled(ins);
  rng::Rng init(5);
  const nets::ActorParams actor = nets::make_actor(nets::config_for(compiled), init);

  const auto a = ppo::collect(actor, compiled, 3, 42);
  const auto b = ppo::collect(actor, compiled, 3, 42);
  REQUIRE(a.size() == 3);
  for (int w = 0; w < 3; ++w) {
    CHECK(a[w].instance_label == "fixed12");
    CHECK(a[w].seed == 42);
    CHECK(a[w].worker == w);
    REQUIRE(a[w].steps.size() == ins.parcels.size());
    CHECK(a[w].assignment_log == b[w].assignment_log);
    CHECK(a[w].total_cost == b[w].total_cost);
    for (std::size_t t = 0; t < a[w].steps.size(); ++t) {
      CHECK(a[w].steps[t].action == b[w].steps[t].action);
      CHECK(a[w].steps[t].behavior_log_prob == b[w].steps[t].behavior_log_prob);
      CHECK(a[w].steps[t].reward == b[w].steps[t].reward);
    }
  }

  // Behavior log-probs equal a stand-alone forward pass, bit for bit.
  for (const ppo::Trajectory& traj : a) {
    for (const ppo::TrajectoryStep& step : traj.steps) {
      const std::vector<double> probs = nets::actor_forward(actor, step.obs);
      CHECK(step.behavior_log_prob == std::log(probs[step.action]));
    }
  }

  // Replaying the logged actions reproduces rewards and cost exactly.
  for (const ppo::Trajectory& traj : a) {
    env::Env env(compiled);
    double cost = 0.0;
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const env::StepRecord record = env.step(traj.steps[t].action);
      CHECK(record.reward == traj.steps[t].reward);
      cost += record.cost;
    }
    CHECK(cost == traj.total_cost);
    CHECK(env.state().assignment_log == traj.assignment_log);
  }

  // Worker w depends on (seed, w) only: collecting more workers in one batch
  // does not disturb earlier ones.
  const auto solo = ppo::collect(actor, compiled, 1, 42);
  CHECK(solo[0].assignment_log == a[0].assignment_log);
  for (std::size_t t = 0; t < solo[0].steps.size(); ++t) {
    CHECK(solo[0].steps[t].behavior_log_prob == a[0].steps[t].behavior_log_prob);
  }

  // A different seed changes at least one worker's choices.
  const auto other = ppo::collect(actor, compiled, 3, 43);
  bool any_difference = false;
  for (int w = 0; w < 3; ++w) {
    if (other[w].assignment_log != a[w].assignment_log) any_difference = true;
  }
  CHECK(any_difference);
}

TEST_CASE("single-candidate instances collapse collection to the forced assignment") {
  const model::Instance ins = single_candidate_instance();
  const env::EnvModel compiled(ins);
  rng::Rng init(9);
  const nets::ActorParams actor = nets::make_actor(nets::config_for(compiled), init);

  const auto trajectories = ppo::collect(actor, compiled, 5, 7);
  for (const ppo::Trajectory& traj : trajectories) {
    CHECK(traj.assignment_log == trajectories[0].assignment_log);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const ppo::TrajectoryStep& step = traj.steps[t];
      CHECK(step.action == 0);
      CHECK(step.behavior_log_prob == 0.0);  // probability exactly 1
      CHECK(step.reward == -ins.parcels[t].candidates[0].cost);
    }
  }
}

TEST_CASE("advantages equal reward minus the reward-net prediction") {
  const model::Instance ins = fixed_instance();
  const env::EnvModel compiled(ins);
  rng::Rng init(11);
  const nets::ActorParams actor = nets::make_actor(nets::config_for(compiled), init);
  const nets::RewardNetParams reward_net = nets::make_reward_net(nets::config_for(compiled), init);

  const auto trajectories = ppo::collect(actor, compiled, 4, 3);
  const std::vector<double> adv = ppo::advantages(trajectories, reward_net);
  REQUIRE(adv.size() == 4 * ins.parcels.size());

  std::size_t i = 0;
  double mean_adv = 0.0, mean_reward = 0.0, mean_pred = 0.0;
  for (const ppo::Trajectory& traj : trajectories) {
    for (const ppo::TrajectoryStep& step : traj.steps) {
      const double predicted = nets::reward_forward(reward_net, step.obs);
      CHECK(adv[i] == step.reward - predicted);  // bitwise: fixed-tile forwards
      mean_adv += adv[i];
      mean_reward += step.reward;
      mean_pred += predicted;
      ++i;
    }
  }
  const auto n = static_cast<double>(adv.size());
  CHECK(mean_adv / n == doctest::Approx(mean_reward / n - mean_pred / n).epsilon(1e-12));
}

TEST_CASE("the clip objective obeys the ratio identity and the worked cases") {
  const model::Instance ins = fixed_instance();
  const env::EnvModel compiled(ins);
  rng::Rng init(13);
  const nets::ActorParams actor = nets::make_actor(nets::config_for(compiled), init);
  const nets::RewardNetParams reward_net = nets::make_reward_net(nets::config_for(compiled), init);

  const auto trajectories = ppo::collect(actor, compiled, 2, 21);
  const std::vector<double> adv = ppo::advantages(trajectories, reward_net);

  ppo::ClipBatch batch;
  std::size_t i = 0;
  for (const ppo::Trajectory& traj : trajectories) {
    for (const ppo::TrajectoryStep& step : traj.steps) {
      batch.obs.push_back(&step.obs);
      batch.actions.push_back(step.action);
      batch.behavior_log_probs.push_back(step.behavior_log_prob);
      batch.advantages.push_back(adv[i++]);
    }
  }

  // At unchanged parameters every ratio is exactly 1 and the objective is the
  // batch-mean advantage, bit for bit.
  const ppo::ClipResult at_behavior = ppo::clip_objective(actor, batch, 0.2);
  double sum = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    CHECK(at_behavior.terms[s] == batch.advantages[s]);
    sum += batch.advantages[s];
  }
  CHECK(at_behavior.objective == sum / static_cast<double>(batch.size()));

  // Worked scalar cases; the behavior log-prob is offset so the ratio lands
  // on the wanted value (ratio = exp(log p - behavior)).
  const auto scalar_case = [&](double ratio, double advantage) {
    const std::vector<double> probs = nets::actor_forward(actor, *batch.obs[0]);
    ppo::ClipBatch one;
    one.obs.push_back(batch.obs[0]);
    one.actions.push_back(batch.actions[0]);
    one.behavior_log_probs.push_back(std::log(probs[batch.actions[0]]) - std::log(ratio));
    one.advantages.push_back(advantage);
    return ppo::clip_objective(actor, one, 0.2);
  };
  CHECK(scalar_case(1.5, 1.0).objective == doctest::Approx(1.2).epsilon(1e-12));
  CHECK(scalar_case(0.5, -1.0).objective == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(scalar_case(1.5, -1.0).objective == doctest::Approx(-1.2).epsilon(1e-12));
  CHECK(scalar_case(0.5, 1.0).objective == doctest::Approx(0.5).epsilon(1e-12));

  // Above the clip edge the step contributes no gradient.
  const ppo::ClipResult clipped = scalar_case(1.5, 1.0);
  bool all_zero = true;
  for (const double v : clipped.grads.scorer.d_weight.data) {
    if (v != 0.0) all_zero = false;
  }
  CHECK(all_zero);
  const ppo::ClipResult active = scalar_case(0.5, 1.0);
  bool any_nonzero = false;
  for (const double v : active.grads.scorer.d_weight.data) {
    if (v != 0.0) any_nonzero = true;
  }
  CHECK(any_nonzero);

  // Every term respects the envelope spanned by the ratio and both clip
  // edges, whatever branch is taken.
  ppo::ClipBatch shifted = batch;
  rng::Rng jitter(99);
  for (std::size_t s = 0; s < shifted.size(); ++s) {
    shifted.behavior_log_probs[s] += jitter.uniform(-0.7, 0.7);
  }
  const ppo::ClipResult mixed = ppo::clip_objective(actor, shifted, 0.2);
  for (std::size_t s = 0; s < shifted.size(); ++s) {
    const std::vector<double> probs = nets::actor_forward(actor, *shifted.obs[s]);
    const double ratio =
        std::exp(std::log(probs[shifted.actions[s]]) - shifted.behavior_log_probs[s]);
    const double a = shifted.advantages[s];
    const double lo = std::min({ratio * a, 0.8 * a, 1.2 * a});
    const double hi = std::max({ratio * a, 0.8 * a, 1.2 * a});
    CHECK(mixed.terms[s] >= lo - 1e-12);
    CHECK(mixed.terms[s] <= hi + 1e-12);
  }

  CHECK_THROWS_AS(ppo::clip_objective(actor, ppo::ClipBatch{}, 0.2), std::runtime_error);
  CHECK_THROWS_AS(ppo::clip_objective(actor, batch, 1.0), std::runtime_error);
}

TEST_CASE("the clip gradient matches finite differences") {
  const model::Instance ins = fixed_instance();
  const env::EnvModel compiled(ins);
  rng::Rng init(17);
  nets::ActorParams actor = nets::make_actor(small_config(compiled), init);

  const nets::ActorParams behavior = actor;
  auto trajectories = ppo::collect(behavior, compiled, 1, 8);
  ppo::ClipBatch batch;
  rng::Rng jitter(31);
  for (ppo::Trajectory& traj : trajectories) {
    for (ppo::TrajectoryStep& step : traj.steps) {
      batch.obs.push_back(&step.obs);
      batch.actions.push_back(step.action);
      // Mixed ratios, including some past the clip edge (zero-gradient side).
      batch.behavior_log_probs.push_back(step.behavior_log_prob + jitter.uniform(-0.5, 0.5));
      batch.advantages.push_back(jitter.uniform(-2.0, 2.0));
    }
  }

  const ppo::ClipResult analytic = ppo::clip_objective(actor, batch, 0.2);
  std::vector<double> flat_grads;
  for (const auto& [ptr, size] : nets::grad_spans(analytic.grads)) {
    flat_grads.insert(flat_grads.end(), ptr, ptr + size);
  }

  const double h = 1e-5;
  std::size_t flat_index = 0;
  int checked = 0;
  for (FlatSpan span : actor_spans(actor)) {
    for (std::size_t j = 0; j < span.size; ++j, ++flat_index) {
      const double saved = span.data[j];
      span.data[j] = saved + h;
      const double up = ppo::clip_objective(actor, batch, 0.2).objective;
      span.data[j] = saved - h;
      const double down = ppo::clip_objective(actor, batch, 0.2).objective;
      span.data[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double tolerance = std::max(1e-6, 1e-4 * std::abs(numeric));
      if (std::abs(flat_grads[flat_index] - numeric) > tolerance) {
        CAPTURE(flat_index);
        CAPTURE(numeric);
        CAPTURE(flat_grads[flat_index]);
        REQUIRE(std::abs(flat_grads[flat_index] - numeric) <= tolerance);
      }
      ++checked;
    }
  }
  CHECK(checked == static_cast<int>(flat_grads.size()));
}

TEST_CASE("reward-net fitting honors the scalar cases and converges on constants") {
  const model::Instance ins = fixed_instance();
  const env::EnvModel compiled(ins);
  rng::Rng init(23);
  const nets::NetConfig config = small_config(compiled);

  const auto trajectories =
      ppo::collect(nets::make_actor(nets::config_for(compiled), init), compiled, 6, 77);
  std::vector<const env::Observation*> observations;
  for (const ppo::Trajectory& traj : trajectories) {
    for (const ppo::TrajectoryStep& step : traj.steps) observations.push_back(&step.obs);
  }

  // Size-1 batch: the reported loss is the squared error at the old params.
  {
    nets::RewardNetParams net = nets::make_reward_net(config, init);
    const double before = nets::reward_forward(net, *observations[0]);
    neural::AdamState adam;
    adam.init(nets::span_param_count(nets::param_spans(net)), 1e-3);
    const std::vector<double> losses =
        ppo::fit_reward_net(net, adam, {observations[0]}, {3.0}, 1);
    REQUIRE(losses.size() == 1);
    CHECK(losses[0] == (before - 3.0) * (before - 3.0));
  }

  // Zero learning rate leaves parameters untouched.
  {
    nets::RewardNetParams net = nets::make_reward_net(config, init);
    const nets::RewardNetParams snapshot = net;
    neural::AdamState adam;
    adam.init(nets::span_param_count(nets::param_spans(net)), 0.0);
    const std::vector<double> targets(observations.size(), 1.0);
    ppo::fit_reward_net(net, adam, observations, targets, 16);
    CHECK(net == snapshot);
  }

  // Constant targets: MSE collapses below 1% of its starting value. The
  // output bias must travel ~3.7, so the pass budget allows for Adam's
  // roughly lr-per-step movement.
  {
    nets::RewardNetParams net = nets::make_reward_net(config, init);
    neural::AdamState adam;
    adam.init(nets::span_param_count(nets::param_spans(net)), 1e-2);
    const std::vector<double> targets(observations.size(), 3.7);
    double first = 0.0, last = 0.0;
    for (int pass = 0; pass < 200; ++pass) {
      const std::vector<double> losses =
          ppo::fit_reward_net(net, adam, observations, targets, 32);
      if (pass == 0) first = losses.front();
      last = losses.back();
    }
    CHECK(first > 0.0);
    CHECK(last < 0.01 * first);
  }

  nets::RewardNetParams net = nets::make_reward_net(config, init);
  neural::AdamState adam;
  adam.init(nets::span_param_count(nets::param_spans(net)), 1e-3);
  CHECK_THROWS_AS(ppo::fit_reward_net(net, adam, {}, {}, 4), std::runtime_error);
  CHECK_THROWS_AS(ppo::fit_reward_net(net, adam, {observations[0]}, {1.0, 2.0}, 4),
                  std::runtime_error);
  CHECK_THROWS_AS(ppo::fit_reward_net(net, adam, {observations[0]}, {1.0}, 0),
                  std::runtime_error);
}

TEST_CASE("training is deterministic and degenerates correctly") {
  const model::Instance ins = fixed_instance();
  const env::EnvModel compiled(ins);

  ppo::TrainConfig config;
  config.episodes = 2;
  config.trajectories_per_episode = 3;
  config.minibatch = 16;
  config.seed = 31;

  int hook_calls = 0;
  const ppo::TrainResult a = ppo::train(
      compiled, config,
      [&](const ppo::EpisodeMetrics& metrics, const nets::ActorParams&,
          const nets::RewardNetParams&) {
        CHECK(metrics.episode == hook_calls);
        ++hook_calls;
      });
  CHECK(hook_calls == 2);
  const ppo::TrainResult b = ppo::train(compiled, config);

  REQUIRE(a.episodes.size() == 2);
  for (std::size_t e = 0; e < a.episodes.size(); ++e) {
    CHECK(a.episodes[e].mean_shaped_return == b.episodes[e].mean_shaped_return);
    CHECK(a.episodes[e].average_cost == b.episodes[e].average_cost);
    CHECK(a.episodes[e].violation_rate == b.episodes[e].violation_rate);
    CHECK(a.episodes[e].reward_mse == b.episodes[e].reward_mse);
    CHECK(std::isfinite(a.episodes[e].reward_mse));
  }
  CHECK(a.actor == b.actor);
  CHECK(a.reward_net == b.reward_net);

  // Single-candidate instance: the assignment is forced, so the average cost
  // is pinned and the actor never moves (zero policy gradient through a
  // one-entry softmax).
  const model::Instance forced = single_candidate_instance();
  const env::EnvModel forced_compiled(forced);
  double forced_cost = 0.0;
  for (const model::Parcel& parcel : forced.parcels) forced_cost += parcel.candidates[0].cost;
  forced_cost /= static_cast<double>(forced.parcels.size());

  std::vector<nets::ActorParams> snapshots;
  const ppo::TrainResult result = ppo::train(
      forced_compiled, config,
      [&](const ppo::EpisodeMetrics&, const nets::ActorParams& actor,
          const nets::RewardNetParams&) { snapshots.push_back(actor); });
  for (const ppo::EpisodeMetrics& metrics : result.episodes) {
    CHECK(metrics.average_cost == doctest::Approx(forced_cost).epsilon(1e-12));
    CHECK(metrics.violation_rate == 0.0);
  }
  REQUIRE(snapshots.size() == 2);
  CHECK(snapshots[0] == snapshots[1]);
  CHECK(result.actor == snapshots[1]);
}

TEST_CASE("ppo-pd with zero duals and zero eta reduces to unshaped training") {
  const model::Instance ins = fixed_instance();
  const env::EnvModel compiled(ins);

  ppo::TrainConfig config;
  config.episodes = 2;
  config.trajectories_per_episode = 3;
  config.minibatch = 16;
  config.seed = 47;
  config.lambda_cap = 0.0;
  config.lambda_prop = 0.0;

  const ppo::TrainResult plain = ppo::train(compiled, config);
  ppo::DualState duals = ppo::make_dual_state(compiled, 0.0);
  const ppo::TrainResult pd = ppo::train_ppo_pd(compiled, config, duals);

  REQUIRE(plain.episodes.size() == pd.episodes.size());
  for (std::size_t e = 0; e < plain.episodes.size(); ++e) {
    CHECK(plain.episodes[e].mean_shaped_return == pd.episodes[e].mean_shaped_return);
    CHECK(plain.episodes[e].average_cost == pd.episodes[e].average_cost);
    CHECK(plain.episodes[e].reward_mse == pd.episodes[e].reward_mse);
  }
  CHECK(plain.actor == pd.actor);
  CHECK(plain.reward_net == pd.reward_net);
  for (const double v : duals.lambda_cap) CHECK(v == 0.0);
  for (const double v : duals.lambda_prop_upper) CHECK(v == 0.0);
  for (const double v : duals.lambda_prop_lower) CHECK(v == 0.0);
}

TEST_CASE("dual updates project onto the nonnegative orthant and track consumption") {
  const model::Instance ins = fixed_instance();  // capH (U=5) and bandP [0.2, 0.8]
  const env::EnvModel compiled(ins);
  REQUIRE(compiled.capacity_count() == 1);
  REQUIRE(compiled.proportion_count() == 1);

  ppo::DualState duals = ppo::make_dual_state(compiled, 0.5);
  ppo::Consumption consumption;
  consumption.cap = {9.0};        // above U=5
  consumption.prop = {11.0};      // share 11/12 above 0.8
  consumption.prop_seen = {12.0};

  ppo::dual_update(duals, compiled, consumption);
  CHECK(duals.lambda_cap[0] == doctest::Approx(0.5 / 5.0 * (9.0 - 5.0)).epsilon(1e-12));
  CHECK(duals.lambda_prop_upper[0] ==
        doctest::Approx(0.5 / (0.8 * 12.0) * (11.0 - 0.8 * 12.0)).epsilon(1e-12));
  CHECK(duals.lambda_prop_lower[0] == 0.0);
  CHECK(duals.consumption_cap == std::vector<double>{9.0});
  CHECK(duals.consumption_prop == std::vector<double>{11.0});

  // Persistently satisfied constraints decay to zero and stay there.
  consumption.cap = {1.0};
  consumption.prop = {6.0};  // inside the band
  for (int i = 0; i < 50; ++i) ppo::dual_update(duals, compiled, consumption);
  CHECK(duals.lambda_cap[0] == 0.0);
  CHECK(duals.lambda_prop_upper[0] == 0.0);
  CHECK(duals.lambda_prop_lower[0] == 0.0);

  // Starvation below the band raises the lower multiplier instead.
  consumption.prop = {1.0};  // share 1/12 below 0.2
  ppo::dual_update(duals, compiled, consumption);
  CHECK(duals.lambda_prop_lower[0] ==
        doctest::Approx(0.5 / (0.2 * 12.0) * (0.2 * 12.0 - 1.0)).epsilon(1e-12));

  ppo::Consumption wrong;
  wrong.cap = {1.0, 2.0};
  wrong.prop = {1.0};
  wrong.prop_seen = {12.0};
  CHECK_THROWS_AS(ppo::dual_update(duals, compiled, wrong), std::runtime_error);
}

TEST_CASE("measured consumption counts route incidences per trajectory") {
  const model::Instance ins = fixed_instance();
  const env::EnvModel compiled(ins);
  rng::Rng init(29);
  const nets::ActorParams actor = nets::make_actor(nets::config_for(compiled), init);
  const auto trajectories = ppo::collect(actor, compiled, 3, 15);

  const ppo::Consumption consumption = ppo::measure_consumption(compiled, trajectories);
  double h_total = 0.0, p_total = 0.0;
  for (const ppo::Trajectory& traj : trajectories) {
    for (const int action : traj.assignment_log) {
      if (action == 0) {  // candidate 0 is route ra via hub H, provider P
        h_total += 1.0;
        p_total += 1.0;
      }
    }
  }
  CHECK(consumption.cap[0] == doctest::Approx(h_total / 3.0).epsilon(1e-12));
  CHECK(consumption.prop[0] == doctest::Approx(p_total / 3.0).epsilon(1e-12));
  CHECK(consumption.prop_seen[0] == 12.0);  // every parcel shares the banded OD
}

TEST_CASE("ppo-pd grows the dual of the overloaded hub fastest") {
  // Hub H is cheap with a tight bound; hub G is costlier with a slack bound.
  std::vector<model::Parcel> parcels;
  for (int i = 0; i < 20; ++i) {
    parcels.push_back(make_parcel(i, "A", "B", 1.0, {{"rH", 1.0}, {"rG", 2.0}}));
  }
  const model::Instance ins = make_instance(
      "tight",
      {make_route("rH", {"H"}, "P", "A", "B"), make_route("rG", {"G"}, "P", "A", "B")},
      std::move(parcels), {capacity("capG", "G", 50), capacity("capH", "H", 2)});
  const env::EnvModel compiled(ins);

  ppo::TrainConfig config;
  config.episodes = 10;
  config.trajectories_per_episode = 4;
  config.minibatch = 64;
  config.seed = 3;

  ppo::DualState duals = ppo::make_dual_state(compiled, 1e-4);
  ppo::train_ppo_pd(compiled, config, duals);

  int slot_h = -1, slot_g = -1;
  for (int k = 0; k < compiled.capacity_count(); ++k) {
    if (compiled.capacity(k).id == "capH") slot_h = k;
    if (compiled.capacity(k).id == "capG") slot_g = k;
  }
  REQUIRE(slot_h >= 0);
  REQUIRE(slot_g >= 0);
  CHECK(duals.lambda_cap[slot_h] > 0.0);
  CHECK(duals.lambda_cap[slot_h] > duals.lambda_cap[slot_g]);
  CHECK(duals.lambda_cap[slot_g] == 0.0);  // never above its slack bound
}

TEST_CASE("training improves the shaped return on a small generated day") {
  // Capacity-only day: the proportion penalty weight (300) would otherwise
  // dominate the return with sampling noise and hide the trend.
  datagen::GenConfig gen;
  gen.seed = 71;
  gen.label = "learn";
  gen.n_parcels = 200;
  gen.n_hubs = 6;
  gen.n_od_pairs = 4;
  gen.n_providers = 2;
  gen.proportion_fraction = 0.0;
  const model::Instance ins = datagen::generate(gen);
  const env::EnvModel compiled(ins);

  ppo::TrainConfig config;
  config.episodes = 12;
  config.trajectories_per_episode = 8;
  config.minibatch = 128;

  int improved = 0;
  for (const std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    config.seed = seed;
    const ppo::TrainResult result = ppo::train(compiled, config);
    const double first = result.episodes.front().mean_shaped_return;
    // Mean over the final three episodes smooths per-episode sampling noise.
    double tail = 0.0;
    const std::size_t n = result.episodes.size();
    for (std::size_t i = n - 3; i < n; ++i) {
      tail += result.episodes[i].mean_shaped_return;
    }
    tail /= 3.0;
    if (tail >= first + 100.0) ++improved;
  }
  CHECK(improved >= 2);
}
