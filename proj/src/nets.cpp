#include "opa/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace opa::nets {

using neural::Activation;
using neural::DenseLayer;
using neural::Tensor2;

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error(what); }

void check_config(const NetConfig& c) {
  if (c.n_r < 1 || c.location_count < 1 || c.provider_count < 1 || c.embed_dim < 1 ||
      c.parcel_hidden < 1 || c.route_hidden1 < 1 || c.route_hidden2 < 1 || c.attention_dim < 1 ||
      c.reward_hidden < 1)
    fail("invalid network configuration: all sizes must be >= 1");
}

Trunk build_parcel_trunk(const NetConfig& c) {
  Trunk t;
  t.embed = DenseLayer(c.embed_dim, c.parcel_input_dim(), Activation::Identity);
  t.mlp.emplace_back(c.parcel_hidden, c.embed_dim, Activation::ReLU);
  return t;
}

Trunk build_route_trunk(const NetConfig& c) {
  Trunk t;
  t.embed = DenseLayer(c.embed_dim, c.route_input_dim(), Activation::Identity);
  t.mlp.emplace_back(c.route_hidden1, c.embed_dim, Activation::ReLU);
  t.mlp.emplace_back(c.route_hidden2, c.route_hidden1, Activation::ReLU);
  return t;
}

void glorot_trunk(Trunk& t, rng::Rng& rng) {
  neural::glorot_init(t.embed, rng);
  for (DenseLayer& layer : t.mlp) neural::glorot_init(layer, rng);
}

const Tensor2& trunk_forward(const Trunk& t, const Tensor2& x, TrunkCache& c) {
  c.outs.resize(1 + t.mlp.size());
  neural::dense_forward_batch(t.embed, x, c.outs[0]);
  for (std::size_t i = 0; i < t.mlp.size(); ++i)
    neural::dense_forward_batch(t.mlp[i], c.outs[i], c.outs[i + 1]);
  return c.outs.back();
}

// `d_out` is consumed. Parameter gradients accumulate into `g`.
void trunk_backward(const Trunk& t, const Tensor2& x, TrunkCache& c, Tensor2& d_out,
                    TrunkGrads& g, Tensor2* dx) {
  if (g.mlp.size() != t.mlp.size()) fail("trunk gradients not initialized for this trunk");
  Tensor2 cur = std::move(d_out);
  Tensor2 prev;
  for (std::size_t i = t.mlp.size(); i-- > 0;) {
    neural::dense_backward_batch(t.mlp[i], c.outs[i], c.outs[i + 1], cur, g.mlp[i], &prev);
    std::swap(cur, prev);
  }
  neural::dense_backward_batch(t.embed, x, c.outs[0], cur, g.embed, dx);
}

TrunkGrads make_trunk_grads(const Trunk& t) {
  TrunkGrads g;
  g.embed.init_like(t.embed);
  g.mlp.resize(t.mlp.size());
  for (std::size_t i = 0; i < t.mlp.size(); ++i) g.mlp[i].init_like(t.mlp[i]);
  return g;
}

void check_batch(const NetConfig& c, const ObsBatch& batch) {
  if (batch.parcel_in.cols != c.parcel_input_dim() || batch.route_in.cols != c.route_input_dim() ||
      batch.n_r != c.n_r)
    fail("observation batch was packed for a different network configuration");
}

double dot(const double* a, const double* b, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration and packing
// ---------------------------------------------------------------------------

NetConfig config_for(const env::EnvModel& compiled_model) {
  NetConfig c;
  c.n_r = compiled_model.n_r();
  c.location_count = compiled_model.location_count();
  c.provider_count = compiled_model.provider_count();
  check_config(c);
  return c;
}

int categorical_index(double slot_value, int count) {
  const long idx = std::lround(slot_value * (count - 1));
  if (idx < 0 || idx >= count)
    fail("categorical slot value " + std::to_string(slot_value) + " outside vocabulary of " +
         std::to_string(count));
  return static_cast<int>(idx);
}

ObsBatch pack(const NetConfig& config, const std::vector<const env::Observation*>& observations) {
  check_config(config);
  ObsBatch batch;
  batch.count = static_cast<int>(observations.size());
  batch.n_r = config.n_r;
  batch.parcel_in.resize(batch.count, config.parcel_input_dim());
  batch.obs_row_begin.assign(static_cast<std::size_t>(batch.count) + 1, 0);
  batch.masks.resize(observations.size());

  int rows = 0;
  for (const env::Observation* obs : observations) {
    int real = 0;
    for (std::uint8_t m : obs->mask) real += m ? 1 : 0;
    if (real == 0) fail("observation has no real candidate");
    rows += real;
  }
  batch.route_in.resize(rows, config.route_input_dim());
  batch.route_owner.resize(rows);
  batch.row_slot.resize(rows);

  const int L = config.location_count;
  const int P = config.provider_count;
  int row = 0;
  for (int o = 0; o < batch.count; ++o) {
    const env::Observation& obs = *observations[o];
    if (static_cast<int>(obs.parcel_feat.size()) != env::kParcelFeatDim ||
        obs.route_feats.cols != env::kRouteFeatDim ||
        obs.route_feats.rows != static_cast<int>(obs.mask.size()) ||
        obs.route_feats.rows != config.n_r)
      fail("observation shape does not match the network configuration");

    // Parcel row: weight, one-hot origin, one-hot destination, slot fraction.
    double* prow = batch.parcel_in.row(o);
    prow[0] = obs.parcel_feat[0];
    prow[1 + categorical_index(obs.parcel_feat[1], L)] = 1.0;
    prow[1 + L + categorical_index(obs.parcel_feat[2], L)] = 1.0;
    prow[1 + 2 * L] = obs.parcel_feat[3];

    batch.obs_row_begin[o] = row;
    batch.masks[o] = obs.mask;
    for (int slot = 0; slot < config.n_r; ++slot) {
      if (!obs.mask[slot]) continue;
      // Route row: cost, utilization, band deviation, one-hot provider.
      double* rrow = batch.route_in.row(row);
      rrow[0] = obs.route_feats.at(slot, 0);
      rrow[1] = obs.route_feats.at(slot, 1);
      rrow[2] = obs.route_feats.at(slot, 2);
      rrow[3 + categorical_index(obs.route_feats.at(slot, 3), P)] = 1.0;
      batch.route_owner[row] = o;
      batch.row_slot[row] = slot;
      ++row;
    }
  }
  batch.obs_row_begin[batch.count] = row;
  return batch;
}

ObsBatch pack(const NetConfig& config, const std::vector<env::Observation>& observations) {
  std::vector<const env::Observation*> ptrs;
  ptrs.reserve(observations.size());
  for (const env::Observation& obs : observations) ptrs.push_back(&obs);
  return pack(config, ptrs);
}

ObsBatch pack_one(const NetConfig& config, const env::Observation& obs) {
  return pack(config, std::vector<const env::Observation*>{&obs});
}

// ---------------------------------------------------------------------------
// Grad containers
// ---------------------------------------------------------------------------

void TrunkGrads::zero() {
  embed.zero();
  for (neural::DenseGrads& g : mlp) g.zero();
}

void ActorGrads::zero() {
  parcel.zero();
  route.zero();
  scorer.zero();
}

void RewardGrads::zero() {
  parcel.zero();
  route.zero();
  d_wq.zero();
  d_wk.zero();
  d_wv.zero();
  out_hidden.zero();
  out_linear.zero();
}

ActorGrads make_actor_grads(const ActorParams& params) {
  ActorGrads g;
  g.parcel = make_trunk_grads(params.parcel);
  g.route = make_trunk_grads(params.route);
  g.scorer.init_like(params.scorer);
  return g;
}

RewardGrads make_reward_grads(const RewardNetParams& params) {
  RewardGrads g;
  g.parcel = make_trunk_grads(params.parcel);
  g.route = make_trunk_grads(params.route);
  g.d_wq.resize(params.wq.rows, params.wq.cols);
  g.d_wk.resize(params.wk.rows, params.wk.cols);
  g.d_wv.resize(params.wv.rows, params.wv.cols);
  g.out_hidden.init_like(params.out_hidden);
  g.out_linear.init_like(params.out_linear);
  return g;
}

// ---------------------------------------------------------------------------
// Actor
// ---------------------------------------------------------------------------

ActorParams make_actor(const NetConfig& config, rng::Rng& rng) {
  check_config(config);
  ActorParams p;
  p.config = config;
  p.parcel = build_parcel_trunk(config);
  p.route = build_route_trunk(config);
  p.scorer =
      DenseLayer(1, config.parcel_hidden + config.route_hidden2, Activation::Identity);
  glorot_trunk(p.parcel, rng);
  glorot_trunk(p.route, rng);
  neural::glorot_init(p.scorer, rng);
  return p;
}

void actor_forward_batch(const ActorParams& params, const ObsBatch& batch, ActorCache& cache) {
  check_batch(params.config, batch);
  const Tensor2& hp = trunk_forward(params.parcel, batch.parcel_in, cache.parcel);
  const Tensor2& hr = trunk_forward(params.route, batch.route_in, cache.route);
  const int ph = params.config.parcel_hidden;
  const int rh = params.config.route_hidden2;
  const int rows = batch.total_rows();

  cache.concat.resize(rows, ph + rh);
  for (int r = 0; r < rows; ++r) {
    double* out = cache.concat.row(r);
    std::memcpy(out, hp.row(batch.route_owner[r]), sizeof(double) * static_cast<std::size_t>(ph));
    std::memcpy(out + ph, hr.row(r), sizeof(double) * static_cast<std::size_t>(rh));
  }
  neural::dense_forward_batch(params.scorer, cache.concat, cache.logits);

  cache.probs.resize(batch.count, batch.n_r);
  std::vector<double> logits(static_cast<std::size_t>(batch.n_r));
  for (int o = 0; o < batch.count; ++o) {
    std::fill(logits.begin(), logits.end(), 0.0);
    for (int r = batch.obs_row_begin[o]; r < batch.obs_row_begin[o + 1]; ++r)
      logits[static_cast<std::size_t>(batch.row_slot[r])] = cache.logits.at(r, 0);
    const std::vector<double> probs = neural::masked_softmax(logits, batch.masks[o]);
    std::copy(probs.begin(), probs.end(), cache.probs.row(o));
  }
}

std::vector<double> actor_forward(const ActorParams& params, const env::Observation& obs) {
  const ObsBatch batch = pack_one(params.config, obs);
  ActorCache cache;
  actor_forward_batch(params, batch, cache);
  return {cache.probs.row(0), cache.probs.row(0) + cache.probs.cols};
}

void actor_backward_batch(const ActorParams& params, const ObsBatch& batch, ActorCache& cache,
                          const neural::Tensor2& dprobs, ActorGrads& grads, Tensor2* dx_route,
                          Tensor2* dx_parcel) {
  check_batch(params.config, batch);
  if (dprobs.rows != batch.count || dprobs.cols != batch.n_r)
    fail("actor_backward_batch: upstream shape mismatch");
  const int rows = batch.total_rows();
  const int ph = params.config.parcel_hidden;
  const int rh = params.config.route_hidden2;

  // Masked-softmax Jacobian: dlogit_j = p_j * (dp_j - sum_i dp_i p_i).
  Tensor2 dlogits(rows, 1);
  for (int o = 0; o < batch.count; ++o) {
    const double* p = cache.probs.row(o);
    const double* dp = dprobs.row(o);
    double mix = 0.0;
    for (int j = 0; j < batch.n_r; ++j) mix += dp[j] * p[j];
    for (int r = batch.obs_row_begin[o]; r < batch.obs_row_begin[o + 1]; ++r) {
      const int slot = batch.row_slot[r];
      dlogits.at(r, 0) = p[slot] * (dp[slot] - mix);
    }
  }

  Tensor2 dconcat;
  neural::dense_backward_batch(params.scorer, cache.concat, cache.logits, dlogits, grads.scorer,
                               &dconcat);

  Tensor2 dhp(batch.count, ph);
  Tensor2 dhr(rows, rh);
  for (int r = 0; r < rows; ++r) {
    const double* src = dconcat.row(r);
    double* acc = dhp.row(batch.route_owner[r]);
    for (int j = 0; j < ph; ++j) acc[j] += src[j];
    std::memcpy(dhr.row(r), src + ph, sizeof(double) * static_cast<std::size_t>(rh));
  }
  trunk_backward(params.route, batch.route_in, cache.route, dhr, grads.route, dx_route);
  trunk_backward(params.parcel, batch.parcel_in, cache.parcel, dhp, grads.parcel, dx_parcel);
}

// ---------------------------------------------------------------------------
// Reward network
// ---------------------------------------------------------------------------

RewardNetParams make_reward_net(const NetConfig& config, rng::Rng& rng) {
  check_config(config);
  RewardNetParams p;
  p.config = config;
  p.parcel = build_parcel_trunk(config);
  p.route = build_route_trunk(config);
  p.wq.resize(config.attention_dim, config.parcel_hidden);
  p.wk.resize(config.attention_dim, config.route_hidden2);
  p.wv.resize(config.attention_dim, config.route_hidden2);
  p.out_hidden = DenseLayer(config.reward_hidden, config.attention_dim, Activation::Sigmoid);
  p.out_linear = DenseLayer(1, config.reward_hidden, Activation::Identity);
  glorot_trunk(p.parcel, rng);
  glorot_trunk(p.route, rng);
  neural::glorot_init(p.wq, rng);
  neural::glorot_init(p.wk, rng);
  neural::glorot_init(p.wv, rng);
  neural::glorot_init(p.out_hidden, rng);
  neural::glorot_init(p.out_linear, rng);
  return p;
}

void attention_combine(const double* q, const Tensor2& k, const Tensor2& v, int begin, int end,
                       int att_dim, bool normalized, double* v_out, double* scores,
                       double* weights) {
  const int n = end - begin;
  for (int i = 0; i < n; ++i) scores[i] = dot(q, k.row(begin + i), att_dim);
  if (normalized) {
    double max_score = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) max_score = std::max(max_score, scores[i]);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      weights[i] = std::exp(scores[i] - max_score);
      total += weights[i];
    }
    for (int i = 0; i < n; ++i) weights[i] /= total;
  } else {
    std::copy(scores, scores + n, weights);
  }
  std::fill(v_out, v_out + att_dim, 0.0);
  for (int i = 0; i < n; ++i) {
    const double w = weights[i];
    const double* vrow = v.row(begin + i);
    for (int j = 0; j < att_dim; ++j) v_out[j] += w * vrow[j];
  }
}

std::vector<double> reward_forward_batch(const RewardNetParams& params, const ObsBatch& batch,
                                         RewardCache& cache) {
  check_batch(params.config, batch);
  const Tensor2& hp = trunk_forward(params.parcel, batch.parcel_in, cache.parcel);
  const Tensor2& hr = trunk_forward(params.route, batch.route_in, cache.route);
  const int att = params.config.attention_dim;
  const int rows = batch.total_rows();

  neural::linear_forward_batch(params.wq, hp, cache.q);
  neural::linear_forward_batch(params.wk, hr, cache.k);
  neural::linear_forward_batch(params.wv, hr, cache.v);

  cache.scores.assign(static_cast<std::size_t>(rows), 0.0);
  cache.weights.assign(static_cast<std::size_t>(rows), 0.0);
  cache.vsum.resize(batch.count, att);
  for (int o = 0; o < batch.count; ++o) {
    const int b = batch.obs_row_begin[o];
    const int e = batch.obs_row_begin[o + 1];
    attention_combine(cache.q.row(o), cache.k, cache.v, b, e, att,
                      params.config.normalized_attention, cache.vsum.row(o), &cache.scores[b],
                      &cache.weights[b]);
  }

  neural::dense_forward_batch(params.out_hidden, cache.vsum, cache.hidden);
  neural::dense_forward_batch(params.out_linear, cache.hidden, cache.out);
  std::vector<double> out(static_cast<std::size_t>(batch.count));
  for (int o = 0; o < batch.count; ++o) out[o] = cache.out.at(o, 0);
  return out;
}

double reward_forward(const RewardNetParams& params, const env::Observation& obs) {
  const ObsBatch batch = pack_one(params.config, obs);
  RewardCache cache;
  return reward_forward_batch(params, batch, cache)[0];
}

void reward_backward_batch(const RewardNetParams& params, const ObsBatch& batch,
                           RewardCache& cache, const std::vector<double>& upstream,
                           RewardGrads& grads, Tensor2* dx_route, Tensor2* dx_parcel) {
  check_batch(params.config, batch);
  if (static_cast<int>(upstream.size()) != batch.count)
    fail("reward_backward_batch: upstream size mismatch");
  const int att = params.config.attention_dim;
  const int rows = batch.total_rows();
  const Tensor2& hp = cache.parcel.outs.back();
  const Tensor2& hr = cache.route.outs.back();

  Tensor2 dout(batch.count, 1);
  for (int o = 0; o < batch.count; ++o) dout.at(o, 0) = upstream[o];
  Tensor2 dhidden, dvsum;
  neural::dense_backward_batch(params.out_linear, cache.hidden, cache.out, dout,
                               grads.out_linear, &dhidden);
  neural::dense_backward_batch(params.out_hidden, cache.vsum, cache.hidden, dhidden,
                               grads.out_hidden, &dvsum);

  Tensor2 dq(batch.count, att);
  Tensor2 dk(rows, att);
  Tensor2 dv(rows, att);
  std::vector<double> dweights;
  for (int o = 0; o < batch.count; ++o) {
    const int b = batch.obs_row_begin[o];
    const int e = batch.obs_row_begin[o + 1];
    const double* g = dvsum.row(o);
    double* dq_row = dq.row(o);
    // d/d(weight_i) = g . v_i and d/d(v_i) = weight_i * g.
    dweights.assign(static_cast<std::size_t>(e - b), 0.0);
    for (int r = b; r < e; ++r) {
      dweights[static_cast<std::size_t>(r - b)] = dot(g, cache.v.row(r), att);
      double* dv_row = dv.row(r);
      const double w = cache.weights[r];
      for (int j = 0; j < att; ++j) dv_row[j] = w * g[j];
    }
    // Map weight gradients back to raw score gradients.
    if (params.config.normalized_attention) {
      double mix = 0.0;
      for (int r = b; r < e; ++r) mix += cache.weights[r] * dweights[static_cast<std::size_t>(r - b)];
      for (int r = b; r < e; ++r)
        dweights[static_cast<std::size_t>(r - b)] =
            cache.weights[r] * (dweights[static_cast<std::size_t>(r - b)] - mix);
    }
    // ds_i feeds dq += ds_i k_i and dk_i = ds_i q.
    for (int r = b; r < e; ++r) {
      const double ds = dweights[static_cast<std::size_t>(r - b)];
      const double* k_row = cache.k.row(r);
      const double* q_row = cache.q.row(o);
      double* dk_row = dk.row(r);
      for (int j = 0; j < att; ++j) {
        dq_row[j] += ds * k_row[j];
        dk_row[j] = ds * q_row[j];
      }
    }
  }

  Tensor2 dhr;
  neural::linear_backward_batch(params.wv, hr, dv, grads.d_wv, &dhr, /*accumulate_dx=*/false);
  neural::linear_backward_batch(params.wk, hr, dk, grads.d_wk, &dhr, /*accumulate_dx=*/true);
  Tensor2 dhp;
  neural::linear_backward_batch(params.wq, hp, dq, grads.d_wq, &dhp, /*accumulate_dx=*/false);

  trunk_backward(params.route, batch.route_in, cache.route, dhr, grads.route, dx_route);
  trunk_backward(params.parcel, batch.parcel_in, cache.parcel, dhp, grads.parcel, dx_parcel);
}

// ---------------------------------------------------------------------------
// Optimizer plumbing
// ---------------------------------------------------------------------------

namespace {

void add_layer_spans(neural::ParamSpans& spans, DenseLayer& layer) {
  spans.emplace_back(layer.weight.data.data(), layer.weight.data.size());
  spans.emplace_back(layer.bias.data(), layer.bias.size());
}

void add_layer_spans(neural::GradSpans& spans, const neural::DenseGrads& g) {
  spans.emplace_back(g.d_weight.data.data(), g.d_weight.data.size());
  spans.emplace_back(g.d_bias.data(), g.d_bias.size());
}

void add_trunk_spans(neural::ParamSpans& spans, Trunk& t) {
  add_layer_spans(spans, t.embed);
  for (DenseLayer& layer : t.mlp) add_layer_spans(spans, layer);
}

void add_trunk_spans(neural::GradSpans& spans, const TrunkGrads& g) {
  add_layer_spans(spans, g.embed);
  for (const neural::DenseGrads& layer : g.mlp) add_layer_spans(spans, layer);
}

}  // namespace

neural::ParamSpans param_spans(ActorParams& params) {
  neural::ParamSpans spans;
  add_trunk_spans(spans, params.parcel);
  add_trunk_spans(spans, params.route);
  add_layer_spans(spans, params.scorer);
  return spans;
}

neural::GradSpans grad_spans(const ActorGrads& grads) {
  neural::GradSpans spans;
  add_trunk_spans(spans, grads.parcel);
  add_trunk_spans(spans, grads.route);
  add_layer_spans(spans, grads.scorer);
  return spans;
}

neural::ParamSpans param_spans(RewardNetParams& params) {
  neural::ParamSpans spans;
  add_trunk_spans(spans, params.parcel);
  add_trunk_spans(spans, params.route);
  spans.emplace_back(params.wq.data.data(), params.wq.data.size());
  spans.emplace_back(params.wk.data.data(), params.wk.data.size());
  spans.emplace_back(params.wv.data.data(), params.wv.data.size());
  add_layer_spans(spans, params.out_hidden);
  add_layer_spans(spans, params.out_linear);
  return spans;
}

neural::GradSpans grad_spans(const RewardGrads& grads) {
  neural::GradSpans spans;
  add_trunk_spans(spans, grads.parcel);
  add_trunk_spans(spans, grads.route);
  spans.emplace_back(grads.d_wq.data.data(), grads.d_wq.data.size());
  spans.emplace_back(grads.d_wk.data.data(), grads.d_wk.data.size());
  spans.emplace_back(grads.d_wv.data.data(), grads.d_wv.data.size());
  add_layer_spans(spans, grads.out_hidden);
  add_layer_spans(spans, grads.out_linear);
  return spans;
}

std::size_t span_param_count(const neural::ParamSpans& spans) {
  std::size_t total = 0;
  for (const auto& [ptr, n] : spans) total += n;
  return total;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

Tensor2 bias_tensor(const std::vector<double>& bias) {
  Tensor2 t(1, static_cast<int>(bias.size()));
  std::copy(bias.begin(), bias.end(), t.data.begin());
  return t;
}

void push_layer(neural::Checkpoint& ckpt, const std::string& name, const DenseLayer& layer) {
  ckpt.tensors.emplace_back(name + ".w", layer.weight);
  ckpt.tensors.emplace_back(name + ".b", bias_tensor(layer.bias));
}

void push_trunk(neural::Checkpoint& ckpt, const std::string& prefix, const Trunk& t) {
  push_layer(ckpt, prefix + "_embed", t.embed);
  for (std::size_t i = 0; i < t.mlp.size(); ++i)
    push_layer(ckpt, prefix + "_mlp" + std::to_string(i), t.mlp[i]);
}

void push_config(neural::Checkpoint& ckpt, const NetConfig& c) {
  auto add = [&](const char* key, long long v) { ckpt.meta.emplace_back(key, std::to_string(v)); };
  add("n_r", c.n_r);
  add("location_count", c.location_count);
  add("provider_count", c.provider_count);
  add("embed_dim", c.embed_dim);
  add("parcel_hidden", c.parcel_hidden);
  add("route_hidden1", c.route_hidden1);
  add("route_hidden2", c.route_hidden2);
  add("attention_dim", c.attention_dim);
  add("reward_hidden", c.reward_hidden);
  add("normalized_attention", c.normalized_attention ? 1 : 0);
}

int meta_int(const neural::Checkpoint& ckpt, const char* key) {
  const std::string* v = ckpt.find_meta(key);
  if (v == nullptr) fail(std::string("checkpoint is missing meta key '") + key + "'");
  try {
    return std::stoi(*v);
  } catch (const std::exception&) {
    fail(std::string("checkpoint meta '") + key + "' is not an integer: " + *v);
  }
}

NetConfig config_from(const neural::Checkpoint& ckpt) {
  NetConfig c;
  c.n_r = meta_int(ckpt, "n_r");
  c.location_count = meta_int(ckpt, "location_count");
  c.provider_count = meta_int(ckpt, "provider_count");
  c.embed_dim = meta_int(ckpt, "embed_dim");
  c.parcel_hidden = meta_int(ckpt, "parcel_hidden");
  c.route_hidden1 = meta_int(ckpt, "route_hidden1");
  c.route_hidden2 = meta_int(ckpt, "route_hidden2");
  c.attention_dim = meta_int(ckpt, "attention_dim");
  c.reward_hidden = meta_int(ckpt, "reward_hidden");
  c.normalized_attention = meta_int(ckpt, "normalized_attention") != 0;
  check_config(c);
  return c;
}

Tensor2 pull_tensor(const neural::Checkpoint& ckpt, const std::string& name, int rows, int cols) {
  const Tensor2* t = ckpt.find(name);
  if (t == nullptr) fail("checkpoint is missing tensor '" + name + "'");
  if (t->rows != rows || t->cols != cols)
    fail("checkpoint tensor '" + name + "' is " + std::to_string(t->rows) + "x" +
         std::to_string(t->cols) + ", expected " + std::to_string(rows) + "x" +
         std::to_string(cols));
  return *t;
}

void pull_layer(const neural::Checkpoint& ckpt, const std::string& name, DenseLayer& layer) {
  layer.weight = pull_tensor(ckpt, name + ".w", layer.out_dim(), layer.in_dim());
  const Tensor2 b = pull_tensor(ckpt, name + ".b", 1, layer.out_dim());
  layer.bias.assign(b.data.begin(), b.data.end());
}

void pull_trunk(const neural::Checkpoint& ckpt, const std::string& prefix, Trunk& t) {
  pull_layer(ckpt, prefix + "_embed", t.embed);
  for (std::size_t i = 0; i < t.mlp.size(); ++i)
    pull_layer(ckpt, prefix + "_mlp" + std::to_string(i), t.mlp[i]);
}

const std::string* checkpoint_kind(const neural::Checkpoint& ckpt) {
  const std::string* kind = ckpt.find_meta("kind");
  if (kind == nullptr) fail("checkpoint is missing meta key 'kind'");
  return kind;
}

}  // namespace

neural::Checkpoint to_checkpoint(const ActorParams& params) {
  neural::Checkpoint ckpt;
  ckpt.meta.emplace_back("kind", "actor");
  push_config(ckpt, params.config);
  push_trunk(ckpt, "parcel", params.parcel);
  push_trunk(ckpt, "route", params.route);
  push_layer(ckpt, "scorer", params.scorer);
  return ckpt;
}

ActorParams actor_from_checkpoint(const neural::Checkpoint& ckpt) {
  if (*checkpoint_kind(ckpt) != "actor") fail("checkpoint kind is not 'actor'");
  ActorParams p;
  p.config = config_from(ckpt);
  p.parcel = build_parcel_trunk(p.config);
  p.route = build_route_trunk(p.config);
  p.scorer = DenseLayer(1, p.config.parcel_hidden + p.config.route_hidden2, Activation::Identity);
  pull_trunk(ckpt, "parcel", p.parcel);
  pull_trunk(ckpt, "route", p.route);
  pull_layer(ckpt, "scorer", p.scorer);
  return p;
}

neural::Checkpoint to_checkpoint(const RewardNetParams& params) {
  neural::Checkpoint ckpt;
  ckpt.meta.emplace_back("kind", "reward");
  push_config(ckpt, params.config);
  push_trunk(ckpt, "parcel", params.parcel);
  push_trunk(ckpt, "route", params.route);
  ckpt.tensors.emplace_back("att_q", params.wq);
  ckpt.tensors.emplace_back("att_k", params.wk);
  ckpt.tensors.emplace_back("att_v", params.wv);
  push_layer(ckpt, "out_hidden", params.out_hidden);
  push_layer(ckpt, "out_linear", params.out_linear);
  return ckpt;
}

RewardNetParams reward_from_checkpoint(const neural::Checkpoint& ckpt) {
  if (*checkpoint_kind(ckpt) != "reward") fail("checkpoint kind is not 'reward'");
  RewardNetParams p;
  p.config = config_from(ckpt);
  p.parcel = build_parcel_trunk(p.config);
  p.route = build_route_trunk(p.config);
  p.out_hidden =
      DenseLayer(p.config.reward_hidden, p.config.attention_dim, Activation::Sigmoid);
  p.out_linear = DenseLayer(1, p.config.reward_hidden, Activation::Identity);
  pull_trunk(ckpt, "parcel", p.parcel);
  pull_trunk(ckpt, "route", p.route);
  p.wq = pull_tensor(ckpt, "att_q", p.config.attention_dim, p.config.parcel_hidden);
  p.wk = pull_tensor(ckpt, "att_k", p.config.attention_dim, p.config.route_hidden2);
  p.wv = pull_tensor(ckpt, "att_v", p.config.attention_dim, p.config.route_hidden2);
  pull_layer(ckpt, "out_hidden", p.out_hidden);
  pull_layer(ckpt, "out_linear", p.out_linear);
  return p;
}

}  // namespace opa::nets
