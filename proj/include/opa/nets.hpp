#pragma once

// Policy and reward-prediction networks over environment observations.
//
// Both networks share the same two-trunk layout. The parcel trunk embeds the
// parcel features to 64 and applies one 128-wide ReLU layer; the route trunk
// embeds each candidate's features to 64 and applies 256- then 128-wide ReLU
// layers, with ONE shared parameter set across all route slots. Categorical
// ids (origin, destination, provider) enter as one-hot blocks, so the
// corresponding embedding-weight columns act as learned per-id lookup rows.
//
// Actor: each candidate's trunk output is concatenated with the parcel trunk
// output and scored by a shared linear head; a masked softmax over the
// per-slot logits yields assignment probabilities (masked slots exactly 0).
//
// Reward net: the parcel trunk output is projected to a query q = Wq hp and
// every candidate trunk output h_i to a key k_i = Wk h_i and value
// v_i = Wv h_i; the combined vector is the plain weighted sum
//     v = sum_i (q . k_i) v_i
// over real candidates only - deliberately WITHOUT softmax normalization of
// the attention weights (a normalized variant sits behind
// NetConfig::normalized_attention, default off). A 64-wide Sigmoid layer and
// a linear scalar head map v to the predicted reward.
//
// Determinism: all forwards run through the neural module's fixed-tile
// matmuls, so every per-observation output is bitwise independent of how
// observations are batched together.

#include <cstdint>
#include <string>
#include <vector>

#include "opa/env.hpp"
#include "opa/neural.hpp"
#include "opa/rng.hpp"

namespace opa::nets {

// Widths and vocabulary sizes; fully determines both networks' shapes, and is
// recorded in checkpoints so they are self-describing.
struct NetConfig {
  int n_r = 1;              // route slots per observation
  int location_count = 1;   // origin/destination vocabulary
  int provider_count = 1;   // provider vocabulary
  int embed_dim = 64;
  int parcel_hidden = 128;
  int route_hidden1 = 256;
  int route_hidden2 = 128;
  int attention_dim = 64;
  int reward_hidden = 64;
  bool normalized_attention = false;

  // Assembled input widths: numeric features plus one-hot id blocks.
  int parcel_input_dim() const { return 2 + 2 * location_count; }
  int route_input_dim() const { return 3 + provider_count; }

  bool operator==(const NetConfig&) const = default;
};

// Network shape matching a compiled instance's slot count and vocabularies.
NetConfig config_for(const env::EnvModel& compiled_model);

// Recovers the categorical index behind a normalized id slot (index /
// (count - 1)); exact for any realistic vocabulary size.
int categorical_index(double slot_value, int count);

// ---------------------------------------------------------------------------
// Observation batching
// ---------------------------------------------------------------------------

// A set of observations assembled into network inputs. Route rows hold REAL
// candidates only, grouped per observation in slot order; masked slots are
// never materialized.
struct ObsBatch {
  int count = 0;
  int n_r = 0;
  neural::Tensor2 parcel_in;       // count x parcel_input_dim
  neural::Tensor2 route_in;        // rows x route_input_dim
  std::vector<int> route_owner;    // rows -> owning observation (ascending)
  std::vector<int> row_slot;       // rows -> original candidate slot
  std::vector<int> obs_row_begin;  // count + 1 prefix offsets into the rows
  std::vector<std::vector<std::uint8_t>> masks;  // per-observation slot masks

  int total_rows() const { return route_in.rows; }
};

ObsBatch pack(const NetConfig& config, const std::vector<const env::Observation*>& observations);
ObsBatch pack(const NetConfig& config, const std::vector<env::Observation>& observations);
ObsBatch pack_one(const NetConfig& config, const env::Observation& obs);

// ---------------------------------------------------------------------------
// Shared trunk
// ---------------------------------------------------------------------------

struct Trunk {
  neural::DenseLayer embed;             // Identity activation
  std::vector<neural::DenseLayer> mlp;  // ReLU layers

  bool operator==(const Trunk&) const = default;
};

struct TrunkGrads {
  neural::DenseGrads embed;
  std::vector<neural::DenseGrads> mlp;

  void zero();
};

struct TrunkCache {
  std::vector<neural::Tensor2> outs;  // embed output, then each mlp output
};

// ---------------------------------------------------------------------------
// Actor
// ---------------------------------------------------------------------------

struct ActorParams {
  NetConfig config;
  Trunk parcel;
  Trunk route;
  neural::DenseLayer scorer;  // (parcel_hidden + route_hidden2) -> 1, linear

  bool operator==(const ActorParams&) const = default;
};

ActorParams make_actor(const NetConfig& config, rng::Rng& rng);

struct ActorGrads {
  TrunkGrads parcel;
  TrunkGrads route;
  neural::DenseGrads scorer;

  void zero();
};

ActorGrads make_actor_grads(const ActorParams& params);

struct ActorCache {
  TrunkCache parcel;
  TrunkCache route;
  neural::Tensor2 concat;  // rows x (parcel_hidden + route_hidden2)
  neural::Tensor2 logits;  // rows x 1
  neural::Tensor2 probs;   // count x n_r; masked slots exactly 0
};

// Fills cache.probs: one probability row per observation, masked softmax over
// the per-slot logits. Throws on config/observation shape mismatch.
void actor_forward_batch(const ActorParams& params, const ObsBatch& batch, ActorCache& cache);

// Single-observation convenience wrapper (identical values to the batch path).
std::vector<double> actor_forward(const ActorParams& params, const env::Observation& obs);

// Upstream is dL/d(probabilities) (count x n_r; masked entries ignored). The
// masked-softmax Jacobian is applied internally. Parameter gradients are
// accumulated into `grads`; optional dx_route / dx_parcel receive dL/d(input
// rows) of the assembled batch inputs (overwritten).
void actor_backward_batch(const ActorParams& params, const ObsBatch& batch, ActorCache& cache,
                          const neural::Tensor2& dprobs, ActorGrads& grads,
                          neural::Tensor2* dx_route = nullptr,
                          neural::Tensor2* dx_parcel = nullptr);

// ---------------------------------------------------------------------------
// Reward network
// ---------------------------------------------------------------------------

struct RewardNetParams {
  NetConfig config;
  Trunk parcel;
  Trunk route;
  neural::Tensor2 wq;  // attention_dim x parcel_hidden
  neural::Tensor2 wk;  // attention_dim x route_hidden2
  neural::Tensor2 wv;  // attention_dim x route_hidden2
  neural::DenseLayer out_hidden;  // attention_dim -> reward_hidden, Sigmoid
  neural::DenseLayer out_linear;  // reward_hidden -> 1, linear

  bool operator==(const RewardNetParams&) const = default;
};

RewardNetParams make_reward_net(const NetConfig& config, rng::Rng& rng);

struct RewardGrads {
  TrunkGrads parcel;
  TrunkGrads route;
  neural::Tensor2 d_wq;
  neural::Tensor2 d_wk;
  neural::Tensor2 d_wv;
  neural::DenseGrads out_hidden;
  neural::DenseGrads out_linear;

  void zero();
};

RewardGrads make_reward_grads(const RewardNetParams& params);

struct RewardCache {
  TrunkCache parcel;
  TrunkCache route;
  neural::Tensor2 q;             // count x attention_dim
  neural::Tensor2 k;             // rows x attention_dim
  neural::Tensor2 v;             // rows x attention_dim
  std::vector<double> scores;    // rows; raw q . k_i
  std::vector<double> weights;   // rows; applied weights (= scores, or softmax)
  neural::Tensor2 vsum;          // count x attention_dim
  neural::Tensor2 hidden;        // count x reward_hidden
  neural::Tensor2 out;           // count x 1
};

// Returns one predicted reward per observation.
std::vector<double> reward_forward_batch(const RewardNetParams& params, const ObsBatch& batch,
                                         RewardCache& cache);
double reward_forward(const RewardNetParams& params, const env::Observation& obs);

// Upstream is dL/d(prediction), one entry per observation.
void reward_backward_batch(const RewardNetParams& params, const ObsBatch& batch,
                           RewardCache& cache, const std::vector<double>& upstream,
                           RewardGrads& grads, neural::Tensor2* dx_route = nullptr,
                           neural::Tensor2* dx_parcel = nullptr);

// The attention combine step in isolation: scores s_i = q . k_i over rows
// [begin, end), weights w = s (or softmax(s) when `normalized`), and
// v_out = sum_i w_i v_i. `scores`/`weights` receive end-begin entries.
void attention_combine(const double* q, const neural::Tensor2& k, const neural::Tensor2& v,
                       int begin, int end, int att_dim, bool normalized, double* v_out,
                       double* scores, double* weights);

// ---------------------------------------------------------------------------
// Optimizer plumbing and checkpoints
// ---------------------------------------------------------------------------

// Parameter and gradient spans in matching order, for neural::adam_step.
neural::ParamSpans param_spans(ActorParams& params);
neural::GradSpans grad_spans(const ActorGrads& grads);
neural::ParamSpans param_spans(RewardNetParams& params);
neural::GradSpans grad_spans(const RewardGrads& grads);
std::size_t span_param_count(const neural::ParamSpans& spans);

neural::Checkpoint to_checkpoint(const ActorParams& params);
ActorParams actor_from_checkpoint(const neural::Checkpoint& ckpt);
neural::Checkpoint to_checkpoint(const RewardNetParams& params);
RewardNetParams reward_from_checkpoint(const neural::Checkpoint& ckpt);

}  // namespace opa::nets
