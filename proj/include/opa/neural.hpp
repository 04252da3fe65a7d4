#pragma once

// Minimal dense neural substrate: tensors, dense layers with hand-derived
// reverse-mode gradients, masked softmax, Adam, Glorot init, and a text
// checkpoint format. No ML framework; matrix products are delegated to an
// optional BLAS backend (see blas::gemm below) with an internal fallback.
//
// Determinism contract: forward passes are evaluated in fixed row tiles of
// kForwardTile rows (shorter inputs are zero-padded to a full tile). BLAS
// kernels select different reduction orders for different matrix heights, so
// without tiling the same sample could produce last-ulp-different activations
// depending on which batch it was evaluated in. With tiling, every forward
// activation is bitwise independent of batch size, position, and phase -
// which is what makes exact-identity properties (probability ratio = 1 at
// unchanged parameters, checkpoint-reload equality) hold with doubles.
// Backward passes have no such identity requirements and use full-size calls.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "opa/rng.hpp"

namespace opa::neural {

inline constexpr int kForwardTile = 128;

struct Tensor2 {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major, size rows*cols

  Tensor2() = default;
  Tensor2(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }
  void resize(int r, int c) {
    rows = r;
    cols = c;
    data.assign(static_cast<std::size_t>(r) * c, 0.0);
  }

  bool operator==(const Tensor2&) const = default;
};

namespace blas {

// C[m x n] = alpha * op(A) * op(B) + beta * C, all row-major.
// Backed by OpenBLAS when available (loaded lazily via dlopen so that the
// CPU-kernel selection override can be applied before library init), else by
// the internal blocked kernel. The backend is fixed for the process lifetime.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc);

// The internal kernel, callable directly; unit tests use it as an
// independent reference for the loaded backend.
void gemm_reference(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                    const double* a, int lda, const double* b, int ldb, double beta, double* c,
                    int ldc);

// True when the process resolved OpenBLAS; false when running on the fallback.
bool using_openblas();

}  // namespace blas

enum class Activation { Identity, ReLU, Sigmoid };

struct DenseLayer {
  Tensor2 weight;            // out_dim x in_dim
  std::vector<double> bias;  // out_dim
  Activation act = Activation::Identity;

  DenseLayer() = default;
  DenseLayer(int out_dim, int in_dim, Activation a)
      : weight(out_dim, in_dim), bias(out_dim, 0.0), act(a) {}

  int in_dim() const { return weight.cols; }
  int out_dim() const { return weight.rows; }

  bool operator==(const DenseLayer&) const = default;
};

struct DenseGrads {
  Tensor2 d_weight;
  std::vector<double> d_bias;

  void init_like(const DenseLayer& layer) {
    d_weight.resize(layer.out_dim(), layer.in_dim());
    d_bias.assign(layer.bias.size(), 0.0);
  }
  void zero() {
    d_weight.zero();
    std::fill(d_bias.begin(), d_bias.end(), 0.0);
  }
};

// --- single-sample operations -------------------------------------------------

// activation(W x + b). Throws on dimension mismatch.
std::vector<double> dense_forward(const DenseLayer& layer, const std::vector<double>& input);

// Exact analytic gradients. `output` must be the dense_forward result for
// `input`; `upstream` is dL/d(output). Parameter gradients are ACCUMULATED
// into `grads` (callers zero it when accumulation is not wanted); the return
// value is dL/d(input).
std::vector<double> dense_backward(const DenseLayer& layer, const std::vector<double>& input,
                                   const std::vector<double>& output,
                                   const std::vector<double>& upstream, DenseGrads& grads);

// --- batched operations (rows = samples) --------------------------------------

// y = activation(x W^T + b), evaluated through fixed forward tiles.
void dense_forward_batch(const DenseLayer& layer, const Tensor2& x, Tensor2& y);

// Batched backward. `dy` holds dL/d(output) on entry and is destroyed (reused
// as pre-activation gradient scratch). Parameter gradients are accumulated
// into `grads`; when `dx` is non-null it is OVERWRITTEN with dL/d(input).
void dense_backward_batch(const DenseLayer& layer, const Tensor2& x, const Tensor2& y,
                          Tensor2& dy, DenseGrads& grads, Tensor2* dx);

// Pure projection y = x W^T (no bias, no activation), through the same fixed
// forward tiles as dense_forward_batch. `weight` is out_dim x in_dim.
void linear_forward_batch(const Tensor2& weight, const Tensor2& x, Tensor2& y);

// Backward of the pure projection: d_weight += dy^T x; when `dx` is non-null,
// dx = dy W (overwritten, or accumulated when `accumulate_dx` is set).
void linear_backward_batch(const Tensor2& weight, const Tensor2& x, const Tensor2& dy,
                           Tensor2& d_weight, Tensor2* dx, bool accumulate_dx = false);

// --- masked softmax ------------------------------------------------------------

// Probabilities over the unmasked entries (max-subtracted for stability);
// masked entries are exactly 0. Throws when the mask has no true entry.
std::vector<double> masked_softmax(const std::vector<double>& logits,
                                   const std::vector<std::uint8_t>& mask);

// --- Adam ----------------------------------------------------------------------

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;
  std::vector<double> m;  // first-moment accumulator, one entry per parameter
  std::vector<double> v;  // second-moment accumulator

  void init(std::size_t n_params, double learning_rate) {
    lr = learning_rate;
    step = 0;
    m.assign(n_params, 0.0);
    v.assign(n_params, 0.0);
  }
};

// Flat views over a parameter (or gradient) collection; spans are visited in
// order, so parameter and gradient span lists must match element-for-element.
using ParamSpans = std::vector<std::pair<double*, std::size_t>>;
using GradSpans = std::vector<std::pair<const double*, std::size_t>>;

// One bias-corrected Adam descent step (params -= update). Throws on
// non-finite gradients and on span/accumulator size mismatches.
void adam_step(const ParamSpans& params, const GradSpans& grads, AdamState& state);

// --- initialization ------------------------------------------------------------

// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
void glorot_init(DenseLayer& layer, rng::Rng& rng);
void glorot_init(Tensor2& weight, rng::Rng& rng);

// --- checkpoints ---------------------------------------------------------------

// Versioned text dump of named tensors plus free-form metadata. Values are
// printed at full precision (exact double round-trip). Loading validates
// structure; shape validation against an expected architecture happens in the
// consuming module.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;     // key -> value (value may contain spaces)
  std::vector<std::pair<std::string, Tensor2>> tensors;      // name -> tensor

  const Tensor2* find(const std::string& name) const;
  const std::string* find_meta(const std::string& key) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace opa::neural
