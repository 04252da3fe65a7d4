#include "opa/neural.hpp"

#include <dlfcn.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace opa::neural {

namespace blas {

namespace {

// cblas ABI constants (identical across BLAS implementations).
constexpr int kRowMajor = 101;
constexpr int kNoTrans = 111;
constexpr int kTrans = 112;

using cblas_dgemm_fn = void (*)(int order, int trans_a, int trans_b, int m, int n, int k,
                                double alpha, const double* a, int lda, const double* b, int ldb,
                                double beta, double* c, int ldc);

cblas_dgemm_fn g_dgemm = nullptr;
bool g_openblas = false;
std::once_flag g_init_flag;

bool cpu_has_avx512() {
  return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512dq") &&
         __builtin_cpu_supports("avx512bw") && __builtin_cpu_supports("avx512vl");
}

// Sanity probe: verify the resolved symbol computes a known tiny product.
bool probe_backend(cblas_dgemm_fn fn) {
  const double a[6] = {1, 2, 3, 4, 5, 6};   // 2x3
  const double b[6] = {7, 8, 9, 10, 11, 12};  // 3x2
  double c[4] = {0, 0, 0, 0};
  fn(kRowMajor, kNoTrans, kNoTrans, 2, 2, 3, 1.0, a, 3, b, 2, 0.0, c, 2);
  const double expect[4] = {58, 64, 139, 154};
  for (int i = 0; i < 4; ++i)
    if (std::abs(c[i] - expect[i]) > 1e-9) return false;
  return true;
}

void init_backend() {
  // OpenBLAS picks its compute kernels inside its library constructor, keyed
  // on CPU detection that mis-identifies some virtualized CPUs (costing ~4x
  // throughput). Loading lazily via dlopen lets us pin the kernel family
  // first. User-provided values are never overwritten.
  if (cpu_has_avx512()) setenv("OPENBLAS_CORETYPE", "SKYLAKEX", /*overwrite=*/0);
  setenv("OPENBLAS_NUM_THREADS", "1", /*overwrite=*/0);

  for (const char* name : {"libopenblas.so.0", "libopenblas.so"}) {
    void* handle = dlopen(name, RTLD_NOW | RTLD_LOCAL);
    if (handle == nullptr) continue;
    auto fn = reinterpret_cast<cblas_dgemm_fn>(dlsym(handle, "cblas_dgemm"));
    if (fn != nullptr && probe_backend(fn)) {
      g_dgemm = fn;
      g_openblas = true;
      return;
    }
    dlclose(handle);
  }
  g_dgemm = nullptr;  // fallback kernel
}

}  // namespace

void gemm_reference(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                    const double* a, int lda, const double* b, int ldb, double beta, double* c,
                    int ldc) {
  for (int i = 0; i < m; ++i) {
    double* c_row = c + static_cast<std::size_t>(i) * ldc;
    if (beta == 0.0)
      std::fill(c_row, c_row + n, 0.0);
    else if (beta != 1.0)
      for (int j = 0; j < n; ++j) c_row[j] *= beta;
  }
  if (!trans_b) {
    // Row-accumulation order: c[i,:] += alpha * a(i,p) * b[p,:], p ascending.
    for (int i = 0; i < m; ++i) {
      double* c_row = c + static_cast<std::size_t>(i) * ldc;
      for (int p = 0; p < k; ++p) {
        const double aip =
            alpha * (trans_a ? a[static_cast<std::size_t>(p) * lda + i]
                             : a[static_cast<std::size_t>(i) * lda + p]);
        if (aip == 0.0) continue;
        const double* b_row = b + static_cast<std::size_t>(p) * ldb;
        for (int j = 0; j < n; ++j) c_row[j] += aip * b_row[j];
      }
    }
  } else {
    for (int i = 0; i < m; ++i) {
      double* c_row = c + static_cast<std::size_t>(i) * ldc;
      for (int j = 0; j < n; ++j) {
        const double* b_row = b + static_cast<std::size_t>(j) * ldb;
        double acc = 0.0;
        for (int p = 0; p < k; ++p) {
          const double aip = trans_a ? a[static_cast<std::size_t>(p) * lda + i]
                                     : a[static_cast<std::size_t>(i) * lda + p];
          acc += aip * b_row[p];
        }
        c_row[j] += alpha * acc;
      }
    }
  }
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  std::call_once(g_init_flag, init_backend);
  if (m == 0 || n == 0) return;
  if (g_dgemm != nullptr) {
    g_dgemm(kRowMajor, trans_a ? kTrans : kNoTrans, trans_b ? kTrans : kNoTrans, m, n, k, alpha,
            a, lda, b, ldb, beta, c, ldc);
  } else {
    gemm_reference(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
}

bool using_openblas() {
  std::call_once(g_init_flag, init_backend);
  return g_openblas;
}

}  // namespace blas

namespace {

void apply_activation(Activation act, double* values, std::size_t n) {
  switch (act) {
    case Activation::Identity:
      break;
    case Activation::ReLU:
      for (std::size_t i = 0; i < n; ++i) values[i] = values[i] > 0.0 ? values[i] : 0.0;
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) values[i] = 1.0 / (1.0 + std::exp(-values[i]));
      break;
  }
}

// Converts dL/d(output) to dL/d(pre-activation) in place, given the outputs.
void activation_backward(Activation act, const double* outputs, double* grads, std::size_t n) {
  switch (act) {
    case Activation::Identity:
      break;
    case Activation::ReLU:
      for (std::size_t i = 0; i < n; ++i)
        if (outputs[i] <= 0.0) grads[i] = 0.0;
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) grads[i] *= outputs[i] * (1.0 - outputs[i]);
      break;
  }
}

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error(what); }

}  // namespace

std::vector<double> dense_forward(const DenseLayer& layer, const std::vector<double>& input) {
  if (static_cast<int>(input.size()) != layer.in_dim())
    fail("dense_forward: input size " + std::to_string(input.size()) + " != in_dim " +
         std::to_string(layer.in_dim()));
  Tensor2 x(1, layer.in_dim());
  std::copy(input.begin(), input.end(), x.data.begin());
  Tensor2 y;
  dense_forward_batch(layer, x, y);
  return {y.data.begin(), y.data.end()};
}

std::vector<double> dense_backward(const DenseLayer& layer, const std::vector<double>& input,
                                   const std::vector<double>& output,
                                   const std::vector<double>& upstream, DenseGrads& grads) {
  if (static_cast<int>(input.size()) != layer.in_dim() ||
      static_cast<int>(output.size()) != layer.out_dim() ||
      static_cast<int>(upstream.size()) != layer.out_dim())
    fail("dense_backward: dimension mismatch");
  if (grads.d_weight.rows != layer.out_dim() || grads.d_weight.cols != layer.in_dim())
    grads.init_like(layer);

  Tensor2 x(1, layer.in_dim()), y(1, layer.out_dim()), dy(1, layer.out_dim());
  std::copy(input.begin(), input.end(), x.data.begin());
  std::copy(output.begin(), output.end(), y.data.begin());
  std::copy(upstream.begin(), upstream.end(), dy.data.begin());
  Tensor2 dx;
  dense_backward_batch(layer, x, y, dy, grads, &dx);
  return {dx.data.begin(), dx.data.end()};
}

namespace {

// y = x W^T through fixed forward tiles (see header): every gemm call is
// exactly kForwardTile rows tall; the last tile is zero-padded.
void tiled_matmul(const Tensor2& weight, const Tensor2& x, Tensor2& y) {
  const int n_rows = x.rows;
  const int in = weight.cols;
  const int out = weight.rows;
  y.resize(n_rows, out);

  static thread_local Tensor2 pad_in, pad_out;
  for (int start = 0; start < n_rows; start += kForwardTile) {
    const int rows = std::min(kForwardTile, n_rows - start);
    if (rows == kForwardTile) {
      blas::gemm(false, true, kForwardTile, out, in, 1.0, x.row(start), in, weight.data.data(),
                 in, 0.0, y.row(start), out);
    } else {
      pad_in.resize(kForwardTile, in);
      pad_out.resize(kForwardTile, out);
      pad_in.zero();
      std::memcpy(pad_in.data.data(), x.row(start), sizeof(double) * static_cast<std::size_t>(rows) * in);
      blas::gemm(false, true, kForwardTile, out, in, 1.0, pad_in.data.data(), in,
                 weight.data.data(), in, 0.0, pad_out.data.data(), out);
      std::memcpy(y.row(start), pad_out.data.data(),
                  sizeof(double) * static_cast<std::size_t>(rows) * out);
    }
  }
}

}  // namespace

void dense_forward_batch(const DenseLayer& layer, const Tensor2& x, Tensor2& y) {
  if (x.cols != layer.in_dim()) fail("dense_forward_batch: input width mismatch");
  const int n_rows = x.rows;
  const int out = layer.out_dim();
  tiled_matmul(layer.weight, x, y);
  for (int r = 0; r < n_rows; ++r) {
    double* row = y.row(r);
    for (int j = 0; j < out; ++j) row[j] += layer.bias[j];
    apply_activation(layer.act, row, static_cast<std::size_t>(out));
  }
}

void linear_forward_batch(const Tensor2& weight, const Tensor2& x, Tensor2& y) {
  if (x.cols != weight.cols) fail("linear_forward_batch: input width mismatch");
  tiled_matmul(weight, x, y);
}

void linear_backward_batch(const Tensor2& weight, const Tensor2& x, const Tensor2& dy,
                           Tensor2& d_weight, Tensor2* dx, bool accumulate_dx) {
  const int n_rows = x.rows;
  const int in = weight.cols;
  const int out = weight.rows;
  if (x.cols != in || dy.cols != out || dy.rows != n_rows)
    fail("linear_backward_batch: dimension mismatch");
  if (d_weight.rows != out || d_weight.cols != in) {
    d_weight.resize(out, in);
    d_weight.zero();
  }
  blas::gemm(true, false, out, in, n_rows, 1.0, dy.data.data(), out, x.data.data(), in, 1.0,
             d_weight.data.data(), in);
  if (dx != nullptr) {
    if (!accumulate_dx) {
      dx->resize(n_rows, in);
      blas::gemm(false, false, n_rows, in, out, 1.0, dy.data.data(), out, weight.data.data(), in,
                 0.0, dx->data.data(), in);
    } else {
      if (dx->rows != n_rows || dx->cols != in) fail("linear_backward_batch: dx shape mismatch");
      blas::gemm(false, false, n_rows, in, out, 1.0, dy.data.data(), out, weight.data.data(), in,
                 1.0, dx->data.data(), in);
    }
  }
}

void dense_backward_batch(const DenseLayer& layer, const Tensor2& x, const Tensor2& y,
                          Tensor2& dy, DenseGrads& grads, Tensor2* dx) {
  const int n_rows = x.rows;
  const int in = layer.in_dim();
  const int out = layer.out_dim();
  if (x.cols != in || y.cols != out || dy.cols != out || y.rows != n_rows || dy.rows != n_rows)
    fail("dense_backward_batch: dimension mismatch");
  if (grads.d_weight.rows != out || grads.d_weight.cols != in) grads.init_like(layer);

  // dy := dL/d(pre-activation)
  activation_backward(layer.act, y.data.data(), dy.data.data(), dy.data.size());

  // dW += dy^T x;  db += column sums of dy.
  blas::gemm(true, false, out, in, n_rows, 1.0, dy.data.data(), out, x.data.data(), in, 1.0,
             grads.d_weight.data.data(), in);
  for (int r = 0; r < n_rows; ++r) {
    const double* row = dy.row(r);
    for (int j = 0; j < out; ++j) grads.d_bias[j] += row[j];
  }

  if (dx != nullptr) {
    dx->resize(n_rows, in);
    blas::gemm(false, false, n_rows, in, out, 1.0, dy.data.data(), out,
               layer.weight.data.data(), in, 0.0, dx->data.data(), in);
  }
}

std::vector<double> masked_softmax(const std::vector<double>& logits,
                                   const std::vector<std::uint8_t>& mask) {
  if (logits.size() != mask.size()) fail("masked_softmax: logits/mask size mismatch");
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i] && logits[i] > max_logit) max_logit = logits[i];
  if (max_logit == -std::numeric_limits<double>::infinity())
    fail("masked_softmax: mask has no true entry");

  std::vector<double> probs(logits.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    probs[i] = std::exp(logits[i] - max_logit);
    total += probs[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) probs[i] /= total;
  return probs;
}

void adam_step(const ParamSpans& params, const GradSpans& grads, AdamState& state) {
  if (params.size() != grads.size()) fail("adam_step: span count mismatch");
  std::size_t total = 0;
  for (std::size_t s = 0; s < params.size(); ++s) {
    if (params[s].second != grads[s].second) fail("adam_step: span size mismatch");
    total += params[s].second;
  }
  if (state.m.size() != total)
    fail("adam_step: state sized for " + std::to_string(state.m.size()) + " params, got " +
         std::to_string(total));

  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  std::size_t offset = 0;
  for (std::size_t s = 0; s < params.size(); ++s) {
    double* p = params[s].first;
    const double* g = grads[s].first;
    const std::size_t n = params[s].second;
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g[i];
      if (!std::isfinite(gi)) fail("adam_step: non-finite gradient");
      double& m = state.m[offset + i];
      double& v = state.v[offset + i];
      m = state.beta1 * m + (1.0 - state.beta1) * gi;
      v = state.beta2 * v + (1.0 - state.beta2) * gi * gi;
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    offset += n;
  }
}

void glorot_init(Tensor2& weight, rng::Rng& rng) {
  const double limit = std::sqrt(6.0 / (weight.rows + weight.cols));
  for (double& w : weight.data) w = rng.uniform(-limit, limit);
}

void glorot_init(DenseLayer& layer, rng::Rng& rng) {
  glorot_init(layer.weight, rng);
  std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   opa-checkpoint v1
//   meta <count>
//   <key> <value...>
//   tensors <count>
//   tensor <name> <rows> <cols>
//   <cols full-precision values per row>
//   end
// ---------------------------------------------------------------------------

const Tensor2* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

const std::string* Checkpoint::find_meta(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return &v;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot open '" + path + "' for writing");
  out << "opa-checkpoint v1\n";
  out << "meta " << ckpt.meta.size() << "\n";
  for (const auto& [key, value] : ckpt.meta) out << key << ' ' << value << "\n";
  out << "tensors " << ckpt.tensors.size() << "\n";
  char buf[64];
  for (const auto& [name, t] : ckpt.tensors) {
    out << "tensor " << name << ' ' << t.rows << ' ' << t.cols << "\n";
    for (int r = 0; r < t.rows; ++r) {
      const double* row = t.row(r);
      for (int c = 0; c < t.cols; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", row[c]);
        out << buf << (c + 1 == t.cols ? "" : " ");
      }
      out << "\n";
    }
  }
  out << "end\n";
  out.flush();
  if (!out) fail("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '" + path + "' for reading");
  auto bad = [&](const std::string& what) { fail(path + ": " + what); };

  std::string line;
  auto next_line = [&]() -> std::string {
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return line;
    }
    bad("unexpected end of checkpoint");
    return {};
  };

  Checkpoint ckpt;
  if (next_line() != "opa-checkpoint v1") bad("expected header 'opa-checkpoint v1'");

  {
    std::istringstream ss(next_line());
    std::string tag;
    std::size_t count = 0;
    if (!(ss >> tag >> count) || tag != "meta") bad("expected 'meta <count>'");
    for (std::size_t i = 0; i < count; ++i) {
      const std::string entry = next_line();
      const auto space = entry.find(' ');
      if (space == std::string::npos)
        ckpt.meta.emplace_back(entry, "");
      else
        ckpt.meta.emplace_back(entry.substr(0, space), entry.substr(space + 1));
    }
  }
  {
    std::istringstream ss(next_line());
    std::string tag;
    std::size_t count = 0;
    if (!(ss >> tag >> count) || tag != "tensors") bad("expected 'tensors <count>'");
    for (std::size_t i = 0; i < count; ++i) {
      std::istringstream hs(next_line());
      std::string tensor_tag, name;
      int rows = 0, cols = 0;
      if (!(hs >> tensor_tag >> name >> rows >> cols) || tensor_tag != "tensor" || rows < 0 ||
          cols < 0)
        bad("expected 'tensor <name> <rows> <cols>'");
      Tensor2 t(rows, cols);
      for (int r = 0; r < rows; ++r) {
        std::istringstream rs(next_line());
        for (int c = 0; c < cols; ++c) {
          std::string tok;
          if (!(rs >> tok)) bad("tensor '" + name + "': short row " + std::to_string(r));
          char* end = nullptr;
          t.at(r, c) = std::strtod(tok.c_str(), &end);
          if (end != tok.c_str() + tok.size()) bad("tensor '" + name + "': bad value '" + tok + "'");
        }
        std::string extra;
        if (rs >> extra) bad("tensor '" + name + "': excess values in row " + std::to_string(r));
      }
      ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
  }
  if (next_line() != "end") bad("expected trailing 'end'");
  return ckpt;
}

}  // namespace opa::neural
