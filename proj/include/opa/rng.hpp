#pragma once

// Deterministic random number generation with explicit stream derivation.
//
// Every stochastic component in this codebase draws from an opa::rng::Rng
// seeded through derive(), so results are reproducible bit-for-bit for a
// fixed seed regardless of platform std::random implementations (which the
// standard leaves unspecified). Generator: xoshiro256++ seeded via splitmix64.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <utility>
#include <vector>

namespace opa::rng {

// 64-bit mix used for seeding and stream derivation (splitmix64 finalizer).
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    // Expand the seed into four nonzero state words.
    std::uint64_t x = seed;
    for (auto& w : state_) {
      x = mix64(x + 0x9e3779b97f4a7c15ULL);
      w = x;
    }
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  // Derives an independent stream from (seed, path). Distinct paths give
  // statistically independent generators; used to key streams by e.g.
  // (episode, trajectory) or (day index).
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = mix64(seed);
    for (std::uint64_t p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
    return Rng(h);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) (Lemire's multiply-shift with rejection).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("rng::below: n must be positive");
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t threshold = (0ULL - n) % n;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Standard normal via Box-Muller; caches the second variate.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  double lognormal(double mu, double sigma) { return std::exp(mu + sigma * normal()); }

  // Samples an index proportionally to nonnegative weights. Entries equal to
  // exactly 0 are never selected. Throws when all weights are zero.
  int sample_weighted(const double* w, int n) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      if (w[i] < 0.0) throw std::invalid_argument("rng::sample_weighted: negative weight");
      total += w[i];
    }
    if (total <= 0.0) throw std::invalid_argument("rng::sample_weighted: all weights zero");
    const double u = uniform() * total;
    double cum = 0.0;
    int last_positive = -1;
    for (int i = 0; i < n; ++i) {
      if (w[i] > 0.0) {
        cum += w[i];
        last_positive = i;
        if (u < cum) return i;
      }
    }
    return last_positive;  // u landed past cum due to rounding; pick the last positive entry
  }

  int sample_weighted(const std::vector<double>& w) {
    return sample_weighted(w.data(), static_cast<int>(w.size()));
  }

  // In-place Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace opa::rng
