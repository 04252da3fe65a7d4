#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "opa/rng.hpp"

using opa::rng::Rng;

TEST_CASE("same seed reproduces the identical stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += (a.next_u64() == b.next_u64());
  CHECK(equal < 3);
}

TEST_CASE("derive keys independent streams by path") {
  Rng a = Rng::derive(7, {1, 2});
  Rng b = Rng::derive(7, {1, 3});
  Rng c = Rng::derive(7, {1, 2});
  CHECK(a.next_u64() != b.next_u64());
  Rng a2 = Rng::derive(7, {1, 2});
  CHECK(a2.next_u64() == c.next_u64());
}

TEST_CASE("uniform stays in [0,1) and fills the range") {
  Rng r(11);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("below is unbiased within sampling tolerance") {
  Rng r(5);
  const int n = 7;
  std::vector<int> counts(n, 0);
  const int draws = 140000;
  for (int i = 0; i < draws; ++i) ++counts[r.below(n)];
  for (int c : counts) CHECK(std::abs(c - draws / n) < draws / n / 10);
}

TEST_CASE("normal moments approximate N(0,1)") {
  Rng r(9);
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("sample_weighted respects zeros exactly and matches frequencies") {
  Rng r(13);
  std::vector<double> w = {0.0, 2.0, 0.0, 1.0};
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 90000; ++i) ++counts[r.sample_weighted(w)];
  CHECK(counts[0] == 0);
  CHECK(counts[2] == 0);
  CHECK(std::abs(counts[1] - 60000) < 2000);
  CHECK(std::abs(counts[3] - 30000) < 2000);

  std::vector<double> zeros = {0.0, 0.0};
  CHECK_THROWS(r.sample_weighted(zeros));
}

TEST_CASE("shuffle is a permutation and is seed-deterministic") {
  Rng a(21), b(21);
  std::vector<int> va(50), vb(50);
  std::iota(va.begin(), va.end(), 0);
  std::iota(vb.begin(), vb.end(), 0);
  a.shuffle(va);
  b.shuffle(vb);
  CHECK(va == vb);

  std::vector<int> sorted = va;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("lognormal is positive with roughly the right median") {
  Rng r(31);
  int below_median = 0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double x = r.lognormal(1.0, 0.5);
    CHECK(x > 0.0);
    below_median += (x < std::exp(1.0));
  }
  CHECK(std::abs(below_median - n / 2) < n / 50);
}
