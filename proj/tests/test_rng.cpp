// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "gear/rng.hpp"

using gear::Rng;

TEST_CASE("same seed gives identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 100; ++i)
    if (a.next_u64() == b.next_u64()) ++same;
  CHECK(same == 0);
}

TEST_CASE("uniform stays in [0,1) and covers the range") {
  Rng r(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("ranged uniform respects bounds") {
  Rng r(11);
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform(-3.0, 3.0);
    CHECK(u >= -3.0);
    CHECK(u < 3.0);
  }
}

TEST_CASE("below() is unbiased over a small modulus") {
  Rng r(13);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[r.below(7)];
  for (int c : counts) {
    CHECK(c > n / 7 - 600);
    CHECK(c < n / 7 + 600);
  }
}

TEST_CASE("normal has roughly standard moments") {
  Rng r(17);
  const int n = 50000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.02);
  CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("permutation is a permutation and seed-stable") {
  Rng r(23);
  auto p = r.permutation(50);
  std::set<std::size_t> seen(p.begin(), p.end());
  CHECK(seen.size() == 50);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 49);

  Rng r2(23);
  CHECK(r2.permutation(50) == p);
}

TEST_CASE("fork is a pure function of state and stream id") {
  Rng a(99);
  Rng child_a = a.fork(5);
  a.next_u64();  // consuming the parent afterwards must not matter
  a.next_u64();
  Rng b(99);
  Rng child_b = b.fork(5);
  for (int i = 0; i < 100; ++i)
    CHECK(child_a.next_u64() == child_b.next_u64());
}

TEST_CASE("forked streams differ across stream ids") {
  Rng a(99);
  Rng c1 = a.fork(1);
  Rng c2 = a.fork(2);
  int same = 0;
  for (int i = 0; i < 100; ++i)
    if (c1.next_u64() == c2.next_u64()) ++same;
  CHECK(same == 0);
}
