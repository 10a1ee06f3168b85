// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace gear {

/// Deterministic splittable PRNG built on the splitmix64 finalizer.
///
/// The library never touches platform RNGs: identical seeds produce
/// identical streams on every build, which is what makes whole training
/// runs bitwise reproducible. `fork` derives an independent child stream
/// without advancing the parent, so subsystems (shuffling, swap, init)
/// can each own a stream keyed by a stable tag.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, n). Rejection sampling, no modulo bias. n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Uniform double in [0, 1).
  double uniform();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  /// Gaussian via Box-Muller. One fresh value per call, nothing cached.
  double normal(double mean = 0.0, double stddev = 1.0);

  /// Uniformly random permutation of {0, ..., n-1} (Fisher-Yates).
  std::vector<std::size_t> permutation(std::size_t n);

  /// Independent child stream keyed by `stream`. Does not advance *this.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t state_;
};

}  // namespace gear
