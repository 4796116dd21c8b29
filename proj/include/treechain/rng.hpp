#pragma once

// Deterministic randomness. All stochastic entry points take an explicit
// seed; parallel work derives independent streams with derive_seed so the
// result is independent of scheduling. We sample from the raw mt19937_64
// output ourselves instead of going through std distributions, whose output
// is not pinned by the standard.

#include <cstdint>
#include <random>
#include <vector>

#include "treechain/errors.hpp"

namespace treechain {

// splitmix64: the recommended seeding scramble for mt19937_64 streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  std::uint64_t raw() { return gen_(); }

  // Uniform in [0,1) with 53 random bits.
  double u01() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0,n), unbiased by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw DomainError("rng", "below(0)");
    std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t r;
    do {
      r = raw();
    } while (r >= limit);
    return r % n;
  }

  // Index sampled proportionally to non-negative weights (not necessarily
  // normalized). Weights summing to zero are a caller bug.
  std::size_t categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw DomainError("rng", "categorical: zero total weight");
    double target = u01() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (target < acc) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace treechain
