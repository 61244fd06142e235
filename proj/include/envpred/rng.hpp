#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace envpred {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// mt19937_64 core with hand-rolled variate transforms. The standard library
// only pins down the engine, not the distributions, so rolling the transforms
// here keeps streams identical across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(seed) {}

  uint64_t next() { return gen_(); }

  // [0, 1) with 53-bit resolution
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }
  double normal(double mean, double sd) { return mean + sd * normal(); }

  // uniform integer in [0, n), bit-mask rejection
  int64_t uniform_int(int64_t n) {
    if (n <= 1) return 0;
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t mask = un - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    for (;;) {
      uint64_t r = next() & mask;
      if (r < un) return static_cast<int64_t>(r);
    }
  }

  // derived independent stream
  Rng fork(uint64_t stream) const { return Rng(splitmix64(seed_ ^ splitmix64(stream + 1))); }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace envpred
