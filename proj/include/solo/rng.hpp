#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace solo {

// splitmix64: used only to stretch a seed into engine state / derive streams.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic random stream. The engine is std::mt19937_64 (its output
// sequence is fixed by the standard); the distributions are hand-rolled here
// because the std:: ones are implementation-defined and would break
// cross-toolchain reproducibility of manifests and checkpoints.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : engine_(seed) {}

  // Child seed for (base seed, key); chain calls for multi-level streams.
  static uint64_t derive_seed(uint64_t base_seed, uint64_t key) {
    uint64_t s = base_seed ^ (0x9e3779b97f4a7c15ULL * (key + 1));
    return splitmix64(s);
  }

  // Independent child stream for (this seed, key), e.g. one per record index.
  static RngStream derive(uint64_t base_seed, uint64_t key) {
    return RngStream(derive_seed(base_seed, key));
  }

  uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive. Modulo bias is ~2^-64 * span,
  // irrelevant next to determinism for the tiny ranges used here.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(engine_() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller (deterministic, no cached spare).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace solo
