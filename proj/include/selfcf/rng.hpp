#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace selfcf {

// Mixes a base seed with a path of stream ids (epoch, batch, purpose, ...)
// into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> path);

// Deterministic generator shared by every stochastic component. The engine
// is mt19937_64, whose output sequence is fixed by the C++ standard; the
// conversions below are done by hand because the std distributions are
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // True with probability p.
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace selfcf
