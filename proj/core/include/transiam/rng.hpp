#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace transiam {

/// Seed for a named sub-stream: the same (base, tag, index) always maps to the
/// same seed, and distinct tags give unrelated streams.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0);

/// Deterministic generator. The engine's output sequence is fixed by the C++
/// standard; the conversions below are written out so results do not depend
/// on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace transiam
