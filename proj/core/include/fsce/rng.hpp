#pragma once

#include <cstdint>
#include <random>

namespace fsce {

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_seed(std::uint64_t a, std::uint64_t b) { return mix64(mix64(a) ^ (b + 0x632BE59BD9B4E019ULL)); }
constexpr std::uint64_t hash_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return hash_seed(hash_seed(a, b), c);
}

// Seeded generator with distribution code written out here rather than taken
// from <random>, whose distributions are implementation-defined; the engine
// (mt19937_64) is fully specified, so draws are identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  int uniform_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
  }
  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  // Gamma(shape, scale) via Marsaglia-Tsang; shape > 0.
  double gamma(double shape, double scale);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0;
};

}  // namespace fsce
