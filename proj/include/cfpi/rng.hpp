#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace cfpi {

// Deterministic 64-bit PRNG (splitmix64 core). All randomness in a run is
// derived from one root seed; independent streams are forked by mixing the
// root with a stream id, so per-episode / per-resample draws do not depend
// on call ordering or thread scheduling.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : root_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Independent stream keyed by id, anchored at this generator's root seed
  // (not its mutable state), so fork(k) is stable no matter how many draws
  // the parent has made.
  Rng fork(std::uint64_t id) const;

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; always consumes exactly two uniforms so
  // the draw count per call is fixed (no cached second value).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  void fill_normal(std::vector<double>& out);

  std::uint64_t root() const { return root_; }

private:
  std::uint64_t root_;
  std::uint64_t state_;
};

// FNV-1a 64-bit hash; used for dataset payload digests and for keying
// deterministic per-state random streams.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace cfpi
