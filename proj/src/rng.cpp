#include "cfpi/rng.hpp"

#include <cmath>
#include <numbers>

namespace cfpi {

Rng Rng::fork(std::uint64_t id) const {
  // Mix root and id through one splitmix step each so nearby ids give
  // unrelated streams.
  Rng mixer(root_ ^ (id * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL));
  std::uint64_t child = mixer.next_u64();
  return Rng(child);
}

double Rng::normal() {
  // Box-Muller; u1 shifted away from zero so log() is finite.
  double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

void Rng::fill_normal(std::vector<double>& out) {
  for (double& x : out) x = normal();
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t basis) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = basis;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cfpi
