#pragma once

#include <cstdint>
#include <string_view>

#include "capeval/text.hpp"

namespace capeval {

/// splitmix64 generator. Self-contained so that seeded results are
/// bit-identical across standard libraries and platforms, which the
/// sampling and bootstrap contracts require.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0,1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Unbiased uniform integer in [0, n). Lemire's multiply-shift with
  /// rejection of the biased region.
  std::uint64_t bounded(std::uint64_t n) {
    if (n <= 1) return 0;
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      std::uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  std::uint64_t state_;
};

/// Derives an independent stream seed from a base seed and a purpose tag,
/// so every randomized stage (sampling, bootstrap, synthetic data) hangs
/// off one configured seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose) {
  Rng g(base ^ fnv1a64(purpose));
  g.next_u64();
  return g.next_u64();
}

}  // namespace capeval
