#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace lrdq {

/// SplitMix64 finalizer. Used only to derive well-separated engine seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seeded random stream with a documented split rule.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Variates are produced here rather than through the <random>
/// distributions, whose algorithms are implementation-defined, so a given
/// seed yields the same numbers on every conforming toolchain.
///
/// Split rule: substream i of a stream with seed s has seed
/// splitmix64(s ^ splitmix64(i + 1)). Substreams depend only on (s, i), never
/// on how much of the parent has been consumed.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : seed_{seed}, engine_{splitmix64(seed)} {}

  std::uint64_t seed() const noexcept { return seed_; }

  Rng substream(std::uint64_t index) const {
    return Rng{splitmix64(seed_ ^ splitmix64(index + 1))};
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on (0, 1], 53-bit resolution.
  double uniform_open_closed() {
    return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double exponential(double mean) { return -mean * std::log(uniform_open_closed()); }

  /// Uniform integer in [0, bound). Lemire's rejection method.
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = engine_();
      const unsigned __int128 product = static_cast<unsigned __int128>(r) * bound;
      if (static_cast<std::uint64_t>(product) >= threshold)
        return static_cast<std::uint64_t>(product >> 64);
    }
  }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// Fisher-Yates permutation of [0, n).
template <class Index = std::size_t>
void random_permutation(Rng& rng, std::vector<Index>& out, std::size_t n) {
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<Index>(i);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(out[i - 1], out[j]);
  }
}

}  // namespace lrdq
