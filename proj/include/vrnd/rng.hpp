#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace vrnd {

// Counter-based generator: draw k of a stream is splitmix64(seed, k), so a
// stream is fully described by (seed, counter) and can be rewound or forked.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0)
      : seed_(seed), key_(mix(seed ^ 0x2545F4914F6CDD1DULL)), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }
  void reset() noexcept { counter_ = 0; }

  std::uint64_t next_u64() noexcept { return mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n) noexcept { return n ? next_u64() % n : 0; }

  // Standard normal via Box-Muller (cosine branch only; two draws per value).
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::vector<double> normals(std::size_t n) {
    std::vector<double> out(n);
    for (double& v : out) v = normal();
    return out;
  }

  // Independent child stream, deterministic in (seed, counter, salt).
  RngStream fork(std::uint64_t salt) noexcept { return RngStream(next_u64() ^ mix(salt + 0x632BE59BD9B4E019ULL)); }

  // Like fork but leaves this stream untouched.
  RngStream child(std::uint64_t salt) const noexcept {
    return RngStream(mix(key_ + (counter_ + 1) * 0x9E3779B97F4A7C15ULL) ^ mix(salt + 0x632BE59BD9B4E019ULL));
  }

 private:
  static std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_;
};

// Fisher-Yates with our own generator so shuffles are identical across
// standard library implementations.
template <class T>
void shuffle(std::vector<T>& items, RngStream& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace vrnd
