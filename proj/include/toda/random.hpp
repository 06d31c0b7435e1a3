#pragma once

#include <cstdint>

namespace toda {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based generator: the stream for (seed, key) is a pure function of
/// its arguments, so sample i can be replayed without drawing samples 0..i-1.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t key)
      : base_(splitmix64(seed ^ splitmix64(key + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t next() { return splitmix64(base_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto range = static_cast<unsigned __int128>(hi - lo + 1);
    return lo + static_cast<std::int64_t>((static_cast<unsigned __int128>(next()) * range) >> 64);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

}  // namespace toda
