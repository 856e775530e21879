#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace flexmuse {

// xoshiro256** with splitmix64 seeding. A hand-rolled generator keeps the
// byte stream identical across platforms and standard libraries, which the
// determinism guarantees depend on; the state is four u64 words and
// serializes directly into checkpoints.
class Rng {
 public:
  Rng() : Rng(0) {}

  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : state_) w = splitmix64(x);
  }

  static Rng from_state(const std::array<std::uint64_t, 4>& s) {
    Rng r;
    r.state_ = s;
    return r;
  }

  const std::array<std::uint64_t, 4>& state() const { return state_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1): rejects exact zero so log() stays finite.
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; the spare is discarded so the state stays a pure function
  // of the draw count.
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = -n % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Derives an independent substream; used for per-unit generation.
  Rng split(std::uint64_t stream) const {
    std::uint64_t x = state_[0] ^ rotl(state_[3], 13) ^ (stream * 0x9e3779b97f4a7c15ULL);
    Rng r;
    for (auto& w : r.state_) w = splitmix64(x);
    return r;
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
};

// FNV-1a, used wherever content must hash deterministically.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace flexmuse
