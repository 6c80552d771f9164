#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace tscp {

/// xoshiro256++ by Blackman & Vigna, seeded through splitmix64.
///
/// All randomness in the library flows through this generator so that a
/// (seed, fractions, N) triple reproduces identical splits, score draws and
/// synthetic data on any platform. std::mt19937 and the std distributions
/// are avoided because their outputs are implementation-defined.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Lemire's multiply-shift; slight modulo bias
  /// is irrelevant at 64 bits and keeps the draw branch-free and portable.
  std::uint64_t next_below(std::uint64_t n) {
    const unsigned __int128 m =
        static_cast<unsigned __int128>(next()) * static_cast<unsigned __int128>(n);
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller (portable, unlike std::normal_distribution).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    spare_ = r * std::sin(two_pi * u2);
    have_spare_ = true;
    return r * std::cos(two_pi * u2);
  }

  static std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// What a derived seed is used for. Keeping the purposes distinct guarantees
/// that e.g. the split shuffle and the score randomization of the same trial
/// never share a stream.
enum class SeedPurpose : std::uint64_t {
  kSplit = 1,
  kFitScoreU = 2,
  kPredictU = 3,
  kTrial = 4,
  kGenerator = 5,
  kTheoryCases = 6,
};

/// Derived seed = splitmix64 mix of (base, index, purpose). Documented so that
/// other implementations of the same pipeline can reproduce every stream from
/// the single user-facing seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index,
                                 SeedPurpose purpose) {
  std::uint64_t s = base;
  s ^= Xoshiro256::splitmix64(s) + 0x9E3779B97F4A7C15ULL * (index + 1);
  s ^= static_cast<std::uint64_t>(purpose) * 0xD1B54A32D192ED03ULL;
  std::uint64_t t = s;
  return Xoshiro256::splitmix64(t);
}

}  // namespace tscp
