#ifndef LOCKIN_RNG_HPP
#define LOCKIN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <limits>

namespace lockin {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// xoshiro256** with a splittable keyed constructor.
///
/// A stream is identified by (seed, key1, key2), typically (seed, run, agent).
/// Streams are independent of the order in which they are created, so
/// parallel runs reproduce serial output bit for bit.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) { reseed(seed, 0, 0); }
  Rng(std::uint64_t seed, std::uint64_t key1, std::uint64_t key2) { reseed(seed, key1, key2); }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Standard normal via the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0, v = 0.0, s = 0.0;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  void reseed(std::uint64_t seed, std::uint64_t key1, std::uint64_t key2) {
    std::uint64_t mix = seed;
    std::uint64_t h = splitmix64(mix);
    mix = h ^ (key1 * 0xD1B54A32D192ED03ULL);
    h = splitmix64(mix);
    mix = h ^ (key2 * 0x8CB92BA72F3D8DD7ULL);
    for (auto& word : s_) word = splitmix64(mix);
    has_spare_ = false;
  }

  std::uint64_t s_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lockin

#endif  // LOCKIN_RNG_HPP
