#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace sit {

// Deterministic random source. All sampling goes through uniform01() so that a
// given seed yields the same stream on every platform; std::mt19937_64 output
// is specified bit-exactly by the standard, and the derived distributions here
// are fixed arithmetic on top of it (the std:: distribution objects are not
// portable across library implementations).
class Rng {
 public:
  explicit Rng(uint64_t seed = 0);

  // Uniform in [0, 1) with 53 random bits.
  double uniform01();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be positive.
  int64_t uniform_int(int64_t n);
  // Bernoulli with probability p of returning true.
  bool bernoulli(double p);
  // Standard normal via Box-Muller; one spare value is cached between calls.
  double normal();
  double normal(double mean, double stddev);
  // Normal(0, stddev) resampled until within [-2*stddev, 2*stddev].
  double truncated_normal(double stddev);

  // Fisher-Yates shuffle of [first, last).
  template <typename It>
  void shuffle(It first, It last) {
    const int64_t n = static_cast<int64_t>(last - first);
    for (int64_t i = n - 1; i > 0; --i) {
      const int64_t j = uniform_int(i + 1);
      std::swap(first[i], first[j]);
    }
  }

  // Independent stream derived from a seed and a stream id.
  static Rng derive(uint64_t seed, uint64_t stream);

  // Full engine + spare state as a text token, restorable with deserialize().
  std::string serialize() const;
  static Rng deserialize(const std::string& state);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sit
