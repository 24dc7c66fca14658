#include "sit/rng.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace sit {

namespace {

uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(uint64_t seed) : engine_(seed) {}

double Rng::uniform01() {
  const uint64_t bits = engine_() >> 11;
  return static_cast<double>(bits) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

int64_t Rng::uniform_int(int64_t n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  // Rejection sampling over the low bits keeps the distribution exact.
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<int64_t>(x % un);
}

bool Rng::bernoulli(double p) { return uniform01() < p; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1, u2;
  do {
    u1 = uniform01();
  } while (u1 <= 0.0);
  u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double Rng::normal(double mean, double stddev) { return mean + stddev * normal(); }

double Rng::truncated_normal(double stddev) {
  for (;;) {
    const double x = stddev * normal();
    if (std::abs(x) <= 2.0 * stddev) return x;
  }
}

Rng Rng::derive(uint64_t seed, uint64_t stream) {
  uint64_t s = seed;
  uint64_t mixed = splitmix64(s);
  s ^= stream * 0xda942042e4dd58b5ULL;
  mixed ^= splitmix64(s);
  return Rng(mixed);
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_ << " " << (has_spare_ ? 1 : 0) << " ";
  // Hex bit pattern keeps the spare exact through the text round trip.
  uint64_t bits;
  static_assert(sizeof(bits) == sizeof(spare_));
  std::memcpy(&bits, &spare_, sizeof(bits));
  os << std::hex << bits;
  return os.str();
}

Rng Rng::deserialize(const std::string& state) {
  Rng r;
  std::istringstream is(state);
  int spare_flag = 0;
  uint64_t bits = 0;
  is >> r.engine_ >> spare_flag >> std::hex >> bits;
  if (!is) throw std::runtime_error("Rng::deserialize: malformed state string");
  r.has_spare_ = spare_flag != 0;
  std::memcpy(&r.spare_, &bits, sizeof(bits));
  return r;
}

}  // namespace sit
