#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace pxl {

// SplitMix64 counter generator. One u64 of state makes it trivial to
// serialize into checkpoints, and named streams keep the consumers
// (init, pixel sampling, dropout, data generation) independent so an
// ablation can change exactly one of them.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30; z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27; z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  static std::uint64_t hash_name(std::string_view name) {
    std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
    for (char c : name) { h ^= static_cast<unsigned char>(c); h *= 0x100000001B3ULL; }
    return h;
  }

  // Independent stream derived from (root seed, stream name).
  static Rng stream(std::uint64_t root, std::string_view name) {
    return Rng(mix(root + 0x9E3779B97F4A7C15ULL) ^ hash_name(name));
  }

  // Child stream for element `index`; does not advance this stream.
  Rng fork(std::uint64_t index) const {
    return Rng(mix(state_ ^ mix(index + 0x632BE59BD9B4E019ULL)));
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller without caching the second deviate: two draws per call,
  // state stays a single u64.
  double gaussian(double mean, double sigma) {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    std::uint64_t threshold = (0ULL - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

}  // namespace pxl
