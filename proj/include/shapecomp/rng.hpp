#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace shapecomp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic random source. Gaussian draws use Box-Muller and integer
// draws use rejection sampling, so sequences do not depend on the standard
// library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % span;
    std::uint64_t r;
    do {
      r = gen_();
    } while (r >= limit);
    return lo + static_cast<int>(r % span);
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  // Independent stream derived from the original seed; the parent state is
  // left untouched.
  Rng fork(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x51ed2701)));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace shapecomp
