#pragma once
// Seeded RNG owned by the project so draws are reproducible independent of
// standard-library distribution implementations.

#include <cmath>
#include <cstdint>
#include <random>

namespace sndcnn {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double next_real() { return double(gen_() >> 11) * 0x1.0p-53; }

  // uniform in [0, n)
  std::uint64_t next_below(std::uint64_t n) { return gen_() % n; }

  // standard normal via Box-Muller
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = double((gen_() >> 11) + 1) * 0x1.0p-53; // (0, 1]
    const double u2 = double(gen_() >> 11) * 0x1.0p-53;       // [0, 1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

} // namespace sndcnn
