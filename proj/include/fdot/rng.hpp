#pragma once

// Seeded standard-normal sampler. Box-Muller over mt19937_64 keeps the
// stream identical across platforms and standard libraries (std's
// normal_distribution is implementation-defined).

#include <cmath>
#include <cstdint>
#include <random>

namespace fdot {

class GaussianSampler {
 public:
  explicit GaussianSampler(std::uint64_t seed) : gen_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0,1], u2 in [0,1)
    const double u1 = (double(gen_() >> 11) + 1.0) * 0x1p-53;
    const double u2 = double(gen_() >> 11) * 0x1p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace fdot
