#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace drmpc {

/// splitmix64 mixing step. Used to derive independent per-run seeds from a
/// master seed without correlated low bits.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seed for run `run_index` under `master_seed`.
inline std::uint64_t derive_run_seed(std::uint64_t master_seed,
                                     std::uint64_t run_index) {
  return splitmix64(master_seed ^ splitmix64(run_index + 1));
}

/// Standard normal generator: mt19937_64 uniforms mapped through the
/// Box-Muller transform. Fixed algorithm so that a seed pins the sample
/// stream independent of the C++ standard library's normal_distribution.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : engine_(seed) {}

  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // 53-bit uniforms in [0,1); u1 is kept away from zero for the log.
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1p-53;
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1p-53; }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace drmpc
