#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>

namespace mcmr {

/// Seeded generator whose outputs depend only on the seed. The standard
/// distributions are implementation-defined, so uniforms and normals are
/// derived from raw mt19937_64 bits here.
class Rng
{
public:
  explicit Rng(std::uint64_t seed)
    : engine_(seed)
  {
  }

  /// Uniform in [0, 1).
  auto uniform() -> double { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  auto uniform(double lo, double hi) -> double { return lo + (hi - lo) * uniform(); }

  auto normal() -> double
  {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do { u1 = uniform(); } while (u1 <= 0.0);
    double const u2 = uniform();
    double const r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  auto complex_normal() -> std::complex<double>
  {
    double const re = normal();
    return {re, normal()};
  }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace mcmr
