#pragma once

// Deterministic random numbers and direction sampling.
//
// All draws go through std::mt19937_64 (fully specified by the standard)
// with explicit conversions, so sequences do not depend on the library's
// distribution implementations.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "sasaki/small_matrix.hpp"

namespace sasaki {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  cplx complex_normal() {
    const double re = normal();
    return {re, normal()};
  }

  std::uint64_t next_seed() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Unit directions on the sphere in C^n from a Kronecker (generalized golden
/// ratio) sequence in [0,1)^{2n}, rotated by a seeded offset and mapped to
/// complex Gaussians with Box-Muller before normalization. The first m
/// directions of a longer run equal a shorter run with the same seed.
inline std::vector<CVector> sphere_directions(int n, std::size_t count, std::uint64_t seed) {
  const int dim = 2 * n;
  // phi_d solves x^{d+1} = x + 1
  double phi = 2.0;
  for (int it = 0; it < 64; ++it) phi = std::pow(1.0 + phi, 1.0 / (dim + 1));
  std::vector<double> alpha(dim), offset(dim);
  Rng rng(seed);
  for (int k = 0; k < dim; ++k) {
    alpha[k] = std::fmod(std::pow(1.0 / phi, k + 1), 1.0);
    offset[k] = rng.uniform();
  }
  std::vector<CVector> out;
  out.reserve(count);
  for (std::size_t m = 0; m < count; ++m) {
    CVector u(n);
    for (int i = 0; i < n; ++i) {
      double a = offset[2 * i] + static_cast<double>(m + 1) * alpha[2 * i];
      double b = offset[2 * i + 1] + static_cast<double>(m + 1) * alpha[2 * i + 1];
      a -= std::floor(a);
      b -= std::floor(b);
      const double r = std::sqrt(-2.0 * std::log(1.0 - a));
      u(i) = std::polar(r, 2.0 * std::numbers::pi * b);
    }
    const double norm = u.norm();
    if (norm == 0.0) u(0) = 1.0;
    else u /= norm;
    out.push_back(u);
  }
  return out;
}

}  // namespace sasaki
