#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "sasaki/grid.hpp"
#include "sasaki/potential.hpp"
#include "sasaki/sampling.hpp"

namespace testing_support {

inline constexpr double pi = std::numbers::pi;

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Random Fourier sum with wavenumbers in {-2..2} and normal amplitudes.
inline sasaki::FourierPotential random_potential(int n, std::uint64_t seed, double amp = 0.004, int modes = 4) {
  sasaki::Rng rng(seed);
  std::vector<sasaki::FourierMode> ms;
  for (int m = 0; m < modes; ++m) {
    sasaki::FourierMode f;
    f.index.resize(2 * n);
    bool zero = true;
    for (auto& k : f.index) {
      k = static_cast<int>(std::floor(rng.uniform(-2.0, 3.0)));
      zero = zero && k == 0;
    }
    if (zero) f.index[0] = 1;
    f.cos_amp = amp * rng.normal();
    f.sin_amp = amp * rng.normal();
    ms.push_back(f);
  }
  return sasaki::FourierPotential(ms);
}

/// random_potential rescaled so that sup |i ddbar phi| is at most strength;
/// adding it to the identity metric stays inside the cone.
inline sasaki::FourierPotential random_kahler_potential(int n, std::uint64_t seed, double strength = 0.3,
                                                        int modes = 4) {
  const auto raw = random_potential(n, seed, 1.0, modes);
  double bound = 0.0;
  for (const auto& f : raw.modes()) {
    double k2 = 0.0;
    for (int k : f.index) k2 += k * k;
    bound += (std::abs(f.cos_amp) + std::abs(f.sin_amp)) * pi * pi * k2;
  }
  std::vector<sasaki::FourierMode> ms = raw.modes();
  for (auto& f : ms) {
    f.cos_amp *= strength / bound;
    f.sin_amp *= strength / bound;
  }
  return sasaki::FourierPotential(ms);
}

/// Component c of a matrix field as a real field.
inline sasaki::RealField component_field(const sasaki::HermitianMatrixField& m, int c) {
  const double* p = m.component(c);
  return sasaki::RealField(m.chart(), std::vector<double>(p, p + m.points()));
}

}  // namespace testing_support
