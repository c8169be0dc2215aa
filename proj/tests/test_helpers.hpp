#pragma once

#include <random>

#include "blochwkb/blochwkb.hpp"

namespace blochwkb::testing {

inline VecX random_vector(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> d;
  VecX v(n);
  for (int i = 0; i < n; ++i) v(i) = cplx(d(rng), d(rng));
  return v;
}

inline FourierField6 random_field(std::mt19937_64& rng, const Vec3& theta, const LatticeCutoff& cut) {
  return {theta, cut, random_vector(rng, cut.dim())};
}

// eps0(y) = (1 + a cos y1 + b cos(y2)) I plus a small off-diagonal cos(y1) coupling
inline MaterialSpec anisotropic_layered() {
  MaterialSpec s = MaterialSpec::layered(0, 1.2, 0.3);
  Mat3c off = Mat3c::Zero();
  off(0, 1) = off(1, 0) = 0.05;
  s.eps0[{1, 0, 0}] += off;
  s.eps0[{-1, 0, 0}] += off;
  return s;
}

}  // namespace blochwkb::testing
