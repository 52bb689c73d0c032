#pragma once

// Hand-rolled generators for property tests. Every generator draws from an
// explicit Rng so a failing case can be replayed from its seed.

#include "drst/rng.hpp"
#include "drst/types.hpp"

#include <cmath>
#include <vector>

namespace gen {

using drst::Index;
using drst::IntVector;
using drst::Matrix;
using drst::Rng;
using drst::Vector;

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * drst::uniform01(rng);
}

inline int integer(Rng& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

inline Vector normal_vector(Rng& rng, Index n, double sd = 1.0) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = sd * drst::standard_normal(rng);
  return v;
}

inline Matrix normal_matrix(Rng& rng, Index r, Index c, double sd = 1.0) {
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j) {
    for (Index i = 0; i < r; ++i) m(i, j) = sd * drst::standard_normal(rng);
  }
  return m;
}

// Probability vector with entries bounded away from zero.
inline Vector simplex(Rng& rng, Index k, double floor = 0.05) {
  Vector v(k);
  for (Index i = 0; i < k; ++i) v(i) = floor + drst::uniform01(rng);
  return v / v.sum();
}

inline Matrix stochastic(Rng& rng, Index k, double floor = 0.05) {
  Matrix a(k, k);
  for (Index i = 0; i < k; ++i) a.row(i) = simplex(rng, k, floor).transpose();
  return a;
}

// Binary vector containing both values.
inline IntVector treatment(Rng& rng, Index n, double rate = 0.5) {
  IntVector t(n);
  for (Index i = 0; i < n; ++i) t(i) = drst::uniform01(rng) < rate ? 1 : 0;
  if (t.sum() == 0) t(0) = 1;
  if (t.sum() == n) t(n - 1) = 0;
  return t;
}

// A real number away from the SCAD kinks at lambda and a * lambda.
inline double off_kink(Rng& rng, double lambda, double a, double range, double gap) {
  while (true) {
    const double x = uniform(rng, -range, range);
    const double ax = std::abs(x);
    if (std::abs(ax - lambda) > gap && std::abs(ax - a * lambda) > gap && ax > gap) return x;
  }
}

}  // namespace gen
