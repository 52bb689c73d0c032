#pragma once

#include <cmath>
#include <stdexcept>

namespace drst {

/// Smoothly clipped absolute deviation penalty P(x; lambda) with shape a > 2.
struct ScadPenalty {
  double lambda = 0.0;
  double a = 3.7;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("scad: lambda must be >= 0");
    if (!(a > 2.0) || !std::isfinite(a)) throw std::invalid_argument("scad: a must be > 2");
  }
};

/// P'(|x|): lambda on [0, lambda], linear decay to zero on (lambda, a*lambda],
/// zero beyond.
template <typename Scalar>
Scalar scad_deriv(Scalar x, const ScadPenalty& pen) {
  using std::abs;
  const Scalar ax = abs(x);
  const Scalar lam = Scalar(pen.lambda);
  if (ax <= lam) return lam;
  const Scalar al = Scalar(pen.a) * lam;
  if (ax <= al) return (al - ax) / (Scalar(pen.a) - Scalar(1));
  return Scalar(0);
}

/// Penalty value, the integral of scad_deriv from 0 to |x|.
template <typename Scalar>
Scalar scad_value(Scalar x, const ScadPenalty& pen) {
  using std::abs;
  const Scalar ax = abs(x);
  const Scalar lam = Scalar(pen.lambda);
  const Scalar a = Scalar(pen.a);
  if (ax <= lam) return lam * ax;
  if (ax <= a * lam) return (Scalar(2) * a * lam * ax - ax * ax - lam * lam) / (Scalar(2) * (a - Scalar(1)));
  return (a + Scalar(1)) * lam * lam / Scalar(2);
}

/// Sum of penalties over the coefficients selected by `mask` (nonzero entries
/// are penalized).
template <typename VecA, typename VecB>
double scad_sum(const VecA& coef, const VecB& mask, const ScadPenalty& pen) {
  double s = 0.0;
  for (decltype(coef.size()) j = 0; j < coef.size(); ++j) {
    if (mask(j)) s += scad_value(static_cast<double>(coef(j)), pen);
  }
  return s;
}

}  // namespace drst
