#pragma once

#include <Eigen/Core>

namespace racemode {

template <typename Scalar>
using QuarticCoeffs = Eigen::Matrix<Scalar, 5, 1>;

template <typename Scalar>
using QuinticCoeffs = Eigen::Matrix<Scalar, 6, 1>;

/// Jerk-minimal quartic with free terminal position: matches position,
/// velocity and acceleration at t=0, velocity `v_end` and zero acceleration
/// at t=T.
template <typename Scalar>
QuarticCoeffs<Scalar> quartic_velocity_keeping(Scalar p0, Scalar v0, Scalar a0, Scalar v_end, Scalar T) {
  const Scalar T2 = T * T;
  const Scalar T3 = T2 * T;
  const Scalar dv = v_end - v0 - a0 * T;
  const Scalar da = -a0;
  QuarticCoeffs<Scalar> c;
  c << p0, v0, a0 / Scalar(2), dv / T2 - da / (Scalar(3) * T), da / (Scalar(4) * T2) - dv / (Scalar(2) * T3);
  return c;
}

/// Jerk-minimal quintic between (p0, v0, a0) and (p1, v1, a1) over T.
template <typename Scalar>
QuinticCoeffs<Scalar> quintic_boundary(Scalar p0, Scalar v0, Scalar a0, Scalar p1, Scalar v1, Scalar a1, Scalar T) {
  const Scalar T2 = T * T;
  const Scalar T3 = T2 * T;
  const Scalar h = p1 - p0;
  QuinticCoeffs<Scalar> c;
  c[0] = p0;
  c[1] = v0;
  c[2] = a0 / Scalar(2);
  c[3] = (Scalar(20) * h - (Scalar(8) * v1 + Scalar(12) * v0) * T - (Scalar(3) * a0 - a1) * T2) / (Scalar(2) * T3);
  c[4] = (Scalar(-30) * h + (Scalar(14) * v1 + Scalar(16) * v0) * T + (Scalar(3) * a0 - Scalar(2) * a1) * T2) /
         (Scalar(2) * T3 * T);
  c[5] = (Scalar(12) * h - Scalar(6) * (v1 + v0) * T + (a1 - a0) * T2) / (Scalar(2) * T3 * T2);
  return c;
}

/// Value of the `order`-th derivative (0..2) of sum c_i t^i at t.
template <typename Derived>
typename Derived::Scalar poly_eval(const Eigen::MatrixBase<Derived>& c, typename Derived::Scalar t, int order = 0) {
  using Scalar = typename Derived::Scalar;
  Scalar acc(0);
  for (Eigen::Index i = c.size() - 1; i >= order; --i) {
    Scalar factor(1);
    for (int k = 0; k < order; ++k) factor *= Scalar(i - k);
    acc = acc * t + factor * c[i];
  }
  return acc;
}

}  // namespace racemode
