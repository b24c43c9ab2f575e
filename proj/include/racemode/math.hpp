#pragma once

#include <cmath>
#include <numbers>

namespace racemode {

template <typename Scalar>
inline Scalar wrap_angle(Scalar angle) {
  constexpr Scalar kPi = std::numbers::pi_v<Scalar>;
  angle = std::fmod(angle + kPi, Scalar(2) * kPi);
  if (angle < Scalar(0)) angle += Scalar(2) * kPi;
  return angle - kPi;
}

template <typename Scalar>
inline Scalar square(Scalar x) {
  return x * x;
}

/// Combined gg-diagram utilisation (|ax|/ax_max)^p + (|ay|/ay_max)^p.
template <typename Scalar>
inline Scalar gg_utilization(Scalar a_long, Scalar a_lat, Scalar ax_max, Scalar ay_max, Scalar p) {
  return std::pow(std::abs(a_long) / ax_max, p) + std::pow(std::abs(a_lat) / ay_max, p);
}

}  // namespace racemode
