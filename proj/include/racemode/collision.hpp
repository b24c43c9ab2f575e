#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>

namespace racemode {

template <typename Scalar>
struct OrientedBox {
  Eigen::Matrix<Scalar, 2, 1> center = Eigen::Matrix<Scalar, 2, 1>::Zero();
  Scalar heading = Scalar(0);
  Scalar half_length = Scalar(0);
  Scalar half_width = Scalar(0);

  Eigen::Matrix<Scalar, 2, 1> axis_long() const { return {std::cos(heading), std::sin(heading)}; }
  Eigen::Matrix<Scalar, 2, 1> axis_lat() const { return {-std::sin(heading), std::cos(heading)}; }

  Scalar bounding_radius() const { return std::hypot(half_length, half_width); }

  std::array<Eigen::Matrix<Scalar, 2, 1>, 4> corners() const {
    const auto l = axis_long() * half_length;
    const auto w = axis_lat() * half_width;
    return {center + l + w, center - l + w, center - l - w, center + l - w};
  }
};

namespace detail {

template <typename Scalar>
bool separated_on(const Eigen::Matrix<Scalar, 2, 1>& axis, const OrientedBox<Scalar>& a, const OrientedBox<Scalar>& b) {
  const Scalar ra = a.half_length * std::abs(axis.dot(a.axis_long())) + a.half_width * std::abs(axis.dot(a.axis_lat()));
  const Scalar rb = b.half_length * std::abs(axis.dot(b.axis_long())) + b.half_width * std::abs(axis.dot(b.axis_lat()));
  return std::abs(axis.dot(b.center - a.center)) > ra + rb;
}

}  // namespace detail

/// Separating-axis test on two rectangles. Touching boxes count as
/// overlapping (closed sets).
template <typename Scalar>
bool boxes_overlap(const OrientedBox<Scalar>& a, const OrientedBox<Scalar>& b) {
  if ((b.center - a.center).norm() > (a.bounding_radius() + b.bounding_radius()) * Scalar(1.000001)) return false;
  return !(detail::separated_on(a.axis_long(), a, b) || detail::separated_on(a.axis_lat(), a, b) ||
           detail::separated_on(b.axis_long(), a, b) || detail::separated_on(b.axis_lat(), a, b));
}

}  // namespace racemode
