#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "racemode/track.hpp"

namespace testing_support {

using racemode::ReferenceSample;
using racemode::TrackDefinition;

// Open straight track along +x.
inline TrackDefinition straight_track(double length = 400.0, double half_width = 6.0, double spacing = 2.0,
                                      double v_ref = 30.0) {
  std::vector<ReferenceSample> rows;
  const int n = static_cast<int>(std::round(length / spacing));
  for (int i = 0; i <= n; ++i) {
    ReferenceSample r;
    r.s = i * spacing;
    r.x = r.s;
    r.n_min = -half_width;
    r.n_max = half_width;
    r.v_raceline = v_ref;
    rows.push_back(r);
  }
  return TrackDefinition(rows, false);
}

// Closed circle of radius R centred at the origin, starting at (R, 0) and
// running counter-clockwise, sampled at n points.
inline TrackDefinition circle_track(double R = 50.0, int n = 400, double half_width = 5.0, double v_ref = 20.0,
                                    double n_raceline = 0.0) {
  std::vector<ReferenceSample> rows;
  const double ds = 2.0 * std::numbers::pi * R / n;
  for (int i = 0; i < n; ++i) {
    const double th = i * ds / R;
    ReferenceSample r;
    r.s = i * ds;
    r.x = R * std::cos(th);
    r.y = R * std::sin(th);
    r.psi = th + std::numbers::pi / 2.0;
    r.kappa = 1.0 / R;
    r.n_min = -half_width;
    r.n_max = half_width;
    r.n_raceline = n_raceline;
    r.v_raceline = v_ref;
    rows.push_back(r);
  }
  return TrackDefinition(rows, true);
}

}  // namespace testing_support
