#include "racemode/track.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "racemode/error.hpp"
#include "racemode/math.hpp"

namespace racemode {

namespace {

bool all_finite(const ReferenceSample& r) {
  return std::isfinite(r.s) && std::isfinite(r.x) && std::isfinite(r.y) && std::isfinite(r.psi) &&
         std::isfinite(r.kappa) && std::isfinite(r.n_min) && std::isfinite(r.n_max) &&
         std::isfinite(r.n_raceline) && std::isfinite(r.v_raceline);
}

}  // namespace

TrackDefinition::TrackDefinition(std::vector<ReferenceSample> samples, bool closed)
    : samples_(std::move(samples)), closed_(closed) {
  if (samples_.size() < 2) throw InvariantViolation("at least two samples required");

  constexpr double kTol = 1e-9;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& r = samples_[i];
    const long row = static_cast<long>(i);
    if (!all_finite(r)) throw InvariantViolation("non-finite value", row);
    if (i == 0 && std::abs(r.s) > kTol) throw InvariantViolation("s must start at 0", row);
    if (i > 0) {
      const double ds = r.s - samples_[i - 1].s;
      if (ds <= 0.0) throw InvariantViolation("s not increasing", row);
      // straight pieces interpolate exactly at any spacing
      const auto& q = samples_[i - 1];
      const bool straight = r.kappa == 0.0 && q.kappa == 0.0 && std::abs(wrap_angle(r.psi - q.psi)) < kTol;
      max_spacing_ = std::max(max_spacing_, ds);
      if (ds > kMaxSpacing + kTol && !straight) throw InvariantViolation("spacing exceeds 5 m", row);
      if (std::abs(wrap_angle(r.psi - samples_[i - 1].psi)) > 0.5 * std::numbers::pi)
        throw InvariantViolation("heading discontinuity", row);
    }
    if (!(r.n_min < 0.0 && r.n_max > 0.0)) throw InvariantViolation("lateral bounds must straddle 0", row);
    if (!(r.n_min < r.n_raceline && r.n_raceline < r.n_max))
      throw InvariantViolation("raceline outside bounds", row);
    if (!(r.v_raceline > 0.0)) throw InvariantViolation("raceline speed not positive", row);
    if (!(1.0 - r.n_max * r.kappa > 0.0) || !(1.0 - r.n_min * r.kappa > 0.0))
      throw InvariantViolation("Frenet singularity", row);
    max_width_ = std::max(max_width_, r.n_max - r.n_min);
  }

  if (closed_) {
    const auto& first = samples_.front();
    const auto& last = samples_.back();
    const double gap = std::hypot(first.x - last.x, first.y - last.y);
    if (!(gap > 0.0) || gap > kMaxSpacing + kTol)
      throw InvariantViolation("closing gap exceeds 5 m", static_cast<long>(samples_.size() - 1));
    lap_length_ = last.s + gap;
    max_spacing_ = std::max(max_spacing_, gap);
  } else {
    lap_length_ = samples_.back().s;
  }
}

double TrackDefinition::wrap(double s) const {
  if (!closed_) return std::clamp(s, 0.0, lap_length_);
  double w = std::fmod(s, lap_length_);
  if (w < 0.0) w += lap_length_;
  if (w >= lap_length_) w = 0.0;
  return w;
}

std::size_t TrackDefinition::segment_index(double s_wrapped) const {
  auto it = std::upper_bound(samples_.begin(), samples_.end(), s_wrapped,
                             [](double s, const ReferenceSample& r) { return s < r.s; });
  std::size_t idx = static_cast<std::size_t>(std::distance(samples_.begin(), it));
  idx = idx == 0 ? 0 : idx - 1;
  if (!closed_ && idx + 1 >= samples_.size()) idx = samples_.size() - 2;
  return idx;
}

ReferencePoint TrackDefinition::at(double s) const {
  const double sw = wrap(s);
  const std::size_t i = segment_index(sw);
  const auto& a = samples_[i];
  const bool closing = closed_ && i + 1 == samples_.size();
  const auto& b = closing ? samples_.front() : samples_[i + 1];
  const double s_b = closing ? lap_length_ : b.s;
  const double len = s_b - a.s;
  const double f = (sw - a.s) / len;
  const double dpsi = wrap_angle(b.psi - a.psi);

  ReferencePoint out;
  auto& r = out.sample;
  r.s = sw;
  r.x = a.x + f * (b.x - a.x);
  r.y = a.y + f * (b.y - a.y);
  r.psi = a.psi + f * dpsi;
  r.kappa = a.kappa + f * (b.kappa - a.kappa);
  r.n_min = a.n_min + f * (b.n_min - a.n_min);
  r.n_max = a.n_max + f * (b.n_max - a.n_max);
  r.n_raceline = a.n_raceline + f * (b.n_raceline - a.n_raceline);
  r.v_raceline = a.v_raceline + f * (b.v_raceline - a.v_raceline);
  out.dkappa_ds = (b.kappa - a.kappa) / len;
  out.dx_ds = (b.x - a.x) / len;
  out.dy_ds = (b.y - a.y) / len;
  out.dpsi_ds = dpsi / len;
  return out;
}

CartesianPose frenet_to_cartesian(const TrackDefinition& track, double s, double n) {
  const auto ref = track.at(s).sample;
  if (!(1.0 - n * ref.kappa > 0.0)) throw SingularTransform("1 - n*kappa <= 0 at s=" + std::to_string(s));
  return {ref.x - n * std::sin(ref.psi), ref.y + n * std::cos(ref.psi), wrap_angle(ref.psi)};
}

namespace {

// Tangential component of (p - r(s)); zero exactly where p lies on the normal
// through r(s).
struct Residual {
  double value;
  double slope;
  double lateral;
};

Residual projection_residual(const TrackDefinition& track, double px, double py, double s) {
  const auto ref = track.at(s);
  const double c = std::cos(ref.sample.psi);
  const double sn = std::sin(ref.sample.psi);
  const double dx = px - ref.sample.x;
  const double dy = py - ref.sample.y;
  const double tangential = dx * c + dy * sn;
  const double lateral = -dx * sn + dy * c;
  const double slope = -(ref.dx_ds * c + ref.dy_ds * sn) + ref.dpsi_ds * lateral;
  return {tangential, slope, lateral};
}

}  // namespace

FrenetPose cartesian_to_frenet(const TrackDefinition& track, double x, double y, const ProjectionHint& hint) {
  const auto& samples = track.samples();
  const std::size_t count = samples.size();

  auto dist2 = [&](std::size_t i) { return square(samples[i].x - x) + square(samples[i].y - y); };

  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  if (hint.s) {
    // Local window around the previous projection.
    constexpr double kWindow = 40.0;
    const double spacing = track.mean_spacing();
    const auto reach = static_cast<long>(std::ceil(kWindow / spacing));
    const double s_hint = track.wrap(*hint.s);
    const auto centre = static_cast<long>(std::distance(
        samples.begin(), std::upper_bound(samples.begin(), samples.end(), s_hint,
                                          [](double s, const ReferenceSample& r) { return s < r.s; })));
    for (long k = -reach; k <= reach; ++k) {
      long idx = centre + k;
      if (track.closed()) {
        idx %= static_cast<long>(count);
        if (idx < 0) idx += static_cast<long>(count);
      } else if (idx < 0 || idx >= static_cast<long>(count)) {
        continue;
      }
      const double d2 = dist2(static_cast<std::size_t>(idx));
      if (d2 < best_d2) {
        best_d2 = d2;
        best = static_cast<std::size_t>(idx);
      }
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const double d2 = dist2(i);
      if (d2 < best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
  }

  const double limit = 2.0 * track.max_width();
  if (std::sqrt(best_d2) > limit + track.max_spacing())
    throw OffTrackProjection("point is " + std::to_string(std::sqrt(best_d2)) + " m from the reference line");

  // Bracket the root of the tangential residual around the nearest sample.
  const double s0 = samples[best].s;
  const double step = track.max_spacing();
  double lo = s0 - step;
  double hi = s0 + step;
  if (!track.closed()) {
    lo = std::max(lo, 0.0);
    hi = std::min(hi, track.lap_length());
  }
  Residual r_lo = projection_residual(track, x, y, lo);
  Residual r_hi = projection_residual(track, x, y, hi);
  for (int expand = 0; expand < 8 && !(r_lo.value >= 0.0 && r_hi.value <= 0.0); ++expand) {
    if (r_lo.value < 0.0) {
      lo -= step;
      if (!track.closed()) lo = std::max(lo, 0.0);
      r_lo = projection_residual(track, x, y, lo);
    }
    if (r_hi.value > 0.0) {
      hi += step;
      if (!track.closed()) hi = std::min(hi, track.lap_length());
      r_hi = projection_residual(track, x, y, hi);
    }
  }

  double s = s0;
  if (r_lo.value >= 0.0 && r_hi.value <= 0.0) {
    // Safeguarded Newton: bisection whenever the step leaves the bracket.
    Residual r = projection_residual(track, x, y, s);
    for (int it = 0; it < 200; ++it) {
      if (std::abs(r.value) < 1e-13 || hi - lo < 1e-13) break;
      if (r.value > 0.0) lo = s; else hi = s;
      double next = (r.slope < 0.0) ? s - r.value / r.slope : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      s = next;
      r = projection_residual(track, x, y, s);
    }
  } else if (track.closed()) {
    throw OffTrackProjection("projection could not be bracketed");
  } else {
    // Beyond an open end: clamp to the nearer end point.
    s = (r_lo.value < 0.0) ? lo : hi;
  }

  const Residual fin = projection_residual(track, x, y, s);
  if (std::abs(fin.lateral) > limit) {
    throw OffTrackProjection("lateral offset " + std::to_string(fin.lateral) + " m exceeds projection range");
  }
  const auto ref = track.at(s).sample;
  FrenetPose pose;
  pose.s = track.wrap(s);
  pose.n = fin.lateral;
  pose.mu = hint.psi ? wrap_angle(*hint.psi - ref.psi) : 0.0;
  return pose;
}

WrappedProgress wrap_progress(const TrackDefinition& track, double s_raw) {
  if (!track.closed()) return {s_raw, 0};
  const double length = track.lap_length();
  auto lap = static_cast<std::int64_t>(std::floor(s_raw / length));
  double s = s_raw - static_cast<double>(lap) * length;
  if (s >= length) {
    s -= length;
    ++lap;
  }
  if (s < 0.0) s = 0.0;
  return {s, lap};
}

GeometryFeatures query_geometry(const TrackDefinition& track, double s, const GeometryConfig& config) {
  GeometryFeatures features(kGeometryChannels, config.n_lookahead);
  const double psi0 = track.at(s).sample.psi;
  double prev_psi = psi0;
  double delta = 0.0;
  for (int k = 0; k < config.n_lookahead; ++k) {
    const auto ref = track.at(s + k * config.spacing).sample;
    delta += wrap_angle(ref.psi - prev_psi);
    prev_psi = ref.psi;
    features(kChannelKappa, k) = ref.kappa;
    features(kChannelDeltaPsi, k) = delta;
    features(kChannelNMin, k) = ref.n_min;
    features(kChannelNMax, k) = ref.n_max;
    features(kChannelNRaceline, k) = ref.n_raceline;
    features(kChannelVRaceline, k) = ref.v_raceline;
  }
  return features;
}

}  // namespace racemode
