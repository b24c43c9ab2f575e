#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "racemode/error.hpp"
#include "racemode/math.hpp"
#include "racemode/track.hpp"

namespace racemode {

namespace {

constexpr double kPi = std::numbers::pi;

struct Centreline {
  std::vector<double> s, x, y, psi, kappa;
  double length = 0.0;
};

CartesianPose advance(const CartesianPose& pose, const TrackSegment& seg, double ds) {
  CartesianPose out;
  if (std::abs(seg.kappa) < 1e-12) {
    out.x = pose.x + ds * std::cos(pose.psi);
    out.y = pose.y + ds * std::sin(pose.psi);
    out.psi = pose.psi;
  } else {
    const double psi1 = pose.psi + seg.kappa * ds;
    out.x = pose.x + (std::sin(psi1) - std::sin(pose.psi)) / seg.kappa;
    out.y = pose.y - (std::cos(psi1) - std::cos(pose.psi)) / seg.kappa;
    out.psi = psi1;
  }
  return out;
}

// Gaussian smoothing with arc-length kernel; circular on closed tracks.
std::vector<double> smooth(const std::vector<double>& values, double spacing, double sigma, bool closed) {
  const auto count = static_cast<long>(values.size());
  const long reach = std::max<long>(1, static_cast<long>(std::ceil(3.0 * sigma / spacing)));
  std::vector<double> out(values.size(), 0.0);
  for (long i = 0; i < count; ++i) {
    double acc = 0.0;
    double wsum = 0.0;
    for (long k = -reach; k <= reach; ++k) {
      long j = i + k;
      if (closed) {
        j %= count;
        if (j < 0) j += count;
      } else if (j < 0 || j >= count) {
        continue;
      }
      const double w = std::exp(-0.5 * square(k * spacing / sigma));
      acc += w * values[static_cast<std::size_t>(j)];
      wsum += w;
    }
    out[static_cast<std::size_t>(i)] = acc / wsum;
  }
  return out;
}

// Replaces the piecewise-constant curvature by a smoothed one and
// re-integrates the centreline from its first pose. Closed loops keep their
// total turning exactly; the remaining position gap is spread along s.
void blend_curvature(Centreline& line, double total_turn, double sigma, bool closed) {
  const std::size_t count = line.s.size();
  if (count < 2) return;
  const std::size_t intervals = closed ? count : count - 1;
  const double ds = line.length / static_cast<double>(intervals);
  auto kappa = smooth(line.kappa, ds, sigma, closed);
  if (closed) {
    double turn = 0.0;
    for (double k : kappa) turn += k * ds;
    const double shift = (total_turn - turn) / line.length;
    for (double& k : kappa) k += shift;
  }
  auto next = [&](std::size_t j) { return kappa[(j + 1) % count]; };
  std::vector<double> x(count), y(count), psi(count);
  x[0] = line.x[0];
  y[0] = line.y[0];
  psi[0] = line.psi[0];
  double end_x = 0.0, end_y = 0.0;
  for (std::size_t j = 0; j < intervals; ++j) {
    const double psi1 = psi[j] + 0.5 * ds * (kappa[j] + next(j));
    const double mid = 0.5 * (psi[j] + psi1);
    const double nx = x[j] + ds * std::cos(mid);
    const double ny = y[j] + ds * std::sin(mid);
    if (j + 1 < count) {
      x[j + 1] = nx;
      y[j + 1] = ny;
      psi[j + 1] = psi1;
    } else {
      end_x = nx;
      end_y = ny;
    }
  }
  if (closed) {
    const double ex = end_x - x[0];
    const double ey = end_y - y[0];
    for (std::size_t j = 0; j < count; ++j) {
      const double f = static_cast<double>(j) / static_cast<double>(count);
      x[j] -= f * ex;
      y[j] -= f * ey;
    }
  }
  line.x = std::move(x);
  line.y = std::move(y);
  line.psi = std::move(psi);
  line.kappa = std::move(kappa);
}

TrackDefinition finish_track(const Centreline& line, const TrackParams& params, bool closed) {
  const double half = 0.5 * params.width - params.edge_margin;
  if (!(half > 0.0)) throw InfeasibleGeometry("track width leaves no drivable band");
  const double kappa_peak = *std::max_element(line.kappa.begin(), line.kappa.end(),
                                              [](double a, double b) { return std::abs(a) < std::abs(b); });
  if (!(std::abs(kappa_peak) * half < 1.0)) {
    throw InfeasibleGeometry("corner radius " + std::to_string(1.0 / std::abs(kappa_peak)) +
                             " m is not larger than the track half-width " + std::to_string(half) + " m");
  }

  const std::size_t count = line.s.size();
  const double spacing = closed ? line.length / static_cast<double>(count) : line.length / static_cast<double>(count - 1);

  // Out-in-out heuristic: a narrow curvature kernel pulls the line to the
  // inside at the apex, a wide one pushes it outside on entry and exit.
  const auto apex = smooth(line.kappa, spacing, params.raceline.apex_sigma, closed);
  const auto entry = smooth(line.kappa, spacing, params.raceline.entry_sigma, closed);
  constexpr double kKappaScale = 0.01;
  const double lateral = params.raceline.lateral_use * half;

  std::vector<ReferenceSample> samples(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& r = samples[i];
    r.s = line.s[i];
    r.x = line.x[i];
    r.y = line.y[i];
    r.psi = wrap_angle(line.psi[i]);
    r.kappa = line.kappa[i];
    r.n_min = -half;
    r.n_max = half;
    r.n_raceline = lateral * std::tanh((2.0 * apex[i] - entry[i]) / kKappaScale);
    r.v_raceline = 1.0;
  }
  TrackDefinition draft(samples, closed);
  return with_raceline_speeds(draft, raceline_speed_profile(draft, params.raceline));
}

TrackDefinition oval(const TrackParams& p) {
  if (!(p.straight > 0.0 && p.radius > 0.0)) throw InfeasibleGeometry("oval needs positive straight and radius");
  const double k = 1.0 / p.radius;
  const double arc = kPi * p.radius;
  return track_from_segments({0.0, 0.0, 0.0}, {{p.straight, 0.0}, {arc, k}, {p.straight, 0.0}, {arc, k}}, p, true);
}

// Closed circuit with four corners of different radii, a double-apex and a
// chicane. Two straights are solved for so the loop closes exactly.
TrackDefinition chicane(const TrackParams& p) {
  if (!(p.straight > 0.0 && p.radius > 0.0)) throw InfeasibleGeometry("chicane needs positive straight and radius");
  const double r = p.radius;
  const double a = p.straight;
  auto turn = [](double radius, double angle) { return TrackSegment{radius * angle, 1.0 / radius}; };
  const double rc = 1.5 * r;
  const double theta = 0.3;

  std::vector<TrackSegment> segs = {
      {0.5 * a, 0.0},
      {rc * theta, 1.0 / rc},
      {2.0 * rc * theta, -1.0 / rc},
      {rc * theta, 1.0 / rc},
      {0.5 * a, 0.0},
      turn(r, 0.5 * kPi),
      {0.6 * a, 0.0},
      turn(1.6 * r, 0.25 * kPi),
      {0.15 * a, 0.0},
      turn(1.6 * r, 0.25 * kPi),
      {0.0, 0.0},  // solved: heading pi
      turn(0.8 * r, 0.5 * kPi),
      {0.0, 0.0},  // solved: heading 3pi/2
      turn(1.2 * r, 0.5 * kPi),
  };
  CartesianPose pose{0.0, 0.0, 0.0};
  for (const auto& seg : segs) pose = advance(pose, seg, seg.length);
  // Straight at heading pi moves -x, at 3pi/2 moves -y.
  const double c = pose.x;
  const double d = pose.y;
  if (c < 10.0 || d < 10.0) throw InfeasibleGeometry("chicane parameters do not close the circuit");
  segs[10].length = c;
  segs[12].length = d;
  return track_from_segments({0.0, 0.0, 0.0}, segs, p, true);
}

TrackDefinition random_loop(const TrackParams& p, std::uint64_t seed) {
  if (!(p.mean_radius > 0.0) || p.harmonics < 2) throw InfeasibleGeometry("random_loop needs mean_radius > 0, harmonics >= 2");
  std::mt19937_64 rng(seed);
  auto uniform = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  const int harmonics = p.harmonics;
  std::vector<double> amp(static_cast<std::size_t>(harmonics + 1), 0.0);
  std::vector<double> phase(static_cast<std::size_t>(harmonics + 1), 0.0);
  for (int k = 2; k <= harmonics; ++k) {
    amp[static_cast<std::size_t>(k)] = (2.0 * uniform() - 1.0) * p.amplitude / k;
    phase[static_cast<std::size_t>(k)] = 2.0 * kPi * uniform();
  }
  const double half = 0.5 * p.width - p.edge_margin;
  const double r0 = p.mean_radius;

  for (int attempt = 0; attempt < 40; ++attempt) {
    auto radius = [&](double th, double& d1, double& d2) {
      double r = 1.0;
      d1 = 0.0;
      d2 = 0.0;
      for (int k = 2; k <= harmonics; ++k) {
        const double a = amp[static_cast<std::size_t>(k)];
        const double arg = k * th + phase[static_cast<std::size_t>(k)];
        r += a * std::cos(arg);
        d1 -= k * a * std::sin(arg);
        d2 -= k * k * a * std::cos(arg);
      }
      d1 *= r0;
      d2 *= r0;
      return r0 * r;
    };
    struct Geo { double x, y, dx, dy, ddx, ddy; };
    auto geo = [&](double th) {
      double r1 = 0.0, r2 = 0.0;
      const double r = radius(th, r1, r2);
      const double c = std::cos(th), sn = std::sin(th);
      return Geo{r * c, r * sn, r1 * c - r * sn, r1 * sn + r * c,
                 r2 * c - 2.0 * r1 * sn - r * c, r2 * sn + 2.0 * r1 * c - r * sn};
    };

    constexpr int kDense = 40000;
    std::vector<double> theta(kDense + 1), arc(kDense + 1, 0.0);
    double min_r = std::numeric_limits<double>::infinity();
    double max_k = 0.0;
    for (int i = 0; i <= kDense; ++i) {
      theta[static_cast<std::size_t>(i)] = 2.0 * kPi * i / kDense;
      const Geo g = geo(theta[static_cast<std::size_t>(i)]);
      double d1, d2;
      min_r = std::min(min_r, radius(theta[static_cast<std::size_t>(i)], d1, d2));
      const double speed = std::hypot(g.dx, g.dy);
      max_k = std::max(max_k, std::abs(g.dx * g.ddy - g.dy * g.ddx) / (speed * speed * speed));
      if (i > 0) {
        const Geo gp = geo(theta[static_cast<std::size_t>(i - 1)]);
        const Geo gm = geo(0.5 * (theta[static_cast<std::size_t>(i - 1)] + theta[static_cast<std::size_t>(i)]));
        const double h = theta[static_cast<std::size_t>(i)] - theta[static_cast<std::size_t>(i - 1)];
        // Simpson on |r'(theta)|.
        arc[static_cast<std::size_t>(i)] = arc[static_cast<std::size_t>(i - 1)] +
            h / 6.0 * (std::hypot(gp.dx, gp.dy) + 4.0 * std::hypot(gm.dx, gm.dy) + speed);
      }
    }
    if (min_r < 0.3 * r0 || max_k * half > 0.8) {
      for (auto& a : amp) a *= 0.8;
      continue;
    }

    Centreline line;
    line.length = arc.back();
    const auto count = static_cast<std::size_t>(std::ceil(line.length / p.spacing));
    const double ds = line.length / static_cast<double>(count);
    for (std::size_t j = 0; j < count; ++j) {
      const double s = ds * static_cast<double>(j);
      auto it = std::lower_bound(arc.begin(), arc.end(), s);
      std::size_t hi = static_cast<std::size_t>(std::distance(arc.begin(), it));
      hi = std::clamp<std::size_t>(hi, 1, arc.size() - 1);
      const double f = (s - arc[hi - 1]) / (arc[hi] - arc[hi - 1]);
      const double th = theta[hi - 1] + f * (theta[hi] - theta[hi - 1]);
      const Geo g = geo(th);
      const double speed = std::hypot(g.dx, g.dy);
      line.s.push_back(s);
      line.x.push_back(g.x);
      line.y.push_back(g.y);
      line.psi.push_back(std::atan2(g.dy, g.dx));
      line.kappa.push_back((g.dx * g.ddy - g.dy * g.ddx) / (speed * speed * speed));
    }
    return finish_track(line, p, true);
  }
  throw InfeasibleGeometry("random_loop could not satisfy curvature limits");
}

}  // namespace

std::optional<TrackKind> track_kind_from_string(const std::string& name) {
  if (name == "oval") return TrackKind::oval;
  if (name == "chicane") return TrackKind::chicane;
  if (name == "random_loop") return TrackKind::random_loop;
  return std::nullopt;
}

std::string to_string(TrackKind kind) {
  switch (kind) {
    case TrackKind::oval: return "oval";
    case TrackKind::chicane: return "chicane";
    case TrackKind::random_loop: return "random_loop";
  }
  return "unknown";
}

TrackDefinition track_from_segments(const CartesianPose& start, const std::vector<TrackSegment>& segments,
                                    const TrackParams& params, bool closed) {
  if (!(params.spacing > 0.0 && params.spacing <= TrackDefinition::kMaxSpacing))
    throw InfeasibleGeometry("sample spacing must lie in (0, 5] m");
  std::vector<CartesianPose> starts;
  std::vector<double> offsets;
  CartesianPose pose = start;
  double total = 0.0;
  for (const auto& seg : segments) {
    if (seg.length < 0.0) throw InfeasibleGeometry("negative segment length");
    starts.push_back(pose);
    offsets.push_back(total);
    pose = advance(pose, seg, seg.length);
    total += seg.length;
  }
  if (!(total > 0.0)) throw InfeasibleGeometry("track has zero length");
  if (closed) {
    const double gap = std::hypot(pose.x - start.x, pose.y - start.y);
    const double turn = std::abs(wrap_angle(pose.psi - start.psi));
    if (gap > 1e-6 || turn > 1e-9) throw InfeasibleGeometry("segments do not close");
  }

  const auto intervals = static_cast<std::size_t>(std::ceil(total / params.spacing - 1e-9));
  const std::size_t count = closed ? intervals : intervals + 1;
  const double ds = total / static_cast<double>(intervals);

  Centreline line;
  line.length = total;
  std::size_t seg = 0;
  for (std::size_t j = 0; j < count; ++j) {
    const double s = std::min(ds * static_cast<double>(j), total);
    while (seg + 1 < segments.size() && s >= offsets[seg + 1]) ++seg;
    const CartesianPose p = advance(starts[seg], segments[seg], s - offsets[seg]);
    line.s.push_back(s);
    line.x.push_back(p.x);
    line.y.push_back(p.y);
    line.psi.push_back(p.psi);
    line.kappa.push_back(segments[seg].kappa);
  }
  if (params.kappa_blend > 0.0) blend_curvature(line, pose.psi - start.psi, params.kappa_blend, closed);
  return finish_track(line, params, closed);
}

TrackDefinition synth_track(TrackKind kind, const TrackParams& params, std::uint64_t seed) {
  switch (kind) {
    case TrackKind::oval: return oval(params);
    case TrackKind::chicane: return chicane(params);
    case TrackKind::random_loop: return random_loop(params, seed);
  }
  throw InfeasibleGeometry("unknown track kind");
}

std::vector<double> raceline_speed_profile(const TrackDefinition& track, const RacelineParams& params) {
  const auto& samples = track.samples();
  const std::size_t count = samples.size();
  const bool closed = track.closed();
  auto idx = [&](long i) {
    const auto c = static_cast<long>(count);
    if (closed) {
      i %= c;
      if (i < 0) i += c;
    } else {
      i = std::clamp<long>(i, 0, c - 1);
    }
    return static_cast<std::size_t>(i);
  };
  auto gap = [&](std::size_t i) {  // arc length from sample i to i+1
    if (i + 1 < count) return samples[i + 1].s - samples[i].s;
    return closed ? track.lap_length() - samples[i].s : samples[i].s - samples[i - 1].s;
  };

  std::vector<double> kappa_path(count), step(count), vlim(count);
  const double ay = params.budget * params.ay;
  for (std::size_t i = 0; i < count; ++i) {
    const long li = static_cast<long>(i);
    const auto& prev = samples[idx(li - 1)];
    const auto& cur = samples[i];
    const auto& next = samples[idx(li + 1)];
    const double h0 = (closed || i > 0) ? gap(idx(li - 1)) : gap(0);
    const double h1 = gap(i);
    const double n1 = (next.n_raceline - prev.n_raceline) / (h0 + h1);
    const double n2 = 2.0 * ((next.n_raceline - cur.n_raceline) / h1 - (cur.n_raceline - prev.n_raceline) / h0) / (h0 + h1);
    const double dk = (next.kappa - prev.kappa) / (h0 + h1);
    const double one = 1.0 - cur.n_raceline * cur.kappa;
    const double tan_d = n1 / one;
    const double cos_d = 1.0 / std::sqrt(1.0 + tan_d * tan_d);
    kappa_path[i] = ((n2 + (dk * cur.n_raceline + cur.kappa * n1) * tan_d) * cos_d * cos_d / one + cur.kappa) * cos_d / one;
    step[i] = h1 * std::sqrt(one * one + n1 * n1);
    const double k = std::abs(kappa_path[i]);
    vlim[i] = k > 1e-9 ? std::min(params.v_max, std::sqrt(ay / k)) : params.v_max;
  }

  auto available = [&](double v, double k, double ax) {
    const double lat = std::min(1.0, v * v * k / ay);
    return ax * params.budget * std::pow(std::max(0.0, 1.0 - std::pow(lat, params.p)), 1.0 / params.p);
  };

  std::vector<double> v = vlim;
  const int passes = closed ? 3 : 1;
  for (int pass = 0; pass < passes; ++pass) {
    for (std::size_t k = 0; k + (closed ? 0 : 1) < count; ++k) {
      const std::size_t i = k;
      const std::size_t j = idx(static_cast<long>(k) + 1);
      const double a = available(v[i], std::abs(kappa_path[i]), params.ax_accel);
      v[j] = std::min(v[j], std::sqrt(v[i] * v[i] + 2.0 * a * step[i]));
    }
  }
  for (int pass = 0; pass < passes; ++pass) {
    for (long k = static_cast<long>(count) - (closed ? 1 : 2); k >= 0; --k) {
      const std::size_t i = static_cast<std::size_t>(k);
      const std::size_t j = idx(k + 1);
      const double a = available(v[j], std::abs(kappa_path[j]), params.ax_brake);
      v[i] = std::min(v[i], std::sqrt(v[j] * v[j] + 2.0 * a * step[i]));
    }
  }
  for (auto& x : v) x = std::max(x, 1.0);
  return v;
}

TrackDefinition with_raceline_speeds(const TrackDefinition& track, const std::vector<double>& speeds) {
  if (speeds.size() != track.size()) throw InvalidScenario("speed profile length does not match track");
  auto samples = track.samples();
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].v_raceline = speeds[i];
  return TrackDefinition(std::move(samples), track.closed());
}

}  // namespace racemode
