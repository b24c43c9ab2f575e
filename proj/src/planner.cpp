#include "racemode/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "racemode/collision.hpp"
#include "racemode/error.hpp"
#include "racemode/math.hpp"

namespace racemode {

// -- configuration ------------------------------------------------------------

void ConstraintLimits::validate() const {
  if (!(kappa_max > 0 && v_max >= 0 && ax_eng > 0 && ax_max > 0 && ay_max > 0))
    throw ConfigError("constraint limits must be positive (v_max may be 0)");
  if (!(p_exponent >= 1.0)) throw ConfigError("gg exponent p must be >= 1");
}

ConstraintLimits ConstraintLimits::scaled_accelerations(double scale) const {
  ConstraintLimits out = *this;
  out.ax_eng *= scale;
  out.ax_max *= scale;
  out.ay_max *= scale;
  return out;
}

RacelineParams ConstraintLimits::raceline_params(double budget) const {
  RacelineParams p;
  p.v_max = v_max;
  p.ax_accel = ax_eng;
  p.ax_brake = ax_max;
  p.ay = ay_max;
  p.p = p_exponent;
  p.budget = budget;
  return p;
}

void WeightSet::validate() const {
  const std::array<double, 5> w{w_rl, w_v, w_a, w_pr, w_c};
  bool any = false;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("cost weights must be finite and nonnegative");
    any = any || x > 0.0;
  }
  if (!any) throw ConfigError("at least one cost weight must be positive");
}

std::string to_string(BehaviorMode mode) {
  switch (mode) {
    case BehaviorMode::NR: return "NR";
    case BehaviorMode::AG: return "AG";
    case BehaviorMode::CD: return "CD";
  }
  return "?";
}

std::optional<BehaviorMode> mode_from_string(const std::string& name) {
  if (name == "NR") return BehaviorMode::NR;
  if (name == "AG") return BehaviorMode::AG;
  if (name == "CD") return BehaviorMode::CD;
  return std::nullopt;
}

WeightLibrary WeightLibrary::defaults() {
  WeightLibrary lib;
  lib[BehaviorMode::NR] = {50.0, 10.0, 500.0, 1e5, 1e8};
  lib[BehaviorMode::AG] = {1.0, 10.0, 200.0, 1e4, 1.0};
  lib[BehaviorMode::CD] = {1.0, 1.0, 1.0, 1.0, 100.0};
  return lib;
}

std::string to_string(Constraint c) {
  switch (c) {
    case Constraint::none: return "none";
    case Constraint::curvature: return "curvature";
    case Constraint::speed: return "speed";
    case Constraint::track_limits: return "track_limits";
    case Constraint::engine: return "engine";
    case Constraint::acceleration: return "acceleration";
    case Constraint::singular: return "singular";
  }
  return "?";
}

void PlannerConfig::validate() const {
  if (!(traj_dt > 0.0 && replan_dt > 0.0 && horizon_T > 0.0)) throw ConfigError("planner times must be positive");
  if (horizon_T < replan_dt) throw ConfigError("horizon_T must be >= replan_dt");
  const double ratio = replan_dt / traj_dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) throw ConfigError("traj_dt must divide replan_dt");
  if (n_lat_samples < 1 || n_speed_samples < 1) throw ConfigError("sample counts must be >= 1");
  if (!(speed_lo <= speed_hi) || speed_lo < 0.0) throw ConfigError("invalid speed band");
  if (!(lat_lo <= lat_hi)) throw ConfigError("invalid lateral band");
  limits.validate();
}

int PlannerConfig::steps() const { return static_cast<int>(std::lround(horizon_T / traj_dt)); }
int PlannerConfig::replan_steps() const { return static_cast<int>(std::lround(replan_dt / traj_dt)); }

double StartState::n_prime() const { return n_dot / std::max(s_dot, 1e-3); }

double StartState::n_pprime() const {
  const double sd = std::max(s_dot, 1e-3);
  return (n_ddot - n_prime() * s_ddot) / (sd * sd);
}

// -- start state --------------------------------------------------------------

StartState identify_start_state(const CandidateTrajectory& committed, double replan_dt) {
  const auto& pts = committed.points;
  if (pts.empty() || pts.back().t < replan_dt - 1e-9)
    throw HorizonExhausted("committed trajectory ends before the replanning instant");
  std::size_t k = 0;
  while (k + 1 < pts.size() && pts[k + 1].t <= replan_dt + 1e-12) ++k;
  const TrajPoint& a = pts[k];
  StartState st{a.s, a.n, a.s_dot, a.s_ddot, a.n_dot, a.n_ddot};
  if (k + 1 < pts.size() && replan_dt > a.t + 1e-12) {
    const TrajPoint& b = pts[k + 1];
    const double f = (replan_dt - a.t) / (b.t - a.t);
    auto lerp = [f](double x, double y) { return x + f * (y - x); };
    st = {lerp(a.s, b.s), lerp(a.n, b.n), lerp(a.s_dot, b.s_dot), lerp(a.s_ddot, b.s_ddot),
          lerp(a.n_dot, b.n_dot), lerp(a.n_ddot, b.n_ddot)};
  }
  return st;
}

StartState identify_start_state(const AgentState& vehicle, const TrackDefinition& track) {
  const auto ref = track.at(vehicle.s).sample;
  const double one = 1.0 - vehicle.n * ref.kappa;
  if (!(one > 0.0)) throw SingularTransform("vehicle outside the nonsingular Frenet band");
  StartState st;
  st.s = vehicle.s;
  st.n = vehicle.n;
  st.s_dot = std::max(0.0, vehicle.v * std::cos(vehicle.mu) / one);
  st.s_ddot = vehicle.a_long * std::cos(vehicle.mu) / one;
  st.n_dot = vehicle.v * std::sin(vehicle.mu);
  st.n_ddot = 0.0;
  return st;
}

// -- profiles -----------------------------------------------------------------

QuarticCoeffs<double> gen_longitudinal(const StartState& start, double s_dot_end, double T, double min_horizon) {
  if (!(T >= min_horizon) || !(T > 0.0)) throw DegenerateHorizon("longitudinal horizon below one trajectory step");
  return quartic_velocity_keeping(start.s, start.s_dot, start.s_ddot, s_dot_end, T);
}

QuinticCoeffs<double> gen_lateral(const StartState& start, double n_end, double T, double min_horizon) {
  if (!(T >= min_horizon) || !(T > 0.0)) throw DegenerateHorizon("lateral horizon below one trajectory step");
  return quintic_boundary(start.n, start.n_dot, start.n_ddot, n_end, 0.0, 0.0, T);
}

namespace {

struct LongSamples {
  std::vector<double> s, s_dot, s_ddot;
  std::vector<ReferencePoint> ref;
  std::vector<char> beyond_end;
};

struct LatSamples {
  std::vector<double> n, n_dot, n_ddot;
};

void attach_reference(LongSamples& ls, const TrackDefinition& track) {
  const std::size_t count = ls.s.size();
  ls.ref.resize(count);
  ls.beyond_end.assign(count, 0);
  for (std::size_t k = 0; k < count; ++k) {
    ls.ref[k] = track.at(ls.s[k]);
    if (!track.closed() && (ls.s[k] > track.lap_length() || ls.s[k] < 0.0)) ls.beyond_end[k] = 1;
  }
}

LongSamples sample_longitudinal(const QuarticCoeffs<double>& c, int steps, double dt, const TrackDefinition& track) {
  LongSamples ls;
  const auto count = static_cast<std::size_t>(steps + 1);
  ls.s.resize(count);
  ls.s_dot.resize(count);
  ls.s_ddot.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = dt * static_cast<double>(k);
    ls.s[k] = poly_eval(c, t, 0);
    ls.s_dot[k] = poly_eval(c, t, 1);
    ls.s_ddot[k] = poly_eval(c, t, 2);
  }
  attach_reference(ls, track);
  return ls;
}

LatSamples sample_lateral(const QuinticCoeffs<double>& c, int steps, double dt) {
  LatSamples lt;
  const auto count = static_cast<std::size_t>(steps + 1);
  lt.n.resize(count);
  lt.n_dot.resize(count);
  lt.n_ddot.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = dt * static_cast<double>(k);
    lt.n[k] = poly_eval(c, t, 0);
    lt.n_dot[k] = poly_eval(c, t, 1);
    lt.n_ddot[k] = poly_eval(c, t, 2);
  }
  return lt;
}

void fill_points(const LongSamples& ls, const LatSamples& lt, double dt, CandidateTrajectory& out) {
  const std::size_t count = ls.s.size();
  out.points.resize(count);
  constexpr double kMinSdot = 1e-3;
  for (std::size_t k = 0; k < count; ++k) {
    TrajPoint& p = out.points[k];
    const ReferencePoint& rp = ls.ref[k];
    const ReferenceSample& ref = rp.sample;
    p.t = dt * static_cast<double>(k);
    p.s = ls.s[k];
    p.s_dot = ls.s_dot[k];
    p.s_ddot = ls.s_ddot[k];
    p.n = lt.n[k];
    p.n_dot = lt.n_dot[k];
    p.n_ddot = lt.n_ddot[k];

    const double kappa = ref.kappa;
    const double one = std::max(1.0 - p.n * kappa, 1e-6);
    const double sd = std::max(p.s_dot, kMinSdot);
    const double n1 = p.n_dot / sd;
    const double n2 = (p.n_ddot - n1 * p.s_ddot) / (sd * sd);
    const double tan_d = n1 / one;
    const double cos_d = 1.0 / std::sqrt(1.0 + tan_d * tan_d);
    p.n_prime = n1;
    p.v = std::hypot(p.s_dot * one, p.n_dot);
    p.kappa_path = ((n2 + (rp.dkappa_ds * p.n + kappa * n1) * tan_d) * cos_d * cos_d / one + kappa) * cos_d / one;
    p.psi = wrap_angle(ref.psi + std::atan2(p.n_dot, p.s_dot * one));
    p.x = ref.x - p.n * std::sin(ref.psi);
    p.y = ref.y + p.n * std::cos(ref.psi);
    p.kappa_ref = kappa;
    if (ls.beyond_end[k]) {
      p.n_min = std::numeric_limits<double>::infinity();
      p.n_max = -std::numeric_limits<double>::infinity();
    } else {
      p.n_min = ref.n_min;
      p.n_max = ref.n_max;
    }
    p.n_raceline = ref.n_raceline;
    p.v_raceline = ref.v_raceline;
  }
  // Longitudinal acceleration from the speed profile, a_lat from curvature.
  for (std::size_t k = 0; k < count; ++k) {
    TrajPoint& p = out.points[k];
    if (count == 1) {
      p.a_long = 0.0;
    } else if (k == 0) {
      p.a_long = (out.points[1].v - p.v) / dt;
    } else if (k + 1 == count) {
      p.a_long = (p.v - out.points[k - 1].v) / dt;
    } else {
      p.a_long = (out.points[k + 1].v - out.points[k - 1].v) / (2.0 * dt);
    }
    p.a_lat = p.v * p.v * p.kappa_path;
  }
  out.s_dot_end = ls.s_dot.back();
  out.n_end = lt.n.back();
  out.feasibility = {};
  out.cost = {};
}

OrientedBox<double> box_at(double x, double y, double psi, const Footprint& fp, double inflate) {
  OrientedBox<double> b;
  b.center = {x, y};
  b.heading = psi;
  b.half_length = 0.5 * fp.length + inflate;
  b.half_width = 0.5 * fp.width + inflate;
  return b;
}

}  // namespace

CandidateTrajectory assemble_trajectory(const QuarticCoeffs<double>& longitudinal, const QuinticCoeffs<double>& lateral,
                                        const TrackDefinition& track, const PlannerConfig& config) {
  CandidateTrajectory out;
  const int steps = config.steps();
  fill_points(sample_longitudinal(longitudinal, steps, config.traj_dt, track),
              sample_lateral(lateral, steps, config.traj_dt), config.traj_dt, out);
  return out;
}

CandidateTrajectory assemble_from_samples(const std::vector<double>& s, const std::vector<double>& s_dot,
                                          const std::vector<double>& s_ddot, const std::vector<double>& n,
                                          const std::vector<double>& n_dot, const std::vector<double>& n_ddot,
                                          const TrackDefinition& track, const PlannerConfig& config) {
  const std::size_t count = s.size();
  if (count == 0 || s_dot.size() != count || s_ddot.size() != count || n.size() != count || n_dot.size() != count ||
      n_ddot.size() != count) {
    throw InvalidScenario("sampled profiles must be non-empty and of equal length");
  }
  LongSamples ls{s, s_dot, s_ddot, {}, {}};
  attach_reference(ls, track);
  LatSamples lt{n, n_dot, n_ddot};
  CandidateTrajectory out;
  fill_points(ls, lt, config.traj_dt, out);
  return out;
}

// -- evaluation ---------------------------------------------------------------

Feasibility check_feasibility(const CandidateTrajectory& traj, const ConstraintLimits& limits) {
  for (std::size_t k = 0; k < traj.points.size(); ++k) {
    const TrajPoint& p = traj.points[k];
    const int idx = static_cast<int>(k);
    if (!(1.0 - p.n * p.kappa_ref > 0.0)) return {false, Constraint::singular, idx};
    if (!(p.n_min <= p.n && p.n <= p.n_max)) return {false, Constraint::track_limits, idx};
    if (!(p.v <= limits.v_max)) return {false, Constraint::speed, idx};
    if (!(std::abs(p.kappa_path) <= limits.kappa_max)) return {false, Constraint::curvature, idx};
    if (!(p.a_long <= limits.ax_eng)) return {false, Constraint::engine, idx};
    if (!(gg_utilization(p.a_long, p.a_lat, limits.ax_max, limits.ay_max, limits.p_exponent) <= 1.0))
      return {false, Constraint::acceleration, idx};
  }
  return {};
}

CostBreakdown evaluate_cost(const CandidateTrajectory& traj, const WeightSet& weights,
                            const OpponentPrediction* opponent, const PlannerConfig& config) {
  const auto& pts = traj.points;
  const ConstraintLimits& lim = config.limits;
  const CostParams& cp = config.cost;
  const double inflate = 0.5 * cp.footprint_margin;
  const bool has_opp = opponent != nullptr && !opponent->poses.empty();

  std::array<double, 5> prev{};
  CostBreakdown c;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const TrajPoint& p = pts[k];
    std::array<double, 5> cur{};
    cur[0] = square(p.n - p.n_raceline);
    cur[1] = square(p.v - p.v_raceline);
    const double util = gg_utilization(p.a_long, p.a_lat, lim.ax_max, lim.ay_max, lim.p_exponent);
    cur[2] = square(std::max(0.0, util - cp.u_thresh));
    if (has_opp) {
      const PredictedPose& o = opponent->poses[std::min(k, opponent->poses.size() - 1)];
      const double d = std::hypot(p.x - o.x, p.y - o.y);
      cur[3] = square(std::max(0.0, cp.d_pr - d));
      const auto ego_box = box_at(p.x, p.y, p.psi, config.footprint, inflate);
      const auto opp_box = box_at(o.x, o.y, o.psi, opponent->footprint, inflate);
      cur[4] = boxes_overlap(ego_box, opp_box) ? 1.0 : 0.0;
    }
    if (k > 0) {
      const double h = 0.5 * (p.t - pts[k - 1].t);
      c.c_rl += h * (prev[0] + cur[0]);
      c.c_v += h * (prev[1] + cur[1]);
      c.c_a += h * (prev[2] + cur[2]);
      c.c_pr += h * (prev[3] + cur[3]);
      c.c_c += h * (prev[4] + cur[4]);
    }
    prev = cur;
  }
  c.total = c.weighted(weights);
  return c;
}

namespace {

// d n_raceline / d s by central difference over +-0.5 m.
double raceline_slope(const TrackDefinition& track, double s) {
  constexpr double h = 0.5;
  return (track.at(s + h).sample.n_raceline - track.at(s - h).sample.n_raceline) / (2.0 * h);
}

}  // namespace

OpponentPrediction predict_opponent(const AgentState& opponent, const TrackDefinition& its_track,
                                    const PlannerConfig& config, const Footprint& footprint) {
  const StartState st = identify_start_state(opponent, its_track);
  const int steps = config.steps();
  const double s_dot = st.s_dot;
  const double e0 = st.n - its_track.at(st.s).sample.n_raceline;
  const double tau = config.prediction_decay;

  OpponentPrediction pred;
  pred.footprint = footprint;
  pred.poses.resize(static_cast<std::size_t>(steps + 1));
  for (int k = 0; k <= steps; ++k) {
    const double t = config.traj_dt * k;
    const double s = st.s + s_dot * t;
    const auto ref = its_track.at(s).sample;
    const double decay = std::exp(-t / tau);
    const double n = ref.n_raceline + e0 * decay;
    const double n_dot = raceline_slope(its_track, s) * s_dot - e0 / tau * decay;
    const double one = std::max(1.0 - n * ref.kappa, 1e-6);
    PredictedPose& p = pred.poses[static_cast<std::size_t>(k)];
    p.t = t;
    p.s = s;
    p.n = n;
    p.x = ref.x - n * std::sin(ref.psi);
    p.y = ref.y + n * std::cos(ref.psi);
    p.psi = wrap_angle(ref.psi + std::atan2(n_dot, s_dot * one));
  }
  return pred;
}

// -- planning -----------------------------------------------------------------

EndStateGrid end_state_grid(const StartState& start, const TrackDefinition& track, const PlannerConfig& config) {
  const double T = config.horizon_T;
  const double s_end = start.s + start.s_dot * T;
  const auto ref0 = track.at(start.s).sample;
  const auto ref1 = track.at(s_end).sample;

  EndStateGrid grid;
  const double lo = std::max(config.lat_lo, std::max(ref0.n_min, ref1.n_min));
  const double hi = std::min(config.lat_hi, std::min(ref0.n_max, ref1.n_max));
  if (lo <= hi) {
    if (config.n_lat_samples == 1) {
      grid.n_end.push_back(0.5 * (lo + hi));
    } else {
      for (int i = 0; i < config.n_lat_samples; ++i)
        grid.n_end.push_back(lo + (hi - lo) * i / (config.n_lat_samples - 1));
    }
  }

  const ConstraintLimits& lim = config.limits;
  // The raceline speed is a path speed; convert it to arc-length rate along
  // the raceline offset so the band brackets it in corners too.
  const double to_sdot = 1.0 / std::hypot(1.0 - ref1.n_raceline * ref1.kappa, raceline_slope(track, s_end));
  const double v_ref = ref1.v_raceline * to_sdot;
  double band_lo = std::max(0.0, config.speed_lo * v_ref);
  double band_hi = std::min(lim.v_max * to_sdot, config.speed_hi * v_ref);
  // Quartic velocity changes peak at 1.5x their mean acceleration.
  const double reach_lo = std::max(0.0, start.s_dot - lim.ax_max * T / 1.5);
  const double reach_hi = start.s_dot + lim.ax_eng * T / 1.5;
  double v_lo = std::max(band_lo, reach_lo);
  double v_hi = std::min(band_hi, reach_hi);
  if (v_lo > v_hi) {
    // Band unreachable within one horizon: head for it as hard as allowed.
    const double target = band_hi < reach_lo ? reach_lo : reach_hi;
    v_lo = v_hi = std::clamp(target, 0.0, std::max(0.0, lim.v_max));
  }
  if (config.n_speed_samples == 1 || v_hi - v_lo < 1e-9) {
    grid.s_dot_end.push_back(0.5 * (v_lo + v_hi));
  } else {
    for (int j = 0; j < config.n_speed_samples; ++j)
      grid.s_dot_end.push_back(v_lo + (v_hi - v_lo) * j / (config.n_speed_samples - 1));
  }
  return grid;
}

bool better_candidate(const CandidateTrajectory& a, const CandidateTrajectory& b) {
  const double ta = a.cost.total;
  const double tb = b.cost.total;
  const double tol = 1e-12 * std::max(std::abs(ta), std::abs(tb));
  if (std::abs(ta - tb) > tol) return ta < tb;
  if (a.cost.c_c != b.cost.c_c) return a.cost.c_c < b.cost.c_c;
  const double da = std::abs(a.n_end - a.points.back().n_raceline);
  const double db = std::abs(b.n_end - b.points.back().n_raceline);
  if (da != db) return da < db;
  return a.sample_index < b.sample_index;
}

namespace {

template <typename Visitor>
void for_each_candidate(const StartState& start, const TrackDefinition& track, const WeightSet& weights,
                        const OpponentPrediction* opponent, const PlannerConfig& config, Visitor&& visit) {
  const EndStateGrid grid = end_state_grid(start, track, config);
  const int steps = config.steps();
  const double T = config.horizon_T;
  std::vector<LongSamples> longs;
  longs.reserve(grid.s_dot_end.size());
  for (double v_end : grid.s_dot_end)
    longs.push_back(sample_longitudinal(gen_longitudinal(start, v_end, T, config.traj_dt), steps, config.traj_dt, track));
  std::vector<LatSamples> lats;
  lats.reserve(grid.n_end.size());
  for (double n_end : grid.n_end) lats.push_back(sample_lateral(gen_lateral(start, n_end, T, config.traj_dt), steps, config.traj_dt));

  CandidateTrajectory scratch;
  const auto n_speed = static_cast<int>(grid.s_dot_end.size());
  for (std::size_t i = 0; i < lats.size(); ++i) {
    for (std::size_t j = 0; j < longs.size(); ++j) {
      fill_points(longs[j], lats[i], config.traj_dt, scratch);
      scratch.sample_index = static_cast<int>(i) * n_speed + static_cast<int>(j);
      scratch.feasibility = check_feasibility(scratch, config.limits);
      if (scratch.feasibility.feasible) scratch.cost = evaluate_cost(scratch, weights, opponent, config);
      visit(scratch);
    }
  }
}

}  // namespace

std::vector<CandidateTrajectory> generate_candidates(const StartState& start, const TrackDefinition& track,
                                                     const WeightSet& weights, const OpponentPrediction* opponent,
                                                     const PlannerConfig& config) {
  std::vector<CandidateTrajectory> all;
  for_each_candidate(start, track, weights, opponent, config,
                     [&all](const CandidateTrajectory& c) { all.push_back(c); });
  return all;
}

PlanResult plan(const StartState& start, const TrackDefinition& track, const WeightSet& weights,
                const OpponentPrediction* opponent, const PlannerConfig& config) {
  PlanResult result;
  bool found = false;
  for_each_candidate(start, track, weights, opponent, config, [&](const CandidateTrajectory& c) {
    ++result.diagnostics.n_candidates;
    if (!c.feasibility.feasible) {
      ++result.diagnostics.rejected[static_cast<std::size_t>(c.feasibility.violated)];
      return;
    }
    ++result.diagnostics.n_feasible;
    if (!found || better_candidate(c, result.best)) {
      result.best = c;
      found = true;
    }
  });
  if (!found) {
    std::ostringstream msg;
    msg << "no feasible trajectory among " << result.diagnostics.n_candidates << " candidates (";
    for (int k = 1; k < kConstraintCount; ++k) {
      msg << to_string(static_cast<Constraint>(k)) << '=' << result.diagnostics.rejected[static_cast<std::size_t>(k)]
          << (k + 1 < kConstraintCount ? ", " : ")");
    }
    throw NoFeasibleTrajectory(msg.str());
  }
  return result;
}

CandidateTrajectory braking_fallback(const StartState& start, double decel, const TrackDefinition& track,
                                     const PlannerConfig& config) {
  const int steps = config.steps();
  const auto count = static_cast<std::size_t>(steps + 1);
  std::vector<double> s(count), sd(count), sdd(count), n(count, start.n), nd(count, 0.0), ndd(count, 0.0);
  const double t_stop = start.s_dot / decel;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = config.traj_dt * static_cast<double>(k);
    const double tc = std::min(t, t_stop);
    s[k] = start.s + start.s_dot * tc - 0.5 * decel * tc * tc;
    sd[k] = std::max(0.0, start.s_dot - decel * t);
    sdd[k] = t < t_stop ? -decel : 0.0;
  }
  auto out = assemble_from_samples(s, sd, sdd, n, nd, ndd, track, config);
  out.feasibility = check_feasibility(out, config.limits);
  return out;
}

CandidateTrajectory raceline_follow(const StartState& start, const TrackDefinition& track, const PlannerConfig& config) {
  const int steps = config.steps();
  const auto count = static_cast<std::size_t>(steps + 1);
  const double dt = config.traj_dt;
  const ConstraintLimits& lim = config.limits;
  std::vector<double> s(count), sd(count), sdd(count, 0.0), n(count), nd(count, 0.0), ndd(count, 0.0);

  // Arc-length speed that yields the raceline speed along the offset path.
  auto target_sdot = [&](double s_at) {
    const auto ref = track.at(s_at).sample;
    const double one = 1.0 - ref.n_raceline * ref.kappa;
    const double slope = raceline_slope(track, s_at);
    return std::min(lim.v_max, ref.v_raceline) / std::hypot(one, slope);
  };

  s[0] = start.s;
  sd[0] = start.s_dot;
  for (std::size_t k = 0; k + 1 < count; ++k) {
    const double target = target_sdot(s[k] + sd[k] * dt);
    sd[k + 1] = std::clamp(target, sd[k] - lim.ax_max * dt, sd[k] + lim.ax_eng * dt);
    sd[k + 1] = std::max(0.0, sd[k + 1]);
    s[k + 1] = s[k] + 0.5 * (sd[k] + sd[k + 1]) * dt;
  }
  for (std::size_t k = 0; k < count; ++k) n[k] = track.at(s[k]).sample.n_raceline;
  auto diff = [&](const std::vector<double>& x, std::vector<double>& dx) {
    for (std::size_t k = 0; k < count; ++k) {
      if (k == 0) dx[k] = (x[1] - x[0]) / dt;
      else if (k + 1 == count) dx[k] = (x[k] - x[k - 1]) / dt;
      else dx[k] = (x[k + 1] - x[k - 1]) / (2.0 * dt);
    }
  };
  diff(sd, sdd);
  diff(n, nd);
  diff(nd, ndd);
  auto out = assemble_from_samples(s, sd, sdd, n, nd, ndd, track, config);
  out.feasibility = check_feasibility(out, config.limits);
  return out;
}

}  // namespace racemode
