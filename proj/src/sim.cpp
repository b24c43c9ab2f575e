#include "racemode/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "racemode/collision.hpp"
#include "racemode/error.hpp"
#include "racemode/math.hpp"

namespace racemode {

std::string to_string(OpponentKind kind) {
  switch (kind) {
    case OpponentKind::none: return "none";
    case OpponentKind::non_reactive: return "non_reactive";
    case OpponentKind::reactive_nr: return "reactive_nr";
  }
  return "?";
}

std::optional<OpponentKind> opponent_kind_from_string(const std::string& name) {
  if (name == "none") return OpponentKind::none;
  if (name == "non_reactive") return OpponentKind::non_reactive;
  if (name == "reactive_nr" || name == "reactive") return OpponentKind::reactive_nr;
  return std::nullopt;
}

std::string to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::running: return "running";
    case Outcome::success: return "success";
    case Outcome::collision: return "collision";
    case Outcome::no_feasible: return "no_feasible";
    case Outcome::off_track: return "off_track";
    case Outcome::timeout: return "timeout";
  }
  return "?";
}

void RewardConfig::validate() const {
  for (double w : {w_p, w_v, w_lat, w_gap, w_col, w_sparse})
    if (!(w >= 0.0)) throw ConfigError("reward weights must be nonnegative");
  if (!(C > 0.0)) throw ConfigError("sparse reward magnitude C must be positive");
  if (!(d_safe >= 0.0)) throw ConfigError("d_safe must be nonnegative");
  if (!(zone.long_ahead > 0.0 && zone.long_behind > 0.0 && zone.lateral_halfwidth >= 0.0))
    throw ConfigError("interaction zone extents must be positive");
}

void ScenarioConfig::validate() const {
  if (opponent_kind != OpponentKind::none && !(opp_start_s > ego_start_s))
    throw InvalidScenario("opponent must start ahead of the ego");
  if (!(opp_accel_scale > 0.0 && opp_accel_scale <= 1.0)) throw InvalidScenario("opp_accel_scale must lie in (0, 1]");
  if (max_steps < 1) throw InvalidScenario("max_steps must be >= 1");
  if (!(overtake_lead > 0.0 && respawn_lead > overtake_lead && respawn_gap > 0.0))
    throw InvalidScenario("need 0 < overtake_lead < respawn_lead and respawn_gap > 0");
}

namespace {

TrackDefinition handicapped_track(const TrackDefinition& track, const ConstraintLimits& limits) {
  auto speeds = raceline_speed_profile(track, limits.raceline_params());
  for (std::size_t i = 0; i < speeds.size(); ++i) speeds[i] = std::min(speeds[i], track.samples()[i].v_raceline);
  return with_raceline_speeds(track, speeds);
}

AgentState agent_of(const VehicleState& v) { return {v.s, v.n, v.mu, v.v, v.a_long}; }

// State reached after following `traj` for one replanning interval.
void advance(VehicleState& state, CandidateTrajectory traj, const TrackDefinition& track, const PlannerConfig& config) {
  const auto k = static_cast<std::size_t>(config.replan_steps());
  const TrajPoint& p = traj.points.at(k);
  state.s = p.s;
  state.n = p.n;
  state.v = p.v;
  state.a_long = p.a_long;
  state.a_lat = p.a_lat;
  state.kappa = p.kappa_path;
  state.x = p.x;
  state.y = p.y;
  state.psi = p.psi;
  state.mu = std::atan2(p.n_dot, p.s_dot * (1.0 - p.n * p.kappa_ref));
  state.lap_count = static_cast<int>(std::floor(p.s / track.lap_length()));
  state.next_start = identify_start_state(traj, config.replan_dt);
  state.committed = std::move(traj);
}

}  // namespace

SimSetup::SimSetup(TrackDefinition track_in, PlannerConfig planner_in, WeightLibrary weights_in, RewardConfig reward_in,
                   double opp_accel_scale_in)
    : track(std::move(track_in)),
      opp_track(handicapped_track(track, planner_in.limits.scaled_accelerations(opp_accel_scale_in))),
      planner(planner_in),
      opp_planner(planner_in),
      weights(weights_in),
      reward(reward_in),
      opp_accel_scale(opp_accel_scale_in) {
  planner.validate();
  reward.validate();
  for (const auto& w : weights.sets) w.validate();
  if (!(opp_accel_scale > 0.0 && opp_accel_scale <= 1.0)) throw ConfigError("opp_accel_scale must lie in (0, 1]");
  if (!track.closed()) throw ConfigError("races need a closed track");
  opp_planner.limits = planner.limits.scaled_accelerations(opp_accel_scale);
}

VehicleState spawn_vehicle(const TrackDefinition& track, double s, const PlannerConfig& config) {
  const auto ref = track.at(s).sample;
  constexpr double h = 0.5;
  const double slope = (track.at(s + h).sample.n_raceline - track.at(s - h).sample.n_raceline) / (2.0 * h);
  VehicleState v;
  v.s = s;
  v.n = ref.n_raceline;
  v.mu = std::atan2(slope, 1.0 - v.n * ref.kappa);
  v.v = std::min(ref.v_raceline, config.limits.v_max);
  const auto pose = frenet_to_cartesian(track, s, v.n);
  v.x = pose.x;
  v.y = pose.y;
  v.psi = wrap_angle(pose.psi + v.mu);
  v.kappa = ref.kappa;
  v.footprint = config.footprint;
  v.lap_count = static_cast<int>(std::floor(s / track.lap_length()));
  v.next_start = identify_start_state(agent_of(v), track);
  return v;
}

bool detect_collision(const VehicleState& ego, const VehicleState& opp) {
  auto box = [](const VehicleState& v) {
    OrientedBox<double> b;
    b.center = {v.x, v.y};
    b.heading = v.psi;
    b.half_length = 0.5 * v.footprint.length;
    b.half_width = 0.5 * v.footprint.width;
    return b;
  };
  return boxes_overlap(box(ego), box(opp));
}

namespace {

double lap_difference(double a, double b, const TrackDefinition& track) {
  double d = a - b;
  if (track.closed()) {
    const double L = track.lap_length();
    d = std::remainder(d, L);
  }
  return d;
}

}  // namespace

bool in_interaction_zone(const VehicleState& ego, const VehicleState& opp, const InteractionZone& zone,
                         const TrackDefinition& track) {
  const double ds = lap_difference(ego.s, opp.s, track);
  double half = zone.lateral_halfwidth;
  if (half <= 0.0) {
    const auto ref = track.at(opp.s).sample;
    half = 0.5 * (ref.n_max - ref.n_min);
  }
  return -zone.long_behind <= ds && ds <= zone.long_ahead && std::abs(ego.n - opp.n) <= half;
}

RewardTerms compute_reward_terms(const VehicleState& prev, const VehicleState& cur, const VehicleState& opp,
                                 bool zone_active, Outcome terminal, const RewardConfig& cfg,
                                 const TrackDefinition& track) {
  const auto ref = track.at(cur.s).sample;
  RewardTerms r;
  r.progress = cur.s - prev.s;
  r.velocity = -std::abs(ref.v_raceline - cur.v);
  if (zone_active) {
    r.gap = cfg.gap_sign * (cur.s - opp.s);
    r.collision = -std::max(0.0, cfg.d_safe - std::abs(cur.n - opp.n));
  } else {
    r.lateral = -square(cur.n - ref.n_raceline);
  }
  if (terminal == Outcome::success) r.sparse = cfg.C;
  if (is_failure(terminal)) r.sparse = -cfg.C;
  return r;
}

double total_reward(const RewardTerms& r, const RewardConfig& cfg) {
  return cfg.w_p * r.progress + cfg.w_v * r.velocity + cfg.w_lat * r.lateral + cfg.w_gap * r.gap +
         cfg.w_col * r.collision + cfg.w_sparse * r.sparse;
}

CandidateTrajectory opponent_policy_step(OpponentKind kind, const VehicleState& opp, const VehicleState& ego,
                                         const SimSetup& setup) {
  const PlannerConfig& cfg = setup.opp_planner;
  if (kind == OpponentKind::reactive_nr) {
    const auto pred = predict_opponent(agent_of(ego), setup.track, cfg, ego.footprint);
    try {
      return plan(opp.next_start, setup.opp_track, setup.weights[BehaviorMode::NR], &pred, cfg).best;
    } catch (const NoFeasibleTrajectory&) {
      return braking_fallback(opp.next_start, cfg.limits.ax_max, setup.opp_track, cfg);
    }
  }
  return raceline_follow(opp.next_start, setup.opp_track, cfg);
}

RaceEnv::RaceEnv(std::shared_ptr<const SimSetup> setup, ScenarioConfig scenario, bool keep_log)
    : setup_(std::move(setup)), scenario_(scenario), keep_log_(keep_log) {
  reset();
}

void RaceEnv::reset(const ScenarioConfig& scenario) {
  scenario_ = scenario;
  reset();
}

void RaceEnv::reset() {
  scenario_.validate();
  if (std::abs(scenario_.opp_accel_scale - setup_->opp_accel_scale) > 1e-12)
    throw InvalidScenario("scenario opp_accel_scale differs from the simulation setup");
  ego_ = spawn_vehicle(setup_->track, scenario_.ego_start_s, setup_->planner);
  if (has_opponent()) {
    opp_ = spawn_vehicle(setup_->opp_track, scenario_.opp_start_s, setup_->opp_planner);
  } else {
    opp_ = VehicleState{};
    opp_.s = std::numeric_limits<double>::infinity();
  }
  opp_id_ = 0;
  steps_ = 0;
  opp_spawn_step_ = 0;
  opp_overtaken_ = false;
  done_ = false;
  result_ = EpisodeResult{};
}

double RaceEnv::time() const { return steps_ * setup_->planner.replan_dt; }

StepInfo RaceEnv::step(int action) {
  if (done_) throw InvalidScenario("step() on a finished episode");
  if (action < 0 || action >= kModeCount) throw InvalidScenario("action out of range");
  const SimSetup& S = *setup_;
  const auto mode = static_cast<BehaviorMode>(action);

  std::optional<OpponentPrediction> pred;
  if (has_opponent()) pred = predict_opponent(agent_of(opp_), S.opp_track, S.planner, opp_.footprint);

  StepInfo info;
  std::optional<CandidateTrajectory> ego_traj;
  try {
    ego_traj = plan(ego_.next_start, S.track, S.weights[mode], pred ? &*pred : nullptr, S.planner).best;
  } catch (const NoFeasibleTrajectory&) {
  }
  CandidateTrajectory opp_traj;
  if (has_opponent()) opp_traj = opponent_policy_step(scenario_.opponent_kind, opp_, ego_, S);

  const VehicleState prev = ego_;
  if (ego_traj) advance(ego_, std::move(*ego_traj), S.track, S.planner);
  if (has_opponent()) advance(opp_, std::move(opp_traj), S.opp_track, S.opp_planner);
  ++steps_;

  Outcome outcome = Outcome::running;
  if (!ego_traj) {
    outcome = Outcome::no_feasible;
  } else if (has_opponent() && detect_collision(ego_, opp_)) {
    outcome = Outcome::collision;
  } else {
    const auto ref = S.track.at(ego_.s).sample;
    if (ego_.n < ref.n_min - 1e-9 || ego_.n > ref.n_max + 1e-9) outcome = Outcome::off_track;
  }

  info.zone = has_opponent() && in_interaction_zone(ego_, opp_, S.reward.zone, S.track);
  const VehicleState opp_before = opp_;

  if (has_opponent()) {
    const double lead_now = lead();
    if (!opp_overtaken_ && lead_now >= scenario_.overtake_lead) {
      opp_overtaken_ = true;
      ++result_.overtakes_completed;
      result_.overtake_times.push_back((steps_ - opp_spawn_step_) * S.planner.replan_dt);
    }
    if (opp_overtaken_) result_.final_lead = lead_now;
    if (outcome == Outcome::running && lead_now > scenario_.respawn_lead) {
      opp_ = spawn_vehicle(S.opp_track, ego_.s + scenario_.respawn_gap, S.opp_planner);
      ++opp_id_;
      opp_spawn_step_ = steps_;
      opp_overtaken_ = false;
    }
  }

  if (outcome == Outcome::running) {
    const bool overtaken = result_.overtakes_completed >= 1 && result_.final_lead >= scenario_.overtake_lead;
    if (scenario_.terminate_on_overtake && overtaken) {
      outcome = Outcome::success;
    } else if (steps_ >= scenario_.max_steps) {
      outcome = overtaken ? Outcome::success : Outcome::timeout;
      info.truncated = true;
    }
  }

  info.outcome = outcome;
  info.done = outcome != Outcome::running;
  info.terms = compute_reward_terms(prev, ego_, opp_before, info.zone, outcome, S.reward, S.track);
  info.reward = total_reward(info.terms, S.reward);

  done_ = info.done;
  result_.steps = steps_;
  result_.outcome = outcome;
  result_.total_reward += info.reward;
  result_.reward_trace.push_back(info.reward);
  result_.actions.push_back(action);
  result_.laps = (ego_.s - scenario_.ego_start_s) / S.track.lap_length();
  record(action, info);
  return info;
}

void RaceEnv::record(int action, const StepInfo& info) {
  if (!keep_log_) return;
  StepRecord rec;
  rec.step = steps_;
  rec.t = time();
  rec.action = action;
  rec.ego = ego_;
  rec.ego.committed = {};
  if (has_opponent()) {
    rec.opp = opp_;
    rec.opp.committed = {};
  }
  rec.opp_id = opp_id_;
  rec.reward = info.reward;
  rec.terms = info.terms;
  rec.zone = info.zone;
  rec.done = info.done;
  rec.outcome = info.outcome;
  result_.log.push_back(std::move(rec));
}

EpisodeResult run_scenario(std::shared_ptr<const SimSetup> setup, const ScenarioConfig& scenario,
                           const WeightSelector& policy, bool keep_log) {
  RaceEnv env(std::move(setup), scenario, keep_log);
  while (!env.done()) env.step(policy(env));
  return env.result();
}

ScenarioConfig randomized_scenario(const ScenarioConfig& base, double lap_length, std::uint64_t seed, double gap_lo,
                                   double gap_hi) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  ScenarioConfig out = base;
  out.seed = seed;
  out.ego_start_s = uniform() * lap_length;
  out.opp_start_s = out.ego_start_s + gap_lo + (gap_hi - gap_lo) * uniform();
  return out;
}

MetricsTable compute_metrics(const std::vector<EpisodeResult>& results) {
  if (results.empty()) throw EmptyInput("no episodes to summarise");
  MetricsTable m;
  m.episodes = static_cast<int>(results.size());
  int collisions = 0;
  int failures = 0;
  double time_sum = 0.0;
  std::size_t time_count = 0;
  for (const auto& r : results) {
    collisions += r.outcome == Outcome::collision;
    failures += is_failure(r.outcome);
    m.overtakes += r.overtakes_completed;
    m.laps += r.laps;
    for (double t : r.overtake_times) time_sum += t;
    time_count += r.overtake_times.size();
  }
  m.collision_pct = 100.0 * collisions / m.episodes;
  m.failure_pct = 100.0 * failures / m.episodes;
  m.mean_overtake_time_s = time_count ? time_sum / static_cast<double>(time_count) : std::nan("");
  m.overtakes_per_lap = m.laps > 0.0 ? m.overtakes / m.laps : 0.0;
  return m;
}

}  // namespace racemode
