#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "racemode/planner.hpp"
#include "racemode/track.hpp"

namespace racemode {

enum class OpponentKind { none, non_reactive, reactive_nr };

std::string to_string(OpponentKind kind);
std::optional<OpponentKind> opponent_kind_from_string(const std::string& name);

enum class Outcome { running, success, collision, no_feasible, off_track, timeout };

std::string to_string(Outcome outcome);
inline bool is_failure(Outcome o) { return o == Outcome::collision || o == Outcome::no_feasible || o == Outcome::off_track; }

/// Zone attached to the opponent. A lateral half-width of 0 means "use the
/// track half-width at the opponent".
struct InteractionZone {
  double long_ahead = 30.0;
  double long_behind = 15.0;
  double lateral_halfwidth = 0.0;
};

struct RewardConfig {
  double w_p = 1.0;
  double w_v = 0.1;
  double w_lat = 0.05;
  double w_gap = 0.05;
  double w_col = 0.5;
  double w_sparse = 1.0;
  double C = 100.0;
  double d_safe = 2.5;
  double gap_sign = 1.0;  ///< +1 rewards leading the opponent, -1 the literal table form
  InteractionZone zone;

  void validate() const;
};

struct ScenarioConfig {
  double ego_start_s = 0.0;
  double opp_start_s = 60.0;
  OpponentKind opponent_kind = OpponentKind::reactive_nr;
  double opp_accel_scale = 0.9;
  int max_steps = 200;
  double respawn_lead = 100.0;
  double respawn_gap = 60.0;
  double overtake_lead = 15.0;
  bool terminate_on_overtake = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct VehicleState {
  double s = 0.0;  ///< unwrapped arc length
  double n = 0.0;
  double mu = 0.0;
  double v = 0.0;
  double a_long = 0.0;
  double a_lat = 0.0;
  double kappa = 0.0;  ///< path curvature of the committed trajectory
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  StartState next_start;  ///< planning start of the following cycle
  CandidateTrajectory committed;
  Footprint footprint;
  int lap_count = 0;
};

struct RewardTerms {
  double progress = 0.0;
  double velocity = 0.0;
  double lateral = 0.0;
  double gap = 0.0;
  double collision = 0.0;
  double sparse = 0.0;
};

struct StepRecord {
  int step = 0;
  double t = 0.0;
  int action = 0;
  VehicleState ego;
  VehicleState opp;
  int opp_id = 0;
  double reward = 0.0;
  RewardTerms terms;
  bool zone = false;
  bool done = false;
  Outcome outcome = Outcome::running;
};

struct EpisodeResult {
  Outcome outcome = Outcome::running;
  int steps = 0;
  std::vector<double> overtake_times;
  int overtakes_completed = 0;
  double final_lead = 0.0;  ///< lead over the last opponent overtaken, or the current one
  double laps = 0.0;        ///< distance driven by the ego in laps
  double total_reward = 0.0;
  std::vector<double> reward_trace;
  std::vector<int> actions;
  std::vector<StepRecord> log;
};

/// Everything shared read-only between environments: the track, its
/// handicapped opponent copy and all configuration.
struct SimSetup {
  SimSetup(TrackDefinition track, PlannerConfig planner, WeightLibrary weights, RewardConfig reward,
           double opp_accel_scale = 0.9);

  TrackDefinition track;
  TrackDefinition opp_track;  ///< same geometry, raceline speeds for the opponent's limits
  PlannerConfig planner;
  PlannerConfig opp_planner;
  WeightLibrary weights;
  RewardConfig reward;
  double opp_accel_scale;
};

VehicleState spawn_vehicle(const TrackDefinition& track, double s, const PlannerConfig& config);

/// Post-step collision check on the plain (uninflated) footprints.
bool detect_collision(const VehicleState& ego, const VehicleState& opp);

/// Zone test with s differences taken modulo the lap on closed tracks.
bool in_interaction_zone(const VehicleState& ego, const VehicleState& opp, const InteractionZone& zone,
                         const TrackDefinition& track);

RewardTerms compute_reward_terms(const VehicleState& prev, const VehicleState& cur, const VehicleState& opp,
                                 bool zone_active, Outcome terminal, const RewardConfig& cfg,
                                 const TrackDefinition& track);
double total_reward(const RewardTerms& r, const RewardConfig& cfg);

/// Opponent committed trajectory for one cycle.
CandidateTrajectory opponent_policy_step(OpponentKind kind, const VehicleState& opp, const VehicleState& ego,
                                         const SimSetup& setup);

struct StepInfo {
  bool done = false;
  Outcome outcome = Outcome::running;
  double reward = 0.0;
  RewardTerms terms;
  bool zone = false;
  bool truncated = false;  ///< ended by max_steps rather than by the outcome itself
};

class RaceEnv {
 public:
  RaceEnv(std::shared_ptr<const SimSetup> setup, ScenarioConfig scenario, bool keep_log = false);

  void reset();
  void reset(const ScenarioConfig& scenario);
  StepInfo step(int action);

  bool done() const { return done_; }
  int steps() const { return steps_; }
  double time() const;
  const VehicleState& ego() const { return ego_; }
  const VehicleState& opp() const { return opp_; }
  const SimSetup& setup() const { return *setup_; }
  const ScenarioConfig& scenario() const { return scenario_; }
  bool has_opponent() const { return scenario_.opponent_kind != OpponentKind::none; }
  double lead() const { return ego_.s - opp_.s; }
  int opponent_id() const { return opp_id_; }
  /// Result so far; complete once done().
  const EpisodeResult& result() const { return result_; }

 private:
  void record(int action, const StepInfo& info);

  std::shared_ptr<const SimSetup> setup_;
  ScenarioConfig scenario_;
  bool keep_log_;
  VehicleState ego_;
  VehicleState opp_;
  int opp_id_ = 0;
  int steps_ = 0;
  int opp_spawn_step_ = 0;
  bool opp_overtaken_ = false;
  bool done_ = false;
  EpisodeResult result_;
};

using WeightSelector = std::function<int(const RaceEnv&)>;

EpisodeResult run_scenario(std::shared_ptr<const SimSetup> setup, const ScenarioConfig& scenario,
                           const WeightSelector& policy, bool keep_log = false);

/// Seeded start randomisation: ego start uniform over the lap, gap uniform
/// in [gap_lo, gap_hi].
ScenarioConfig randomized_scenario(const ScenarioConfig& base, double lap_length, std::uint64_t seed,
                                   double gap_lo = 40.0, double gap_hi = 80.0);

struct MetricsTable {
  int episodes = 0;
  double collision_pct = 0.0;
  double failure_pct = 0.0;
  double mean_overtake_time_s = 0.0;  ///< NaN when no overtake was recorded
  double overtakes_per_lap = 0.0;
  int overtakes = 0;
  double laps = 0.0;
};

MetricsTable compute_metrics(const std::vector<EpisodeResult>& results);

/// One JSON object per line, one line per step.
std::string episode_log_jsonl(const EpisodeResult& result);

}  // namespace racemode
