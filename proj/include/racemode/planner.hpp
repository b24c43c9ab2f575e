#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "racemode/polynomial.hpp"
#include "racemode/track.hpp"

namespace racemode {

/// Hard limits checked pointwise on every candidate.
struct ConstraintLimits {
  double kappa_max = 0.2;
  double v_max = 80.0;
  double ax_eng = 8.0;   ///< traction cap on positive longitudinal acceleration
  double ax_max = 12.0;  ///< gg-diagram longitudinal semi-axis
  double ay_max = 12.0;  ///< gg-diagram lateral semi-axis
  double p_exponent = 2.0;

  void validate() const;
  /// Same limits with every acceleration scaled (opponent handicap).
  ConstraintLimits scaled_accelerations(double scale) const;
  RacelineParams raceline_params(double budget = 0.85) const;
};

/// The five cost weights of one behavioural mode.
struct WeightSet {
  double w_rl = 0.0;
  double w_v = 0.0;
  double w_a = 0.0;
  double w_pr = 0.0;
  double w_c = 0.0;

  void validate() const;
  WeightSet scaled(double factor) const { return {w_rl * factor, w_v * factor, w_a * factor, w_pr * factor, w_c * factor}; }
  bool operator==(const WeightSet&) const = default;
};

enum class BehaviorMode : int { NR = 0, AG = 1, CD = 2 };
inline constexpr int kModeCount = 3;

std::string to_string(BehaviorMode mode);
std::optional<BehaviorMode> mode_from_string(const std::string& name);

/// One WeightSet per behavioural mode, indexed by BehaviorMode.
struct WeightLibrary {
  std::array<WeightSet, kModeCount> sets;

  static WeightLibrary defaults();
  const WeightSet& operator[](BehaviorMode mode) const { return sets[static_cast<std::size_t>(mode)]; }
  WeightSet& operator[](BehaviorMode mode) { return sets[static_cast<std::size_t>(mode)]; }
  bool operator==(const WeightLibrary&) const = default;
};

struct Footprint {
  double length = 4.8;
  double width = 1.9;
};

/// Shape parameters of the cost terms.
struct CostParams {
  double u_thresh = 0.9;       ///< gg utilisation above which c_a grows
  double d_pr = 8.0;           ///< proximity radius, centre to centre [m]
  double footprint_margin = 0.5;
};

struct PlannerConfig {
  double horizon_T = 3.0;
  double replan_dt = 0.35;
  double traj_dt = 0.05;
  int n_lat_samples = 15;
  int n_speed_samples = 9;
  double lat_lo = -1e3;  ///< lateral sampling band, clipped to track bounds [m]
  double lat_hi = 1e3;
  double speed_lo = 0.3;  ///< speed band as fractions of the raceline speed
  double speed_hi = 1.1;
  double prediction_decay = 2.0;  ///< opponent lateral offset decay time constant [s]
  ConstraintLimits limits;
  CostParams cost;
  Footprint footprint;

  void validate() const;
  int steps() const;         ///< number of traj_dt intervals in the horizon
  int replan_steps() const;  ///< number of traj_dt intervals in replan_dt
};

/// Planning start state. Lateral derivatives are time derivatives; the d/ds
/// forms are derived on demand.
struct StartState {
  double s = 0.0;
  double n = 0.0;
  double s_dot = 0.0;
  double s_ddot = 0.0;
  double n_dot = 0.0;
  double n_ddot = 0.0;

  double n_prime() const;
  double n_pprime() const;
};

struct TrajPoint {
  double t = 0.0;
  double s = 0.0;  ///< unwrapped arc length
  double s_dot = 0.0;
  double s_ddot = 0.0;
  double n = 0.0;
  double n_dot = 0.0;
  double n_ddot = 0.0;
  double n_prime = 0.0;
  double v = 0.0;
  double a_long = 0.0;
  double a_lat = 0.0;
  double kappa_path = 0.0;
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  // Reference quantities at s, kept for feasibility and cost evaluation.
  double kappa_ref = 0.0;
  double n_min = 0.0;
  double n_max = 0.0;
  double n_raceline = 0.0;
  double v_raceline = 0.0;
};

enum class Constraint : int { none = 0, curvature, speed, track_limits, engine, acceleration, singular };
inline constexpr int kConstraintCount = 7;
std::string to_string(Constraint c);

struct Feasibility {
  bool feasible = true;
  Constraint violated = Constraint::none;
  int index = -1;  ///< first violating point
};

struct CostBreakdown {
  double c_rl = 0.0;
  double c_v = 0.0;
  double c_a = 0.0;
  double c_pr = 0.0;
  double c_c = 0.0;
  double total = 0.0;

  double weighted(const WeightSet& w) const { return w.w_rl * c_rl + w.w_v * c_v + w.w_a * c_a + w.w_pr * c_pr + w.w_c * c_c; }
};

struct CandidateTrajectory {
  std::vector<TrajPoint> points;
  double s_dot_end = 0.0;
  double n_end = 0.0;
  int sample_index = -1;
  Feasibility feasibility;
  CostBreakdown cost;
};

struct PredictedPose {
  double t = 0.0;
  double s = 0.0;
  double n = 0.0;
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
};

struct OpponentPrediction {
  std::vector<PredictedPose> poses;
  Footprint footprint;
};

/// Frenet state of an agent, as used for prediction and first-cycle starts.
struct AgentState {
  double s = 0.0;  ///< unwrapped arc length
  double n = 0.0;
  double mu = 0.0;
  double v = 0.0;
  double a_long = 0.0;
};

// -- start state ------------------------------------------------------------

StartState identify_start_state(const CandidateTrajectory& committed, double replan_dt);
StartState identify_start_state(const AgentState& vehicle, const TrackDefinition& track);

// -- profile generation -----------------------------------------------------

QuarticCoeffs<double> gen_longitudinal(const StartState& start, double s_dot_end, double T,
                                       double min_horizon = PlannerConfig{}.traj_dt);
QuinticCoeffs<double> gen_lateral(const StartState& start, double n_end, double T,
                                  double min_horizon = PlannerConfig{}.traj_dt);

/// Samples both polynomials on the trajectory grid and derives speed,
/// curvature, accelerations and Cartesian pose. Never throws on a singular
/// Frenet transform; the candidate is flagged and fails feasibility instead.
CandidateTrajectory assemble_trajectory(const QuarticCoeffs<double>& longitudinal, const QuinticCoeffs<double>& lateral,
                                        const TrackDefinition& track, const PlannerConfig& config);

/// Builds a candidate from already sampled Frenet profiles (t grid implied by
/// traj_dt). Accelerations and curvature are derived exactly as for the
/// polynomial candidates.
CandidateTrajectory assemble_from_samples(const std::vector<double>& s, const std::vector<double>& s_dot,
                                          const std::vector<double>& s_ddot, const std::vector<double>& n,
                                          const std::vector<double>& n_dot, const std::vector<double>& n_ddot,
                                          const TrackDefinition& track, const PlannerConfig& config);

// -- evaluation -------------------------------------------------------------

Feasibility check_feasibility(const CandidateTrajectory& traj, const ConstraintLimits& limits);

CostBreakdown evaluate_cost(const CandidateTrajectory& traj, const WeightSet& weights,
                            const OpponentPrediction* opponent, const PlannerConfig& config);

OpponentPrediction predict_opponent(const AgentState& opponent, const TrackDefinition& its_track,
                                    const PlannerConfig& config, const Footprint& footprint);

// -- planning ---------------------------------------------------------------

struct EndStateGrid {
  std::vector<double> n_end;
  std::vector<double> s_dot_end;
};

EndStateGrid end_state_grid(const StartState& start, const TrackDefinition& track, const PlannerConfig& config);

/// Every candidate of the grid, assembled, checked and (if feasible) costed.
/// Sample index = lateral index * n_speed + speed index.
std::vector<CandidateTrajectory> generate_candidates(const StartState& start, const TrackDefinition& track,
                                                     const WeightSet& weights, const OpponentPrediction* opponent,
                                                     const PlannerConfig& config);

struct PlanDiagnostics {
  int n_candidates = 0;
  int n_feasible = 0;
  std::array<int, kConstraintCount> rejected{};
};

struct PlanResult {
  CandidateTrajectory best;
  PlanDiagnostics diagnostics;
};

/// True when candidate `a` is preferred over `b`: lower total (relative
/// tolerance 1e-12), then lower c_c, lower distance of the end offset to the
/// raceline, lower sample index.
bool better_candidate(const CandidateTrajectory& a, const CandidateTrajectory& b);

/// Full planning cycle. Throws NoFeasibleTrajectory when every candidate is
/// rejected.
PlanResult plan(const StartState& start, const TrackDefinition& track, const WeightSet& weights,
                const OpponentPrediction* opponent, const PlannerConfig& config);

/// Feasible constant-n braking trajectory used as a last resort for
/// opponents whose own planner found nothing.
CandidateTrajectory braking_fallback(const StartState& start, double decel, const TrackDefinition& track,
                                     const PlannerConfig& config);

/// Trajectory that follows the track's raceline speed profile, accelerating
/// and braking within the given limits.
CandidateTrajectory raceline_follow(const StartState& start, const TrackDefinition& track, const PlannerConfig& config);

}  // namespace racemode
