#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "racemode/config.hpp"

namespace racemode {

// -- metrics tables --------------------------------------------------------------

struct MetricsRow {
  std::string name;
  MetricsTable metrics;
};

/// Fixed-precision CSV so repeated runs compare byte for byte.
std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string metrics_text(const std::vector<MetricsRow>& rows);

// -- single-vehicle laps ---------------------------------------------------------

struct LapResult {
  BehaviorMode mode = BehaviorMode::NR;
  bool completed = false;
  double lap_time_s = 0.0;  ///< interpolated at the start/finish line crossing
  Outcome outcome = Outcome::running;
  int steps = 0;
  EpisodeResult episode;
};

/// Drives one lap from s = 0 without an opponent.
LapResult run_lap(std::shared_ptr<const SimSetup> setup, BehaviorMode mode, int max_steps = 5000);

// -- races -----------------------------------------------------------------------

struct RaceRun {
  std::string name;
  std::vector<std::uint64_t> seeds;  ///< one per episode, in report order
  EvaluationReport report;
};

/// Writes metrics tables, per-episode summaries, JSONL logs and the track
/// into `dir`, ready for write_report().
void write_race_bundle(const std::filesystem::path& dir, const TrackDefinition& track,
                       const std::vector<RaceRun>& runs);

// -- reports ---------------------------------------------------------------------

struct ReportSummary {
  int episodes_plotted = 0;
  std::vector<std::filesystem::path> files;
};

/// Reads a race bundle and emits the path overlay and the four per-episode
/// panels (lateral offset, gap, speed, selected mode against s) as SVG, plus
/// the metrics tables. Throws MissingLogs when the bundle holds no episodes.
ReportSummary write_report(const std::filesystem::path& bundle, const std::filesystem::path& out,
                           int max_episodes = 6);

/// Lead of the ego over the opponent of each log line, grouped per opponent.
struct GapTrace {
  int opp_id = 0;
  std::vector<double> s;
  std::vector<double> gap;
};
std::vector<GapTrace> read_gap_traces(const std::filesystem::path& jsonl);

/// Sign changes from behind to ahead (and back) along a gap trace.
int zero_crossings(const std::vector<double>& gap);

// -- timing ----------------------------------------------------------------------

struct TimingStats {
  int cycles = 0;
  double planner_mean_ms = 0.0;
  double planner_p50_ms = 0.0;
  double planner_p90_ms = 0.0;
  double planner_p99_ms = 0.0;
  double inference_mean_ms = 0.0;
  double inference_min_ms = 0.0;
  double ratio = 0.0;  ///< inference mean / planner mean
};

inline constexpr int kMinTimingCycles = 100;

/// Wall-clock timing of planner cycles and policy inference along warm race
/// episodes. Throws ConfigError below kMinTimingCycles.
TimingStats measure_timing(std::shared_ptr<const SimSetup> setup, const ActorCritic& model,
                           const ScenarioConfig& scenario, int cycles, std::uint64_t seed);

std::string timing_text(const TimingStats& t);
std::string timing_json(const TimingStats& t);

}  // namespace racemode
