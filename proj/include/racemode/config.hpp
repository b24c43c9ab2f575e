#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "racemode/ppo.hpp"

namespace racemode {

struct TrackSpec {
  TrackKind kind = TrackKind::chicane;
  std::uint64_t seed = 7;
  TrackParams params;
  std::string path;  ///< load this CSV instead of synthesising when non-empty

  TrackDefinition build() const;
};

/// Seeded batch of randomised starts; the scenario section supplies the rest.
struct BatchSpec {
  int episodes = 50;
  std::uint64_t first_seed = 1000;
  double gap_lo = 40.0;
  double gap_hi = 80.0;

  std::vector<std::uint64_t> seeds() const;
};

struct TrainSpec {
  int eval_every = 0;  ///< updates between evaluation snapshots, 0 disables
  int eval_episodes = 10;
};

struct TimingSpec {
  int cycles = 200;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out = "out";
  TrackSpec track;
  TrackSpec unseen_track;
  PlannerConfig planner;
  WeightLibrary weights = WeightLibrary::defaults();
  RewardConfig reward;
  ScenarioConfig scenario;
  ObservationConfig observation;
  NetworkConfig network;
  PPOConfig ppo;
  BatchSpec batch;
  TrainSpec train;
  TimingSpec timing;

  RunConfig();
  void validate() const;
};

/// Layered configuration: defaults, then the file, then environment
/// overrides, then `--set key=value` flags. Keys are dotted paths such as
/// `planner.cost.d_pr`. Unknown keys are rejected.
struct ConfigSources {
  std::optional<std::filesystem::path> file;
  std::vector<std::pair<std::string, std::string>> env;  ///< raw NAME=value pairs, filtered by prefix
  std::vector<std::string> sets;                         ///< "dotted.key=value"
};

inline constexpr const char* kEnvPrefix = "RACEMODE_";

/// Maps RACEMODE_PLANNER__COST__D_PR to planner.cost.d_pr. Returns nullopt
/// for variables without the prefix.
std::optional<std::string> env_key(const std::string& name);

RunConfig load_config(const ConfigSources& sources);
RunConfig config_from_text(const std::string& json_text);
std::string config_to_text(const RunConfig& config);

std::shared_ptr<const SimSetup> make_setup(const RunConfig& config, const TrackDefinition& track);
EvaluationBatch evaluation_batch(const RunConfig& config, bool keep_logs = false);

}  // namespace racemode
