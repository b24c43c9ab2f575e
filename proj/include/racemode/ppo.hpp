#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "racemode/neural.hpp"
#include "racemode/sim.hpp"

namespace racemode {

/// splitmix64 finaliser; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// -- observation ---------------------------------------------------------------

/// Static affine normalisation bounds. Every feature is mapped as
/// clamp(x / scale) or clamp(2 x / scale - 1) for nonnegative quantities.
struct ObservationConfig {
  GeometryConfig geometry;
  double detection_range = 150.0;
  double n_scale = 10.0;       ///< lateral offsets and track bounds [m]
  double mu_scale = 0.5;       ///< heading relative to the reference [rad]
  double v_scale = 80.0;       ///< speeds [m/s]
  double kappa_scale = 0.2;    ///< path curvature [1/m]
  double track_kappa_scale = 0.05;
  double accel_scale = 12.0;   ///< longitudinal acceleration [m/s^2]
  double rel_v_scale = 30.0;   ///< opponent relative speed [m/s]

  static constexpr int kEgoFeatures = 7;
  static constexpr int kOppFeatures = 4;
  int track_features() const { return kGeometryChannels * geometry.n_lookahead; }
  int size() const { return kEgoFeatures + kOppFeatures + track_features(); }
  bool operator==(const ObservationConfig&) const = default;
};

Vector build_observation(const RaceEnv& env, const ObservationConfig& config);

// -- model ---------------------------------------------------------------------

struct NetworkConfig {
  int ego_hidden = 32;
  int opp_hidden = 16;
  int conv1_channels = 8;
  int conv1_kernel = 5;
  int conv2_channels = 8;
  int conv2_kernel = 3;
  int track_hidden = 64;
  int head_hidden = 128;
  double policy_init_scale = 0.01;
  bool operator==(const NetworkConfig&) const = default;
};

/// Ego, opponent and track encoders joined by a concat junction that feeds
/// separate actor and critic heads. All parameters live in one flat vector.
class ActorCritic {
 public:
  ActorCritic(const ObservationConfig& obs, const NetworkConfig& net);

  const ObservationConfig& observation() const { return obs_; }
  const NetworkConfig& network() const { return net_; }
  const ConcatJunction& encoder() const { return encoder_; }
  const Sequential& actor() const { return actor_; }
  const Sequential& critic() const { return critic_; }
  int param_count() const { return param_count_; }

  Vector params;

  void initialize(std::uint64_t seed);

  struct Cache {
    ConcatJunction::Cache encoder;
    Sequential::Cache actor;
    Sequential::Cache critic;
  };
  struct Output {
    Matrix logits;  ///< actions x batch
    Matrix values;  ///< 1 x batch
  };

  Output forward(const Matrix& obs, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const Matrix& dlogits, const Matrix& dvalues, Vector& grad) const;

 private:
  ObservationConfig obs_;
  NetworkConfig net_;
  ConcatJunction encoder_;
  Sequential actor_;
  Sequential critic_;
  int param_count_ = 0;
};

// -- rollouts ------------------------------------------------------------------

/// Storage for n_envs parallel streams of `horizon` steps; flat index is
/// env * horizon + t.
struct RolloutBuffer {
  RolloutBuffer() = default;
  RolloutBuffer(int n_envs, int horizon, int obs_size);

  int n_envs = 0;
  int horizon = 0;
  Matrix obs;
  std::vector<int> actions;
  Vector log_probs;
  Vector values;
  Vector rewards;
  Vector dones;
  Vector last_values;  ///< bootstrap value after the final step of each env
  Vector advantages;
  Vector returns;
  int filled = 0;

  int size() const { return n_envs * horizon; }
  int index(int env, int t) const { return env * horizon + t; }
};

/// Generalised advantage estimation over every env stream.
void compute_gae(RolloutBuffer& buffer, double gamma, double lambda);

struct PPOConfig {
  double gamma = 0.99;
  double reward_scale = 0.01;  ///< multiplies rewards stored for learning; curves stay unscaled
  double lambda_gae = 0.95;
  double clip_eps = 0.2;
  double c1 = 0.5;
  double c2 = 0.01;
  int epochs = 4;
  int minibatch = 256;
  double lr = 3e-4;
  int n_envs = 8;
  int rollout_len = 512;
  long total_steps = 300000;
  double opponent_mix = 0.5;  ///< probability of a reactive opponent per episode
  bool normalize_advantages = true;
  double max_grad_norm = 0.5;
  double gap_lo = 40.0;
  double gap_hi = 80.0;
  int episode_steps = 150;
  int checkpoint_every = 0;  ///< updates between periodic checkpoints, 0 disables

  void validate() const;
  int updates() const;
  bool operator==(const PPOConfig&) const = default;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  double approx_kl = 0.0;
};

/// Per-transition pieces of the clipped objective, exposed for testing.
struct SurrogateTerm {
  double objective = 0.0;  ///< min(r A, clip(r) A)
  double dlogp = 0.0;      ///< d objective / d log pi_new
  bool clipped = false;
};
SurrogateTerm clipped_surrogate(double ratio, double advantage, double clip_eps);

UpdateStats ppo_update(RolloutBuffer& buffer, ActorCritic& model, AdamState& adam, const PPOConfig& cfg,
                       std::mt19937_64& rng);

/// Deterministic Fisher-Yates permutation of 0..n-1.
std::vector<int> shuffled_indices(int n, std::mt19937_64& rng);

// -- environments --------------------------------------------------------------

struct EnvStep {
  Vector obs;  ///< observation after the step (of the terminal state when done)
  double reward = 0.0;
  bool done = false;
  bool truncated = false;
  Outcome outcome = Outcome::running;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual Vector reset(std::uint64_t seed) = 0;
  virtual EnvStep step(int action) = 0;
};

using EnvFactory = std::function<std::unique_ptr<Environment>(int env_index)>;

/// Racing environment with randomised starts and opponent kind.
class RaceTrainingEnv : public Environment {
 public:
  /// `base` supplies the respawn and overtake rules; starts, opponent kind and
  /// episode length come from the PPO config.
  RaceTrainingEnv(std::shared_ptr<const SimSetup> setup, ObservationConfig obs, PPOConfig ppo,
                  ScenarioConfig base = {});
  Vector reset(std::uint64_t seed) override;
  EnvStep step(int action) override;
  const RaceEnv& env() const { return *env_; }

 private:
  std::shared_ptr<const SimSetup> setup_;
  ObservationConfig obs_;
  PPOConfig ppo_;
  ScenarioConfig base_;
  std::unique_ptr<RaceEnv> env_;
};

/// One-step environment paying `payoffs[action]`; observation is constant.
class BanditEnv : public Environment {
 public:
  BanditEnv(int obs_size, std::array<double, kModeCount> payoffs);
  Vector reset(std::uint64_t seed) override;
  EnvStep step(int action) override;

 private:
  int obs_size_;
  std::array<double, kModeCount> payoffs_;
};

// -- training ------------------------------------------------------------------

struct CurveRow {
  int update = 0;
  long steps = 0;
  double mean_reward = 0.0;  ///< mean return of episodes finished in this update (NaN if none)
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  int episodes = 0;
};

struct TrainingState {
  ActorCritic model;
  AdamState adam;
  std::mt19937_64 rng;
  std::uint64_t seed = 0;
  int update = 0;
  long steps = 0;
  std::vector<CurveRow> curve;
  WeightLibrary weights = WeightLibrary::defaults();
  PPOConfig ppo;
};

TrainingState make_training_state(const ObservationConfig& obs, const NetworkConfig& net, const PPOConfig& ppo,
                                  std::uint64_t seed);

struct TrainHooks {
  std::function<void(const TrainingState&)> on_update;
  std::function<void(const TrainingState&)> on_checkpoint;
  int stop_after_update = -1;  ///< stop early (for resumable runs), -1 runs to the end
};

/// Runs PPO until cfg.updates() updates are done (continuing from state.update).
void train(TrainingState& state, const EnvFactory& make_env, const TrainHooks& hooks = {});

std::string format_curve_csv(const std::vector<CurveRow>& curve);

// -- checkpoints -----------------------------------------------------------------

std::string checkpoint_to_string(const TrainingState& state);
TrainingState checkpoint_from_string(const std::string& text);
void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);
TrainingState load_checkpoint(const std::filesystem::path& path);

// -- evaluation ------------------------------------------------------------------

/// Greedy (argmax) selector backed by a model.
WeightSelector greedy_policy(std::shared_ptr<const ActorCritic> model);

struct EvaluationReport {
  MetricsTable metrics;
  std::array<long, kModeCount> action_histogram{};
  /// Episodes with at least one overtake in which >= 2 distinct modes were used.
  int multimode_overtake_episodes = 0;
  int overtake_episodes = 0;
  std::vector<EpisodeResult> episodes;
};

struct EvaluationBatch {
  ScenarioConfig base;
  std::vector<std::uint64_t> seeds;
  double gap_lo = 40.0;
  double gap_hi = 80.0;
  bool keep_logs = false;
};

EvaluationReport evaluate(std::shared_ptr<const SimSetup> setup, const WeightSelector& policy,
                          const EvaluationBatch& batch);

/// Checks that a checkpoint's observation layout and weight library match
/// the evaluation setup; throws CheckpointMismatch otherwise.
void check_compatible(const TrainingState& checkpoint, const ObservationConfig& obs, const WeightLibrary& weights);

}  // namespace racemode
