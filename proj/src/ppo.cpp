#include "racemode/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "racemode/error.hpp"

namespace racemode {

RolloutBuffer::RolloutBuffer(int n_envs_in, int horizon_in, int obs_size)
    : n_envs(n_envs_in), horizon(horizon_in) {
  const int n = n_envs * horizon;
  obs = Matrix::Zero(obs_size, n);
  actions.assign(static_cast<std::size_t>(n), 0);
  log_probs = Vector::Zero(n);
  values = Vector::Zero(n);
  rewards = Vector::Zero(n);
  dones = Vector::Zero(n);
  last_values = Vector::Zero(n_envs);
}

void compute_gae(RolloutBuffer& b, double gamma, double lambda) {
  const int n = b.size();
  if (n == 0 || b.filled != n) throw IncompleteBuffer("rollout buffer is not completely filled");
  if (b.values.size() != n || b.rewards.size() != n || b.dones.size() != n || b.last_values.size() != b.n_envs)
    throw IncompleteBuffer("rollout buffer arrays have inconsistent lengths");
  b.advantages = Vector::Zero(n);
  for (int e = 0; e < b.n_envs; ++e) {
    double next_adv = 0.0;
    for (int t = b.horizon - 1; t >= 0; --t) {
      const int i = b.index(e, t);
      const double next_value = t + 1 < b.horizon ? b.values[i + 1] : b.last_values[e];
      const double live = 1.0 - b.dones[i];
      const double delta = b.rewards[i] + gamma * next_value * live - b.values[i];
      next_adv = delta + gamma * lambda * live * next_adv;
      b.advantages[i] = next_adv;
    }
  }
  b.returns = b.advantages + b.values;
}

void PPOConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(lambda_gae >= 0.0 && lambda_gae <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (!(reward_scale > 0.0)) throw ConfigError("reward_scale must be positive");
  if (!(clip_eps > 0.0)) throw ConfigError("clip_eps must be positive");
  if (epochs < 1 || minibatch < 1 || n_envs < 1 || rollout_len < 1 || total_steps < 1)
    throw ConfigError("epochs, minibatch, n_envs, rollout_len and total_steps must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(opponent_mix >= 0.0 && opponent_mix <= 1.0)) throw ConfigError("opponent_mix must lie in [0, 1]");
  if (!(gap_lo > 0.0 && gap_lo <= gap_hi)) throw ConfigError("need 0 < gap_lo <= gap_hi");
  if (episode_steps < 1) throw ConfigError("episode_steps must be >= 1");
}

int PPOConfig::updates() const {
  const long per_update = static_cast<long>(n_envs) * rollout_len;
  return static_cast<int>((total_steps + per_update - 1) / per_update);
}

SurrogateTerm clipped_surrogate(double ratio, double advantage, double clip_eps) {
  const double clipped_ratio = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  const double plain = ratio * advantage;
  const double clipped = clipped_ratio * advantage;
  if (plain <= clipped) return {plain, plain, false};
  return {clipped, 0.0, true};
}

std::vector<int> shuffled_indices(int n, std::mt19937_64& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(uniform01(rng) * (i + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(std::min(j, i))]);
  }
  return idx;
}

UpdateStats ppo_update(RolloutBuffer& buffer, ActorCritic& model, AdamState& adam, const PPOConfig& cfg,
                       std::mt19937_64& rng) {
  const int n = buffer.size();
  if (buffer.advantages.size() != n || buffer.returns.size() != n)
    throw IncompleteBuffer("advantages must be computed before the update");
  Vector adv = buffer.advantages;
  if (cfg.normalize_advantages && n > 1) {
    const double mean = adv.mean();
    const double stdev = std::sqrt((adv.array() - mean).square().mean());
    adv = (adv.array() - mean) / (stdev + 1e-12);
  }
  if (adam.m.size() != model.param_count()) adam.reset(model.param_count());
  adam.lr = cfg.lr;

  UpdateStats stats;
  int batches = 0;
  Vector grad(model.param_count());
  ActorCritic::Cache cache;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(n, rng);
    for (int start = 0; start < n; start += cfg.minibatch) {
      const int m = std::min(cfg.minibatch, n - start);
      Matrix obs(buffer.obs.rows(), m);
      for (int k = 0; k < m; ++k) obs.col(k) = buffer.obs.col(order[static_cast<std::size_t>(start + k)]);
      const auto out = model.forward(obs, &cache);

      Matrix dlogits(kModeCount, m);
      Matrix dvalues(1, m);
      double objective = 0.0;
      double value_loss = 0.0;
      double entropy = 0.0;
      double kl = 0.0;
      int clipped = 0;
      for (int k = 0; k < m; ++k) {
        const int i = order[static_cast<std::size_t>(start + k)];
        const int a = buffer.actions[static_cast<std::size_t>(i)];
        const Categorical cat = softmax_categorical(out.logits.col(k));
        const double logp = cat.log_probs[a];
        const double ratio = std::exp(logp - buffer.log_probs[i]);
        const SurrogateTerm term = clipped_surrogate(ratio, adv[i], cfg.clip_eps);
        objective += term.objective;
        clipped += std::abs(ratio - 1.0) > cfg.clip_eps;
        kl += buffer.log_probs[i] - logp;
        entropy += cat.entropy;
        for (int j = 0; j < kModeCount; ++j) {
          const double onehot = j == a ? 1.0 : 0.0;
          dlogits(j, k) = -term.dlogp / m * (onehot - cat.probs[j]) +
                          cfg.c2 / m * cat.probs[j] * (cat.log_probs[j] + cat.entropy);
        }
        const double diff = out.values(0, k) - buffer.returns[i];
        value_loss += diff * diff;
        dvalues(0, k) = cfg.c1 * 2.0 * diff / m;
      }
      const double loss = -objective / m + cfg.c1 * value_loss / m - cfg.c2 * entropy / m;
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite PPO loss (objective " << objective / m << ", value loss " << value_loss / m
            << ", entropy " << entropy / m << ") at epoch " << epoch;
        throw NonFiniteLoss(msg.str());
      }
      grad.setZero();
      model.backward(cache, dlogits, dvalues, grad);
      const double norm = grad.norm();
      if (!std::isfinite(norm)) throw NonFiniteLoss("non-finite gradient norm");
      if (cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm) grad *= cfg.max_grad_norm / norm;
      adam_step(model.params, grad, adam);

      stats.policy_loss += -objective / m;
      stats.value_loss += value_loss / m;
      stats.entropy += entropy / m;
      stats.clip_frac += static_cast<double>(clipped) / m;
      stats.approx_kl += kl / m;
      ++batches;
    }
  }
  if (batches > 0) {
    stats.policy_loss /= batches;
    stats.value_loss /= batches;
    stats.entropy /= batches;
    stats.clip_frac /= batches;
    stats.approx_kl /= batches;
  }
  return stats;
}

// -- environments --------------------------------------------------------------

RaceTrainingEnv::RaceTrainingEnv(std::shared_ptr<const SimSetup> setup, ObservationConfig obs, PPOConfig ppo,
                                 ScenarioConfig base)
    : setup_(std::move(setup)), obs_(obs), ppo_(ppo), base_(base) {}

Vector RaceTrainingEnv::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ScenarioConfig base = base_;
  base.max_steps = ppo_.episode_steps;
  base.opp_accel_scale = setup_->opp_accel_scale;
  base.opponent_kind = uniform01(rng) < ppo_.opponent_mix ? OpponentKind::reactive_nr : OpponentKind::non_reactive;
  const auto scenario = randomized_scenario(base, setup_->track.lap_length(), rng(), ppo_.gap_lo, ppo_.gap_hi);
  if (env_) {
    env_->reset(scenario);
  } else {
    env_ = std::make_unique<RaceEnv>(setup_, scenario);
  }
  return build_observation(*env_, obs_);
}

EnvStep RaceTrainingEnv::step(int action) {
  const StepInfo info = env_->step(action);
  EnvStep out;
  out.obs = build_observation(*env_, obs_);
  out.reward = info.reward;
  out.done = info.done;
  out.truncated = info.truncated;
  out.outcome = info.outcome;
  return out;
}

BanditEnv::BanditEnv(int obs_size, std::array<double, kModeCount> payoffs) : obs_size_(obs_size), payoffs_(payoffs) {}

Vector BanditEnv::reset(std::uint64_t) { return Vector::Zero(obs_size_); }

EnvStep BanditEnv::step(int action) {
  EnvStep out;
  out.obs = Vector::Zero(obs_size_);
  out.reward = payoffs_.at(static_cast<std::size_t>(action));
  out.done = true;
  out.outcome = Outcome::success;
  return out;
}

// -- training ------------------------------------------------------------------

TrainingState make_training_state(const ObservationConfig& obs, const NetworkConfig& net, const PPOConfig& ppo,
                                  std::uint64_t seed) {
  ppo.validate();
  TrainingState state{ActorCritic(obs, net), AdamState{}, std::mt19937_64(derive_seed(seed, 0x5eed)), seed, 0, 0, {},
                      WeightLibrary::defaults(), ppo};
  state.model.initialize(derive_seed(seed, 0x1417));
  state.adam.reset(state.model.param_count());
  state.adam.lr = ppo.lr;
  return state;
}

void train(TrainingState& state, const EnvFactory& make_env, const TrainHooks& hooks) {
  const PPOConfig& cfg = state.ppo;
  cfg.validate();
  const int horizon = cfg.rollout_len;
  std::vector<std::unique_ptr<Environment>> envs;
  for (int e = 0; e < cfg.n_envs; ++e) envs.push_back(make_env(e));
  const int obs_size = state.model.observation().size();

  while (state.update < cfg.updates()) {
    if (hooks.stop_after_update >= 0 && state.update >= hooks.stop_after_update) break;
    const auto u = static_cast<std::uint64_t>(state.update);
    RolloutBuffer buffer(cfg.n_envs, horizon, obs_size);
    double return_sum = 0.0;
    int episodes = 0;
    for (int e = 0; e < cfg.n_envs; ++e) {
      std::mt19937_64 action_rng(derive_seed(state.seed, u, 2 * static_cast<std::uint64_t>(e) + 1));
      std::uint64_t episode_counter = 0;
      auto next_seed = [&]() { return derive_seed(state.seed ^ 0xe9157ULL, u, (static_cast<std::uint64_t>(e) << 20) + episode_counter++); };
      Vector obs = envs[static_cast<std::size_t>(e)]->reset(next_seed());
      double episode_return = 0.0;
      for (int t = 0; t < horizon; ++t) {
        const auto out = state.model.forward(obs);
        const Categorical cat = softmax_categorical(out.logits.col(0));
        const int action = cat.sample(action_rng);
        const EnvStep step = envs[static_cast<std::size_t>(e)]->step(action);
        double reward = cfg.reward_scale * step.reward;
        if (step.truncated) reward += cfg.gamma * state.model.forward(step.obs).values(0, 0);
        const int i = buffer.index(e, t);
        buffer.obs.col(i) = obs;
        buffer.actions[static_cast<std::size_t>(i)] = action;
        buffer.log_probs[i] = cat.log_probs[action];
        buffer.values[i] = out.values(0, 0);
        buffer.rewards[i] = reward;
        buffer.dones[i] = step.done ? 1.0 : 0.0;
        episode_return += step.reward;
        if (step.done) {
          return_sum += episode_return;
          ++episodes;
          episode_return = 0.0;
          obs = envs[static_cast<std::size_t>(e)]->reset(next_seed());
        } else {
          obs = step.obs;
        }
      }
      buffer.last_values[e] = state.model.forward(obs).values(0, 0);
    }
    buffer.filled = buffer.size();
    compute_gae(buffer, cfg.gamma, cfg.lambda_gae);
    const UpdateStats stats = ppo_update(buffer, state.model, state.adam, cfg, state.rng);

    ++state.update;
    state.steps += buffer.size();
    CurveRow row;
    row.update = state.update;
    row.steps = state.steps;
    row.mean_reward = episodes ? return_sum / episodes : std::nan("");
    row.policy_loss = stats.policy_loss;
    row.value_loss = stats.value_loss;
    row.entropy = stats.entropy;
    row.clip_frac = stats.clip_frac;
    row.episodes = episodes;
    state.curve.push_back(row);
    if (hooks.on_update) hooks.on_update(state);
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && state.update % cfg.checkpoint_every == 0)
      hooks.on_checkpoint(state);
  }
}

std::string format_curve_csv(const std::vector<CurveRow>& curve) {
  std::ostringstream out;
  out << "update,steps,mean_reward,policy_loss,value_loss,entropy,clip_frac\n";
  out << std::setprecision(10);
  for (const auto& r : curve) {
    out << r.update << ',' << r.steps << ',' << r.mean_reward << ',' << r.policy_loss << ',' << r.value_loss << ','
        << r.entropy << ',' << r.clip_frac << '\n';
  }
  return out.str();
}

// -- evaluation ------------------------------------------------------------------

WeightSelector greedy_policy(std::shared_ptr<const ActorCritic> model) {
  return [model](const RaceEnv& env) {
    const Vector obs = build_observation(env, model->observation());
    const auto out = model->forward(obs);
    return softmax_categorical(out.logits.col(0)).argmax();
  };
}

EvaluationReport evaluate(std::shared_ptr<const SimSetup> setup, const WeightSelector& policy,
                          const EvaluationBatch& batch) {
  if (batch.seeds.empty()) throw EmptyInput("evaluation batch has no seeds");
  EvaluationReport report;
  for (std::uint64_t seed : batch.seeds) {
    const auto scenario = randomized_scenario(batch.base, setup->track.lap_length(), seed, batch.gap_lo, batch.gap_hi);
    EpisodeResult r = run_scenario(setup, scenario, policy, batch.keep_logs);
    std::set<int> used(r.actions.begin(), r.actions.end());
    for (int a : r.actions) ++report.action_histogram[static_cast<std::size_t>(a)];
    if (r.overtakes_completed > 0) {
      ++report.overtake_episodes;
      if (used.size() >= 2) ++report.multimode_overtake_episodes;
    }
    report.episodes.push_back(std::move(r));
  }
  report.metrics = compute_metrics(report.episodes);
  return report;
}

void check_compatible(const TrainingState& checkpoint, const ObservationConfig& obs, const WeightLibrary& weights) {
  if (!(checkpoint.model.observation() == obs))
    throw CheckpointMismatch("checkpoint observation normalisation differs from the run configuration");
  if (!(checkpoint.weights == weights))
    throw CheckpointMismatch("checkpoint weight library differs from the run configuration");
}

}  // namespace racemode
