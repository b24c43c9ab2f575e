#include <cmath>
#include <memory>
#include <random>

#include "doctest.h"
#include "racemode/error.hpp"
#include "racemode/ppo.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace racemode;
using testing_support::random_matrix;

namespace {

ObservationConfig small_obs() {
  ObservationConfig o;
  o.geometry.n_lookahead = 6;
  return o;
}

NetworkConfig small_net() {
  NetworkConfig n;
  n.ego_hidden = 4;
  n.opp_hidden = 3;
  n.conv1_channels = 2;
  n.conv1_kernel = 3;
  n.conv2_channels = 2;
  n.conv2_kernel = 2;
  n.track_hidden = 4;
  n.head_hidden = 6;
  return n;
}

PPOConfig bandit_ppo(int updates) {
  PPOConfig p;
  p.n_envs = 2;
  p.rollout_len = 32;
  p.minibatch = 32;
  p.total_steps = static_cast<long>(updates) * 64;
  return p;
}

EnvFactory bandit_factory(int obs_size, std::array<double, kModeCount> payoffs) {
  return [=](int) { return std::make_unique<BanditEnv>(obs_size, payoffs); };
}

// Finite-horizon lambda-return form: a (1 - lambda) lambda^(k-1) weighted sum of
// k-step advantages, the last one taking the remaining weight.
double brute_force_gae(const RolloutBuffer& b, int env, int t, double gamma, double lambda) {
  const int H = b.horizon - t;
  auto k_step = [&](int k) {
    double ret = 0.0;
    double discount = 1.0;
    for (int l = 0; l < k; ++l) {
      const int i = b.index(env, t + l);
      ret += discount * b.rewards[i];
      discount *= gamma;
      if (b.dones[i] > 0.5) return ret - b.values[b.index(env, t)];
    }
    const double boot = t + k < b.horizon ? b.values[b.index(env, t + k)] : b.last_values[env];
    return ret + discount * boot - b.values[b.index(env, t)];
  };
  double sum = 0.0;
  for (int k = 1; k < H; ++k) sum += (1.0 - lambda) * std::pow(lambda, k - 1) * k_step(k);
  return sum + std::pow(lambda, H - 1) * k_step(H);
}

std::shared_ptr<const SimSetup> circle_setup() {
  return std::make_shared<SimSetup>(testing_support::circle_track(300.0, 1000, 6.0, 30.0), PlannerConfig{},
                                    WeightLibrary::defaults(), RewardConfig{});
}

}  // namespace

TEST_SUITE("ppo") {
  TEST_CASE("single terminal step") {
    RolloutBuffer b(1, 1, 1);
    b.rewards[0] = 1.0;
    b.dones[0] = 1.0;
    b.filled = 1;
    compute_gae(b, 0.99, 0.95);
    CHECK(b.advantages[0] == doctest::Approx(1.0));
    CHECK(b.returns[0] == doctest::Approx(1.0));
  }

  TEST_CASE("undiscounted advantages telescope") {
    RolloutBuffer b(1, 3, 1);
    b.rewards << 0.0, 0.0, 1.0;
    b.dones << 0.0, 0.0, 1.0;
    b.filled = 3;
    compute_gae(b, 1.0, 1.0);
    for (int t = 0; t < 3; ++t) CHECK(b.advantages[t] == doctest::Approx(1.0));
  }

  TEST_CASE("GAE matches the k-step oracle on random buffers") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 50; ++trial) {
      const int envs = 1 + static_cast<int>(rng() % 3);
      const int horizon = 1 + static_cast<int>(rng() % 12);
      const double gamma = 0.5 + 0.5 * uniform01(rng);
      const double lambda = uniform01(rng);
      RolloutBuffer b(envs, horizon, 1);
      for (int i = 0; i < b.size(); ++i) {
        b.rewards[i] = 4.0 * uniform01(rng) - 2.0;
        b.values[i] = 4.0 * uniform01(rng) - 2.0;
        b.dones[i] = uniform01(rng) < 0.2 ? 1.0 : 0.0;
      }
      for (int e = 0; e < envs; ++e) b.last_values[e] = uniform01(rng);
      b.filled = b.size();
      compute_gae(b, gamma, lambda);
      for (int e = 0; e < envs; ++e)
        for (int t = 0; t < horizon; ++t) {
          const int i = b.index(e, t);
          CHECK(std::abs(b.advantages[i] - brute_force_gae(b, e, t, gamma, lambda)) < 1e-10);
          CHECK(b.returns[i] == doctest::Approx(b.advantages[i] + b.values[i]));
        }
    }
  }

  TEST_CASE("incomplete buffers are rejected") {
    RolloutBuffer b(2, 4, 3);
    b.filled = 5;
    CHECK_THROWS_AS(compute_gae(b, 0.99, 0.95), IncompleteBuffer);
    ActorCritic model(small_obs(), small_net());
    RolloutBuffer c(1, 4, small_obs().size());
    AdamState adam;
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(ppo_update(c, model, adam, PPOConfig{}, rng), IncompleteBuffer);
  }

  TEST_CASE("clipped surrogate arithmetic") {
    const auto up = clipped_surrogate(1.5, 1.0, 0.2);
    CHECK(up.objective == doctest::Approx(1.2));
    CHECK(up.clipped);
    CHECK(up.dlogp == 0.0);

    const auto down = clipped_surrogate(0.5, -1.0, 0.2);
    CHECK(down.objective == doctest::Approx(-0.8));
    CHECK(down.clipped);
    CHECK(down.dlogp == 0.0);

    // outside the range but pulling back towards it keeps its gradient
    const auto back = clipped_surrogate(0.5, 1.0, 0.2);
    CHECK(back.objective == doctest::Approx(0.5));
    CHECK(back.dlogp == doctest::Approx(0.5));

    const auto inside = clipped_surrogate(1.1, 2.0, 0.2);
    CHECK(inside.objective == doctest::Approx(2.2));
    CHECK(inside.dlogp == doctest::Approx(2.2));
  }

  TEST_CASE("fresh policy is close to uniform") {
    ActorCritic model(ObservationConfig{}, NetworkConfig{});
    model.initialize(5);
    std::mt19937_64 rng(6);
    const Matrix obs = random_matrix(model.observation().size(), 1000, rng);
    const auto out = model.forward(obs);
    double worst = 0.0;
    for (Eigen::Index k = 0; k < obs.cols(); ++k) {
      const Categorical c = softmax_categorical(out.logits.col(k));
      worst = std::max(worst, (c.probs.array() - 1.0 / 3.0).abs().maxCoeff());
    }
    CHECK(worst < 0.02);
    CHECK(out.values.rows() == 1);
    CHECK(out.values.allFinite());
    CHECK(model.forward(obs).logits == out.logits);
    CHECK(softmax_categorical(Vector::Zero(kModeCount)).entropy == doctest::Approx(std::log(3.0)));
  }

  TEST_CASE("actor-critic gradients match finite differences") {
    ActorCritic model(small_obs(), small_net());
    model.initialize(3);
    std::mt19937_64 rng(4);
    const Matrix obs = random_matrix(model.observation().size(), 2, rng);
    const Matrix gl = random_matrix(kModeCount, 2, rng);
    const Matrix gv = random_matrix(1, 2, rng);
    auto loss = [&](const ActorCritic& m) {
      const auto out = m.forward(obs);
      return (gl.array() * out.logits.array()).sum() + (gv.array() * out.values.array()).sum();
    };
    ActorCritic::Cache cache;
    model.forward(obs, &cache);
    Vector grad = Vector::Zero(model.param_count());
    model.backward(cache, gl, gv, grad);
    double worst = 0.0;
    constexpr double h = 1e-5;
    for (int i = 0; i < model.param_count(); ++i) {
      ActorCritic up = model, dn = model;
      up.params[i] += h;
      dn.params[i] -= h;
      const double fd = (loss(up) - loss(dn)) / (2 * h);
      worst = std::max(worst, testing_support::rel_error(grad[i], fd));
    }
    CHECK(worst < 1e-6);
  }

  TEST_CASE("unchanged policy gives unit ratios and no clipping") {
    ActorCritic model(small_obs(), small_net());
    model.initialize(9);
    std::mt19937_64 rng(10);
    RolloutBuffer b(2, 16, model.observation().size());
    b.obs = random_matrix(model.observation().size(), b.size(), rng);
    const auto out = model.forward(b.obs);
    double entropy = 0.0;
    for (int i = 0; i < b.size(); ++i) {
      const Categorical c = softmax_categorical(out.logits.col(i));
      b.actions[static_cast<std::size_t>(i)] = c.sample(rng);
      b.log_probs[i] = c.log_prob(b.actions[static_cast<std::size_t>(i)]);
      b.values[i] = out.values(0, i);
      b.rewards[i] = uniform01(rng);
      entropy += c.entropy;
    }
    b.filled = b.size();
    compute_gae(b, 0.99, 0.95);
    PPOConfig cfg;
    cfg.epochs = 1;
    cfg.minibatch = b.size();
    AdamState adam;
    const UpdateStats s = ppo_update(b, model, adam, cfg, rng);
    CHECK(s.clip_frac == 0.0);
    CHECK(std::abs(s.approx_kl) < 1e-15);
    CHECK(s.entropy == doctest::Approx(entropy / b.size()).epsilon(1e-12));
    CHECK(adam.step == 1);
  }

  TEST_CASE("bandit: the paying arm wins within 200 updates") {
    const ObservationConfig obs = small_obs();
    TrainingState state = make_training_state(obs, small_net(), bandit_ppo(200), 17);
    train(state, bandit_factory(obs.size(), {0.0, 1.0, 0.0}));
    CHECK(state.update == 200);
    const auto out = state.model.forward(Vector::Zero(obs.size()));
    const double p_ag = softmax_categorical(out.logits.col(0)).probs[static_cast<int>(BehaviorMode::AG)];
    MESSAGE("P(AG) = " << p_ag);
    CHECK(p_ag > 0.95);
    CHECK(state.curve.back().mean_reward > state.curve.front().mean_reward);
  }

  TEST_CASE("training is deterministic and resumable") {
    const ObservationConfig obs = small_obs();
    const auto factory = bandit_factory(obs.size(), {0.2, 1.0, -0.5});
    TrainingState a = make_training_state(obs, small_net(), bandit_ppo(6), 4);
    TrainingState b = make_training_state(obs, small_net(), bandit_ppo(6), 4);
    train(a, factory);
    train(b, factory);
    const std::string bytes = checkpoint_to_string(a);
    CHECK(bytes == checkpoint_to_string(b));

    TrainingState c = make_training_state(obs, small_net(), bandit_ppo(6), 4);
    train(c, factory, {.stop_after_update = 3});
    CHECK(c.update == 3);
    TrainingState resumed = checkpoint_from_string(checkpoint_to_string(c));
    train(resumed, factory);
    CHECK(checkpoint_to_string(resumed) == bytes);
  }

  TEST_CASE("checkpoint text round trips byte for byte") {
    TrainingState s = make_training_state(small_obs(), small_net(), bandit_ppo(2), 8);
    train(s, bandit_factory(small_obs().size(), {1.0, 0.0, 0.0}));
    const std::string text = checkpoint_to_string(s);
    const TrainingState back = checkpoint_from_string(text);
    CHECK(checkpoint_to_string(back) == text);
    CHECK(back.model.params == s.model.params);
    CHECK(back.adam.step == s.adam.step);
    CHECK(back.curve.size() == s.curve.size());
    CHECK_THROWS_AS(checkpoint_from_string("{\"format\": \"other\"}"), CheckpointMismatch);

    ObservationConfig other = small_obs();
    other.v_scale = 60.0;
    CHECK_NOTHROW(check_compatible(back, small_obs(), WeightLibrary::defaults()));
    CHECK_THROWS_AS(check_compatible(back, other, WeightLibrary::defaults()), CheckpointMismatch);
    WeightLibrary w = WeightLibrary::defaults();
    w[BehaviorMode::CD].w_c = 5.0;
    CHECK_THROWS_AS(check_compatible(back, small_obs(), w), CheckpointMismatch);
  }

  TEST_CASE("observation examples") {
    const auto setup = circle_setup();
    const double L = setup->track.lap_length();
    ScenarioConfig sc;
    sc.ego_start_s = 0.5 * L;
    sc.opp_start_s = 0.5 * L + 500.0;
    RaceEnv env(setup, sc);
    const ObservationConfig cfg;
    const Vector o = build_observation(env, cfg);
    CHECK(o.size() == cfg.size());
    CHECK(o[0] == doctest::Approx(0.0).scale(1.0));
    const int k = ObservationConfig::kEgoFeatures;
    CHECK(o[k] == 0.0);
    CHECK(o[k + 1] == 0.0);
    CHECK(o[k + 2] == 0.0);
    CHECK(o[k + 3] == -1.0);

    sc.opp_start_s = 0.5 * L + 75.0;
    env.reset(sc);
    const Vector near = build_observation(env, cfg);
    CHECK(near[k] == doctest::Approx(0.5));
    CHECK(near[k + 3] == 1.0);
  }

  TEST_CASE("observations stay inside [-1, 1] along random episodes") {
    TrackParams p;
    p.straight = 250.0;
    p.radius = 45.0;
    p.width = 14.0;
    const auto setup = std::make_shared<SimSetup>(synth_track(TrackKind::chicane, p, 7), PlannerConfig{},
                                                  WeightLibrary::defaults(), RewardConfig{});
    std::mt19937_64 rng(31);
    const ObservationConfig cfg;
    for (int ep = 0; ep < 4; ++ep) {
      ScenarioConfig base;
      base.max_steps = 40;
      base.opponent_kind = ep % 2 ? OpponentKind::reactive_nr : OpponentKind::non_reactive;
      RaceEnv env(setup, randomized_scenario(base, setup->track.lap_length(), rng(), 5.0, 80.0));
      while (!env.done()) {
        const Vector o = build_observation(env, cfg);
        CHECK(o.cwiseAbs().maxCoeff() <= 1.0);
        env.step(static_cast<int>(rng() % kModeCount));
      }
    }
  }

  TEST_CASE("a constant-NR network reproduces the static NR baseline") {
    const auto setup = circle_setup();
    auto model = std::make_shared<ActorCritic>(ObservationConfig{}, NetworkConfig{});
    const Sequential& actor = model->actor();
    model->params[actor.offset() + actor.param_count() - kModeCount + static_cast<int>(BehaviorMode::NR)] = 5.0;

    EvaluationBatch batch;
    batch.base.max_steps = 30;
    batch.seeds = {1, 2};
    const auto learned = evaluate(setup, greedy_policy(model), batch);
    const auto fixed = evaluate(setup, [](const RaceEnv&) { return static_cast<int>(BehaviorMode::NR); }, batch);
    long steps = 0;
    for (std::size_t i = 0; i < batch.seeds.size(); ++i) {
      CHECK(learned.episodes[i].actions == fixed.episodes[i].actions);
      CHECK(learned.episodes[i].total_reward == fixed.episodes[i].total_reward);
      CHECK(learned.episodes[i].outcome == fixed.episodes[i].outcome);
      steps += learned.episodes[i].steps;
    }
    CHECK(learned.action_histogram[0] == steps);
    CHECK(learned.action_histogram[1] + learned.action_histogram[2] == 0);
    CHECK(learned.metrics.collision_pct == fixed.metrics.collision_pct);
  }
}
