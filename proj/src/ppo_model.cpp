#include <algorithm>
#include <cmath>

#include "racemode/error.hpp"
#include "racemode/math.hpp"
#include "racemode/ppo.hpp"

namespace racemode {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(mix_seed(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

namespace {

double clamp1(double x) { return std::clamp(x, -1.0, 1.0); }
double unit(double x, double scale) { return clamp1(2.0 * x / scale - 1.0); }

}  // namespace

Vector build_observation(const RaceEnv& env, const ObservationConfig& cfg) {
  const SimSetup& S = env.setup();
  const TrackDefinition& track = S.track;
  const ConstraintLimits& lim = S.planner.limits;
  const VehicleState& ego = env.ego();
  Vector obs(cfg.size());

  const double L = track.lap_length();
  const double s_wrapped = track.wrap(ego.s);
  const double delta = gg_utilization(ego.a_long, ego.a_lat, lim.ax_max, lim.ay_max, lim.p_exponent);
  obs[0] = clamp1(2.0 * s_wrapped / L - 1.0);
  obs[1] = clamp1(ego.n / cfg.n_scale);
  obs[2] = clamp1(ego.mu / cfg.mu_scale);
  obs[3] = unit(ego.v, cfg.v_scale);
  obs[4] = clamp1(ego.kappa / cfg.kappa_scale);
  obs[5] = clamp1(ego.a_long / cfg.accel_scale);
  obs[6] = unit(delta, 1.0);

  const int o = ObservationConfig::kEgoFeatures;
  const double ds = env.has_opponent() ? std::remainder(env.opp().s - ego.s, L) : 0.0;
  if (env.has_opponent() && std::abs(ds) <= cfg.detection_range) {
    obs[o + 0] = clamp1(ds / cfg.detection_range);
    obs[o + 1] = clamp1((env.opp().n - ego.n) / (2.0 * cfg.n_scale));
    obs[o + 2] = clamp1((env.opp().v - ego.v) / cfg.rel_v_scale);
    obs[o + 3] = 1.0;
  } else {
    obs.segment(o, 3).setZero();
    obs[o + 3] = -1.0;
  }

  const int t0 = o + ObservationConfig::kOppFeatures;
  const GeometryFeatures g = query_geometry(track, ego.s, cfg.geometry);
  const int n = cfg.geometry.n_lookahead;
  for (int k = 0; k < n; ++k) {
    obs[t0 + kChannelKappa * n + k] = clamp1(g(kChannelKappa, k) / cfg.track_kappa_scale);
    obs[t0 + kChannelDeltaPsi * n + k] = clamp1(g(kChannelDeltaPsi, k) / std::numbers::pi);
    obs[t0 + kChannelNMin * n + k] = clamp1(g(kChannelNMin, k) / cfg.n_scale);
    obs[t0 + kChannelNMax * n + k] = clamp1(g(kChannelNMax, k) / cfg.n_scale);
    obs[t0 + kChannelNRaceline * n + k] = clamp1(g(kChannelNRaceline, k) / cfg.n_scale);
    obs[t0 + kChannelVRaceline * n + k] = unit(g(kChannelVRaceline, k), cfg.v_scale);
  }
  return obs;
}

ActorCritic::ActorCritic(const ObservationConfig& obs, const NetworkConfig& net) : obs_(obs), net_(net) {
  using L = LayerSpec;
  Sequential ego({L::dense_layer(ObservationConfig::kEgoFeatures, net.ego_hidden)});
  Sequential opp({L::dense_layer(ObservationConfig::kOppFeatures, net.opp_hidden)});
  const int n = obs.geometry.n_lookahead;
  const int conv_out = n - (net.conv1_kernel - 1) - (net.conv2_kernel - 1);
  if (conv_out < 1) throw ShapeMismatch("lookahead too short for the track convolutions");
  Sequential track({L::conv1d_layer(kGeometryChannels, net.conv1_channels, net.conv1_kernel),
                    L::conv1d_layer(net.conv1_channels, net.conv2_channels, net.conv2_kernel), L::flatten_layer(),
                    L::dense_layer(net.conv2_channels * conv_out, net.track_hidden)},
                   n);
  int offset = 0;
  for (Sequential* s : {&ego, &opp, &track}) {
    s->set_offset(offset);
    offset += s->param_count();
  }
  encoder_ = ConcatJunction({ego, opp, track});
  const int joint = encoder_.output_size();
  actor_ = Sequential({L::dense_layer(joint, net.head_hidden), L::dense_layer(net.head_hidden, kModeCount, Activation::linear)});
  actor_.set_offset(offset);
  offset += actor_.param_count();
  critic_ = Sequential({L::dense_layer(joint, net.head_hidden), L::dense_layer(net.head_hidden, 1, Activation::linear)});
  critic_.set_offset(offset);
  offset += critic_.param_count();
  param_count_ = offset;
  if (encoder_.input_size() != obs.size()) throw ShapeMismatch("encoder input does not match the observation size");
  params = Vector::Zero(param_count_);
}

void ActorCritic::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& b : encoder_.branches()) b.initialize(params, rng);
  actor_.initialize(params, rng, net_.policy_init_scale);
  critic_.initialize(params, rng);
}

ActorCritic::Output ActorCritic::forward(const Matrix& obs, Cache* cache) const {
  const Matrix h = encoder_.forward(params, obs, cache ? &cache->encoder : nullptr);
  Output out;
  out.logits = actor_.forward(params, h, cache ? &cache->actor : nullptr);
  out.values = critic_.forward(params, h, cache ? &cache->critic : nullptr);
  return out;
}

void ActorCritic::backward(const Cache& cache, const Matrix& dlogits, const Matrix& dvalues, Vector& grad) const {
  Matrix dh = actor_.backward(params, cache.actor, dlogits, grad);
  dh += critic_.backward(params, cache.critic, dvalues, grad);
  encoder_.backward(params, cache.encoder, dh, grad);
}

}  // namespace racemode
