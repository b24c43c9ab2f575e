#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "racemode/error.hpp"
#include "racemode/ppo.hpp"

namespace racemode {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "racemode-checkpoint";
constexpr int kVersion = 1;

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// JSON has no NaN; curve rows without finished episodes store null.
json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }
double number_from(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

json network_json(const NetworkConfig& n) {
  return {{"ego_hidden", n.ego_hidden},         {"opp_hidden", n.opp_hidden},
          {"conv1_channels", n.conv1_channels}, {"conv1_kernel", n.conv1_kernel},
          {"conv2_channels", n.conv2_channels}, {"conv2_kernel", n.conv2_kernel},
          {"track_hidden", n.track_hidden},     {"head_hidden", n.head_hidden},
          {"policy_init_scale", n.policy_init_scale}};
}

NetworkConfig network_from(const json& j) {
  NetworkConfig n;
  n.ego_hidden = j.at("ego_hidden");
  n.opp_hidden = j.at("opp_hidden");
  n.conv1_channels = j.at("conv1_channels");
  n.conv1_kernel = j.at("conv1_kernel");
  n.conv2_channels = j.at("conv2_channels");
  n.conv2_kernel = j.at("conv2_kernel");
  n.track_hidden = j.at("track_hidden");
  n.head_hidden = j.at("head_hidden");
  n.policy_init_scale = j.at("policy_init_scale");
  return n;
}

json observation_json(const ObservationConfig& o) {
  return {{"n_lookahead", o.geometry.n_lookahead},
          {"spacing", o.geometry.spacing},
          {"detection_range", o.detection_range},
          {"n_scale", o.n_scale},
          {"mu_scale", o.mu_scale},
          {"v_scale", o.v_scale},
          {"kappa_scale", o.kappa_scale},
          {"track_kappa_scale", o.track_kappa_scale},
          {"accel_scale", o.accel_scale},
          {"rel_v_scale", o.rel_v_scale}};
}

ObservationConfig observation_from(const json& j) {
  ObservationConfig o;
  o.geometry.n_lookahead = j.at("n_lookahead");
  o.geometry.spacing = j.at("spacing");
  o.detection_range = j.at("detection_range");
  o.n_scale = j.at("n_scale");
  o.mu_scale = j.at("mu_scale");
  o.v_scale = j.at("v_scale");
  o.kappa_scale = j.at("kappa_scale");
  o.track_kappa_scale = j.at("track_kappa_scale");
  o.accel_scale = j.at("accel_scale");
  o.rel_v_scale = j.at("rel_v_scale");
  return o;
}

json weights_json(const WeightLibrary& w) {
  json out = json::object();
  for (int m = 0; m < kModeCount; ++m) {
    const WeightSet& s = w.sets[static_cast<std::size_t>(m)];
    out[to_string(static_cast<BehaviorMode>(m))] = {
        {"w_rl", s.w_rl}, {"w_v", s.w_v}, {"w_a", s.w_a}, {"w_pr", s.w_pr}, {"w_c", s.w_c}};
  }
  return out;
}

WeightLibrary weights_from(const json& j) {
  WeightLibrary w;
  for (int m = 0; m < kModeCount; ++m) {
    const json& s = j.at(to_string(static_cast<BehaviorMode>(m)));
    w.sets[static_cast<std::size_t>(m)] = {s.at("w_rl"), s.at("w_v"), s.at("w_a"), s.at("w_pr"), s.at("w_c")};
  }
  return w;
}

json ppo_json(const PPOConfig& p) {
  return {{"gamma", p.gamma},
          {"reward_scale", p.reward_scale},
          {"lambda", p.lambda_gae},
          {"clip_eps", p.clip_eps},
          {"c1", p.c1},
          {"c2", p.c2},
          {"epochs", p.epochs},
          {"minibatch", p.minibatch},
          {"lr", p.lr},
          {"n_envs", p.n_envs},
          {"rollout_len", p.rollout_len},
          {"total_steps", p.total_steps},
          {"opponent_mix", p.opponent_mix},
          {"normalize_advantages", p.normalize_advantages},
          {"max_grad_norm", p.max_grad_norm},
          {"gap_lo", p.gap_lo},
          {"gap_hi", p.gap_hi},
          {"episode_steps", p.episode_steps},
          {"checkpoint_every", p.checkpoint_every}};
}

PPOConfig ppo_from(const json& j) {
  PPOConfig p;
  p.gamma = j.at("gamma");
  p.reward_scale = j.at("reward_scale");
  p.lambda_gae = j.at("lambda");
  p.clip_eps = j.at("clip_eps");
  p.c1 = j.at("c1");
  p.c2 = j.at("c2");
  p.epochs = j.at("epochs");
  p.minibatch = j.at("minibatch");
  p.lr = j.at("lr");
  p.n_envs = j.at("n_envs");
  p.rollout_len = j.at("rollout_len");
  p.total_steps = j.at("total_steps");
  p.opponent_mix = j.at("opponent_mix");
  p.normalize_advantages = j.at("normalize_advantages");
  p.max_grad_norm = j.at("max_grad_norm");
  p.gap_lo = j.at("gap_lo");
  p.gap_hi = j.at("gap_hi");
  p.episode_steps = j.at("episode_steps");
  p.checkpoint_every = j.at("checkpoint_every");
  return p;
}

}  // namespace

std::string checkpoint_to_string(const TrainingState& state) {
  std::ostringstream rng;
  rng << state.rng;
  json curve = json::array();
  for (const auto& r : state.curve) {
    curve.push_back({{"update", r.update},
                     {"steps", r.steps},
                     {"mean_reward", number_or_null(r.mean_reward)},
                     {"policy_loss", r.policy_loss},
                     {"value_loss", r.value_loss},
                     {"entropy", r.entropy},
                     {"clip_frac", r.clip_frac},
                     {"episodes", r.episodes}});
  }
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["network"] = network_json(state.model.network());
  j["observation"] = observation_json(state.model.observation());
  j["weights"] = weights_json(state.weights);
  j["ppo"] = ppo_json(state.ppo);
  j["seed"] = state.seed;
  j["update"] = state.update;
  j["steps"] = state.steps;
  j["rng"] = rng.str();
  j["params"] = vector_json(state.model.params);
  j["adam"] = {{"m", vector_json(state.adam.m)},
               {"v", vector_json(state.adam.v)},
               {"step", state.adam.step},
               {"lr", state.adam.lr},
               {"beta1", state.adam.beta1},
               {"beta2", state.adam.beta2},
               {"eps", state.adam.eps}};
  j["curve"] = std::move(curve);
  return j.dump(1) + "\n";
}

TrainingState checkpoint_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != kFormat) throw CheckpointMismatch("not a racemode checkpoint");
    if (j.at("version") != kVersion) throw CheckpointMismatch("unsupported checkpoint version");
    TrainingState state{ActorCritic(observation_from(j.at("observation")), network_from(j.at("network"))),
                        AdamState{},
                        std::mt19937_64{},
                        j.at("seed").get<std::uint64_t>(),
                        j.at("update").get<int>(),
                        j.at("steps").get<long>(),
                        {},
                        weights_from(j.at("weights")),
                        ppo_from(j.at("ppo"))};
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> state.rng;
    if (!rng) throw ParseError("checkpoint RNG state is malformed");
    const Vector params = vector_from(j.at("params"));
    if (params.size() != state.model.param_count())
      throw CheckpointMismatch("checkpoint parameter count does not match its network description");
    state.model.params = params;
    const json& a = j.at("adam");
    state.adam.m = vector_from(a.at("m"));
    state.adam.v = vector_from(a.at("v"));
    if (state.adam.m.size() != params.size() || state.adam.v.size() != params.size())
      throw CheckpointMismatch("optimiser moments do not match the parameter count");
    state.adam.step = a.at("step");
    state.adam.lr = a.at("lr");
    state.adam.beta1 = a.at("beta1");
    state.adam.beta2 = a.at("beta2");
    state.adam.eps = a.at("eps");
    for (const auto& r : j.at("curve")) {
      CurveRow row;
      row.update = r.at("update");
      row.steps = r.at("steps");
      row.mean_reward = number_from(r.at("mean_reward"));
      row.policy_loss = r.at("policy_loss");
      row.value_loss = r.at("value_loss");
      row.entropy = r.at("entropy");
      row.clip_frac = r.at("clip_frac");
      row.episodes = r.at("episodes");
      state.curve.push_back(row);
    }
    return state;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint is missing fields: ") + e.what());
  }
}

void save_checkpoint(const TrainingState& state, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    out << checkpoint_to_string(state);
    if (!out) throw Error("failed while writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str());
}

}  // namespace racemode
