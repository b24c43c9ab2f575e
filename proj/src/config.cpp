#include "racemode/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "racemode/error.hpp"

namespace racemode {

namespace {

using nlohmann::json;

// Each config struct is described once by a visit() overload; the writer and
// the reader below walk the same description.

template <class V>
void visit(V& v, RacelineParams& r) {
  v("v_max", r.v_max);
  v("ax_accel", r.ax_accel);
  v("ax_brake", r.ax_brake);
  v("ay", r.ay);
  v("p", r.p);
  v("budget", r.budget);
  v("lateral_use", r.lateral_use);
  v("apex_sigma", r.apex_sigma);
  v("entry_sigma", r.entry_sigma);
}

template <class V>
void visit(V& v, TrackParams& p) {
  v("straight", p.straight);
  v("radius", p.radius);
  v("width", p.width);
  v("edge_margin", p.edge_margin);
  v("spacing", p.spacing);
  v("kappa_blend", p.kappa_blend);
  v("mean_radius", p.mean_radius);
  v("harmonics", p.harmonics);
  v("amplitude", p.amplitude);
  v.group("raceline", p.raceline);
}

template <class V>
void visit(V& v, TrackSpec& t) {
  v("kind", t.kind);
  v("seed", t.seed);
  v("path", t.path);
  v.group("params", t.params);
}

template <class V>
void visit(V& v, ConstraintLimits& l) {
  v("kappa_max", l.kappa_max);
  v("v_max", l.v_max);
  v("ax_eng", l.ax_eng);
  v("ax_max", l.ax_max);
  v("ay_max", l.ay_max);
  v("p_exponent", l.p_exponent);
}

template <class V>
void visit(V& v, CostParams& c) {
  v("u_thresh", c.u_thresh);
  v("d_pr", c.d_pr);
  v("footprint_margin", c.footprint_margin);
}

template <class V>
void visit(V& v, Footprint& f) {
  v("length", f.length);
  v("width", f.width);
}

template <class V>
void visit(V& v, PlannerConfig& p) {
  v("horizon_T", p.horizon_T);
  v("replan_dt", p.replan_dt);
  v("traj_dt", p.traj_dt);
  v("n_lat_samples", p.n_lat_samples);
  v("n_speed_samples", p.n_speed_samples);
  v("lat_lo", p.lat_lo);
  v("lat_hi", p.lat_hi);
  v("speed_lo", p.speed_lo);
  v("speed_hi", p.speed_hi);
  v("prediction_decay", p.prediction_decay);
  v.group("limits", p.limits);
  v.group("cost", p.cost);
  v.group("footprint", p.footprint);
}

template <class V>
void visit(V& v, WeightSet& w) {
  v("w_rl", w.w_rl);
  v("w_v", w.w_v);
  v("w_a", w.w_a);
  v("w_pr", w.w_pr);
  v("w_c", w.w_c);
}

template <class V>
void visit(V& v, WeightLibrary& w) {
  v.group("NR", w[BehaviorMode::NR]);
  v.group("AG", w[BehaviorMode::AG]);
  v.group("CD", w[BehaviorMode::CD]);
}

template <class V>
void visit(V& v, InteractionZone& z) {
  v("long_ahead", z.long_ahead);
  v("long_behind", z.long_behind);
  v("lateral_halfwidth", z.lateral_halfwidth);
}

template <class V>
void visit(V& v, RewardConfig& r) {
  v("w_p", r.w_p);
  v("w_v", r.w_v);
  v("w_lat", r.w_lat);
  v("w_gap", r.w_gap);
  v("w_col", r.w_col);
  v("w_sparse", r.w_sparse);
  v("C", r.C);
  v("d_safe", r.d_safe);
  v("gap_sign", r.gap_sign);
  v.group("zone", r.zone);
}

template <class V>
void visit(V& v, ScenarioConfig& s) {
  v("opponent", s.opponent_kind);
  v("opp_accel_scale", s.opp_accel_scale);
  v("max_steps", s.max_steps);
  v("respawn_lead", s.respawn_lead);
  v("respawn_gap", s.respawn_gap);
  v("overtake_lead", s.overtake_lead);
  v("terminate_on_overtake", s.terminate_on_overtake);
}

template <class V>
void visit(V& v, ObservationConfig& o) {
  v("n_lookahead", o.geometry.n_lookahead);
  v("spacing", o.geometry.spacing);
  v("detection_range", o.detection_range);
  v("n_scale", o.n_scale);
  v("mu_scale", o.mu_scale);
  v("v_scale", o.v_scale);
  v("kappa_scale", o.kappa_scale);
  v("track_kappa_scale", o.track_kappa_scale);
  v("accel_scale", o.accel_scale);
  v("rel_v_scale", o.rel_v_scale);
}

template <class V>
void visit(V& v, NetworkConfig& n) {
  v("ego_hidden", n.ego_hidden);
  v("opp_hidden", n.opp_hidden);
  v("conv1_channels", n.conv1_channels);
  v("conv1_kernel", n.conv1_kernel);
  v("conv2_channels", n.conv2_channels);
  v("conv2_kernel", n.conv2_kernel);
  v("track_hidden", n.track_hidden);
  v("head_hidden", n.head_hidden);
  v("policy_init_scale", n.policy_init_scale);
}

template <class V>
void visit(V& v, PPOConfig& p) {
  v("gamma", p.gamma);
  v("reward_scale", p.reward_scale);
  v("lambda", p.lambda_gae);
  v("clip_eps", p.clip_eps);
  v("c1", p.c1);
  v("c2", p.c2);
  v("epochs", p.epochs);
  v("minibatch", p.minibatch);
  v("lr", p.lr);
  v("n_envs", p.n_envs);
  v("rollout_len", p.rollout_len);
  v("total_steps", p.total_steps);
  v("opponent_mix", p.opponent_mix);
  v("normalize_advantages", p.normalize_advantages);
  v("max_grad_norm", p.max_grad_norm);
  v("gap_lo", p.gap_lo);
  v("gap_hi", p.gap_hi);
  v("episode_steps", p.episode_steps);
  v("checkpoint_every", p.checkpoint_every);
}

template <class V>
void visit(V& v, BatchSpec& b) {
  v("episodes", b.episodes);
  v("first_seed", b.first_seed);
  v("gap_lo", b.gap_lo);
  v("gap_hi", b.gap_hi);
}

template <class V>
void visit(V& v, TrainSpec& t) {
  v("eval_every", t.eval_every);
  v("eval_episodes", t.eval_episodes);
}

template <class V>
void visit(V& v, TimingSpec& t) {
  v("cycles", t.cycles);
}

template <class V>
void visit(V& v, RunConfig& c) {
  v("seed", c.seed);
  v("out", c.out);
  v.group("track", c.track);
  v.group("unseen_track", c.unseen_track);
  v.group("planner", c.planner);
  v.group("weights", c.weights);
  v.group("reward", c.reward);
  v.group("scenario", c.scenario);
  v.group("observation", c.observation);
  v.group("network", c.network);
  v.group("ppo", c.ppo);
  v.group("batch", c.batch);
  v.group("train", c.train);
  v.group("timing", c.timing);
}

json encode(double x) { return x; }
json encode(int x) { return x; }
json encode(long x) { return x; }
json encode(bool x) { return x; }
json encode(std::uint64_t x) { return x; }
json encode(const std::string& x) { return x; }
json encode(TrackKind k) { return to_string(k); }
json encode(OpponentKind k) { return to_string(k); }

[[noreturn]] void bad_type(const std::string& key, const char* expected) {
  throw ConfigError("config key " + key + " must be " + expected);
}

void decode(const json& j, const std::string& key, double& x) {
  if (!j.is_number()) bad_type(key, "a number");
  x = j.get<double>();
}

template <class I>
void decode_integer(const json& j, const std::string& key, I& x) {
  if (!j.is_number_integer()) bad_type(key, "an integer");
  if constexpr (std::is_unsigned_v<I>) {
    if (!j.is_number_unsigned()) bad_type(key, "a nonnegative integer");
  }
  x = j.get<I>();
}

void decode(const json& j, const std::string& key, int& x) { decode_integer(j, key, x); }
void decode(const json& j, const std::string& key, long& x) { decode_integer(j, key, x); }
void decode(const json& j, const std::string& key, std::uint64_t& x) { decode_integer(j, key, x); }

void decode(const json& j, const std::string& key, bool& x) {
  if (!j.is_boolean()) bad_type(key, "true or false");
  x = j.get<bool>();
}

void decode(const json& j, const std::string& key, std::string& x) {
  if (!j.is_string()) bad_type(key, "a string");
  x = j.get<std::string>();
}

void decode(const json& j, const std::string& key, TrackKind& x) {
  if (!j.is_string()) bad_type(key, "a track kind");
  const auto k = track_kind_from_string(j.get<std::string>());
  if (!k) throw ConfigError("config key " + key + ": unknown track kind '" + j.get<std::string>() + "'");
  x = *k;
}

void decode(const json& j, const std::string& key, OpponentKind& x) {
  if (!j.is_string()) bad_type(key, "an opponent kind");
  const auto k = opponent_kind_from_string(j.get<std::string>());
  if (!k) throw ConfigError("config key " + key + ": unknown opponent kind '" + j.get<std::string>() + "'");
  x = *k;
}

struct Writer {
  json& out;

  template <class T>
  void operator()(const char* key, T& value) {
    out[key] = encode(value);
  }
  template <class S>
  void group(const char* key, S& section) {
    json sub = json::object();
    Writer w{sub};
    visit(w, section);
    out[key] = std::move(sub);
  }
};

struct Reader {
  const json& in;
  std::string prefix;
  std::set<std::string> known;

  template <class T>
  void operator()(const char* key, T& value) {
    known.insert(key);
    if (const auto it = in.find(key); it != in.end()) decode(*it, prefix + key, value);
  }
  template <class S>
  void group(const char* key, S& section) {
    known.insert(key);
    const auto it = in.find(key);
    if (it == in.end()) return;
    if (!it->is_object()) throw ConfigError("config key " + prefix + key + " must be a section");
    read(*it, prefix + key + ".", section);
  }

  template <class S>
  static void read(const json& j, const std::string& prefix, S& section) {
    Reader r{j, prefix, {}};
    visit(r, section);
    for (const auto& item : j.items()) {
      if (!r.known.count(item.key())) throw ConfigError("unknown config key " + prefix + item.key());
    }
  }
};

json to_json(const RunConfig& config) {
  json j = json::object();
  RunConfig copy = config;
  Writer w{j};
  visit(w, copy);
  return j;
}

RunConfig from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  RunConfig config;
  Reader::read(j, "", config);
  config.validate();
  return config;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + " is not valid JSON: " + e.what());
  }
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;  // bare words are strings
  }
  json* node = &root;
  std::istringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (path[i].empty()) throw ConfigError("override key '" + key + "' has an empty component");
    json& next = (*node)[path[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("override key '" + key + "' descends into a value");
    node = &next;
  }
  (*node)[path.back()] = std::move(value);
}

}  // namespace

TrackDefinition TrackSpec::build() const {
  if (!path.empty()) return load_track(path);
  return synth_track(kind, params, seed);
}

std::vector<std::uint64_t> BatchSpec::seeds() const {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < episodes; ++i) out.push_back(first_seed + static_cast<std::uint64_t>(i));
  return out;
}

RunConfig::RunConfig() {
  track.params.straight = 250.0;
  track.params.radius = 45.0;
  track.params.width = 14.0;
  unseen_track.kind = TrackKind::random_loop;
  unseen_track.seed = 3;
  unseen_track.params.width = 14.0;
}

void RunConfig::validate() const {
  planner.validate();
  reward.validate();
  for (const auto& w : weights.sets) w.validate();
  scenario.validate();
  ppo.validate();
  if (batch.episodes < 0) throw ConfigError("batch.episodes must be >= 0");
  if (!(batch.gap_lo > 0.0 && batch.gap_lo <= batch.gap_hi)) throw ConfigError("need 0 < batch.gap_lo <= batch.gap_hi");
  if (train.eval_every < 0 || train.eval_episodes < 1) throw ConfigError("train.eval_every >= 0 and train.eval_episodes >= 1");
  if (timing.cycles < 1) throw ConfigError("timing.cycles must be positive");
  for (const TrackSpec* t : {&track, &unseen_track}) {
    if (!t->path.empty() && !std::filesystem::exists(t->path))
      throw ConfigError("track file " + t->path + " does not exist");
  }
  if (out.empty()) throw ConfigError("out must name a directory");
}

std::optional<std::string> env_key(const std::string& name) {
  const std::string prefix = kEnvPrefix;
  if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0) return std::nullopt;
  std::string rest = name.substr(prefix.size());
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    const auto next = rest.find("__", pos);
    parts.push_back(rest.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
    if (next == std::string::npos) break;
    pos = next + 2;
  }
  std::string key;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::string p = parts[i];
    // mode names stay upper case, everything else is snake case
    const bool mode = i == 1 && parts[0] == "WEIGHTS";
    if (!mode) std::transform(p.begin(), p.end(), p.begin(), [](unsigned char c) { return std::tolower(c); });
    key += (i ? "." : "") + p;
  }
  return key;
}

RunConfig load_config(const ConfigSources& sources) {
  json root = to_json(RunConfig{});
  if (sources.file) {
    std::ifstream in(*sources.file);
    if (!in) throw ConfigError("cannot read config file " + sources.file->string());
    std::ostringstream buf;
    buf << in.rdbuf();
    json file = parse_json(buf.str(), "config file " + sources.file->string());
    if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
    root.merge_patch(file);
  }
  for (const auto& [name, value] : sources.env) {
    if (const auto key = env_key(name)) apply_override(root, *key + "=" + value);
  }
  for (const auto& s : sources.sets) apply_override(root, s);
  return from_json(root);
}

RunConfig config_from_text(const std::string& json_text) { return from_json(parse_json(json_text, "configuration")); }

std::string config_to_text(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

std::shared_ptr<const SimSetup> make_setup(const RunConfig& config, const TrackDefinition& track) {
  return std::make_shared<SimSetup>(track, config.planner, config.weights, config.reward,
                                    config.scenario.opp_accel_scale);
}

EvaluationBatch evaluation_batch(const RunConfig& config, bool keep_logs) {
  EvaluationBatch batch;
  batch.base = config.scenario;
  batch.seeds = config.batch.seeds();
  batch.gap_lo = config.batch.gap_lo;
  batch.gap_hi = config.batch.gap_hi;
  batch.keep_logs = keep_logs;
  return batch;
}

}  // namespace racemode
