// racemode command-line entry point.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "racemode/bench.hpp"
#include "racemode/error.hpp"

extern char** environ;

namespace rm = racemode;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

rm::RunConfig load(const Common& c) {
  rm::ConfigSources src;
  if (!c.config.empty()) src.file = c.config;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry = *e;
    const auto eq = entry.find('=');
    if (eq != std::string::npos) src.env.emplace_back(entry.substr(0, eq), entry.substr(eq + 1));
  }
  src.sets = c.sets;
  if (c.seed) src.sets.push_back("seed=" + std::to_string(*c.seed));
  if (!c.out.empty()) src.sets.push_back("out=\"" + c.out + "\"");
  return rm::load_config(src);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw rm::Error("cannot write " + path.string());
  out << text;
}

fs::path prepare_out(const rm::RunConfig& cfg) {
  const fs::path out = cfg.out;
  fs::create_directories(out);
  write_text(out / "config.json", rm::config_to_text(cfg));
  return out;
}

// -- track ------------------------------------------------------------------------

struct TrackArgs {
  std::string kind;
  std::optional<double> straight, radius, width;
};

int cmd_track(const Common& common, const TrackArgs& args) {
  Common c = common;
  if (!args.kind.empty()) c.sets.push_back("track.kind=" + args.kind);
  if (args.straight) c.sets.push_back("track.params.straight=" + std::to_string(*args.straight));
  if (args.radius) c.sets.push_back("track.params.radius=" + std::to_string(*args.radius));
  if (args.width) c.sets.push_back("track.params.width=" + std::to_string(*args.width));
  if (c.seed) c.sets.push_back("track.seed=" + std::to_string(*c.seed));
  const rm::RunConfig cfg = load(c);
  std::optional<rm::TrackDefinition> built;
  try {
    built.emplace(cfg.track.build());
  } catch (const rm::InfeasibleGeometry& e) {
    throw rm::ConfigError(e.what());
  }
  const rm::TrackDefinition& track = *built;
  fs::path path = cfg.out;
  if (path.extension() != ".csv") path /= "track.csv";
  rm::save_track(track, path);
  rm::load_track(path);  // the written file must reload
  std::printf("%s: %s, %zu samples, lap %.2f m -> %s\n", rm::to_string(cfg.track.kind).c_str(),
              track.closed() ? "closed" : "open", track.size(), track.lap_length(), path.string().c_str());
  return kExitOk;
}

// -- lap --------------------------------------------------------------------------

int cmd_lap(const Common& common, const std::vector<std::string>& modes_in) {
  const rm::RunConfig cfg = load(common);
  const fs::path out = prepare_out(cfg);
  auto setup = rm::make_setup(cfg, cfg.track.build());
  std::vector<std::string> modes = modes_in;
  if (modes.empty()) modes = {"NR", "AG", "CD"};
  std::ostringstream csv;
  csv << "mode,completed,lap_time_s,outcome,steps\n";
  bool all_done = true;
  for (const auto& name : modes) {
    const auto mode = rm::mode_from_string(name);
    if (!mode) throw UsageError("unknown mode '" + name + "' (expected NR, AG or CD)");
    const rm::LapResult lap = rm::run_lap(setup, *mode);
    all_done = all_done && lap.completed;
    char time[32];
    std::snprintf(time, sizeof time, "%.3f", lap.lap_time_s);
    csv << name << ',' << (lap.completed ? 1 : 0) << ',' << (lap.completed ? time : "") << ','
        << rm::to_string(lap.outcome) << ',' << lap.steps << '\n';
    if (lap.completed)
      std::printf("%-3s lap %8.3f s  (%d steps)\n", name.c_str(), lap.lap_time_s, lap.steps);
    else
      std::printf("%-3s failed: %s after %d steps\n", name.c_str(), rm::to_string(lap.outcome).c_str(), lap.steps);
    write_text(out / "logs" / ("lap_" + name + ".jsonl"), rm::episode_log_jsonl(lap.episode));
  }
  write_text(out / "laps.csv", csv.str());
  return all_done ? kExitOk : kExitRuntime;
}

// -- race -------------------------------------------------------------------------

struct RaceArgs {
  std::vector<std::string> policies;
  std::string track = "default";
  bool no_logs = false;
};

int cmd_race(const Common& common, const RaceArgs& args) {
  const rm::RunConfig cfg = load(common);
  if (args.track != "default" && args.track != "unseen") throw UsageError("--track must be default or unseen");
  const rm::TrackDefinition track = args.track == "unseen" ? cfg.unseen_track.build() : cfg.track.build();
  const fs::path out = prepare_out(cfg);
  auto setup = rm::make_setup(cfg, track);
  const rm::EvaluationBatch batch = rm::evaluation_batch(cfg, !args.no_logs);
  if (batch.seeds.empty()) throw rm::EmptyInput("the scenario batch is empty (batch.episodes = 0)");

  std::vector<std::string> policies = args.policies;
  if (policies.empty()) policies = {"static:NR", "static:AG", "static:CD"};
  std::vector<rm::RaceRun> runs;
  std::ostringstream actions;
  actions << "config,NR,AG,CD\n";
  for (const auto& p : policies) {
    rm::RaceRun run;
    rm::WeightSelector policy;
    std::string spec = p;
    if (spec.rfind("static:", 0) == 0) spec = spec.substr(7);
    if (const auto mode = rm::mode_from_string(spec)) {
      run.name = spec;
      policy = [m = static_cast<int>(*mode)](const rm::RaceEnv&) { return m; };
    } else {
      std::string path = p.rfind("checkpoint:", 0) == 0 ? p.substr(11) : p;
      if (!fs::exists(path)) throw UsageError("policy '" + p + "' is neither a mode nor a checkpoint file");
      const rm::TrainingState ckpt = rm::load_checkpoint(path);
      rm::check_compatible(ckpt, cfg.observation, cfg.weights);
      run.name = "RL";
      policy = rm::greedy_policy(std::make_shared<rm::ActorCritic>(ckpt.model));
    }
    std::fprintf(stderr, "race %s: %zu episodes on the %s track\n", run.name.c_str(), batch.seeds.size(),
                 args.track.c_str());
    run.seeds = batch.seeds;
    run.report = rm::evaluate(setup, policy, batch);
    const auto& h = run.report.action_histogram;
    actions << run.name << ',' << h[0] << ',' << h[1] << ',' << h[2] << '\n';
    runs.push_back(std::move(run));
  }
  rm::write_race_bundle(out, track, runs);
  write_text(out / "actions.csv", actions.str());
  std::vector<rm::MetricsRow> rows;
  for (const auto& r : runs) rows.push_back({r.name, r.report.metrics});
  std::cout << rm::metrics_text(rows);
  return kExitOk;
}

// -- train ------------------------------------------------------------------------

struct TrainArgs {
  bool resume = false;
  int stop_after = -1;
};

int cmd_train(const Common& common, const TrainArgs& args) {
  const rm::RunConfig cfg = load(common);
  const fs::path out = prepare_out(cfg);
  const fs::path ckpt_path = out / "checkpoint.json";
  auto setup = rm::make_setup(cfg, cfg.track.build());

  std::optional<rm::TrainingState> loaded;
  if (args.resume && fs::exists(ckpt_path)) {
    loaded.emplace(rm::load_checkpoint(ckpt_path));
    rm::check_compatible(*loaded, cfg.observation, cfg.weights);
    if (loaded->seed != cfg.seed) throw UsageError("checkpoint was trained with a different seed");
    loaded->ppo.total_steps = cfg.ppo.total_steps;
    std::fprintf(stderr, "resuming at update %d (%ld steps)\n", loaded->update, loaded->steps);
  }
  rm::TrainingState state =
      loaded ? std::move(*loaded) : rm::make_training_state(cfg.observation, cfg.network, cfg.ppo, cfg.seed);

  const int total = state.ppo.updates();
  rm::TrainHooks hooks;
  hooks.stop_after_update = args.stop_after;
  hooks.on_update = [&](const rm::TrainingState& s) {
    const auto& r = s.curve.back();
    std::fprintf(stderr, "update %4d/%d  steps %8ld  return %9.1f  entropy %.3f  value loss %.4f\n", r.update, total,
                 r.steps, r.mean_reward, r.entropy, r.value_loss);
    if (cfg.train.eval_every > 0 && s.update % cfg.train.eval_every == 0) {
      rm::EvaluationBatch batch = rm::evaluation_batch(cfg);
      batch.seeds.resize(std::min<std::size_t>(batch.seeds.size(), cfg.train.eval_episodes));
      if (!batch.seeds.empty()) {
        const auto report = rm::evaluate(setup, rm::greedy_policy(std::make_shared<rm::ActorCritic>(s.model)), batch);
        char name[32];
        std::snprintf(name, sizeof name, "update_%05d.csv", s.update);
        write_text(out / "eval" / name, rm::metrics_csv({{"RL", report.metrics}}));
      }
    }
  };
  hooks.on_checkpoint = [&](const rm::TrainingState& s) {
    rm::save_checkpoint(s, ckpt_path);
    write_text(out / "curve.csv", rm::format_curve_csv(s.curve));
  };
  rm::train(state, [&](int) { return std::make_unique<rm::RaceTrainingEnv>(setup, cfg.observation, state.ppo, cfg.scenario); },
            hooks);
  rm::save_checkpoint(state, ckpt_path);
  write_text(out / "curve.csv", rm::format_curve_csv(state.curve));
  std::printf("trained %d updates (%ld steps) -> %s\n", state.update, state.steps, ckpt_path.string().c_str());
  return kExitOk;
}

// -- report -----------------------------------------------------------------------

int cmd_report(const Common& common, const std::string& bundle, int max_episodes) {
  const fs::path out = common.out.empty() ? fs::path(bundle) / "report" : fs::path(common.out);
  const rm::ReportSummary summary = rm::write_report(bundle, out, max_episodes);
  std::printf("%d episodes plotted, %zu files in %s\n", summary.episodes_plotted, summary.files.size(),
              out.string().c_str());
  if (fs::exists(out / "metrics.txt")) {
    std::ifstream in(out / "metrics.txt");
    std::cout << in.rdbuf();
  }
  return kExitOk;
}

// -- timing -----------------------------------------------------------------------

int cmd_timing(const Common& common, const std::string& checkpoint, std::optional<int> cycles) {
  rm::RunConfig cfg = load(common);
  if (cycles) cfg.timing.cycles = *cycles;
  if (cfg.timing.cycles < rm::kMinTimingCycles)
    throw UsageError("timing needs at least " + std::to_string(rm::kMinTimingCycles) + " cycles");
  const fs::path out = prepare_out(cfg);
  auto setup = rm::make_setup(cfg, cfg.track.build());
  std::optional<rm::ActorCritic> model;
  if (!checkpoint.empty()) {
    const rm::TrainingState ckpt = rm::load_checkpoint(checkpoint);
    rm::check_compatible(ckpt, cfg.observation, cfg.weights);
    model.emplace(ckpt.model);
  } else {
    model.emplace(cfg.observation, cfg.network);
    model->initialize(cfg.seed);
  }
  const rm::TimingStats t = rm::measure_timing(setup, *model, cfg.scenario, cfg.timing.cycles, cfg.seed);
  write_text(out / "timing.json", rm::timing_json(t));
  write_text(out / "timing.txt", rm::timing_text(t));
  std::cout << rm::timing_text(t);
  return kExitOk;
}

void add_common(CLI::App& app, Common& c) {
  app.add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", c.seed, "run seed");
  app.add_option("--out", c.out, "output directory");
  app.add_option("--set", c.sets, "override a config key, e.g. planner.cost.d_pr=8")->take_all();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sampling-based racing planner with learned behaviour selection"};
  app.require_subcommand(1);
  Common common;

  TrackArgs track_args;
  auto* track = app.add_subcommand("track", "synthesise a track and write it as CSV");
  add_common(*track, common);
  track->add_option("kind", track_args.kind, "oval, chicane or random_loop");
  track->add_option("--straight", track_args.straight, "straight length [m]");
  track->add_option("--radius", track_args.radius, "corner radius [m]");
  track->add_option("--width", track_args.width, "track width [m]");

  std::vector<std::string> lap_modes;
  auto* lap = app.add_subcommand("lap", "single-vehicle lap time per weight set");
  add_common(*lap, common);
  lap->add_option("--mode", lap_modes, "NR, AG or CD (repeatable, default all)");

  RaceArgs race_args;
  auto* race = app.add_subcommand("race", "run the scenario batch against an opponent");
  add_common(*race, common);
  race->add_option("--policy", race_args.policies, "static:NR|static:AG|static:CD or a checkpoint path (repeatable)");
  race->add_option("--track", race_args.track, "default or unseen");
  race->add_flag("--no-logs", race_args.no_logs, "skip per-episode logs");

  TrainArgs train_args;
  auto* trainc = app.add_subcommand("train", "train the behaviour selector with PPO");
  add_common(*trainc, common);
  trainc->add_flag("--resume", train_args.resume, "continue from <out>/checkpoint.json");
  trainc->add_option("--stop-after", train_args.stop_after, "stop once this many updates are done");

  std::string bundle;
  int max_episodes = 6;
  auto* report = app.add_subcommand("report", "plot a race bundle");
  add_common(*report, common);
  report->add_option("bundle", bundle, "directory written by race")->required();
  report->add_option("--episodes", max_episodes, "episodes to plot");

  std::string checkpoint;
  std::optional<int> cycles;
  auto* timing = app.add_subcommand("timing", "planner and inference wall-clock timing");
  add_common(*timing, common);
  timing->add_option("--checkpoint", checkpoint, "trained checkpoint (default: fresh network)");
  timing->add_option("--cycles", cycles, "measured cycles (>= 100)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (track->parsed()) return cmd_track(common, track_args);
    if (lap->parsed()) return cmd_lap(common, lap_modes);
    if (race->parsed()) return cmd_race(common, race_args);
    if (trainc->parsed()) return cmd_train(common, train_args);
    if (report->parsed()) return cmd_report(common, bundle, max_episodes);
    if (timing->parsed()) return cmd_timing(common, checkpoint, cycles);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const rm::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const rm::InvariantViolation& e) {
    std::fprintf(stderr, "invalid track: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
