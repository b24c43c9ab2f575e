#include "racemode/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "racemode/error.hpp"

namespace racemode {

namespace {

std::string fixed(double x, int digits = 6) {
  if (!std::isfinite(x)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string safe_name(std::string name) {
  for (char& c : name) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return name;
}

}  // namespace

// -- metrics tables --------------------------------------------------------------

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out << "config,episodes,collision_pct,failure_pct,mean_overtake_time_s,overtakes_per_lap,overtakes,laps\n";
  for (const auto& r : rows) {
    const MetricsTable& m = r.metrics;
    out << r.name << ',' << m.episodes << ',' << fixed(m.collision_pct, 3) << ',' << fixed(m.failure_pct, 3) << ','
        << fixed(m.mean_overtake_time_s, 4) << ',' << fixed(m.overtakes_per_lap, 4) << ',' << m.overtakes << ','
        << fixed(m.laps, 4) << '\n';
  }
  return out.str();
}

std::string metrics_text(const std::vector<MetricsRow>& rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s %8s %11s %14s %13s %9s\n", static_cast<int>(width), "config", "episodes",
                "collision %", "overtake time", "overtakes/lap", "failure %");
  out << line;
  for (const auto& r : rows) {
    const MetricsTable& m = r.metrics;
    std::snprintf(line, sizeof line, "%-*s %8d %11.1f %14s %13.2f %9.1f\n", static_cast<int>(width), r.name.c_str(),
                  m.episodes, m.collision_pct,
                  std::isfinite(m.mean_overtake_time_s) ? (fixed(m.mean_overtake_time_s, 2) + " s").c_str() : "-",
                  m.overtakes_per_lap, m.failure_pct);
    out << line;
  }
  return out.str();
}

// -- laps ------------------------------------------------------------------------

LapResult run_lap(std::shared_ptr<const SimSetup> setup, BehaviorMode mode, int max_steps) {
  ScenarioConfig scenario;
  scenario.opponent_kind = OpponentKind::none;
  scenario.opp_accel_scale = setup->opp_accel_scale;
  scenario.max_steps = max_steps;
  RaceEnv env(setup, scenario, true);
  const double L = setup->track.lap_length();
  const double dt = setup->planner.replan_dt;
  LapResult lap;
  lap.mode = mode;
  while (!env.done()) {
    const double s_prev = env.ego().s;
    const StepInfo info = env.step(static_cast<int>(mode));
    const double s_now = env.ego().s;
    if (info.outcome != Outcome::running && info.outcome != Outcome::timeout) {
      lap.outcome = info.outcome;
      break;
    }
    if (s_now >= L) {
      lap.completed = true;
      lap.outcome = Outcome::success;
      lap.lap_time_s = (env.steps() - 1) * dt + dt * (L - s_prev) / (s_now - s_prev);
      break;
    }
    lap.outcome = info.outcome;
  }
  lap.steps = env.steps();
  lap.episode = env.result();
  return lap;
}

// -- race bundles ------------------------------------------------------------------

void write_race_bundle(const std::filesystem::path& dir, const TrackDefinition& track,
                       const std::vector<RaceRun>& runs) {
  std::filesystem::create_directories(dir);
  save_track(track, dir / "track.csv");
  std::vector<MetricsRow> rows;
  std::ostringstream episodes;
  episodes << "config,seed,outcome,steps,overtakes,overtake_times_s,laps,final_lead,n_NR,n_AG,n_CD\n";
  for (const auto& run : runs) {
    rows.push_back({run.name, run.report.metrics});
    for (std::size_t i = 0; i < run.report.episodes.size(); ++i) {
      const EpisodeResult& e = run.report.episodes[i];
      const std::uint64_t seed = run.seeds.at(i);
      std::array<int, kModeCount> count{};
      for (int a : e.actions) ++count[static_cast<std::size_t>(a)];
      std::string times;
      for (double t : e.overtake_times) times += (times.empty() ? "" : ";") + fixed(t, 2);
      episodes << run.name << ',' << seed << ',' << to_string(e.outcome) << ',' << e.steps << ','
               << e.overtakes_completed << ',' << times << ',' << fixed(e.laps, 4) << ',' << fixed(e.final_lead, 3)
               << ',' << count[0] << ',' << count[1] << ',' << count[2] << '\n';
      if (!e.log.empty())
        write_file(dir / "logs" / safe_name(run.name) / ("seed_" + std::to_string(seed) + ".jsonl"),
                   episode_log_jsonl(e));
    }
  }
  write_file(dir / "metrics.csv", metrics_csv(rows));
  write_file(dir / "metrics.txt", metrics_text(rows));
  write_file(dir / "episodes.csv", episodes.str());
}

// -- reports -----------------------------------------------------------------------

namespace {

struct LogLine {
  double s = 0.0;
  double n = 0.0;
  double v = 0.0;
  double x = 0.0;
  double y = 0.0;
  double opp_s = NAN;
  double opp_x = NAN;
  double opp_y = NAN;
  int opp_id = -1;
  int mode = 0;
};

double number_or_nan(const nlohmann::json& j) { return j.is_number() ? j.get<double>() : NAN; }

std::vector<LogLine> read_log(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<LogLine> lines;
  std::string text;
  while (std::getline(in, text)) {
    if (text.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
    LogLine l;
    const auto& ego = j.at("ego");
    l.s = number_or_nan(ego.at("s"));
    l.n = number_or_nan(ego.at("n"));
    l.v = number_or_nan(ego.at("v"));
    l.x = number_or_nan(ego.at("x"));
    l.y = number_or_nan(ego.at("y"));
    if (const auto opp = j.find("opp"); opp != j.end()) {
      l.opp_s = number_or_nan(opp->at("s"));
      l.opp_x = number_or_nan(opp->at("x"));
      l.opp_y = number_or_nan(opp->at("y"));
      l.opp_id = opp->at("id").get<int>();
    }
    l.mode = static_cast<int>(mode_from_string(j.at("action").get<std::string>()).value_or(BehaviorMode::NR));
    lines.push_back(l);
  }
  return lines;
}

struct Range {
  double lo = INFINITY;
  double hi = -INFINITY;
  void add(double x) {
    if (std::isfinite(x)) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  void pad() {
    if (!(hi > lo)) {
      lo = std::isfinite(lo) ? lo - 1.0 : 0.0;
      hi = std::isfinite(hi) ? hi + 1.0 : 1.0;
    }
  }
};

class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {}

  void text(double x, double y, const std::string& s, int size = 11, const char* anchor = "start") {
    body_ << "<text x=\"" << fixed(x, 1) << "\" y=\"" << fixed(y, 1) << "\" font-size=\"" << size
          << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
  }
  void rect(double x, double y, double w, double h) {
    body_ << "<rect x=\"" << fixed(x, 1) << "\" y=\"" << fixed(y, 1) << "\" width=\"" << fixed(w, 1)
          << "\" height=\"" << fixed(h, 1) << "\" fill=\"none\" stroke=\"#888\"/>\n";
  }
  void line(double x0, double y0, double x1, double y1, const char* colour, const char* dash = nullptr) {
    body_ << "<line x1=\"" << fixed(x0, 1) << "\" y1=\"" << fixed(y0, 1) << "\" x2=\"" << fixed(x1, 1) << "\" y2=\""
          << fixed(y1, 1) << "\" stroke=\"" << colour << "\"" << (dash ? " stroke-dasharray=\"4 3\"" : "") << "/>\n";
  }
  // Breaks the polyline wherever a coordinate is not finite.
  void polyline(const std::vector<std::pair<double, double>>& pts, const char* colour, double width = 1.5) {
    std::string run;
    auto flush = [&] {
      if (!run.empty())
        body_ << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"" << width << "\" points=\""
              << run << "\"/>\n";
      run.clear();
    };
    for (const auto& [x, y] : pts) {
      if (!std::isfinite(x) || !std::isfinite(y)) {
        flush();
        continue;
      }
      run += fixed(x, 1) + "," + fixed(y, 1) + " ";
    }
    flush();
  }
  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_ << "\" viewBox=\"0 0 "
        << w_ << ' ' << h_ << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
    return out.str();
  }

 private:
  double w_;
  double h_;
  std::ostringstream body_;
};

struct Frame {
  double x0, y0, w, h;
  Range xr, yr;
  double px(double x) const { return x0 + (x - xr.lo) / (xr.hi - xr.lo) * w; }
  double py(double y) const { return y0 + h - (y - yr.lo) / (yr.hi - yr.lo) * h; }
};

void axes(Svg& svg, const Frame& f, const std::string& title) {
  svg.rect(f.x0, f.y0, f.w, f.h);
  svg.text(f.x0, f.y0 - 4, title, 12);
  svg.text(f.x0 - 4, f.y0 + 10, fixed(f.yr.hi, 1), 9, "end");
  svg.text(f.x0 - 4, f.y0 + f.h, fixed(f.yr.lo, 1), 9, "end");
  svg.text(f.x0, f.y0 + f.h + 12, fixed(f.xr.lo, 0), 9);
  svg.text(f.x0 + f.w, f.y0 + f.h + 12, fixed(f.xr.hi, 0) + " m", 9, "end");
  if (f.yr.lo < 0.0 && f.yr.hi > 0.0) svg.line(f.x0, f.py(0.0), f.x0 + f.w, f.py(0.0), "#bbb", "dash");
}

std::string path_overlay(const TrackDefinition& track, const std::vector<LogLine>& log) {
  Range xr, yr;
  std::vector<std::pair<double, double>> left, right, ego, opp;
  for (const auto& smp : track.samples()) {
    const auto l = frenet_to_cartesian(track, smp.s, smp.n_max);
    const auto r = frenet_to_cartesian(track, smp.s, smp.n_min);
    left.emplace_back(l.x, l.y);
    right.emplace_back(r.x, r.y);
    xr.add(l.x), xr.add(r.x), yr.add(l.y), yr.add(r.y);
  }
  if (track.closed() && !left.empty()) {
    left.push_back(left.front());
    right.push_back(right.front());
  }
  const double size = 640.0;
  const double span = std::max(xr.hi - xr.lo, yr.hi - yr.lo);
  Frame f{20, 30, size, size, {xr.lo, xr.lo + span}, {yr.lo, yr.lo + span}};
  auto map = [&](std::vector<std::pair<double, double>>& pts) {
    for (auto& [x, y] : pts) x = f.px(x), y = f.py(y);
  };
  int last_id = -2;
  for (const auto& l : log) {
    ego.emplace_back(l.x, l.y);
    if (l.opp_id != last_id) opp.emplace_back(NAN, NAN);
    last_id = l.opp_id;
    opp.emplace_back(l.opp_x, l.opp_y);
  }
  map(left), map(right), map(ego), map(opp);
  Svg svg(size + 40, size + 60);
  svg.text(20, 18, "driven paths: ego (blue), opponent (red)", 12);
  svg.polyline(left, "#999", 1.0);
  svg.polyline(right, "#999", 1.0);
  svg.polyline(opp, "#d62728");
  svg.polyline(ego, "#1f77b4");
  return svg.str();
}

std::string panels(const std::vector<LogLine>& log, double lap_length) {
  const double w = 720.0;
  const double h = 130.0;
  const double gap = 45.0;
  Range xr;
  for (const auto& l : log) xr.add(l.s);
  xr.pad();
  Svg svg(w + 90, 4 * (h + gap) + 20);

  auto frame = [&](int i, Range yr) {
    yr.pad();
    return Frame{70, 30 + i * (h + gap), w, h, xr, yr};
  };
  auto series = [&](const Frame& f, auto value) {
    std::vector<std::pair<double, double>> pts;
    int last_id = -2;
    for (const auto& l : log) {
      const double v = value(l);
      if (l.opp_id != last_id) pts.emplace_back(NAN, NAN);
      last_id = l.opp_id;
      pts.emplace_back(f.px(l.s), std::isfinite(v) ? f.py(v) : NAN);
    }
    return pts;
  };
  auto lead = [&](const LogLine& l) {
    const double d = l.s - l.opp_s;
    return std::isfinite(d) ? std::remainder(d, lap_length) : NAN;
  };

  Range rn, rg, rv;
  for (const auto& l : log) rn.add(l.n), rg.add(lead(l)), rv.add(l.v);
  rn.add(0.0), rg.add(0.0);
  const Frame fn = frame(0, rn);
  axes(svg, fn, "lateral position n [m]");
  svg.polyline(series(fn, [](const LogLine& l) { return l.n; }), "#1f77b4");
  const Frame fg = frame(1, rg);
  axes(svg, fg, "longitudinal gap s_ego - s_opp [m]");
  svg.polyline(series(fg, lead), "#2ca02c");
  const Frame fv = frame(2, rv);
  axes(svg, fv, "velocity [m/s]");
  svg.polyline(series(fv, [](const LogLine& l) { return l.v; }), "#ff7f0e");
  const Frame fm = frame(3, Range{-0.5, 2.5});
  axes(svg, fm, "selected mode (0 NR, 1 AG, 2 CD)");
  std::vector<std::pair<double, double>> steps;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const double y = fm.py(log[i].mode);
    if (i > 0) steps.emplace_back(fm.px(log[i].s), fm.py(log[i - 1].mode));
    steps.emplace_back(fm.px(log[i].s), y);
  }
  svg.polyline(steps, "#9467bd");
  return svg.str();
}

}  // namespace

std::vector<GapTrace> read_gap_traces(const std::filesystem::path& jsonl) {
  std::vector<GapTrace> traces;
  for (const auto& l : read_log(jsonl)) {
    if (!std::isfinite(l.opp_s)) continue;
    if (traces.empty() || traces.back().opp_id != l.opp_id) traces.push_back({l.opp_id, {}, {}});
    traces.back().s.push_back(l.s);
    traces.back().gap.push_back(l.s - l.opp_s);
  }
  return traces;
}

int zero_crossings(const std::vector<double>& gap) {
  int count = 0;
  int sign = 0;
  for (double g : gap) {
    const int now = g > 0.0 ? 1 : (g < 0.0 ? -1 : 0);
    if (now == 0) continue;
    if (sign != 0 && now != sign) ++count;
    sign = now;
  }
  return count;
}

ReportSummary write_report(const std::filesystem::path& bundle, const std::filesystem::path& out, int max_episodes) {
  const auto logs_dir = bundle / "logs";
  std::vector<std::filesystem::path> logs;
  if (std::filesystem::is_directory(logs_dir)) {
    for (const auto& entry : std::filesystem::recursive_directory_iterator(logs_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".jsonl") logs.push_back(entry.path());
    }
  }
  if (logs.empty()) throw MissingLogs("no episode logs under " + logs_dir.string());
  std::sort(logs.begin(), logs.end());
  if (!std::filesystem::exists(bundle / "track.csv")) throw MissingLogs("bundle has no track.csv");
  const TrackDefinition track = load_track(bundle / "track.csv");

  // Episodes with an overtake first, then the rest, each in path order.
  std::vector<std::pair<std::filesystem::path, std::vector<LogLine>>> chosen;
  std::vector<std::pair<std::filesystem::path, std::vector<LogLine>>> others;
  for (const auto& path : logs) {
    auto log = read_log(path);
    if (log.empty()) continue;
    bool overtake = false;
    for (const auto& trace : read_gap_traces(path)) overtake = overtake || zero_crossings(trace.gap) > 0;
    (overtake ? chosen : others).emplace_back(path, std::move(log));
  }
  if (chosen.empty() && others.empty()) throw MissingLogs("episode logs under " + logs_dir.string() + " are empty");
  for (auto& o : others) chosen.push_back(std::move(o));
  if (static_cast<int>(chosen.size()) > max_episodes) chosen.resize(static_cast<std::size_t>(max_episodes));

  ReportSummary summary;
  std::filesystem::create_directories(out);
  for (const auto& [path, log] : chosen) {
    const std::string stem = path.parent_path().filename().string() + "_" + path.stem().string();
    const auto overlay = out / (stem + "_paths.svg");
    const auto panel = out / (stem + "_panels.svg");
    write_file(overlay, path_overlay(track, log));
    write_file(panel, panels(log, track.lap_length()));
    summary.files.push_back(overlay);
    summary.files.push_back(panel);
    ++summary.episodes_plotted;
  }
  for (const char* name : {"metrics.csv", "metrics.txt", "episodes.csv"}) {
    if (std::filesystem::exists(bundle / name) &&
        !std::filesystem::equivalent(bundle, out)) {
      std::filesystem::copy_file(bundle / name, out / name, std::filesystem::copy_options::overwrite_existing);
      summary.files.push_back(out / name);
    }
  }
  return summary;
}

// -- timing ------------------------------------------------------------------------

namespace {

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  const double f = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] * (1.0 - f) + v[i + 1] * f : v[i];
}

}  // namespace

TimingStats measure_timing(std::shared_ptr<const SimSetup> setup, const ActorCritic& model,
                           const ScenarioConfig& scenario, int cycles, std::uint64_t seed) {
  if (cycles < kMinTimingCycles)
    throw ConfigError("timing needs at least " + std::to_string(kMinTimingCycles) + " cycles");
  using clock = std::chrono::steady_clock;
  constexpr int kWarmup = 10;
  const double L = setup->track.lap_length();
  std::uint64_t episode = 0;
  RaceEnv env(setup, randomized_scenario(scenario, L, derive_seed(seed, episode++)));
  std::vector<double> planner_ms;
  std::vector<double> inference_ms;
  for (int k = 0; k < cycles + kWarmup; ++k) {
    if (env.done()) env.reset(randomized_scenario(scenario, L, derive_seed(seed, episode++)));

    const auto t0 = clock::now();
    const Vector obs = build_observation(env, model.observation());
    const int action = softmax_categorical(model.forward(obs).logits.col(0)).argmax();
    const auto t1 = clock::now();
    std::optional<OpponentPrediction> pred;
    if (env.has_opponent())
      pred = predict_opponent({env.opp().s, env.opp().n, env.opp().mu, env.opp().v, env.opp().a_long},
                              setup->opp_track, setup->planner, env.opp().footprint);
    try {
      plan(env.ego().next_start, setup->track, setup->weights[static_cast<BehaviorMode>(action)],
           pred ? &*pred : nullptr, setup->planner);
    } catch (const NoFeasibleTrajectory&) {
    }
    const auto t2 = clock::now();
    if (k >= kWarmup) {
      inference_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      planner_ms.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
    }
    env.step(action);
  }
  TimingStats t;
  t.cycles = cycles;
  t.planner_mean_ms = std::accumulate(planner_ms.begin(), planner_ms.end(), 0.0) / cycles;
  t.planner_p50_ms = percentile(planner_ms, 0.5);
  t.planner_p90_ms = percentile(planner_ms, 0.9);
  t.planner_p99_ms = percentile(planner_ms, 0.99);
  t.inference_mean_ms = std::accumulate(inference_ms.begin(), inference_ms.end(), 0.0) / cycles;
  t.inference_min_ms = *std::min_element(inference_ms.begin(), inference_ms.end());
  t.ratio = t.inference_mean_ms / t.planner_mean_ms;
  return t;
}

std::string timing_text(const TimingStats& t) {
  std::ostringstream out;
  out << "cycles               " << t.cycles << '\n'
      << "planner mean         " << fixed(t.planner_mean_ms, 4) << " ms\n"
      << "planner p50/p90/p99  " << fixed(t.planner_p50_ms, 4) << " / " << fixed(t.planner_p90_ms, 4) << " / "
      << fixed(t.planner_p99_ms, 4) << " ms\n"
      << "inference mean       " << fixed(t.inference_mean_ms, 4) << " ms\n"
      << "inference min        " << fixed(t.inference_min_ms, 4) << " ms\n"
      << "overhead ratio       " << fixed(100.0 * t.ratio, 2) << " %\n";
  return out.str();
}

std::string timing_json(const TimingStats& t) {
  nlohmann::json j = {{"cycles", t.cycles},
                      {"planner_mean_ms", t.planner_mean_ms},
                      {"planner_p50_ms", t.planner_p50_ms},
                      {"planner_p90_ms", t.planner_p90_ms},
                      {"planner_p99_ms", t.planner_p99_ms},
                      {"inference_mean_ms", t.inference_mean_ms},
                      {"inference_min_ms", t.inference_min_ms},
                      {"ratio", t.ratio}};
  return j.dump(2) + "\n";
}

}  // namespace racemode
