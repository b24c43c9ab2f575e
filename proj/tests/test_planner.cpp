#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "doctest.h"
#include "racemode/error.hpp"
#include "racemode/planner.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace racemode;
using testing_support::circle_track;
using testing_support::naive_first_violation;
using testing_support::straight_track;

namespace {

using Vec2 = Eigen::Vector2d;

std::array<Vec2, 4> rect(double x, double y, double psi, double length, double width) {
  const Vec2 c(x, y);
  const Vec2 u(std::cos(psi), std::sin(psi));
  const Vec2 v(-std::sin(psi), std::cos(psi));
  const double hl = 0.5 * length;
  const double hw = 0.5 * width;
  return {c + hl * u + hw * v, c - hl * u + hw * v, c - hl * u - hw * v, c + hl * u - hw * v};
}

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

bool segments_touch(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const double d1 = cross(q2 - q1, p1 - q1);
  const double d2 = cross(q2 - q1, p2 - q1);
  const double d3 = cross(p2 - p1, q1 - p1);
  const double d4 = cross(p2 - p1, q2 - p1);
  return d1 * d2 <= 0.0 && d3 * d4 <= 0.0;
}

bool inside(const Vec2& p, const std::array<Vec2, 4>& poly) {
  for (int i = 0; i < 4; ++i)
    if (cross(poly[(i + 1) % 4] - poly[i], p - poly[i]) < 0.0) return false;
  return true;
}

// Polygon overlap by edge intersection and containment.
bool polygons_overlap(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b) {
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (segments_touch(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4])) return true;
  return inside(a[0], b) || inside(b[0], a);
}

struct Terms {
  double c_rl = 0, c_v = 0, c_a = 0, c_pr = 0, c_c = 0;
};

Terms integrate_terms(const CandidateTrajectory& c, const OpponentPrediction* opp, const PlannerConfig& cfg) {
  const auto& lim = cfg.limits;
  std::vector<std::array<double, 5>> f;
  for (std::size_t k = 0; k < c.points.size(); ++k) {
    const TrajPoint& p = c.points[k];
    std::array<double, 5> v{};
    v[0] = (p.n - p.n_raceline) * (p.n - p.n_raceline);
    v[1] = (p.v - p.v_raceline) * (p.v - p.v_raceline);
    const double u = std::pow(std::abs(p.a_long) / lim.ax_max, lim.p_exponent) +
                     std::pow(std::abs(p.a_lat) / lim.ay_max, lim.p_exponent);
    v[2] = u > cfg.cost.u_thresh ? (u - cfg.cost.u_thresh) * (u - cfg.cost.u_thresh) : 0.0;
    if (opp) {
      const auto& o = opp->poses[k];
      const double d = std::sqrt((p.x - o.x) * (p.x - o.x) + (p.y - o.y) * (p.y - o.y));
      v[3] = d < cfg.cost.d_pr ? (cfg.cost.d_pr - d) * (cfg.cost.d_pr - d) : 0.0;
      const double m = cfg.cost.footprint_margin;
      const auto a = rect(p.x, p.y, p.psi, cfg.footprint.length + m, cfg.footprint.width + m);
      const auto b = rect(o.x, o.y, o.psi, opp->footprint.length + m, opp->footprint.width + m);
      v[4] = polygons_overlap(a, b) ? 1.0 : 0.0;
    }
    f.push_back(v);
  }
  Terms t;
  double* out[5] = {&t.c_rl, &t.c_v, &t.c_a, &t.c_pr, &t.c_c};
  for (std::size_t k = 1; k < f.size(); ++k) {
    const double dt = c.points[k].t - c.points[k - 1].t;
    for (int j = 0; j < 5; ++j) *out[j] += 0.5 * dt * (f[k - 1][j] + f[k][j]);
  }
  return t;
}

StartState start_at(double s, double n, double s_dot) {
  StartState st;
  st.s = s;
  st.n = n;
  st.s_dot = s_dot;
  return st;
}

CandidateTrajectory make_candidate(const StartState& st, double s_dot_end, double n_end, const TrackDefinition& track,
                                   const PlannerConfig& cfg) {
  return assemble_trajectory(gen_longitudinal(st, s_dot_end, cfg.horizon_T), gen_lateral(st, n_end, cfg.horizon_T), track,
                             cfg);
}

OpponentPrediction opponent_ahead(const TrackDefinition& track, double s, double n, double v, const PlannerConfig& cfg) {
  AgentState a;
  a.s = s;
  a.n = n;
  a.v = v;
  return predict_opponent(a, track, cfg, Footprint{});
}

}  // namespace

TEST_SUITE("planner") {
  TEST_CASE("quartic holding speed is a constant-velocity profile") {
    const auto c = gen_longitudinal(start_at(0.0, 0.0, 10.0), 10.0, 2.0);
    CHECK(c[0] == doctest::Approx(0.0));
    CHECK(c[1] == doctest::Approx(10.0));
    for (int i = 2; i < 5; ++i) CHECK(std::abs(c[i]) < 1e-12);
  }

  TEST_CASE("quartic from rest matches an independent 2x2 solve") {
    const double T = 2.0;
    const auto c = gen_longitudinal(start_at(0.0, 0.0, 0.0), 10.0, T);
    Eigen::Matrix2d A;
    A << 3 * T * T, 4 * T * T * T, 6 * T, 12 * T * T;
    const Eigen::Vector2d x = A.fullPivLu().solve(Eigen::Vector2d(10.0, 0.0));
    CHECK(c[3] == doctest::Approx(x[0]).epsilon(1e-12));
    CHECK(c[4] == doctest::Approx(x[1]).epsilon(1e-12));
    CHECK(std::abs(poly_eval(c, T, 1) - 10.0) < 1e-9);
    CHECK(std::abs(poly_eval(c, T, 2)) < 1e-9);
  }

  TEST_CASE("quintic examples") {
    const auto zero = gen_lateral(start_at(0.0, 0.0, 10.0), 0.0, 2.0);
    CHECK(zero.cwiseAbs().maxCoeff() == 0.0);

    const auto b = gen_lateral(start_at(0.0, 0.0, 10.0), 1.0, 2.0);
    CHECK(b[3] == doctest::Approx(10.0 / 8.0));
    CHECK(b[4] == doctest::Approx(-15.0 / 16.0));
    CHECK(b[5] == doctest::Approx(6.0 / 32.0));
    CHECK(std::abs(poly_eval(b, 2.0) - 1.0) < 1e-9);
    CHECK(std::abs(poly_eval(b, 2.0, 1)) < 1e-9);
    CHECK(std::abs(poly_eval(b, 2.0, 2)) < 1e-9);

    const auto m = gen_lateral(start_at(0.0, 0.0, 10.0), -1.0, 2.0);
    for (int i = 0; i < 6; ++i) CHECK(m[i] == doctest::Approx(-b[i]));
  }

  TEST_CASE("quintic coefficients equal the 6x6 boundary solve") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::uniform_real_distribution<double> uT(0.5, 5.0);
    for (int trial = 0; trial < 200; ++trial) {
      const double p0 = u(rng), v0 = u(rng), a0 = u(rng), p1 = u(rng), T = uT(rng);
      Eigen::Matrix<double, 6, 6> A = Eigen::Matrix<double, 6, 6>::Zero();
      for (int i = 0; i < 6; ++i) {
        A(3, i) = std::pow(T, i);
        if (i >= 1) A(4, i) = i * std::pow(T, i - 1);
        if (i >= 2) A(5, i) = i * (i - 1) * std::pow(T, i - 2);
      }
      A(0, 0) = 1;
      A(1, 1) = 1;
      A(2, 2) = 2;
      Eigen::Matrix<double, 6, 1> rhs;
      rhs << p0, v0, a0, p1, 0, 0;
      const Eigen::Matrix<double, 6, 1> ref = A.fullPivLu().solve(rhs);
      StartState st = start_at(0.0, p0, 10.0);
      st.n_dot = v0;
      st.n_ddot = a0;
      const auto c = gen_lateral(st, p1, T);
      for (int i = 0; i < 6; ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-9).scale(1.0));
    }
  }

  TEST_CASE("boundary residuals on random instances") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::uniform_real_distribution<double> us(0.0, 80.0);
    std::uniform_real_distribution<double> uT(0.1, 6.0);
    double worst = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
      StartState st;
      st.s = us(rng) * 10.0;
      st.s_dot = us(rng);
      st.s_ddot = u(rng);
      st.n = u(rng);
      st.n_dot = u(rng);
      st.n_ddot = u(rng);
      const double T = uT(rng);
      const double v_end = us(rng);
      const double n_end = u(rng);
      const auto q = gen_longitudinal(st, v_end, T);
      const auto c = gen_lateral(st, n_end, T);
      const double scale_s = 1.0 + std::abs(st.s);
      worst = std::max({worst, std::abs(poly_eval(q, 0.0) - st.s) / scale_s, std::abs(poly_eval(q, 0.0, 1) - st.s_dot),
                        std::abs(poly_eval(q, 0.0, 2) - st.s_ddot), std::abs(poly_eval(q, T, 1) - v_end),
                        std::abs(poly_eval(q, T, 2)), std::abs(poly_eval(c, 0.0) - st.n),
                        std::abs(poly_eval(c, 0.0, 1) - st.n_dot), std::abs(poly_eval(c, 0.0, 2) - st.n_ddot),
                        std::abs(poly_eval(c, T) - n_end), std::abs(poly_eval(c, T, 1)), std::abs(poly_eval(c, T, 2))});
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("horizons shorter than one step are degenerate") {
    CHECK_THROWS_AS(gen_longitudinal(start_at(0, 0, 10), 10.0, 0.01), DegenerateHorizon);
    CHECK_THROWS_AS(gen_lateral(start_at(0, 0, 10), 1.0, 0.0), DegenerateHorizon);
  }

  TEST_CASE("start state from a committed constant-speed trajectory") {
    const auto track = straight_track(600.0);
    PlannerConfig cfg;
    const auto c = make_candidate(start_at(12.0, 0.0, 20.0), 20.0, 0.0, track, cfg);
    const StartState st = identify_start_state(c, 0.35);
    CHECK(st.s == doctest::Approx(19.0));
    CHECK(st.n == doctest::Approx(0.0));
    CHECK(st.s_dot == doctest::Approx(20.0));
    CHECK(std::abs(st.s_ddot) < 1e-9);
  }

  TEST_CASE("first-cycle start state from rest on the raceline") {
    const auto track = circle_track(50.0, 400, 5.0, 20.0, 1.5);
    AgentState a;
    a.s = 40.0;
    a.n = 1.5;
    const StartState st = identify_start_state(a, track);
    CHECK(st.s == doctest::Approx(40.0));
    CHECK(st.n == doctest::Approx(1.5));
    CHECK(st.s_dot == 0.0);
    CHECK(st.s_ddot == 0.0);
    CHECK(st.n_dot == 0.0);
    CHECK(st.n_ddot == 0.0);
    CHECK(st.n_prime() == 0.0);
  }

  TEST_CASE("first-cycle lateral slope is tan(mu)") {
    const auto track = straight_track();
    AgentState a;
    a.s = 10.0;
    a.v = 20.0;
    a.mu = 0.1;
    const StartState st = identify_start_state(a, track);
    CHECK(st.n_prime() == doctest::Approx(std::tan(0.1)));
  }

  TEST_CASE("a committed trajectory shorter than the replan interval is exhausted") {
    const auto track = straight_track();
    PlannerConfig cfg;
    auto c = make_candidate(start_at(0.0, 0.0, 20.0), 20.0, 0.0, track, cfg);
    c.points.resize(5);  // t = 0 .. 0.2
    CHECK_THROWS_AS(identify_start_state(c, 0.35), HorizonExhausted);
  }

  TEST_CASE("assembly on a straight without lateral motion") {
    const auto track = straight_track(600.0);
    PlannerConfig cfg;
    const auto c = make_candidate(start_at(5.0, 0.0, 10.0), 25.0, 0.0, track, cfg);
    REQUIRE(c.points.size() == static_cast<std::size_t>(cfg.steps() + 1));
    CHECK(c.points.front().t == 0.0);
    CHECK(c.points.back().t == doctest::Approx(cfg.horizon_T));
    for (std::size_t k = 0; k < c.points.size(); ++k) {
      const auto& p = c.points[k];
      CHECK(p.t == doctest::Approx(k * cfg.traj_dt));
      CHECK(p.v == doctest::Approx(p.s_dot));
      CHECK(p.kappa_path == 0.0);
      CHECK(p.a_lat == 0.0);
    }
  }

  TEST_CASE("circular motion on an arc") {
    const auto track = circle_track(50.0, 2000, 5.0);
    PlannerConfig cfg;
    const auto c = make_candidate(start_at(10.0, 0.0, 15.0), 15.0, 0.0, track, cfg);
    for (const auto& p : c.points) {
      CHECK(p.kappa_path == doctest::Approx(0.02));
      CHECK(p.a_lat == doctest::Approx(15.0 * 15.0 * 0.02));
    }
  }

  TEST_CASE("assembled curvature matches the discrete curvature of the Cartesian samples") {
    const auto track = circle_track(60.0, 3000, 6.0);
    PlannerConfig cfg;
    for (double n_end : {-3.0, 2.5}) {
      StartState st = start_at(20.0, 0.5, 18.0);
      const auto c = make_candidate(st, 22.0, n_end, track, cfg);
      double kmax = 0.0;
      for (const auto& p : c.points) kmax = std::max(kmax, std::abs(p.kappa_path));
      for (std::size_t k = 1; k + 1 < c.points.size(); ++k) {
        const Vec2 a(c.points[k - 1].x, c.points[k - 1].y);
        const Vec2 b(c.points[k].x, c.points[k].y);
        const Vec2 d(c.points[k + 1].x, c.points[k + 1].y);
        const double k_fd = 2.0 * cross(b - a, d - b) / ((b - a).norm() * (d - b).norm() * (d - a).norm());
        CHECK(std::abs(k_fd - c.points[k].kappa_path) <= 0.02 * kmax);
      }
    }
  }

  TEST_CASE("feasibility examples") {
    const auto track = straight_track(600.0, 20.0);
    PlannerConfig cfg;
    ConstraintLimits lim;
    lim.v_max = 50.0;

    const auto slow = make_candidate(start_at(0.0, 0.0, 10.0), 10.0, 0.0, track, cfg);
    CHECK(check_feasibility(slow, lim).feasible);

    const auto fast = make_candidate(start_at(0.0, 0.0, 60.0), 60.0, 0.0, track, cfg);
    const Feasibility f = check_feasibility(fast, lim);
    CHECK_FALSE(f.feasible);
    CHECK(f.violated == Constraint::speed);
    CHECK(f.index == 0);

    auto boundary = slow;
    boundary.points[7].a_long = -lim.ax_max;
    boundary.points[7].a_lat = 0.0;
    CHECK(check_feasibility(boundary, lim).feasible);
    boundary.points[7].a_long = -lim.ax_max * (1.0 + 1e-9);
    const Feasibility g = check_feasibility(boundary, lim);
    CHECK(g.violated == Constraint::acceleration);
    CHECK(g.index == 7);

    auto engine = slow;
    engine.points[3].a_long = lim.ax_eng + 0.1;
    CHECK(check_feasibility(engine, lim).violated == Constraint::engine);

    auto outside = slow;
    outside.points[9].n = 20.5;
    const Feasibility h = check_feasibility(outside, lim);
    CHECK(h.violated == Constraint::track_limits);
    CHECK(h.index == 9);
  }

  TEST_CASE("feasibility verdicts equal a naive pointwise re-check") {
    TrackParams tp;
    tp.straight = 250.0;
    tp.radius = 45.0;
    tp.width = 14.0;
    const auto track = synth_track(TrackKind::chicane, tp, 7);
    PlannerConfig cfg;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> us(0.0, track.lap_length());
    std::uniform_real_distribution<double> un(-4.0, 4.0);
    std::uniform_real_distribution<double> uv(5.0, 70.0);
    int infeasible = 0, total = 0;
    for (int trial = 0; trial < 20; ++trial) {
      const StartState st = start_at(us(rng), un(rng), uv(rng));
      for (const auto& c : generate_candidates(st, track, WeightLibrary::defaults()[BehaviorMode::NR], nullptr, cfg)) {
        const int naive = naive_first_violation(c, cfg.limits);
        CHECK(c.feasibility.feasible == (naive < 0));
        CHECK(c.feasibility.index == naive);
        infeasible += naive >= 0;
        ++total;
      }
    }
    // both verdicts must actually occur
    CHECK(infeasible > 0);
    CHECK(infeasible < total);
  }

  TEST_CASE("cost examples") {
    const auto track = straight_track(600.0, 6.0, 2.0, 30.0);
    PlannerConfig cfg;
    const WeightSet w{1, 1, 1, 1, 1};

    const auto on_line = make_candidate(start_at(0.0, 0.0, 30.0), 30.0, 0.0, track, cfg);
    const CostBreakdown a = evaluate_cost(on_line, w, nullptr, cfg);
    CHECK(a.c_rl == 0.0);
    CHECK(a.c_v == 0.0);
    CHECK(a.c_pr == 0.0);
    CHECK(a.c_c == 0.0);

    const auto offset = make_candidate(start_at(0.0, 1.0, 30.0), 30.0, 1.0, track, cfg);
    CHECK(evaluate_cost(offset, w, nullptr, cfg).c_rl == doctest::Approx(3.0).epsilon(1e-12));
  }

  TEST_CASE("cost terms equal an independent quadrature") {
    TrackParams tp;
    tp.straight = 250.0;
    tp.radius = 45.0;
    tp.width = 14.0;
    const auto track = synth_track(TrackKind::chicane, tp, 7);
    PlannerConfig cfg;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> us(0.0, track.lap_length());
    std::uniform_real_distribution<double> un(-4.0, 4.0);
    std::uniform_real_distribution<double> uv(10.0, 60.0);
    std::uniform_real_distribution<double> uw(0.0, 10.0);
    std::uniform_real_distribution<double> ugap(2.0, 30.0);
    int with_overlap = 0;
    for (int trial = 0; trial < 300; ++trial) {
      const double s0 = us(rng);
      const StartState st = start_at(s0, un(rng), uv(rng));
      const auto c = make_candidate(st, uv(rng), un(rng), track, cfg);
      if (naive_first_violation(c, cfg.limits) == 0) continue;
      const auto opp = opponent_ahead(track, s0 + ugap(rng), un(rng), uv(rng), cfg);
      const WeightSet w{uw(rng), uw(rng), uw(rng), uw(rng), uw(rng)};
      const CostBreakdown got = evaluate_cost(c, w, &opp, cfg);
      const Terms ref = integrate_terms(c, &opp, cfg);
      CHECK(got.c_rl == doctest::Approx(ref.c_rl).epsilon(1e-9));
      CHECK(got.c_v == doctest::Approx(ref.c_v).epsilon(1e-9));
      CHECK(got.c_a == doctest::Approx(ref.c_a).epsilon(1e-9));
      CHECK(got.c_pr == doctest::Approx(ref.c_pr).epsilon(1e-9));
      CHECK(got.c_c == doctest::Approx(ref.c_c).epsilon(1e-9));
      const double total =
          w.w_rl * ref.c_rl + w.w_v * ref.c_v + w.w_a * ref.c_a + w.w_pr * ref.c_pr + w.w_c * ref.c_c;
      CHECK(got.total == doctest::Approx(total).epsilon(1e-9));
      with_overlap += ref.c_c > 0.0;
    }
    CHECK(with_overlap > 0);
  }

  TEST_CASE("empty straight: NR ends within one lateral step of the raceline") {
    const auto track = straight_track(800.0, 6.0, 2.0, 30.0);
    PlannerConfig cfg;
    const StartState st = start_at(10.0, 0.0, 30.0);
    const WeightSet nr = WeightLibrary::defaults()[BehaviorMode::NR];
    const PlanResult r = plan(st, track, nr, nullptr, cfg);
    const EndStateGrid grid = end_state_grid(st, track, cfg);
    const double step = grid.n_end.size() > 1 ? grid.n_end[1] - grid.n_end[0] : 0.0;
    CHECK(std::abs(r.best.n_end - 0.0) <= step + 1e-12);

    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : generate_candidates(st, track, nr, nullptr, cfg))
      if (c.feasibility.feasible) best = std::min(best, c.cost.total);
    CHECK(r.best.cost.total == best);
    CHECK(r.diagnostics.n_candidates == cfg.n_lat_samples * cfg.n_speed_samples);
  }

  TEST_CASE("a start outside the track has no feasible candidate") {
    const auto track = straight_track(600.0, 6.0);
    PlannerConfig cfg;
    CHECK_THROWS_AS(plan(start_at(10.0, 8.0, 20.0), track, WeightLibrary::defaults()[BehaviorMode::NR], nullptr, cfg),
                    NoFeasibleTrajectory);
  }

  TEST_CASE("selection is invariant to positive weight scaling and deterministic") {
    TrackParams tp;
    tp.straight = 250.0;
    tp.radius = 45.0;
    tp.width = 14.0;
    const auto track = synth_track(TrackKind::chicane, tp, 7);
    PlannerConfig cfg;
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> us(0.0, track.lap_length());
    std::uniform_real_distribution<double> un(-3.0, 3.0);
    std::uniform_real_distribution<double> uv(15.0, 45.0);
    const auto lib = WeightLibrary::defaults();
    for (int trial = 0; trial < 12; ++trial) {
      const double s0 = us(rng);
      const StartState st = start_at(s0, un(rng), uv(rng));
      const auto opp = opponent_ahead(track, s0 + 12.0, un(rng), 20.0, cfg);
      for (int m = 0; m < kModeCount; ++m) {
        const WeightSet w = lib.sets[m];
        PlanResult a, b, c;
        try {
          a = plan(st, track, w, &opp, cfg);
        } catch (const NoFeasibleTrajectory&) {
          continue;
        }
        b = plan(st, track, w.scaled(10.0), &opp, cfg);
        c = plan(st, track, w, &opp, cfg);
        CHECK(a.best.sample_index == b.best.sample_index);
        CHECK(a.best.sample_index == c.best.sample_index);
        CHECK(a.best.n_end == c.best.n_end);
        CHECK(a.best.s_dot_end == c.best.s_dot_end);
        CHECK(naive_first_violation(a.best, cfg.limits) < 0);
      }
    }
  }

  TEST_CASE("raising w_c never selects a candidate with more collision cost") {
    const auto track = straight_track(800.0, 6.0, 2.0, 30.0);
    PlannerConfig cfg;
    for (double gap : {6.0, 10.0, 16.0}) {
      const StartState st = start_at(20.0, 0.0, 30.0);
      const auto opp = opponent_ahead(track, 20.0 + gap, 0.0, 20.0, cfg);
      const auto cands = generate_candidates(st, track, WeightSet{1, 10, 200, 1e4, 0}, &opp, cfg);
      double prev_cc = std::numeric_limits<double>::infinity();
      for (double wc : {0.0, 1.0, 10.0, 1e2, 1e4, 1e6, 1e8}) {
        const WeightSet w{1, 10, 200, 1e4, wc};
        const CandidateTrajectory* best = nullptr;
        for (const auto& c : cands) {
          if (!c.feasibility.feasible) continue;
          CandidateTrajectory scored = c;
          scored.cost.total = scored.cost.weighted(w);
          if (!best || scored.cost.total < best->cost.weighted(w)) best = &c;
        }
        REQUIRE(best != nullptr);
        const PlanResult r = plan(st, track, w, &opp, cfg);
        CHECK(r.best.cost.c_c == doctest::Approx(best->cost.c_c));
        CHECK(r.best.cost.c_c <= prev_cc + 1e-12);
        prev_cc = r.best.cost.c_c;
      }
    }
  }

  TEST_CASE("opponent prediction") {
    const auto track = circle_track(80.0, 1000, 6.0, 25.0, 1.0);
    PlannerConfig cfg;
    AgentState a;
    a.s = 30.0;
    a.n = 1.0;
    a.v = 15.0 * (1.0 - 1.0 / 80.0);  // s_dot = 15 at n = 1 on the arc
    const auto pred = predict_opponent(a, track, cfg, Footprint{});
    REQUIRE(pred.poses.size() == static_cast<std::size_t>(cfg.steps() + 1));
    for (const auto& p : pred.poses) {
      CHECK(p.s == doctest::Approx(30.0 + 15.0 * p.t));
      CHECK(p.n == doctest::Approx(1.0));
    }

    a.v = 0.0;
    const auto still = predict_opponent(a, track, cfg, Footprint{});
    for (const auto& p : still.poses) {
      CHECK(p.s == doctest::Approx(30.0));
      CHECK(p.x == doctest::Approx(still.poses.front().x));
      CHECK(p.y == doctest::Approx(still.poses.front().y));
    }

    for (double T : {0.35, 1.0, 2.2, 4.0}) {
      PlannerConfig c2;
      c2.horizon_T = T;
      const auto cand = make_candidate(start_at(0.0, 0.0, 20.0), 20.0, 0.0, track, c2);
      CHECK(predict_opponent(a, track, c2, Footprint{}).poses.size() == cand.points.size());
    }
  }
}
