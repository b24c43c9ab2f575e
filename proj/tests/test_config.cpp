#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "racemode/config.hpp"
#include "racemode/error.hpp"

using namespace racemode;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto dir = std::filesystem::temp_directory_path() / "racemode_config_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults carry the three weight sets") {
    const RunConfig c;
    CHECK(c.weights[BehaviorMode::NR].w_rl == 50.0);
    CHECK(c.weights[BehaviorMode::NR].w_c == 1e8);
    CHECK(c.weights[BehaviorMode::AG].w_a == 200.0);
    CHECK(c.weights[BehaviorMode::AG].w_pr == 1e4);
    CHECK(c.weights[BehaviorMode::CD].w_v == 1.0);
    CHECK(c.weights[BehaviorMode::CD].w_c == 100.0);
    CHECK(c.planner.replan_dt == doctest::Approx(0.35));
    CHECK(c.batch.episodes == 50);
    CHECK_NOTHROW(c.validate());
  }

  TEST_CASE("environment names map to dotted keys") {
    CHECK(env_key("RACEMODE_PLANNER__COST__D_PR") == "planner.cost.d_pr");
    CHECK(env_key("RACEMODE_PPO__LR") == "ppo.lr");
    CHECK(env_key("RACEMODE_WEIGHTS__CD__W_C") == "weights.CD.w_c");
    CHECK_FALSE(env_key("HOME").has_value());
    CHECK_FALSE(env_key("RACEMODE_").has_value());
  }

  TEST_CASE("layers apply in order: file, environment, --set") {
    const auto file = write_temp("layers.json", R"({"ppo": {"lr": 1e-3, "epochs": 7}, "seed": 5})");
    ConfigSources src;
    src.file = file;
    src.env = {{"RACEMODE_PPO__LR", "2e-3"}, {"UNRELATED", "1"}};
    src.sets = {"ppo.lr=5e-4", "weights.AG.w_c=3"};
    const RunConfig c = load_config(src);
    CHECK(c.ppo.lr == doctest::Approx(5e-4));
    CHECK(c.ppo.epochs == 7);
    CHECK(c.seed == 5);
    CHECK(c.weights[BehaviorMode::AG].w_c == 3.0);
    CHECK(c.ppo.minibatch == PPOConfig{}.minibatch);

    ConfigSources env_only;
    env_only.file = file;
    env_only.env = {{"RACEMODE_PPO__LR", "2e-3"}};
    CHECK(load_config(env_only).ppo.lr == doctest::Approx(2e-3));
  }

  TEST_CASE("unknown keys and bad values are config errors") {
    CHECK_THROWS_AS(config_from_text(R"({"ppo": {"learning_rate": 1}})"), ConfigError);
    CHECK_THROWS_AS(config_from_text(R"({"ppo": {"lr": "fast"}})"), ConfigError);
    CHECK_THROWS_AS(config_from_text("{not json"), ConfigError);
    ConfigSources src;
    src.sets = {"planner.nope=1"};
    CHECK_THROWS_AS(load_config(src), ConfigError);
    src.sets = {"ppo.lr"};
    CHECK_THROWS_AS(load_config(src), ConfigError);
    src.sets = {"ppo.gamma=1.5"};
    CHECK_THROWS_AS(load_config(src).validate(), ConfigError);
  }

  TEST_CASE("effective configuration round trips through its echo") {
    ConfigSources src;
    src.sets = {"reward.w_gap=0.2", "track.kind=oval", "scenario.opponent=non_reactive"};
    const RunConfig c = load_config(src);
    const std::string text = config_to_text(c);
    CHECK(config_to_text(config_from_text(text)) == text);
    CHECK(config_from_text(text).track.kind == TrackKind::oval);
  }

  TEST_CASE("batch seeds are consecutive") {
    BatchSpec b;
    b.episodes = 3;
    b.first_seed = 10;
    CHECK(b.seeds() == std::vector<std::uint64_t>{10, 11, 12});
  }
}
