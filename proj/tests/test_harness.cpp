#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gpmppi/harness.hpp"

using namespace gpmppi;

namespace {

// Small, fast experiment setup used by the closed-loop tests.
ExperimentConfig tiny_config() {
  ExperimentConfig cfg = default_config();
  cfg.mppi.samples = 96;
  cfg.mppi.horizon = 10;
  cfg.threads = 1;
  cfg.training.n_points = 60;
  cfg.gp.grid_search = false;
  cfg.gp.fixed.signal_var = 4e-3;
  cfg.gp.fixed.lengthscales << 0.8, 1.2, 0.8, 1.2;
  cfg.gp.fixed.noise_var = 1e-4;
  cfg.scenario.distance_budget = 6.0;
  cfg.scenario.max_duration = 20.0;
  return cfg;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("compute_rmse worked examples") {
  const Track t = Track::circle_track({0, 0}, 2.0, 0.4);
  std::vector<Eigen::Vector2d> on = {{2, 0}, {0, 2}, {-2, 0}};
  CHECK(compute_rmse(on, t) == doctest::Approx(0.0));
  std::vector<Eigen::Vector2d> off = {{2.1, 0}, {0, 2.1}};
  CHECK(compute_rmse(off, t) == doctest::Approx(0.1).epsilon(1e-9));
  std::vector<Eigen::Vector2d> mixed = {{2, 0}, {2.2, 0}};
  CHECK(compute_rmse(mixed, t) == doctest::Approx(std::sqrt(0.02)).epsilon(1e-9));
  CHECK_THROWS_AS(compute_rmse({}, t), std::invalid_argument);
}

TEST_CASE("terrain schedule lookup") {
  Scenario s;
  s.schedule = {{0.0, 0}, {5.0, 2}, {9.0, 1}};
  CHECK(s.terrain_at(0.0) == 0);
  CHECK(s.terrain_at(4.999) == 0);
  CHECK(s.terrain_at(5.0) == 2);
  CHECK(s.terrain_at(8.0) == 2);
  CHECK(s.terrain_at(100.0) == 1);
}

TEST_CASE("random obstacle fields are seeded and respect gaps") {
  RandomObstacleConfig rc;
  rc.count = 5;
  const Eigen::Vector2d start(0, 0);
  const GoalSpec goal{{8, 0}, 0.5};
  RngStream r1(42), r2(42), r3(43);
  const auto a = random_obstacle_field(r1, rc, start, goal);
  const auto b = random_obstacle_field(r2, rc, start, goal);
  const auto c = random_obstacle_field(r3, rc, start, goal);
  CHECK(a.size() == 5);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a[i].center == b[i].center && a[i].radius == b[i].radius;
    differs = differs || a[i].center != c[i].center;
  }
  CHECK(same);
  CHECK(differs);
  for (const auto& o : a) {
    CHECK((o.center - start).norm() >= o.radius + rc.min_gap);
    CHECK((o.center - goal.position).norm() >= o.radius + goal.capture_radius + rc.min_gap);
  }
  RandomObstacleConfig none = rc;
  none.count = 0;
  RngStream r4(1);
  CHECK(random_obstacle_field(r4, none, start, goal).empty());
}

TEST_CASE("obstacle sampling failure raises after bounded attempts") {
  RandomObstacleConfig rc;
  rc.count = 1;
  rc.x_min = -0.1;
  rc.x_max = 0.1;
  rc.y_min = -0.1;
  rc.y_max = 0.1;  // every candidate sits on the start position
  RngStream rng(7);
  CHECK_THROWS_AS(random_obstacle_field(rng, rc, {0, 0}, GoalSpec{{0, 0}, 0.5}),
                  std::runtime_error);
}

TEST_CASE("config round trip and strictness") {
  const ExperimentConfig cfg = default_config();
  const std::string text = dump_config(cfg);
  const auto path = std::filesystem::temp_directory_path() / "gpmppi_cfg_test.json";
  {
    std::ofstream os(path);
    os << text;
  }
  const ExperimentConfig back = load_config(path.string());
  CHECK(dump_config(back) == text);
  CHECK(config_hash_hex(back) == config_hash_hex(cfg));

  {
    std::ofstream os(path);
    os << R"({"mppi": {"samples": 8, "horizont": 5}})";
  }
  CHECK_THROWS_WITH_AS(load_config(path.string()),
                       doctest::Contains("unknown key '$.mppi.horizont'"), std::invalid_argument);
  {
    std::ofstream os(path);
    os << R"({"scenario": {"kind": "flying"}})";
  }
  CHECK_THROWS_AS(load_config(path.string()), std::invalid_argument);
  std::filesystem::remove(path);
}

TEST_CASE("trained models save/load round trip") {
  ExperimentConfig cfg = tiny_config();
  const TrainedModels models = train_models(cfg, 7);
  CHECK(models.has_gp);
  CHECK(models.gp.n_points() == cfg.training.n_points);
  CHECK(models.gp.n_outputs() == 2 * static_cast<int>(cfg.terrains.size()));
  CHECK(models.edd5.y_icr_l < 0.0);
  CHECK(models.edd5.y_icr_r > 0.0);

  const auto path = std::filesystem::temp_directory_path() / "gpmppi_models_test.bin";
  save_models(path.string(), models);
  const TrainedModels back = load_models(path.string());
  std::filesystem::remove(path);
  CHECK(back.has_gp);
  CHECK(back.gp.inputs() == models.gp.inputs());
  CHECK(back.gp.outputs() == models.gp.outputs());
  CHECK(back.edd5.alpha_l == models.edd5.alpha_l);
  const Eigen::Vector4d q(1.0, 0.2, 1.5, 0.1);
  CHECK(back.gp.predict(q).mean == models.gp.predict(q).mean);

  // Training is deterministic in (config, seed).
  const TrainedModels again = train_models(cfg, 7);
  CHECK(again.gp.outputs() == models.gp.outputs());
  CHECK(again.edd5.alpha_r == models.edd5.alpha_r);
}

TEST_CASE("tracking run on an easy terrain is deterministic and accurate") {
  ExperimentConfig cfg = tiny_config();
  // Nominal-equivalent quiet terrain: the GP has nothing to correct.
  cfg.terrains = {{"ideal", 1.0, 1.0, cfg.nominal.tau_v, cfg.nominal.tau_omega, 0.0, 0.0, 0.0}};
  cfg.scenario.schedule = {{0.0, 0}};
  cfg.bench.terrains = {0};
  const TrainedModels models = train_models(cfg, 3);
  const Scenario scenario = make_scenario(cfg, 11);
  const RunMetrics a = run_tracking_experiment(cfg, scenario, models, 11);
  const RunMetrics b = run_tracking_experiment(cfg, scenario, models, 11);
  CHECK(!a.aborted);
  CHECK(a.success);
  CHECK(a.rmse == b.rmse);
  CHECK(a.ticks == b.ticks);
  CHECK(a.rmse < 0.05);  // sub-5 cm on the quiet terrain
  CHECK(a.mean_speed > 0.5);
}

TEST_CASE("avoidance run reaches an unobstructed goal near-straight") {
  ExperimentConfig cfg = tiny_config();
  cfg.planner = PlannerKind::Unicycle;
  cfg.terrains = {{"ideal", 1.0, 1.0, cfg.nominal.tau_v, cfg.nominal.tau_omega, 0.0, 0.0, 0.0}};
  cfg.bench.terrains = {0};
  cfg.scenario.kind = "avoidance";
  cfg.scenario.use_random_obstacles = false;
  cfg.scenario.obstacles.clear();
  cfg.scenario.goal = {{4.0, 0.0}, 0.5};
  cfg.scenario.max_duration = 30.0;
  const TrainedModels models;  // unicycle planner needs no fitted models
  const Scenario scenario = make_scenario(cfg, 5);
  CHECK(scenario.obstacles.empty());
  const RunMetrics m = run_avoidance_experiment(cfg, scenario, models, 5);
  CHECK(m.success);
  CHECK(m.collision_count == 0);
  // Unobstructed: the run converges on the goal without wandering.
  CHECK(m.time_to_goal < 10.0);
  CHECK(m.mean_speed > 0.4);
}

TEST_CASE("blocked goal times out without crashing") {
  ExperimentConfig cfg = tiny_config();
  cfg.planner = PlannerKind::Unicycle;
  cfg.scenario.kind = "avoidance";
  cfg.scenario.use_random_obstacles = false;
  // A wall of overlapping obstacles between start and goal.
  cfg.scenario.obstacles = {{{2.0, -2.0}, 1.2}, {{2.0, 0.0}, 1.2}, {{2.0, 2.0}, 1.2},
                            {{2.0, -4.0}, 1.2}, {{2.0, 4.0}, 1.2}};
  cfg.scenario.goal = {{4.0, 0.0}, 0.3};
  cfg.scenario.max_duration = 6.0;
  const TrainedModels models;
  const Scenario scenario = make_scenario(cfg, 5);
  const RunMetrics m = run_avoidance_experiment(cfg, scenario, models, 5);
  CHECK(!m.success);
  CHECK(m.ticks >= static_cast<int>(cfg.scenario.max_duration / cfg.nominal.dt));
}

TEST_CASE("single-run CSV is reproducible and schema-stable") {
  ExperimentConfig cfg = tiny_config();
  cfg.planner = PlannerKind::Unicycle;
  cfg.terrains = {{"ideal", 1.0, 1.0, cfg.nominal.tau_v, cfg.nominal.tau_omega, 0.0, 0.0, 0.0}};
  cfg.bench.terrains = {0};
  cfg.scenario.distance_budget = 3.0;
  const TrainedModels models;
  const Scenario scenario = make_scenario(cfg, 2);
  const RunMetrics m1 = run_tracking_experiment(cfg, scenario, models, 2);
  const RunMetrics m2 = run_tracking_experiment(cfg, scenario, models, 2);
  std::ostringstream a, b;
  write_run_csv(a, cfg, "tracking", "circle", 0, 2, m1);
  write_run_csv(b, cfg, "tracking", "circle", 0, 2, m2);
  CHECK(a.str() == b.str());
  CHECK(a.str().find("# gpmppi-csv v1 config=") == 0);
  CHECK(a.str().find("row,planner,track,terrain,seed,rmse_m") != std::string::npos);
}

TEST_CASE("trace rows log terrain weights each tick") {
  ExperimentConfig cfg = tiny_config();
  cfg.scenario.distance_budget = 1.0;
  const TrainedModels models = train_models(cfg, 3);
  const Scenario scenario = make_scenario(cfg, 4);
  Trace trace;
  const RunMetrics m = run_tracking_experiment(cfg, scenario, models, 4, &trace);
  CHECK(!m.aborted);
  CHECK(static_cast<int>(trace.size()) == m.ticks);
  for (const auto& row : trace) {
    CHECK(row.terrain_weights.size() == static_cast<Eigen::Index>(cfg.terrains.size()));
    CHECK(std::abs(row.terrain_weights.sum() - 1.0) <= 1e-6);
  }
  std::ostringstream os;
  write_trace_csv(os, cfg, trace);
  CHECK(os.str().find("tick,t_s,x_m") != std::string::npos);
}

TEST_CASE("quantile self test passes") {
  std::ostringstream os;
  CHECK(quantile_self_test(os));
}

}  // TEST_SUITE
