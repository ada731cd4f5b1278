#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "gpmppi/config.hpp"
#include "gpmppi/mppi.hpp"
#include "gpmppi/rng.hpp"
#include "gpmppi/terrain.hpp"

namespace gpmppi {

// Fully resolved experiment scenario.
struct Scenario {
  enum class Kind { Tracking, Avoidance };
  Kind kind{Kind::Tracking};
  Track track{Track::circle_track({0.0, 0.0}, 2.0, 0.4)};
  double v_desired{2.0};
  RobotState start;
  GoalSpec goal;
  std::vector<CircleObstacle> obstacles;
  std::vector<TerrainScheduleEntry> schedule{{0.0, 0}};
  double distance_budget{100.0};
  double max_duration{120.0};

  int terrain_at(double t) const;
};

// Builds the configured scenario. Random obstacle fields are resolved from
// the run seed, so a (config, seed) pair pins the world exactly.
Scenario make_scenario(const ExperimentConfig& cfg, std::uint64_t seed);

// Uniform rejection sampling of circular obstacles inside the bounds, keeping
// min_gap clearance from the start position and the goal capture disc.
std::vector<CircleObstacle> random_obstacle_field(RngStream& rng, const RandomObstacleConfig& rc,
                                                  const Eigen::Vector2d& start,
                                                  const GoalSpec& goal);

struct TrainedModels {
  bool has_gp{false};
  GpModel gp;  // 2M terrain-major outputs over shared inputs
  Edd5Params edd5{Edd5Params::ideal(0.37)};
  NominalParams nominal;
};

// Generates per-terrain residual data, selects shared GP hyperparameters,
// fits the batch GP and the pooled EDD5 baseline. Deterministic in (cfg, seed).
TrainedModels train_models(const ExperimentConfig& cfg, std::uint64_t seed);

void save_models(const std::string& path, const TrainedModels& models);
TrainedModels load_models(const std::string& path);

struct LatencyStats {
  double mean_ms{0.0};
  double median_ms{0.0};
  double max_ms{0.0};
};

struct RunMetrics {
  double rmse{0.0};
  bool success{false};
  double time_to_goal{0.0};
  double min_obstacle_clearance{std::numeric_limits<double>::infinity()};
  double mean_speed{0.0};
  int collision_count{0};
  int ticks{0};
  bool aborted{false};
  std::string abort_reason;
  LatencyStats latency;  // wall clock; never written to deterministic output
};

// Per-tick trace for --plot-data.
struct TraceRow {
  int tick{0};
  double t{0.0};
  RobotState state;
  Control command;
  double best_cost{0.0}, mean_cost{0.0}, ess{0.0}, entropy{0.0};
  Eigen::VectorXd terrain_weights;
};
using Trace = std::vector<TraceRow>;

// Closed-loop tracking run: plan, apply the first control to the true-terrain
// simulator, update the terrain estimate, repeat until the distance budget.
RunMetrics run_tracking_experiment(const ExperimentConfig& cfg, const Scenario& scenario,
                                   const TrainedModels& models, std::uint64_t seed,
                                   Trace* trace = nullptr);

// Closed-loop start-to-goal run; success means goal capture with zero
// collisions against the physical (untightened) obstacles.
RunMetrics run_avoidance_experiment(const ExperimentConfig& cfg, const Scenario& scenario,
                                    const TrainedModels& models, std::uint64_t seed,
                                    Trace* trace = nullptr);

double compute_rmse(const std::vector<Eigen::Vector2d>& path, const Track& track);

// Single-run CSV (same schema as the bench rows).
void write_run_csv(std::ostream& os, const ExperimentConfig& cfg, const std::string& row_kind,
                   const std::string& track_name, int terrain, std::uint64_t seed,
                   const RunMetrics& m);

void write_trace_csv(std::ostream& os, const ExperimentConfig& cfg, const Trace& trace);

// Full planner x scenario x seed cross product with aggregate rows.
void benchmark_suite(const ExperimentConfig& cfg, const TrainedModels& models, std::ostream& os);

// Prints the quantile identities; returns false if any check fails.
bool quantile_self_test(std::ostream& os);

}  // namespace gpmppi
