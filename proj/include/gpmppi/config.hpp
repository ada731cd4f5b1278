#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gpmppi/costs.hpp"
#include "gpmppi/dynamics.hpp"
#include "gpmppi/gp.hpp"
#include "gpmppi/mppi.hpp"
#include "gpmppi/terrain.hpp"

namespace gpmppi {

enum class PlannerKind { Gp, Edd5, Unicycle };

std::string to_string(PlannerKind kind);
PlannerKind planner_kind_from_string(const std::string& s);

struct TrainingConfig {
  int n_points{300};
  int hold_min{5};
  int hold_max{20};
};

struct GpConfig {
  bool grid_search{true};
  KernelParams fixed;  // used when grid_search is off
};

struct EstimatorConfig {
  int history{20};
  double gamma{0.1};
  int max_iters{200};
  double tol{1e-8};
};

struct CostConfig {
  TrackingWeights tracking;
  AvoidanceWeights avoidance;
  double high_cost{1e4};
};

struct GeometryConfig {
  Eigen::Vector2d circle_center{Eigen::Vector2d::Zero()};
  double circle_radius{2.0};
  double circle_half_width{0.4};
  Eigen::Vector2d square_center{Eigen::Vector2d::Zero()};
  double square_side{6.25};
  double square_half_width{0.4};
  Eigen::Vector2d lane_from{Eigen::Vector2d::Zero()};
  Eigen::Vector2d lane_to{60.0, 0.0};
  double lane_half_width{0.4};
};

struct RandomObstacleConfig {
  int count{5};
  double x_min{1.5}, x_max{6.5};
  double y_min{-2.5}, y_max{2.5};
  double radius_min{0.25}, radius_max{0.5};
  double min_gap{0.5};
};

struct TerrainScheduleEntry {
  double time_s{0.0};
  int terrain{0};
};

struct ScenarioConfig {
  std::string kind{"tracking"};
  std::string track{"circle"};
  double v_desired{2.0};
  std::optional<Eigen::Vector3d> start;  // absent -> canonical start for the geometry
  GoalSpec goal{{8.0, 0.0}, 0.5};
  std::vector<CircleObstacle> obstacles;
  bool use_random_obstacles{true};
  RandomObstacleConfig random_obstacles;
  std::vector<TerrainScheduleEntry> schedule{{0.0, 0}};
  double distance_budget{100.0};
  double max_duration{120.0};
};

struct BenchConfig {
  std::vector<PlannerKind> planners{PlannerKind::Gp, PlannerKind::Edd5, PlannerKind::Unicycle};
  std::vector<std::string> tracks{"circle"};
  std::vector<int> terrains{0, 1, 2};
  int tracking_seeds{1};
  int avoidance_trials{33};
};

// Everything a run needs; loaded from a single JSON file with fail-fast
// rejection of unknown keys.
struct ExperimentConfig {
  std::uint64_t seed{0};
  int threads{0};
  PlannerKind planner{PlannerKind::Gp};
  NominalParams nominal;
  std::vector<TerrainProfile> terrains;
  TrainingConfig training;
  GpConfig gp;
  EstimatorConfig estimator;
  double p_x{0.95};
  CostConfig costs;
  MppiConfig mppi;
  double track_width{0.37};
  GeometryConfig geometry;
  ScenarioConfig scenario;
  BenchConfig bench;

  void validate() const;
};

ExperimentConfig default_config();
ExperimentConfig load_config(const std::string& path);
std::string dump_config(const ExperimentConfig& cfg);  // canonical JSON text

// FNV-1a hash of the canonical dump, hex encoded; ties CSV output to its
// exact configuration.
std::string config_hash_hex(const ExperimentConfig& cfg);

}  // namespace gpmppi
