#pragma once

#include <span>
#include <vector>

#include "gpmppi/core.hpp"

namespace gpmppi {

// Lane geometry: analytic circle or waypoint polyline centerline plus a
// half-width. Nearest points on a polyline are computed per segment with
// endpoint clamping; ties go to the lowest segment index.
struct Track {
  bool is_circle{false};
  Eigen::Vector2d center{Eigen::Vector2d::Zero()};
  double radius{0.0};
  std::vector<Eigen::Vector2d> waypoints;
  bool closed{true};
  double half_width{0.5};

  static Track circle_track(const Eigen::Vector2d& center, double radius, double half_width);
  static Track polyline_track(std::vector<Eigen::Vector2d> pts, double half_width, bool closed);

  void validate() const;
  double centerline_distance(const Eigen::Vector2d& xy) const;
};

struct CircleObstacle {
  Eigen::Vector2d center{Eigen::Vector2d::Zero()};
  double radius{0.0};
};

// Eq.-style weighted sums; each weight lies in [0, 1].
struct TrackingWeights {
  double variance{0.1};
  double deviation{1.0};
  double slip{0.3};
  double safety{1.0};
  double speed{0.2};

  void validate() const;
};

struct AvoidanceWeights {
  double variance{0.1};
  double obstacle{1.0};
  double stage{0.5};
  double terminal{1.0};

  void validate() const;
};

struct GoalSpec {
  Eigen::Vector2d position{Eigen::Vector2d::Zero()};
  double capture_radius{0.5};
};

// Normalized lane deviation: 0 on the centerline, 1 on the boundary.
double lane_deviation(const Track& track, const Eigen::Vector2d& xy);

// 1 iff the centerline distance exceeds r_bar (boundary inclusive).
double lane_violation(const Track& track, const Eigen::Vector2d& xy, double r_bar);

// |lateral| / max(|longitudinal|, 1 mm) of the body-frame displacement
// between consecutive rollout states.
double slip_ratio(const RobotState& prev_mean, const RobotState& next_mean);

// 1 iff any obstacle's tightened clearance fails at xy; margins[i] inflates
// obstacle i's radius by the uncertainty buffer from the tightening pass.
double collision_indicator(const Eigen::Vector2d& xy, const std::vector<CircleObstacle>& obstacles,
                           const Eigen::Ref<const Eigen::VectorXd>& margins);

double stage_goal_cost(const Eigen::Vector2d& xy, const GoalSpec& goal);

// 0 inside the capture radius (inclusive), high_cost outside.
double terminal_cost(const Eigen::Vector2d& final_xy, const GoalSpec& goal, double high_cost);

// Tracking cost over a rollout of N+1 mean states and N per-step corrections:
// variance trace + lane deviation + slip + 0.9^k-decayed violations against
// the tightened radii + under-speed penalty (clamped at zero so over-speed
// sampling is not rewarded).
double tracking_cost(std::span<const RobotState> states,
                     std::span<const GaussianCorrection> corrections, const Track& track,
                     const Eigen::Ref<const Eigen::VectorXd>& r_bar_per_step, double v_desired,
                     const Eigen::Ref<const Eigen::VectorXd>& v_sampled_per_step,
                     const TrackingWeights& w);

// Avoidance cost: variance trace + tightened collision indicator + stage
// distance-to-goal per step, plus the terminal term on the final state.
// margins is N x n_obstacles.
double avoidance_cost(std::span<const RobotState> states,
                      std::span<const GaussianCorrection> corrections,
                      const std::vector<CircleObstacle>& obstacles,
                      const Eigen::Ref<const Eigen::MatrixXd>& margins, const GoalSpec& goal,
                      const AvoidanceWeights& w, double high_cost);

}  // namespace gpmppi
