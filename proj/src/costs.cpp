#include "gpmppi/costs.hpp"

#include <cmath>
#include <stdexcept>

namespace gpmppi {

namespace {
double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 <= 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

void check_weight(double w, const char* name) {
  if (!(w >= 0.0) || !(w <= 1.0)) {
    throw std::invalid_argument(std::string("cost weight ") + name + " must lie in [0, 1]");
  }
}
}  // namespace

Track Track::circle_track(const Eigen::Vector2d& center, double radius, double half_width) {
  Track t;
  t.is_circle = true;
  t.center = center;
  t.radius = radius;
  t.half_width = half_width;
  t.validate();
  return t;
}

Track Track::polyline_track(std::vector<Eigen::Vector2d> pts, double half_width, bool closed) {
  Track t;
  t.waypoints = std::move(pts);
  t.half_width = half_width;
  t.closed = closed;
  t.validate();
  return t;
}

void Track::validate() const {
  if (!(half_width > 0.0)) {
    throw std::invalid_argument("Track: half_width must be positive");
  }
  if (is_circle) {
    if (!(radius > 0.0)) throw std::invalid_argument("Track: circle radius must be positive");
    return;
  }
  if (waypoints.size() < 2) {
    throw std::invalid_argument("Track: polyline needs at least 2 waypoints");
  }
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if ((waypoints[i] - waypoints[i - 1]).norm() < 1e-12) {
      throw std::invalid_argument("Track: consecutive waypoints must be distinct");
    }
  }
}

double Track::centerline_distance(const Eigen::Vector2d& xy) const {
  if (is_circle) {
    return std::abs((xy - center).norm() - radius);
  }
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = waypoints.size();
  const std::size_t nseg = closed ? n : n - 1;
  for (std::size_t i = 0; i < nseg; ++i) {
    const double d = point_segment_distance(xy, waypoints[i], waypoints[(i + 1) % n]);
    if (d < best) best = d;
  }
  return best;
}

void TrackingWeights::validate() const {
  check_weight(variance, "alpha0");
  check_weight(deviation, "alpha1");
  check_weight(slip, "alpha2");
  check_weight(safety, "alpha3");
  check_weight(speed, "alpha4");
}

void AvoidanceWeights::validate() const {
  check_weight(variance, "beta0");
  check_weight(obstacle, "beta1");
  check_weight(stage, "beta2");
  check_weight(terminal, "beta3");
}

double lane_deviation(const Track& track, const Eigen::Vector2d& xy) {
  return track.centerline_distance(xy) / track.half_width;
}

double lane_violation(const Track& track, const Eigen::Vector2d& xy, double r_bar) {
  return track.centerline_distance(xy) > r_bar ? 1.0 : 0.0;
}

double slip_ratio(const RobotState& prev_mean, const RobotState& next_mean) {
  const Eigen::Vector2d d = body_frame_displacement(prev_mean, next_mean);
  return std::abs(d(1)) / std::max(std::abs(d(0)), 1e-3);
}

double collision_indicator(const Eigen::Vector2d& xy, const std::vector<CircleObstacle>& obstacles,
                           const Eigen::Ref<const Eigen::VectorXd>& margins) {
  if (margins.size() != static_cast<Eigen::Index>(obstacles.size())) {
    throw std::invalid_argument("collision_indicator: one margin per obstacle required");
  }
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    const double d = (xy - obstacles[i].center).norm() - obstacles[i].radius;
    if (d - margins(static_cast<Eigen::Index>(i)) <= 0.0) return 1.0;
  }
  return 0.0;
}

double stage_goal_cost(const Eigen::Vector2d& xy, const GoalSpec& goal) {
  return (xy - goal.position).norm();
}

double terminal_cost(const Eigen::Vector2d& final_xy, const GoalSpec& goal, double high_cost) {
  if (!(high_cost > 0.0)) {
    throw std::invalid_argument("terminal_cost: high_cost must be positive");
  }
  return (final_xy - goal.position).norm() <= goal.capture_radius ? 0.0 : high_cost;
}

double tracking_cost(std::span<const RobotState> states,
                     std::span<const GaussianCorrection> corrections, const Track& track,
                     const Eigen::Ref<const Eigen::VectorXd>& r_bar_per_step, double v_desired,
                     const Eigen::Ref<const Eigen::VectorXd>& v_sampled_per_step,
                     const TrackingWeights& w) {
  const std::size_t n = corrections.size();
  if (states.size() != n + 1 || r_bar_per_step.size() != static_cast<Eigen::Index>(n) ||
      v_sampled_per_step.size() != static_cast<Eigen::Index>(n)) {
    throw std::invalid_argument("tracking_cost: rollout and per-step arrays must agree on N");
  }
  double cost = 0.0;
  double decay = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Vector2d xy = states[k + 1].position();
    cost += w.variance * corrections[k].trace();
    cost += w.deviation * lane_deviation(track, xy);
    cost += w.slip * slip_ratio(states[k], states[k + 1]);
    cost += w.safety * decay * lane_violation(track, xy, r_bar_per_step(static_cast<Eigen::Index>(k)));
    cost += w.speed * std::max(0.0, v_desired - v_sampled_per_step(static_cast<Eigen::Index>(k)));
    decay *= 0.9;
  }
  return cost;
}

double avoidance_cost(std::span<const RobotState> states,
                      std::span<const GaussianCorrection> corrections,
                      const std::vector<CircleObstacle>& obstacles,
                      const Eigen::Ref<const Eigen::MatrixXd>& margins, const GoalSpec& goal,
                      const AvoidanceWeights& w, double high_cost) {
  const std::size_t n = corrections.size();
  if (states.size() != n + 1 || margins.rows() != static_cast<Eigen::Index>(n) ||
      margins.cols() != static_cast<Eigen::Index>(obstacles.size())) {
    throw std::invalid_argument("avoidance_cost: rollout and margin arrays must agree on N");
  }
  double cost = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Vector2d xy = states[k + 1].position();
    cost += w.variance * corrections[k].trace();
    cost += w.obstacle *
            collision_indicator(xy, obstacles, margins.row(static_cast<Eigen::Index>(k)).transpose());
    cost += w.stage * stage_goal_cost(xy, goal);
  }
  cost += w.terminal * terminal_cost(states.back().position(), goal, high_cost);
  return cost;
}

}  // namespace gpmppi
