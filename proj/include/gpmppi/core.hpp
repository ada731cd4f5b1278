#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace gpmppi {

using Vector5d = Eigen::Matrix<double, 5, 1>;
using Matrix5d = Eigen::Matrix<double, 5, 5>;

inline constexpr double kPi = 3.14159265358979323846;

// Wraps an angle to the half-open interval (-pi, pi]; -pi maps to +pi so every
// angle has a single canonical representative.
inline double wrap_angle(double a) {
  if (!std::isfinite(a)) {
    throw std::invalid_argument("wrap_angle: non-finite angle");
  }
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) {
    r += 2.0 * kPi;
  }
  return r;
}

// Planar robot state [X, Y, theta, v, omega].
struct RobotState {
  double x{0.0};      // position east [m]
  double y{0.0};      // position north [m]
  double theta{0.0};  // heading [rad], wrapped to (-pi, pi]
  double v{0.0};      // body longitudinal velocity [m/s]
  double omega{0.0};  // yaw rate [rad/s]

  Vector5d vec() const {
    Vector5d s;
    s << x, y, theta, v, omega;
    return s;
  }

  static RobotState from_vec(const Vector5d& s) { return {s(0), s(1), s(2), s(3), s(4)}; }

  Eigen::Vector2d position() const { return {x, y}; }

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(theta) && std::isfinite(v) &&
           std::isfinite(omega);
  }
};

// Commanded linear and angular velocity.
struct Control {
  double v_ref{0.0};      // [m/s]
  double omega_ref{0.0};  // [rad/s]

  bool finite() const { return std::isfinite(v_ref) && std::isfinite(omega_ref); }
};

struct ControlBounds {
  Control lo{-0.5, -2.0};
  Control hi{2.0, 2.0};

  Control clamp(const Control& u) const {
    return {std::clamp(u.v_ref, lo.v_ref, hi.v_ref),
            std::clamp(u.omega_ref, lo.omega_ref, hi.omega_ref)};
  }

  bool contains(const Control& u) const {
    return u.v_ref >= lo.v_ref && u.v_ref <= hi.v_ref && u.omega_ref >= lo.omega_ref &&
           u.omega_ref <= hi.omega_ref;
  }
};

// N commanded controls, the decision variable of the MPPI loop.
using ControlSequence = std::vector<Control>;

// Gaussian state belief: mean plus 5x5 covariance. Covariance symmetry is
// re-enforced by averaging with the transpose after every update.
struct BeliefState {
  RobotState mean;
  Matrix5d cov{Matrix5d::Zero()};

  void symmetrize() { cov = (0.5 * (cov + cov.transpose())).eval(); }
};

// Ensemble GP output for one step: correction mean and covariance on (v, omega).
struct GaussianCorrection {
  Eigen::Vector2d mean{Eigen::Vector2d::Zero()};
  Eigen::Matrix2d cov{Eigen::Matrix2d::Zero()};

  double trace() const { return cov(0, 0) + cov(1, 1); }
};

// Point on the M-simplex combining per-terrain GP outputs.
struct TerrainWeights {
  Eigen::VectorXd w;

  static TerrainWeights uniform(int m) {
    TerrainWeights t;
    t.w = Eigen::VectorXd::Constant(m, 1.0 / m);
    return t;
  }

  int size() const { return static_cast<int>(w.size()); }

  bool on_simplex(double tol = 1e-9) const {
    if (w.size() == 0) return false;
    if (std::abs(w.sum() - 1.0) > tol) return false;
    return (w.array() >= -tol).all() && (w.array() <= 1.0 + tol).all();
  }
};

// World displacement (to - from) rotated by -from.theta into from's body frame.
// Returns (longitudinal, lateral) in meters.
inline Eigen::Vector2d body_frame_displacement(const RobotState& from, const RobotState& to) {
  if (!from.finite() || !to.finite()) {
    throw std::invalid_argument("body_frame_displacement: non-finite state");
  }
  const double dx = to.x - from.x;
  const double dy = to.y - from.y;
  const double c = std::cos(from.theta);
  const double s = std::sin(from.theta);
  return {c * dx + s * dy, -s * dx + c * dy};
}

}  // namespace gpmppi
