#include "gpmppi/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace gpmppi {

namespace {
constexpr double kArcOmegaEps = 1e-6;  // [rad/s] switch to the Taylor fallback

void check_finite(const RobotState& s, const Control& u, const char* where) {
  if (!s.finite() || !u.finite()) {
    throw std::invalid_argument(std::string(where) + ": non-finite input");
  }
}
}  // namespace

void NominalParams::validate() const {
  if (!(tau_v > 0.0) || !(tau_omega > 0.0)) {
    throw std::invalid_argument("NominalParams: time constants must be positive");
  }
  if (!(dt > 0.0) || dt >= std::min(tau_v, tau_omega)) {
    throw std::invalid_argument("NominalParams: require 0 < dt < min(tau_v, tau_omega)");
  }
}

void TerrainProfile::validate() const {
  if (!(gain_v > 0.0 && gain_v <= 1.2) || !(gain_omega > 0.0 && gain_omega <= 1.2)) {
    throw std::invalid_argument("TerrainProfile: gains must lie in (0, 1.2]");
  }
  if (!(tau_v_true > 0.0) || !(tau_omega_true > 0.0)) {
    throw std::invalid_argument("TerrainProfile: time constants must be positive");
  }
  if (noise_std_v < 0.0 || noise_std_omega < 0.0) {
    throw std::invalid_argument("TerrainProfile: noise stds must be >= 0");
  }
}

void arc_advance(double& x, double& y, double& theta, double vx, double vy, double omega,
                 double dt) {
  if (std::abs(omega) >= kArcOmegaEps) {
    const double s = std::sin(theta + omega * dt) - std::sin(theta);
    const double c = std::cos(theta + omega * dt) - std::cos(theta);
    x += (vx * s + vy * c) / omega;
    y += (-vx * c + vy * s) / omega;
  } else {
    const double c0 = std::cos(theta);
    const double s0 = std::sin(theta);
    const double half = 0.5 * omega * dt * dt;
    // Integral of cos/sin along the arc to second order in omega*dt.
    const double ix = dt * c0 - half * s0;
    const double iy = dt * s0 + half * c0;
    x += vx * ix - vy * iy;
    y += vx * iy + vy * ix;
  }
  theta = wrap_angle(theta + omega * dt);
}

RobotState step_nominal(const RobotState& s, const Control& u, const NominalParams& p) {
  check_finite(s, u, "step_nominal");
  RobotState n = s;
  arc_advance(n.x, n.y, n.theta, s.v, 0.0, s.omega, p.dt);
  n.v = s.v + (p.dt / p.tau_v) * (u.v_ref - s.v);
  n.omega = s.omega + (p.dt / p.tau_omega) * (u.omega_ref - s.omega);
  return n;
}

Matrix5d jacobian_nominal(const RobotState& s, const Control& u, const NominalParams& p) {
  check_finite(s, u, "jacobian_nominal");
  const double dt = p.dt;
  Matrix5d J = Matrix5d::Identity();
  if (std::abs(s.omega) >= kArcOmegaEps) {
    const double th1 = s.theta + s.omega * dt;
    const double ds = std::sin(th1) - std::sin(s.theta);
    const double dc = std::cos(th1) - std::cos(s.theta);
    const double vw = s.v / s.omega;
    J(0, 2) = vw * dc;
    J(0, 3) = ds / s.omega;
    J(0, 4) = vw * dt * std::cos(th1) - (s.v / (s.omega * s.omega)) * ds;
    J(1, 2) = vw * ds;
    J(1, 3) = -dc / s.omega;
    J(1, 4) = vw * dt * std::sin(th1) + (s.v / (s.omega * s.omega)) * dc;
  } else {
    const double c0 = std::cos(s.theta);
    const double s0 = std::sin(s.theta);
    const double half = 0.5 * s.omega * dt * dt;
    J(0, 2) = s.v * (-dt * s0 - half * c0);
    J(0, 3) = dt * c0 - half * s0;
    J(0, 4) = -0.5 * s.v * dt * dt * s0;
    J(1, 2) = s.v * (dt * c0 - half * s0);
    J(1, 3) = dt * s0 + half * c0;
    J(1, 4) = 0.5 * s.v * dt * dt * c0;
  }
  J(2, 4) = dt;
  J(3, 3) = 1.0 - dt / p.tau_v;
  J(4, 4) = 1.0 - dt / p.tau_omega;
  return J;
}

RobotState step_kinematic_unicycle(const RobotState& s, const Control& u, double dt) {
  check_finite(s, u, "step_kinematic_unicycle");
  RobotState n = s;
  n.v = u.v_ref;
  n.omega = u.omega_ref;
  arc_advance(n.x, n.y, n.theta, n.v, 0.0, n.omega, dt);
  return n;
}

RobotState step_edd5(const RobotState& s, const Control& u, const Edd5Params& p,
                     double track_width, double dt) {
  check_finite(s, u, "step_edd5");
  if (!(track_width > 0.0)) {
    throw std::invalid_argument("step_edd5: track_width must be positive");
  }
  const double span = p.y_icr_r - p.y_icr_l;
  if (span <= 1e-6) {
    throw std::invalid_argument("step_edd5: degenerate ICR span (y_icr_r - y_icr_l <= 1e-6)");
  }
  const double wl = p.alpha_l * (u.v_ref - 0.5 * track_width * u.omega_ref);
  const double wr = p.alpha_r * (u.v_ref + 0.5 * track_width * u.omega_ref);
  RobotState n = s;
  n.omega = (wr - wl) / span;
  n.v = (wr * p.y_icr_r - wl * p.y_icr_l) / span;
  const double vy = p.x_icr * n.omega;
  arc_advance(n.x, n.y, n.theta, n.v, vy, n.omega, dt);
  return n;
}

RobotState step_true_terrain(const RobotState& s, const Control& u, const TerrainProfile& t,
                             RngStream& rng, double dt) {
  check_finite(s, u, "step_true_terrain");
  RobotState n = s;
  arc_advance(n.x, n.y, n.theta, s.v, 0.0, s.omega, dt);
  const auto [nv, nw] = rng.gaussian_pair();
  const double omega_target = t.gain_omega * u.omega_ref / (1.0 + t.curvature_slip_c * std::abs(s.v));
  n.v = s.v + (dt / t.tau_v_true) * (t.gain_v * u.v_ref - s.v) + t.noise_std_v * nv;
  n.omega = s.omega + (dt / t.tau_omega_true) * (omega_target - s.omega) + t.noise_std_omega * nw;
  return n;
}

TrainingData generate_training_data(const TerrainProfile& profile, const NominalParams& nominal,
                                    const ControlBounds& bounds, int n_points, RngStream& rng,
                                    int hold_min, int hold_max) {
  if (n_points < 1) {
    throw std::invalid_argument("generate_training_data: n_points must be >= 1");
  }
  nominal.validate();
  profile.validate();
  TrainingData data;
  data.inputs.resize(n_points, 4);
  data.residuals.resize(n_points, 2);

  RobotState s;  // start at rest at the origin
  Control u;
  int hold = 0;
  for (int i = 0; i < n_points; ++i) {
    if (hold == 0) {
      u.v_ref = rng.uniform(bounds.lo.v_ref, bounds.hi.v_ref);
      u.omega_ref = rng.uniform(bounds.lo.omega_ref, bounds.hi.omega_ref);
      hold = rng.uniform_int(hold_min, hold_max);
    }
    --hold;
    data.inputs.row(i) << s.v, s.omega, u.v_ref, u.omega_ref;
    const RobotState nom = step_nominal(s, u, nominal);
    const RobotState truth = step_true_terrain(s, u, profile, rng, nominal.dt);
    data.residuals.row(i) << truth.v - nom.v, truth.omega - nom.omega;
    s = truth;
  }
  return data;
}

Edd5Params fit_edd5(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& residuals,
                    const NominalParams& nominal, double track_width) {
  const auto n = inputs.rows();
  if (n < 2 || residuals.rows() != n || inputs.cols() != 4 || residuals.cols() != 2) {
    throw std::invalid_argument("fit_edd5: need n >= 2 rows of 4-D inputs and 2-D residuals");
  }
  const double av = nominal.dt / nominal.tau_v;
  const double aw = nominal.dt / nominal.tau_omega;

  Eigen::MatrixXd wheels(n, 2);  // commanded (left, right) wheel speeds
  Eigen::VectorXd v_meas(n), w_meas(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = inputs(i, 0), omega = inputs(i, 1);
    const double v_ref = inputs(i, 2), omega_ref = inputs(i, 3);
    wheels(i, 0) = v_ref - 0.5 * track_width * omega_ref;
    wheels(i, 1) = v_ref + 0.5 * track_width * omega_ref;
    v_meas(i) = v + av * (v_ref - v) + residuals(i, 0);
    w_meas(i) = omega + aw * (omega_ref - omega) + residuals(i, 1);
  }

  const Eigen::Vector2d ab = wheels.colPivHouseholderQr().solve(v_meas);
  const Eigen::Vector2d cd = wheels.colPivHouseholderQr().solve(w_meas);
  if (std::abs(cd(0)) < 1e-9 || std::abs(cd(1)) < 1e-9) {
    throw std::runtime_error("fit_edd5: degenerate fit, angular response independent of a wheel");
  }
  Edd5Params p;
  p.y_icr_l = ab(0) / cd(0);
  p.y_icr_r = ab(1) / cd(1);
  const double span = p.y_icr_r - p.y_icr_l;
  if (span <= 1e-6) {
    throw std::runtime_error("fit_edd5: degenerate ICR span in fitted parameters");
  }
  p.alpha_l = -cd(0) * span;
  p.alpha_r = cd(1) * span;
  p.x_icr = 0.0;  // the planar dataset has no lateral velocity signal
  return p;
}

}  // namespace gpmppi
