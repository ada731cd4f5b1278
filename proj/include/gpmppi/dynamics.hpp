#pragma once

#include <string>

#include "gpmppi/core.hpp"
#include "gpmppi/rng.hpp"

namespace gpmppi {

// Nominal dynamic-unicycle parameters: first-order velocity lags toward the
// commanded values, integrated at a fixed control rate.
struct NominalParams {
  double tau_v{0.5};      // linear-velocity time constant [s]
  double tau_omega{0.35}; // angular-velocity time constant [s]
  double dt{0.05};        // time step [s], 20 Hz

  void validate() const;
};

// Synthetic ground-truth terrain response. Stands in for measured multi-terrain
// data: steady-state command gains, true lag constants, curvature-dependent
// yaw attenuation and per-step velocity noise.
struct TerrainProfile {
  std::string name;
  double gain_v{1.0};            // steady-state linear gain
  double gain_omega{1.0};        // steady-state angular gain
  double tau_v_true{0.5};        // true linear time constant [s]
  double tau_omega_true{0.35};   // true angular time constant [s]
  double curvature_slip_c{0.0};  // yaw attenuation per unit speed [s/m]
  double noise_std_v{0.0};       // [m/s]
  double noise_std_omega{0.0};   // [rad/s]

  void validate() const;
};

// Extended differential drive with five slip/ICR parameters.
struct Edd5Params {
  double alpha_l{1.0};  // left wheel slip scale
  double alpha_r{1.0};  // right wheel slip scale
  double x_icr{0.0};    // longitudinal ICR offset [m]
  double y_icr_l{0.0};  // lateral ICR of left wheel train [m], < 0
  double y_icr_r{0.0};  // lateral ICR of right wheel train [m], > 0

  static Edd5Params ideal(double track_width) {
    return {1.0, 1.0, 0.0, -0.5 * track_width, 0.5 * track_width};
  }
};

// Constant-twist pose advance over dt for body velocities (vx, vy, omega).
// Exact arc for meaningful |omega|, second-order Taylor expansion below the
// threshold so the body-lateral component survives as omega -> 0.
void arc_advance(double& x, double& y, double& theta, double vx, double vy, double omega,
                 double dt);

// Nominal model: first-order lag on (v, omega), pose advanced by the exact arc
// of the current velocities.
RobotState step_nominal(const RobotState& s, const Control& u, const NominalParams& p);

// Gradient of step_nominal with respect to the state, evaluated at (s, u).
Matrix5d jacobian_nominal(const RobotState& s, const Control& u, const NominalParams& p);

// Baseline: velocities track commands instantly.
RobotState step_kinematic_unicycle(const RobotState& s, const Control& u, double dt);

// Baseline: EDD5 skid-steer kinematics. Commanded wheel speeds are scaled by
// the slip factors and body velocities recovered from the ICR parameters;
// the pose update includes the lateral component v_y = x_icr * omega.
RobotState step_edd5(const RobotState& s, const Control& u, const Edd5Params& p,
                     double track_width, double dt);

// Ground-truth step used by the closed-loop simulator. Draws one Gaussian pair
// from rng: (v-noise, omega-noise), in that order.
RobotState step_true_terrain(const RobotState& s, const Control& u, const TerrainProfile& t,
                             RngStream& rng, double dt);

// Residual training set: 4-D inputs (v, omega, v_ref, omega_ref) and 2-D
// outputs (true next velocities minus nominal next velocities).
struct TrainingData {
  Eigen::MatrixXd inputs;     // n x 4
  Eigen::MatrixXd residuals;  // n x 2
};

// Excites the true-terrain simulator with randomized persistent commands
// (each command held for a uniform number of steps in [hold_min, hold_max]).
TrainingData generate_training_data(const TerrainProfile& profile, const NominalParams& nominal,
                                    const ControlBounds& bounds, int n_points, RngStream& rng,
                                    int hold_min = 5, int hold_max = 20);

// Least-squares EDD5 fit from residual training data. Measured next-step
// velocities are reconstructed from the nominal prediction plus the stored
// residual; the five parameters are recovered from two 2-parameter linear
// fits on commanded wheel speeds. The planar dataset carries no lateral
// velocity, so x_icr comes out zero.
Edd5Params fit_edd5(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& residuals,
                    const NominalParams& nominal, double track_width);

}  // namespace gpmppi
