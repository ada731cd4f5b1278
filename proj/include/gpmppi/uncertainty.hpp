#pragma once

#include "gpmppi/core.hpp"
#include "gpmppi/dynamics.hpp"

namespace gpmppi {

// Chi-squared quantile with two degrees of freedom: -2 ln(1 - p).
double chi2_quantile_2dof(double p);

// Standard normal CDF via erfc.
double normal_cdf(double x);

// Standard normal quantile: rational approximation polished by one Newton
// step on the CDF; well inside 1e-6 absolute everywhere in (0, 1).
double normal_quantile(double p);

// Largest eigenvalue of a symmetric 2x2 matrix, closed form.
double lambda_max_2x2(const Eigen::Matrix2d& m);

// Precomputed quantiles for a probability threshold p_x in (0.5, 1).
struct QuantileTables {
  double p_x{0.95};
  double chi2_2{0.0};  // chi-squared quantile, 2 dof
  double z{0.0};       // normal quantile

  static QuantileTables make(double p_x);
};

// One step of first-order belief propagation through the GP-corrected
// dynamics: the mean runs through the nominal model plus the correction mean;
// the covariance through the nominal Jacobian plus the correction covariance
// diagonal on the velocity states. Symmetry is re-enforced.
BeliefState propagate_belief(const BeliefState& b, const Control& u,
                             const GaussianCorrection& corr, const NominalParams& p);

// Tightened lane half-width: r - sqrt(chi2_2(p_x) * lambda_max(cov_xy)).
// May return a non-positive value; callers treat that as infeasible and let
// the violation cost take over.
double tighten_lane_radius(double r, const Eigen::Matrix2d& cov_xy, const QuantileTables& q);

struct ObstacleTightening {
  double d{0.0};      // signed distance to the obstacle boundary, negative inside
  double d_bar{0.0};  // tightened signed distance; collision-free iff > 0
  Eigen::Vector2d normal{Eigen::Vector2d::UnitX()};
  bool degenerate{false};  // robot exactly at the obstacle center
};

// Tightened signed distance to a circular obstacle: d_bar = d - z * sqrt(n' S n)
// with n the unit direction through the closest boundary point.
ObstacleTightening tighten_obstacle_distance(const Eigen::Vector2d& robot_xy,
                                             const Eigen::Vector2d& center, double radius,
                                             const Eigen::Matrix2d& cov_xy,
                                             const QuantileTables& q);

}  // namespace gpmppi
