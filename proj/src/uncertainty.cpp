#include "gpmppi/uncertainty.hpp"

#include <cmath>
#include <stdexcept>

namespace gpmppi {

double chi2_quantile_2dof(double p) {
  if (!(p >= 0.0) || p >= 1.0) {
    throw std::invalid_argument("chi2_quantile_2dof: p must lie in [0, 1)");
  }
  return -2.0 * std::log1p(-p);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

namespace {
// Acklam's rational approximation to the inverse normal CDF (~1e-9 absolute).
double normal_quantile_approx(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}
}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0)) {
    throw std::invalid_argument("normal_quantile: p must lie in (0, 1)");
  }
  double x = normal_quantile_approx(p);
  // One Newton step on Phi(x) = p.
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
  if (pdf > 1e-300) {
    x -= (normal_cdf(x) - p) / pdf;
  }
  return x;
}

double lambda_max_2x2(const Eigen::Matrix2d& m) {
  const double half_tr = 0.5 * (m(0, 0) + m(1, 1));
  const double det_disc = 0.25 * (m(0, 0) - m(1, 1)) * (m(0, 0) - m(1, 1)) + m(0, 1) * m(1, 0);
  return half_tr + std::sqrt(std::max(det_disc, 0.0));
}

QuantileTables QuantileTables::make(double p_x) {
  if (!(p_x > 0.5) || !(p_x < 1.0)) {
    throw std::invalid_argument("QuantileTables: p_x must lie in (0.5, 1)");
  }
  return {p_x, chi2_quantile_2dof(p_x), normal_quantile(p_x)};
}

BeliefState propagate_belief(const BeliefState& b, const Control& u,
                             const GaussianCorrection& corr, const NominalParams& p) {
  BeliefState next;
  next.mean = step_nominal(b.mean, u, p);
  next.mean.v += corr.mean(0);
  next.mean.omega += corr.mean(1);

  const Matrix5d jac = jacobian_nominal(b.mean, u, p);
  next.cov.noalias() = jac * b.cov * jac.transpose();
  next.cov(3, 3) += corr.cov(0, 0);
  next.cov(4, 4) += corr.cov(1, 1);
  next.symmetrize();
  return next;
}

double tighten_lane_radius(double r, const Eigen::Matrix2d& cov_xy, const QuantileTables& q) {
  if (!(r > 0.0)) {
    throw std::invalid_argument("tighten_lane_radius: r must be positive");
  }
  const double lmax = std::max(lambda_max_2x2(cov_xy), 0.0);
  return r - std::sqrt(q.chi2_2 * lmax);
}

ObstacleTightening tighten_obstacle_distance(const Eigen::Vector2d& robot_xy,
                                             const Eigen::Vector2d& center, double radius,
                                             const Eigen::Matrix2d& cov_xy,
                                             const QuantileTables& q) {
  ObstacleTightening out;
  const Eigen::Vector2d diff = robot_xy - center;
  const double dist = diff.norm();
  if (dist < 1e-12) {
    out.degenerate = true;
    out.normal = Eigen::Vector2d::UnitX();
    out.d = -radius;
  } else {
    out.normal = diff / dist;
    out.d = dist - radius;
  }
  const double dir_var = std::max(out.normal.dot(cov_xy * out.normal), 0.0);
  out.d_bar = out.d - q.z * std::sqrt(dir_var);
  return out;
}

}  // namespace gpmppi
