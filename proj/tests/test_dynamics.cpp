#include <doctest.h>

#include <cmath>

#include "gpmppi/dynamics.hpp"
#include "gpmppi/rng.hpp"

using namespace gpmppi;

namespace {

RobotState random_state(RngStream& rng) {
  return {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3, 3), rng.uniform(-0.5, 2.0),
          rng.uniform(-2, 2)};
}

// Central finite differences of step_nominal with angle-aware theta rows.
Matrix5d jacobian_fd(const RobotState& s, const Control& u, const NominalParams& p, double h) {
  Matrix5d J;
  for (int col = 0; col < 5; ++col) {
    Vector5d lo = s.vec(), hi = s.vec();
    hi(col) += h;
    lo(col) -= h;
    const Vector5d f_hi = step_nominal(RobotState::from_vec(hi), u, p).vec();
    const Vector5d f_lo = step_nominal(RobotState::from_vec(lo), u, p).vec();
    for (int row = 0; row < 5; ++row) {
      double diff = f_hi(row) - f_lo(row);
      if (row == 2) diff = std::remainder(diff, 2.0 * kPi);
      J(row, col) = diff / (2.0 * h);
    }
  }
  return J;
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("step_nominal worked examples") {
  NominalParams p{0.5, 0.35, 0.05};
  SUBCASE("fixed point at rest") {
    const RobotState s{0, 0, 0, 0, 0};
    const RobotState n = step_nominal(s, {0, 0}, p);
    CHECK(n.x == 0.0);
    CHECK(n.y == 0.0);
    CHECK(n.v == 0.0);
    CHECK(n.omega == 0.0);
  }
  SUBCASE("lag fixed point plus straight arc") {
    const RobotState n = step_nominal({0, 0, 0, 1, 0}, {1, 0}, p);
    CHECK(n.v == doctest::Approx(1.0));
    CHECK(n.x == doctest::Approx(0.05));
    CHECK(n.y == doctest::Approx(0.0));
  }
  SUBCASE("lag from rest") {
    const RobotState n = step_nominal({0, 0, 0, 0, 0}, {2, 0}, p);
    CHECK(n.v == doctest::Approx(0.2));
    CHECK(n.x == doctest::Approx(0.0));
  }
}

TEST_CASE("step_nominal contracts velocities toward commands") {
  NominalParams p{0.5, 0.35, 0.05};
  RngStream rng(3);
  for (int i = 0; i < 100; ++i) {
    const RobotState s = random_state(rng);
    const Control u{rng.uniform(-0.5, 2.0), rng.uniform(-2, 2)};
    const RobotState n = step_nominal(s, u, p);
    CHECK(std::abs(n.v - u.v_ref) ==
          doctest::Approx((1.0 - p.dt / p.tau_v) * std::abs(s.v - u.v_ref)).epsilon(1e-12));
    CHECK(std::abs(n.omega - u.omega_ref) ==
          doctest::Approx((1.0 - p.dt / p.tau_omega) * std::abs(s.omega - u.omega_ref))
              .epsilon(1e-12));
  }
}

TEST_CASE("exact arc: chord never exceeds arc length") {
  NominalParams p{0.5, 0.35, 0.05};
  RngStream rng(5);
  for (int i = 0; i < 300; ++i) {
    const RobotState s = random_state(rng);
    const RobotState n = step_nominal(s, {0, 0}, p);
    const double chord = std::hypot(n.x - s.x, n.y - s.y);
    CHECK(chord <= std::abs(s.v) * p.dt + 1e-12);
    if (std::abs(s.omega) < 1e-9) {
      CHECK(chord == doctest::Approx(std::abs(s.v) * p.dt).epsilon(1e-9));
    }
  }
}

TEST_CASE("jacobian velocity rows") {
  NominalParams p{0.5, 0.35, 0.05};
  const Matrix5d J = jacobian_nominal({1, 2, 0.3, 1.0, 0.2}, {1, 0}, p);
  CHECK(J(3, 3) == doctest::Approx(0.9));
  CHECK(J(4, 4) == doctest::Approx(1.0 - 0.05 / 0.35));
}

TEST_CASE("jacobian position/velocity entry in the omega->0 limit") {
  NominalParams p{0.5, 0.35, 0.05};
  const RobotState s{0, 0, 0.7, 1.0, 0.0};
  const Matrix5d J = jacobian_nominal(s, {1, 0}, p);
  CHECK(J(0, 3) == doctest::Approx(p.dt * std::cos(0.7)).epsilon(1e-9));
  CHECK(J(1, 3) == doctest::Approx(p.dt * std::sin(0.7)).epsilon(1e-9));
}

TEST_CASE("jacobian matches central finite differences") {
  NominalParams p{0.5, 0.35, 0.05};
  RngStream rng(17);
  for (int i = 0; i < 100; ++i) {
    const RobotState s = random_state(rng);
    const Control u{rng.uniform(-0.5, 2.0), rng.uniform(-2, 2)};
    const Matrix5d J = jacobian_nominal(s, u, p);
    const Matrix5d Jfd = jacobian_fd(s, u, p, 1e-6);
    const double scale = std::max(1.0, Jfd.cwiseAbs().maxCoeff());
    CHECK((J - Jfd).cwiseAbs().maxCoeff() / scale <= 1e-6);
  }
}

TEST_CASE("kinematic unicycle examples") {
  SUBCASE("at rest") {
    const RobotState n = step_kinematic_unicycle({1, 1, 0.5, 0.7, 0.1}, {0, 0}, 1.0);
    CHECK(n.x == 1.0);
    CHECK(n.y == 1.0);
    CHECK(n.v == 0.0);
    CHECK(n.omega == 0.0);
  }
  SUBCASE("unit straight line") {
    const RobotState n = step_kinematic_unicycle({0, 0, 0, 0, 0}, {1, 0}, 1.0);
    CHECK(n.x == doctest::Approx(1.0));
  }
  SUBCASE("half circle of radius 1") {
    const RobotState n = step_kinematic_unicycle({0, 0, 0, 0, 0}, {kPi, kPi}, 1.0);
    CHECK(n.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(n.y == doctest::Approx(2.0));
    CHECK(n.theta == doctest::Approx(kPi));
  }
}

TEST_CASE("edd5 with ideal parameters reduces to the unicycle") {
  const double width = 0.37;
  const Edd5Params ideal = Edd5Params::ideal(width);
  RngStream rng(23);
  for (int i = 0; i < 200; ++i) {
    const RobotState s = random_state(rng);
    const Control u{rng.uniform(-0.5, 2.0), rng.uniform(-2, 2)};
    const RobotState a = step_edd5(s, u, ideal, width, 0.05);
    const RobotState b = step_kinematic_unicycle(s, u, 0.05);
    CHECK(std::abs(a.x - b.x) <= 1e-12);
    CHECK(std::abs(a.y - b.y) <= 1e-12);
    CHECK(std::abs(a.theta - b.theta) <= 1e-12);
    CHECK(std::abs(a.v - b.v) <= 1e-12);
    CHECK(std::abs(a.omega - b.omega) <= 1e-12);
  }
}

TEST_CASE("edd5 symmetric slip scales straight commands") {
  const double width = 0.37;
  Edd5Params p = Edd5Params::ideal(width);
  p.alpha_l = p.alpha_r = 0.9;
  const RobotState n = step_edd5({0, 0, 0, 0, 0}, {1.5, 0.0}, p, width, 0.05);
  CHECK(n.v == doctest::Approx(0.9 * 1.5));
  CHECK(n.omega == doctest::Approx(0.0));
}

TEST_CASE("edd5 rejects a degenerate ICR span") {
  Edd5Params p = Edd5Params::ideal(0.37);
  p.y_icr_l = 0.1;
  p.y_icr_r = 0.1;
  CHECK_THROWS_AS(step_edd5({0, 0, 0, 0, 0}, {1, 0}, p, 0.37, 0.05), std::invalid_argument);
}

TEST_CASE("true terrain degenerates to nominal") {
  NominalParams nom{0.5, 0.35, 0.05};
  TerrainProfile t{"ideal", 1.0, 1.0, 0.5, 0.35, 0.0, 0.0, 0.0};
  RngStream rng(1);
  const RobotState s{0.2, -0.1, 0.4, 1.2, 0.3};
  const Control u{1.0, 0.5};
  const RobotState a = step_true_terrain(s, u, t, rng, nom.dt);
  const RobotState b = step_nominal(s, u, nom);
  CHECK(a.x == doctest::Approx(b.x).epsilon(1e-15));
  CHECK(a.v == doctest::Approx(b.v).epsilon(1e-15));
  CHECK(a.omega == doctest::Approx(b.omega).epsilon(1e-15));
}

TEST_CASE("true terrain steady states") {
  TerrainProfile t{"g", 0.8, 1.0, 0.5, 0.35, 0.5, 0.0, 0.0};
  RngStream rng(1);
  SUBCASE("linear gain fixed point") {
    RobotState s{0, 0, 0, 0, 0};
    for (int i = 0; i < 4000; ++i) s = step_true_terrain(s, {2, 0}, t, rng, 0.05);
    CHECK(s.v == doctest::Approx(1.6).epsilon(1e-9));
  }
  SUBCASE("curvature attenuation at speed") {
    RobotState s{0, 0, 0, 2.0, 0};
    for (int i = 0; i < 4000; ++i) {
      s = step_true_terrain(s, {2.0 / 0.8, 1.0}, t, rng, 0.05);  // hold v at 2
    }
    CHECK(s.v == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(s.omega == doctest::Approx(1.0 / (1.0 + 0.5 * 2.0)).epsilon(1e-6));
  }
}

TEST_CASE("training data determinism and shape") {
  NominalParams nom{0.5, 0.35, 0.05};
  TerrainProfile t{"grass", 0.82, 0.8, 0.7, 0.5, 0.35, 0.02, 0.04};
  ControlBounds bounds;
  RngStream r1(99), r2(99);
  const TrainingData a = generate_training_data(t, nom, bounds, 300, r1);
  const TrainingData b = generate_training_data(t, nom, bounds, 300, r2);
  CHECK(a.inputs.rows() == 300);
  CHECK(a.residuals.rows() == 300);
  CHECK(a.inputs == b.inputs);
  CHECK(a.residuals == b.residuals);
  for (int i = 0; i < 300; ++i) {
    CHECK(a.inputs(i, 2) >= bounds.lo.v_ref);
    CHECK(a.inputs(i, 2) <= bounds.hi.v_ref);
    CHECK(a.inputs(i, 3) >= bounds.lo.omega_ref);
    CHECK(a.inputs(i, 3) <= bounds.hi.omega_ref);
  }
}

TEST_CASE("training residuals vanish on the nominal-equivalent profile") {
  NominalParams nom{0.5, 0.35, 0.05};
  TerrainProfile t{"ideal", 1.0, 1.0, 0.5, 0.35, 0.0, 0.0, 0.0};
  ControlBounds bounds;
  RngStream rng(4);
  const TrainingData d = generate_training_data(t, nom, bounds, 64, rng);
  CHECK(d.residuals.cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("edd5 least squares recovers ideal parameters from ideal data") {
  // Build a synthetic dataset whose measured velocities are exactly the
  // unicycle response, then check the fit returns the ideal geometry.
  NominalParams nom{0.5, 0.35, 0.05};
  const double width = 0.37;
  RngStream rng(31);
  const int n = 200;
  Eigen::MatrixXd inputs(n, 4), residuals(n, 2);
  for (int i = 0; i < n; ++i) {
    const double v = rng.uniform(-0.5, 2.0);
    const double w = rng.uniform(-2, 2);
    const double vr = rng.uniform(-0.5, 2.0);
    const double wr = rng.uniform(-2, 2);
    inputs.row(i) << v, w, vr, wr;
    const double v_nom = v + (nom.dt / nom.tau_v) * (vr - v);
    const double w_nom = w + (nom.dt / nom.tau_omega) * (wr - w);
    residuals.row(i) << vr - v_nom, wr - w_nom;  // measured = commanded exactly
  }
  const Edd5Params p = fit_edd5(inputs, residuals, nom, width);
  CHECK(p.alpha_l == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p.alpha_r == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p.y_icr_l == doctest::Approx(-width / 2).epsilon(1e-9));
  CHECK(p.y_icr_r == doctest::Approx(width / 2).epsilon(1e-9));
  CHECK(p.x_icr == 0.0);
}

}  // TEST_SUITE
