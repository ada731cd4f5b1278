#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "gpmppi/harness.hpp"
#include "gpmppi/uncertainty.hpp"

namespace py = pybind11;
using namespace gpmppi;

namespace {

ExperimentConfig config_from_arg(const std::string& config_path) {
  return config_path.empty() ? default_config() : load_config(config_path);
}

py::dict metrics_to_dict(const RunMetrics& m) {
  py::dict d;
  d["rmse"] = m.rmse;
  d["success"] = m.success;
  d["time_to_goal"] = m.time_to_goal;
  d["min_obstacle_clearance"] = m.min_obstacle_clearance;
  d["mean_speed"] = m.mean_speed;
  d["collision_count"] = m.collision_count;
  d["ticks"] = m.ticks;
  d["aborted"] = m.aborted;
  d["abort_reason"] = m.abort_reason;
  d["latency_median_ms"] = m.latency.median_ms;
  return d;
}

}  // namespace

PYBIND11_MODULE(_gpmppi, m) {
  m.doc() = "Chance-constrained GP-MPPI planner for skid-steer robots";

  // core
  m.def("wrap_angle", &wrap_angle, py::arg("angle"));
  m.def(
      "body_frame_displacement",
      [](const Eigen::Vector2d& from_xy, double from_theta, const Eigen::Vector2d& to_xy) {
        RobotState a{from_xy(0), from_xy(1), from_theta, 0, 0};
        RobotState b{to_xy(0), to_xy(1), 0, 0, 0};
        return body_frame_displacement(a, b);
      },
      py::arg("from_xy"), py::arg("from_theta"), py::arg("to_xy"));

  // dynamics
  py::class_<NominalParams>(m, "NominalParams")
      .def(py::init<>())
      .def(py::init([](double tau_v, double tau_omega, double dt) {
             NominalParams p{tau_v, tau_omega, dt};
             p.validate();
             return p;
           }),
           py::arg("tau_v") = 0.5, py::arg("tau_omega") = 0.35, py::arg("dt") = 0.05)
      .def_readwrite("tau_v", &NominalParams::tau_v)
      .def_readwrite("tau_omega", &NominalParams::tau_omega)
      .def_readwrite("dt", &NominalParams::dt);

  m.def(
      "step_nominal",
      [](const Eigen::Matrix<double, 5, 1>& state, const Eigen::Vector2d& control,
         const NominalParams& p) {
        return step_nominal(RobotState::from_vec(state), {control(0), control(1)}, p).vec();
      },
      py::arg("state"), py::arg("control"), py::arg("params"));
  m.def(
      "step_kinematic_unicycle",
      [](const Eigen::Matrix<double, 5, 1>& state, const Eigen::Vector2d& control, double dt) {
        return step_kinematic_unicycle(RobotState::from_vec(state), {control(0), control(1)}, dt)
            .vec();
      },
      py::arg("state"), py::arg("control"), py::arg("dt"));
  m.def(
      "jacobian_nominal",
      [](const Eigen::Matrix<double, 5, 1>& state, const Eigen::Vector2d& control,
         const NominalParams& p) {
        return jacobian_nominal(RobotState::from_vec(state), {control(0), control(1)}, p);
      },
      py::arg("state"), py::arg("control"), py::arg("params"));

  // gp
  py::class_<KernelParams>(m, "KernelParams")
      .def(py::init<>())
      .def(py::init([](double signal_var, const Eigen::Vector4d& lengthscales, double noise_var) {
             KernelParams p{signal_var, lengthscales, noise_var};
             p.validate();
             return p;
           }),
           py::arg("signal_var"), py::arg("lengthscales"), py::arg("noise_var"))
      .def_readwrite("signal_var", &KernelParams::signal_var)
      .def_readwrite("lengthscales", &KernelParams::lengthscales)
      .def_readwrite("noise_var", &KernelParams::noise_var);

  py::class_<GpModel>(m, "GpModel")
      .def_static(
          "fit",
          [](const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& outputs,
             const std::vector<KernelParams>& kernels) {
            return GpModel::fit(inputs, outputs, kernels);
          },
          py::arg("inputs"), py::arg("outputs"), py::arg("kernels"))
      .def("predict",
           [](const GpModel& model, const Eigen::Vector4d& q) {
             const auto pred = model.predict(q);
             return py::make_tuple(pred.mean, pred.var);
           })
      .def("predict_batch",
           [](const GpModel& model, const Eigen::MatrixXd& queries) {
             const auto pred = model.predict_batch(queries);
             return py::make_tuple(pred.mean, pred.var);
           })
      .def_property_readonly("n_points", &GpModel::n_points)
      .def_property_readonly("n_outputs", &GpModel::n_outputs)
      .def("log_marginal_likelihood", &GpModel::log_marginal_likelihood)
      .def("save", py::overload_cast<const std::string&>(&GpModel::save, py::const_))
      .def_static("load", py::overload_cast<const std::string&>(&GpModel::load));

  m.def("kernel_eval", &kernel_eval, py::arg("a"), py::arg("b"), py::arg("params"));
  m.def("select_kernel_grid", &select_kernel_grid, py::arg("inputs"), py::arg("outputs"));
  m.def(
      "ensemble_combine",
      [](const Eigen::MatrixX2d& means, const Eigen::MatrixX2d& var_diags,
         const Eigen::VectorXd& weights) {
        TerrainWeights w;
        w.w = weights;
        const GaussianCorrection c = ensemble_combine(means, var_diags, w);
        return py::make_tuple(c.mean, c.cov);
      },
      py::arg("means"), py::arg("var_diags"), py::arg("weights"));

  // terrain
  m.def("project_simplex", &project_simplex, py::arg("z"));
  m.def(
      "solve_terrain_weights",
      [](const Eigen::MatrixXd& f_v, const Eigen::MatrixXd& f_omega, const Eigen::VectorXd& y_v,
         const Eigen::VectorXd& y_omega, const Eigen::VectorXd& prev, double gamma) {
        const auto rows = static_cast<int>(f_v.rows());
        const auto m_terrains = static_cast<int>(f_v.cols());
        HistoryBuffer buf(std::max(rows, 1), m_terrains);
        for (int r = 0; r < rows; ++r) {
          Eigen::MatrixX2d pred(m_terrains, 2);
          pred.col(0) = f_v.row(r).transpose();
          pred.col(1) = f_omega.row(r).transpose();
          buf.push({y_v(r), y_omega(r)}, pred);
        }
        TerrainWeights p;
        p.w = prev;
        WeightSolverConfig cfg;
        cfg.gamma = gamma;
        const auto res = solve_weights(buf, p, cfg);
        return py::make_tuple(res.weights.w, res.objective);
      },
      py::arg("f_v"), py::arg("f_omega"), py::arg("y_v"), py::arg("y_omega"), py::arg("prev"),
      py::arg("gamma") = 0.1);

  // uncertainty
  m.def("chi2_quantile_2dof", &chi2_quantile_2dof, py::arg("p"));
  m.def("normal_quantile", &normal_quantile, py::arg("p"));
  m.def("normal_cdf", &normal_cdf, py::arg("x"));
  m.def(
      "tighten_lane_radius",
      [](double r, const Eigen::Matrix2d& cov_xy, double p_x) {
        return tighten_lane_radius(r, cov_xy, QuantileTables::make(p_x));
      },
      py::arg("r"), py::arg("cov_xy"), py::arg("p_x") = 0.95);
  m.def(
      "tighten_obstacle_distance",
      [](const Eigen::Vector2d& robot_xy, const Eigen::Vector2d& center, double radius,
         const Eigen::Matrix2d& cov_xy, double p_x) {
        const auto t = tighten_obstacle_distance(robot_xy, center, radius, cov_xy,
                                                 QuantileTables::make(p_x));
        return py::make_tuple(t.d_bar, t.normal, t.degenerate);
      },
      py::arg("robot_xy"), py::arg("center"), py::arg("radius"), py::arg("cov_xy"),
      py::arg("p_x") = 0.95);

  // harness
  m.def("default_config_json", [] { return dump_config(default_config()); });
  m.def(
      "run_tracking",
      [](const std::string& config_path, std::uint64_t seed, const std::string& planner) {
        ExperimentConfig cfg = config_from_arg(config_path);
        cfg.seed = seed;
        if (!planner.empty()) cfg.planner = planner_kind_from_string(planner);
        cfg.scenario.kind = "tracking";
        const TrainedModels models =
            cfg.planner == PlannerKind::Unicycle ? TrainedModels{} : train_models(cfg, seed);
        const Scenario scenario = make_scenario(cfg, seed);
        return metrics_to_dict(run_tracking_experiment(cfg, scenario, models, seed));
      },
      py::arg("config_path") = "", py::arg("seed") = 0, py::arg("planner") = "");
  m.def(
      "run_avoidance",
      [](const std::string& config_path, std::uint64_t seed, const std::string& planner) {
        ExperimentConfig cfg = config_from_arg(config_path);
        cfg.seed = seed;
        if (!planner.empty()) cfg.planner = planner_kind_from_string(planner);
        cfg.scenario.kind = "avoidance";
        const TrainedModels models =
            cfg.planner == PlannerKind::Unicycle ? TrainedModels{} : train_models(cfg, seed);
        const Scenario scenario = make_scenario(cfg, seed);
        return metrics_to_dict(run_avoidance_experiment(cfg, scenario, models, seed));
      },
      py::arg("config_path") = "", py::arg("seed") = 0, py::arg("planner") = "");
  m.def(
      "benchmark_csv",
      [](const std::string& config_path, std::uint64_t seed) {
        ExperimentConfig cfg = config_from_arg(config_path);
        cfg.seed = seed;
        const TrainedModels models = train_models(cfg, seed);
        std::ostringstream os;
        benchmark_suite(cfg, models, os);
        return os.str();
      },
      py::arg("config_path") = "", py::arg("seed") = 0);
}
