#include "gpmppi/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "gpmppi/uncertainty.hpp"

namespace gpmppi {

namespace {

constexpr char kModelsMagic[8] = {'G', 'P', 'M', 'P', 'P', 'I', 'M', '1'};

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

LatencyStats summarize_latency(std::vector<double> ms) {
  LatencyStats out;
  if (ms.empty()) return out;
  out.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  out.max_ms = *std::max_element(ms.begin(), ms.end());
  std::sort(ms.begin(), ms.end());
  const std::size_t mid = ms.size() / 2;
  out.median_ms = ms.size() % 2 == 1 ? ms[mid] : 0.5 * (ms[mid - 1] + ms[mid]);
  return out;
}

PredictionModel make_prediction_model(const ExperimentConfig& cfg, const TrainedModels& models) {
  switch (cfg.planner) {
    case PlannerKind::Gp:
      if (!models.has_gp) {
        throw std::invalid_argument("gp planner requested but models carry no GP");
      }
      return GpEnsemble{&models.gp, static_cast<int>(cfg.terrains.size())};
    case PlannerKind::Edd5:
      return Edd5Baseline{models.edd5, cfg.track_width};
    case PlannerKind::Unicycle:
      return UnicycleBaseline{};
  }
  throw std::logic_error("make_prediction_model: bad planner kind");
}

Planner make_planner(const ExperimentConfig& cfg, const TrainedModels& models,
                     std::uint64_t seed) {
  MppiConfig mcfg = cfg.mppi;
  mcfg.seed = derive_seed(seed, 2);
  mcfg.threads = cfg.threads;
  return Planner(mcfg, make_prediction_model(cfg, models), cfg.nominal, cfg.p_x);
}

// Shared closed-loop state for both experiment kinds.
struct LoopState {
  RobotState truth;
  RngStream truth_rng;
  double t{0.0};
  double path_len{0.0};
  std::vector<Eigen::Vector2d> positions;
  std::vector<double> latencies;
};

void apply_truth_step(LoopState& ls, const ExperimentConfig& cfg, const Scenario& scenario,
                      const Control& u) {
  const int terrain = scenario.terrain_at(ls.t);
  const RobotState prev = ls.truth;
  ls.truth = step_true_terrain(prev, u, cfg.terrains[static_cast<std::size_t>(terrain)],
                               ls.truth_rng, cfg.nominal.dt);
  ls.t += cfg.nominal.dt;
  ls.path_len += (ls.truth.position() - prev.position()).norm();
  ls.positions.push_back(ls.truth.position());
}

// Terrain estimation hook: push the measured transition and re-solve weights.
void update_terrain_estimate(const ExperimentConfig& cfg, const TrainedModels& models,
                             const RobotState& prev, const Control& u, const RobotState& now,
                             HistoryBuffer& buf, TerrainWeights& w, Planner& planner) {
  const Eigen::Vector4d query(prev.v, prev.omega, u.v_ref, u.omega_ref);
  const Eigen::MatrixX2d pred = per_terrain_mean_prediction(models.gp, query, models.nominal);
  buf.push({now.v, now.omega}, pred);
  WeightSolverConfig scfg{cfg.estimator.gamma, cfg.estimator.max_iters, cfg.estimator.tol, 1.0};
  w = solve_weights(buf, w, scfg).weights;
  planner.set_terrain_weights(w);
}

void push_trace(Trace* trace, int tick, const LoopState& ls, const Control& u,
                const StepDiagnostics& diag, const TerrainWeights& w) {
  if (trace == nullptr) return;
  TraceRow row;
  row.tick = tick;
  row.t = ls.t;
  row.state = ls.truth;
  row.command = u;
  row.best_cost = diag.best_cost;
  row.mean_cost = diag.mean_cost;
  row.ess = diag.ess;
  row.entropy = diag.weight_entropy;
  row.terrain_weights = w.w;
  trace->push_back(row);
}

}  // namespace

int Scenario::terrain_at(double t) const {
  int current = schedule.front().terrain;
  for (const auto& e : schedule) {
    if (e.time_s <= t) current = e.terrain;
  }
  return current;
}

std::vector<CircleObstacle> random_obstacle_field(RngStream& rng, const RandomObstacleConfig& rc,
                                                  const Eigen::Vector2d& start,
                                                  const GoalSpec& goal) {
  if (rc.count < 0) {
    throw std::invalid_argument("random_obstacle_field: count must be >= 0");
  }
  if (!(rc.x_max > rc.x_min) || !(rc.y_max > rc.y_min) || !(rc.radius_max >= rc.radius_min) ||
      !(rc.radius_min > 0.0)) {
    throw std::invalid_argument("random_obstacle_field: bad bounds or radii");
  }
  std::vector<CircleObstacle> out;
  int attempts = 0;
  while (static_cast<int>(out.size()) < rc.count) {
    if (++attempts > 10000) {
      throw std::runtime_error("random_obstacle_field: rejection sampling exceeded 10000 attempts");
    }
    CircleObstacle o;
    o.center << rng.uniform(rc.x_min, rc.x_max), rng.uniform(rc.y_min, rc.y_max);
    o.radius = rng.uniform(rc.radius_min, rc.radius_max);
    if ((o.center - start).norm() < o.radius + rc.min_gap) continue;
    if ((o.center - goal.position).norm() < o.radius + goal.capture_radius + rc.min_gap) continue;
    out.push_back(o);
  }
  return out;
}

Scenario make_scenario(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto& sc = cfg.scenario;
  const auto& g = cfg.geometry;
  Scenario out;
  out.kind = sc.kind == "tracking" ? Scenario::Kind::Tracking : Scenario::Kind::Avoidance;
  out.v_desired = sc.v_desired;
  out.goal = sc.goal;
  out.schedule = sc.schedule;
  out.distance_budget = sc.distance_budget;
  out.max_duration = sc.max_duration;

  Eigen::Vector3d start;
  if (sc.track == "circle") {
    out.track = Track::circle_track(g.circle_center, g.circle_radius, g.circle_half_width);
    start << g.circle_center(0) + g.circle_radius, g.circle_center(1), 0.5 * kPi;
  } else if (sc.track == "square") {
    const double h = 0.5 * g.square_side;
    const Eigen::Vector2d c = g.square_center;
    out.track = Track::polyline_track(
        {c + Eigen::Vector2d(h, -h), c + Eigen::Vector2d(h, h), c + Eigen::Vector2d(-h, h),
         c + Eigen::Vector2d(-h, -h)},
        g.square_half_width, true);
    start << c(0), c(1) - h, 0.0;
  } else {
    out.track = Track::polyline_track({g.lane_from, g.lane_to}, g.lane_half_width, false);
    const Eigen::Vector2d dir = g.lane_to - g.lane_from;
    start << g.lane_from(0), g.lane_from(1), std::atan2(dir(1), dir(0));
  }
  if (out.kind == Scenario::Kind::Avoidance) {
    const Eigen::Vector2d origin(0.0, 0.0);
    const Eigen::Vector2d dir = sc.goal.position - origin;
    start << origin(0), origin(1), std::atan2(dir(1), dir(0));
  }
  if (sc.start.has_value()) start = *sc.start;
  out.start = RobotState{start(0), start(1), wrap_angle(start(2)), 0.0, 0.0};

  if (out.kind == Scenario::Kind::Avoidance) {
    if (sc.use_random_obstacles) {
      RngStream rng(derive_seed(seed, 3));
      out.obstacles = random_obstacle_field(rng, sc.random_obstacles, out.start.position(),
                                            out.goal);
    } else {
      out.obstacles = sc.obstacles;
    }
  }
  return out;
}

TrainedModels train_models(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int m = static_cast<int>(cfg.terrains.size());
  const int n = cfg.training.n_points;
  TrainedModels models;
  models.nominal = cfg.nominal;
  models.edd5 = Edd5Params::ideal(cfg.track_width);

  // Per-terrain excitation trajectories; the EDD5 baseline pools all of them.
  std::vector<TrainingData> per_terrain;
  per_terrain.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    RngStream rng(derive_seed(seed, 100 + static_cast<std::uint64_t>(i)));
    per_terrain.push_back(generate_training_data(cfg.terrains[static_cast<std::size_t>(i)],
                                                 cfg.nominal, cfg.mppi.bounds, n, rng,
                                                 cfg.training.hold_min, cfg.training.hold_max));
  }

  Eigen::MatrixXd edd_inputs(static_cast<Eigen::Index>(m) * n, 4);
  Eigen::MatrixXd edd_residuals(static_cast<Eigen::Index>(m) * n, 2);
  for (int i = 0; i < m; ++i) {
    edd_inputs.middleRows(static_cast<Eigen::Index>(i) * n, n) = per_terrain[static_cast<std::size_t>(i)].inputs;
    edd_residuals.middleRows(static_cast<Eigen::Index>(i) * n, n) =
        per_terrain[static_cast<std::size_t>(i)].residuals;
  }
  models.edd5 = fit_edd5(edd_inputs, edd_residuals, cfg.nominal, cfg.track_width);

  // Shared input set for the batch GP: n rows drawn round-robin from the
  // per-terrain trajectories, then every terrain's residual evaluated at each
  // shared input so the output matrix is n x 2M.
  Eigen::MatrixXd inputs(n, 4);
  for (int r = 0; r < n; ++r) {
    inputs.row(r) = per_terrain[static_cast<std::size_t>(r % m)].inputs.row(r);
  }
  Eigen::MatrixXd outputs(n, 2 * m);
  for (int i = 0; i < m; ++i) {
    RngStream rng(derive_seed(seed, 200 + static_cast<std::uint64_t>(i)));
    for (int r = 0; r < n; ++r) {
      const RobotState s{0.0, 0.0, 0.0, inputs(r, 0), inputs(r, 1)};
      const Control u{inputs(r, 2), inputs(r, 3)};
      const RobotState nom = step_nominal(s, u, cfg.nominal);
      const RobotState truth = step_true_terrain(s, u, cfg.terrains[static_cast<std::size_t>(i)],
                                                 rng, cfg.nominal.dt);
      outputs(r, 2 * i) = truth.v - nom.v;
      outputs(r, 2 * i + 1) = truth.omega - nom.omega;
    }
  }

  const KernelParams shared =
      cfg.gp.grid_search ? select_kernel_grid(inputs, outputs) : cfg.gp.fixed;
  models.gp = GpModel::fit(inputs, outputs, std::vector<KernelParams>(2 * m, shared));
  models.has_gp = true;
  return models;
}

void save_models(const std::string& path, const TrainedModels& models) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_models: cannot open " + path);
  os.write(kModelsMagic, sizeof(kModelsMagic));
  const double edd[5] = {models.edd5.alpha_l, models.edd5.alpha_r, models.edd5.x_icr,
                         models.edd5.y_icr_l, models.edd5.y_icr_r};
  os.write(reinterpret_cast<const char*>(edd), sizeof(edd));
  const double nom[3] = {models.nominal.tau_v, models.nominal.tau_omega, models.nominal.dt};
  os.write(reinterpret_cast<const char*>(nom), sizeof(nom));
  const char has_gp = models.has_gp ? 1 : 0;
  os.write(&has_gp, 1);
  if (models.has_gp) models.gp.save(os);
  if (!os) throw std::runtime_error("save_models: write failed for " + path);
}

TrainedModels load_models(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_models: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || !std::equal(magic, magic + 8, kModelsMagic)) {
    throw std::runtime_error("load_models: bad magic in " + path);
  }
  TrainedModels models;
  double edd[5], nom[3];
  is.read(reinterpret_cast<char*>(edd), sizeof(edd));
  is.read(reinterpret_cast<char*>(nom), sizeof(nom));
  char has_gp = 0;
  is.read(&has_gp, 1);
  if (!is) throw std::runtime_error("load_models: truncated file " + path);
  models.edd5 = {edd[0], edd[1], edd[2], edd[3], edd[4]};
  models.nominal = {nom[0], nom[1], nom[2]};
  models.has_gp = has_gp != 0;
  if (models.has_gp) models.gp = GpModel::load(is);
  return models;
}

double compute_rmse(const std::vector<Eigen::Vector2d>& path, const Track& track) {
  if (path.empty()) {
    throw std::invalid_argument("compute_rmse: empty path");
  }
  double sum = 0.0;
  for (const auto& p : path) {
    const double d = track.centerline_distance(p);
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(path.size()));
}

RunMetrics run_tracking_experiment(const ExperimentConfig& cfg, const Scenario& scenario,
                                   const TrainedModels& models, std::uint64_t seed, Trace* trace) {
  if (scenario.kind != Scenario::Kind::Tracking) {
    throw std::invalid_argument("run_tracking_experiment: scenario kind mismatch");
  }
  const int m = static_cast<int>(cfg.terrains.size());
  Planner planner = make_planner(cfg, models, seed);
  TrackingTask task{&scenario.track, scenario.v_desired, cfg.costs.tracking};

  LoopState ls{scenario.start, RngStream(derive_seed(seed, 1))};
  HistoryBuffer buf(cfg.estimator.history, m);
  TerrainWeights w = TerrainWeights::uniform(m);
  const bool estimate = cfg.planner == PlannerKind::Gp;
  if (estimate) planner.set_terrain_weights(w);

  RunMetrics metrics;
  const int max_ticks =
      static_cast<int>(std::ceil(scenario.max_duration / cfg.nominal.dt)) + 1;
  for (int tick = 0; tick < max_ticks && ls.path_len < scenario.distance_budget; ++tick) {
    StepDiagnostics diag;
    Control u;
    try {
      u = planner.plan_step(ls.truth, task, &diag);
    } catch (const std::exception& e) {
      metrics.aborted = true;
      metrics.abort_reason = e.what();
      break;
    }
    ls.latencies.push_back(diag.plan_ms);
    const RobotState prev = ls.truth;
    apply_truth_step(ls, cfg, scenario, u);
    ++metrics.ticks;
    if (!ls.truth.finite()) {
      metrics.aborted = true;
      metrics.abort_reason = "non-finite state";
      break;
    }
    if (scenario.track.centerline_distance(ls.truth.position()) > 25.0) {
      metrics.aborted = true;
      metrics.abort_reason = "diverged from track";
      break;
    }
    if (estimate) {
      update_terrain_estimate(cfg, models, prev, u, ls.truth, buf, w, planner);
    }
    push_trace(trace, tick, ls, u, diag, w);
  }

  if (!ls.positions.empty()) metrics.rmse = compute_rmse(ls.positions, scenario.track);
  metrics.success = !metrics.aborted && ls.path_len >= scenario.distance_budget;
  metrics.time_to_goal = metrics.success ? ls.t : 0.0;
  metrics.mean_speed = ls.t > 0.0 ? ls.path_len / ls.t : 0.0;
  metrics.latency = summarize_latency(ls.latencies);
  return metrics;
}

RunMetrics run_avoidance_experiment(const ExperimentConfig& cfg, const Scenario& scenario,
                                    const TrainedModels& models, std::uint64_t seed, Trace* trace) {
  if (scenario.kind != Scenario::Kind::Avoidance) {
    throw std::invalid_argument("run_avoidance_experiment: scenario kind mismatch");
  }
  const int m = static_cast<int>(cfg.terrains.size());
  Planner planner = make_planner(cfg, models, seed);
  AvoidanceTask task{&scenario.obstacles, scenario.goal, cfg.costs.avoidance, cfg.costs.high_cost};

  LoopState ls{scenario.start, RngStream(derive_seed(seed, 1))};
  HistoryBuffer buf(cfg.estimator.history, m);
  TerrainWeights w = TerrainWeights::uniform(m);
  const bool estimate = cfg.planner == PlannerKind::Gp;
  if (estimate) planner.set_terrain_weights(w);

  RunMetrics metrics;
  bool reached = false;
  bool in_collision_prev = false;
  const int max_ticks =
      static_cast<int>(std::ceil(scenario.max_duration / cfg.nominal.dt)) + 1;
  for (int tick = 0; tick < max_ticks; ++tick) {
    StepDiagnostics diag;
    Control u;
    try {
      u = planner.plan_step(ls.truth, task, &diag);
    } catch (const std::exception& e) {
      metrics.aborted = true;
      metrics.abort_reason = e.what();
      break;
    }
    ls.latencies.push_back(diag.plan_ms);
    // Planner-internal tightened geometry must only ever shrink clearance.
    if (planner.obstacle_margins().size() > 0 && planner.obstacle_margins().minCoeff() < -1e-12) {
      throw std::logic_error("tightening produced a negative margin");
    }
    const RobotState prev = ls.truth;
    apply_truth_step(ls, cfg, scenario, u);
    ++metrics.ticks;
    if (!ls.truth.finite()) {
      metrics.aborted = true;
      metrics.abort_reason = "non-finite state";
      break;
    }
    // Physical collision check against untightened geometry.
    double clearance = std::numeric_limits<double>::infinity();
    for (const auto& o : scenario.obstacles) {
      clearance = std::min(clearance, (ls.truth.position() - o.center).norm() - o.radius);
    }
    metrics.min_obstacle_clearance = std::min(metrics.min_obstacle_clearance, clearance);
    const bool in_collision = clearance < 0.0;
    if (in_collision && !in_collision_prev) ++metrics.collision_count;
    in_collision_prev = in_collision;
    if (estimate) {
      update_terrain_estimate(cfg, models, prev, u, ls.truth, buf, w, planner);
    }
    push_trace(trace, tick, ls, u, diag, w);
    if ((ls.truth.position() - scenario.goal.position).norm() <= scenario.goal.capture_radius) {
      reached = true;
      break;
    }
  }

  metrics.success = reached && metrics.collision_count == 0 && !metrics.aborted;
  metrics.time_to_goal = reached ? ls.t : 0.0;
  metrics.mean_speed = ls.t > 0.0 ? ls.path_len / ls.t : 0.0;
  metrics.latency = summarize_latency(ls.latencies);
  return metrics;
}

namespace {

const char* kCsvHeader =
    "row,planner,track,terrain,seed,rmse_m,success,time_to_goal_s,collisions,min_clearance_m,"
    "mean_speed_mps,ticks,aborted,successes,trials,time_to_goal_std_s";
constexpr int kCsvFields = 16;

void write_csv_preamble(std::ostream& os, const ExperimentConfig& cfg) {
  os << "# gpmppi-csv v1 config=" << config_hash_hex(cfg) << "\n" << kCsvHeader << "\n";
}

void write_fields(std::ostream& os, const std::array<std::string, kCsvFields>& f) {
  for (int i = 0; i < kCsvFields; ++i) {
    if (i > 0) os << ',';
    os << f[static_cast<std::size_t>(i)];
  }
  os << "\n";
}

void write_metric_row(std::ostream& os, const std::string& row_kind, const std::string& planner,
                      const std::string& track, int terrain, std::uint64_t seed,
                      const RunMetrics& m, bool is_avoidance) {
  std::array<std::string, kCsvFields> f{};
  f[0] = row_kind;
  f[1] = planner;
  f[2] = track;
  f[3] = std::to_string(terrain);
  f[4] = std::to_string(seed);
  f[5] = is_avoidance ? "" : fmt(m.rmse);
  f[6] = m.success ? "1" : "0";
  f[7] = m.success ? fmt(m.time_to_goal) : "";
  f[8] = is_avoidance ? std::to_string(m.collision_count) : "";
  f[9] = is_avoidance && std::isfinite(m.min_obstacle_clearance) ? fmt(m.min_obstacle_clearance)
                                                                 : "";
  f[10] = fmt(m.mean_speed);
  f[11] = std::to_string(m.ticks);
  f[12] = m.aborted ? "1" : "0";
  write_fields(os, f);
}

}  // namespace

void write_run_csv(std::ostream& os, const ExperimentConfig& cfg, const std::string& row_kind,
                   const std::string& track_name, int terrain, std::uint64_t seed,
                   const RunMetrics& m) {
  write_csv_preamble(os, cfg);
  write_metric_row(os, row_kind, to_string(cfg.planner), track_name, terrain, seed, m,
                   row_kind == "avoidance");
}

void write_trace_csv(std::ostream& os, const ExperimentConfig& cfg, const Trace& trace) {
  os << "# gpmppi-trace v1 config=" << config_hash_hex(cfg) << "\n";
  os << "tick,t_s,x_m,y_m,theta_rad,v_mps,omega_radps,v_ref_mps,omega_ref_radps,best_cost,"
        "mean_cost,ess,entropy";
  const Eigen::Index m = trace.empty() ? 0 : trace.front().terrain_weights.size();
  for (Eigen::Index i = 0; i < m; ++i) os << ",w" << i;
  os << "\n";
  for (const auto& r : trace) {
    os << r.tick << ',' << fmt(r.t) << ',' << fmt(r.state.x) << ',' << fmt(r.state.y) << ','
       << fmt(r.state.theta) << ',' << fmt(r.state.v) << ',' << fmt(r.state.omega) << ','
       << fmt(r.command.v_ref) << ',' << fmt(r.command.omega_ref) << ',' << fmt(r.best_cost) << ','
       << fmt(r.mean_cost) << ',' << fmt(r.ess) << ',' << fmt(r.entropy);
    for (Eigen::Index i = 0; i < r.terrain_weights.size(); ++i) {
      os << ',' << fmt(r.terrain_weights(i));
    }
    os << "\n";
  }
}

void benchmark_suite(const ExperimentConfig& cfg, const TrainedModels& models, std::ostream& os) {
  write_csv_preamble(os, cfg);

  for (PlannerKind planner : cfg.bench.planners) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.planner = planner;

    for (std::size_t track_idx = 0; track_idx < cfg.bench.tracks.size(); ++track_idx) {
      const std::string& track_name = cfg.bench.tracks[track_idx];
      for (int terrain : cfg.bench.terrains) {
        run_cfg.scenario.kind = "tracking";
        run_cfg.scenario.track = track_name;
        run_cfg.scenario.schedule = {{0.0, terrain}};
        run_cfg.scenario.start.reset();
        std::vector<double> rmses;
        for (int s = 0; s < cfg.bench.tracking_seeds; ++s) {
          const std::uint64_t master = derive_seed(
              cfg.seed, 1000 + static_cast<std::uint64_t>(terrain) * 10 + track_idx,
              static_cast<std::uint64_t>(s));
          RunMetrics m;
          try {
            const Scenario scenario = make_scenario(run_cfg, master);
            m = run_tracking_experiment(run_cfg, scenario, models, master);
          } catch (const std::exception& e) {
            m.aborted = true;
            m.abort_reason = e.what();
          }
          write_metric_row(os, "tracking", to_string(planner), track_name, terrain, master, m,
                           false);
          if (!m.aborted) rmses.push_back(m.rmse);
        }
        // Aggregate mirrors one Table cell: mean RMSE for (planner, track, terrain).
        if (!rmses.empty()) {
          const double mean =
              std::accumulate(rmses.begin(), rmses.end(), 0.0) / static_cast<double>(rmses.size());
          std::array<std::string, kCsvFields> f{};
          f[0] = "agg_tracking";
          f[1] = to_string(planner);
          f[2] = track_name;
          f[3] = std::to_string(terrain);
          f[5] = fmt(mean);
          f[14] = std::to_string(rmses.size());
          write_fields(os, f);
        }
      }
    }

    for (int terrain : cfg.bench.terrains) {
      run_cfg.scenario.kind = "avoidance";
      run_cfg.scenario.schedule = {{0.0, terrain}};
      run_cfg.scenario.start.reset();
      int successes = 0, collisions = 0;
      std::vector<double> times;
      for (int trial = 0; trial < cfg.bench.avoidance_trials; ++trial) {
        const std::uint64_t master =
            derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(terrain),
                        static_cast<std::uint64_t>(trial));
        RunMetrics m;
        try {
          const Scenario scenario = make_scenario(run_cfg, master);
          m = run_avoidance_experiment(run_cfg, scenario, models, master);
        } catch (const std::exception& e) {
          m.aborted = true;
          m.abort_reason = e.what();
        }
        write_metric_row(os, "avoidance", to_string(planner), "", terrain, master, m, true);
        if (m.success) {
          ++successes;
          times.push_back(m.time_to_goal);
        }
        collisions += m.collision_count;
      }
      double mean_t = 0.0, std_t = 0.0;
      if (!times.empty()) {
        mean_t = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
        for (double t : times) std_t += (t - mean_t) * (t - mean_t);
        std_t = std::sqrt(std_t / static_cast<double>(times.size()));
      }
      std::array<std::string, kCsvFields> f{};
      f[0] = "agg_avoidance";
      f[1] = to_string(planner);
      f[3] = std::to_string(terrain);
      f[7] = times.empty() ? "" : fmt(mean_t);
      f[8] = std::to_string(collisions);
      f[13] = std::to_string(successes);
      f[14] = std::to_string(cfg.bench.avoidance_trials);
      f[15] = times.empty() ? "" : fmt(std_t);
      write_fields(os, f);
    }
  }
}

bool quantile_self_test(std::ostream& os) {
  bool ok = true;
  os << "p,chi2_2,normal_quantile,cdf_roundtrip_err\n";
  for (double p : {0.55, 0.6, 0.7, 0.8, 0.9, 0.95, 0.975, 0.99, 0.995}) {
    const double c = chi2_quantile_2dof(p);
    const double z = normal_quantile(p);
    const double rt = std::abs(normal_cdf(z) - p);
    os << fmt(p) << ',' << fmt(c) << ',' << fmt(z) << ',' << fmt(rt) << "\n";
    if (std::abs(c - (-2.0 * std::log(1.0 - p))) > 1e-9) ok = false;
    if (rt > 1e-9) ok = false;
  }
  const QuantileTables q = QuantileTables::make(0.95);
  if (std::abs(q.chi2_2 - 5.991464547107979) > 1e-6) ok = false;
  if (std::abs(q.z - 1.6448536269514722) > 1e-6) ok = false;
  os << (ok ? "quantile self-test: ok" : "quantile self-test: FAILED") << "\n";
  return ok;
}

}  // namespace gpmppi
