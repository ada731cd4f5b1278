#include "gpmppi/config.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gpmppi {

using nlohmann::json;

std::string to_string(PlannerKind kind) {
  switch (kind) {
    case PlannerKind::Gp: return "gp";
    case PlannerKind::Edd5: return "edd5";
    case PlannerKind::Unicycle: return "unicycle";
  }
  throw std::logic_error("to_string: bad PlannerKind");
}

PlannerKind planner_kind_from_string(const std::string& s) {
  if (s == "gp") return PlannerKind::Gp;
  if (s == "edd5") return PlannerKind::Edd5;
  if (s == "unicycle") return PlannerKind::Unicycle;
  throw std::invalid_argument("unknown planner '" + s + "' (expected gp, edd5 or unicycle)");
}

namespace {

// Strict object view: every present key must be consumed, everything else is
// a config error naming the offending path.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw std::invalid_argument("config: " + path_ + " must be an object");
    }
  }

  ~Section() = default;

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (seen_.find(key) == seen_.end()) {
        throw std::invalid_argument("config: unknown key '" + path_ + "." + key + "'");
      }
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& at(const char* key) { return j_.at(key); }

  template <class T>
  void get(const char* key, T& target) {
    if (!has(key)) return;
    try {
      target = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: bad value at '" + path_ + "." + key + "': " + e.what());
    }
  }

  void get_vec2(const char* key, Eigen::Vector2d& target) {
    if (!has(key)) return;
    std::vector<double> v = j_.at(key).get<std::vector<double>>();
    if (v.size() != 2) {
      throw std::invalid_argument("config: '" + path_ + "." + key + "' must have 2 entries");
    }
    target << v[0], v[1];
  }

  std::string subpath(const char* key) const { return path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

TerrainProfile parse_terrain(const json& j, const std::string& path) {
  Section s(j, path);
  TerrainProfile t;
  s.get("name", t.name);
  s.get("gain_v", t.gain_v);
  s.get("gain_omega", t.gain_omega);
  s.get("tau_v_true", t.tau_v_true);
  s.get("tau_omega_true", t.tau_omega_true);
  s.get("curvature_slip_c", t.curvature_slip_c);
  s.get("noise_std_v", t.noise_std_v);
  s.get("noise_std_omega", t.noise_std_omega);
  s.finish();
  return t;
}

json terrain_to_json(const TerrainProfile& t) {
  return json{{"name", t.name},
              {"gain_v", t.gain_v},
              {"gain_omega", t.gain_omega},
              {"tau_v_true", t.tau_v_true},
              {"tau_omega_true", t.tau_omega_true},
              {"curvature_slip_c", t.curvature_slip_c},
              {"noise_std_v", t.noise_std_v},
              {"noise_std_omega", t.noise_std_omega}};
}

std::vector<double> vec2_to_std(const Eigen::Vector2d& v) { return {v(0), v(1)}; }

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.terrains = {
      {"tile", 0.97, 0.97, 0.45, 0.32, 0.05, 0.010, 0.020},
      {"asphalt", 0.92, 0.90, 0.55, 0.40, 0.15, 0.015, 0.030},
      {"grass", 0.82, 0.80, 0.70, 0.50, 0.35, 0.020, 0.040},
  };
  return cfg;
}

void ExperimentConfig::validate() const {
  nominal.validate();
  if (terrains.empty()) {
    throw std::invalid_argument("config: at least one terrain profile required");
  }
  for (const auto& t : terrains) t.validate();
  if (training.n_points < 1 || training.hold_min < 1 || training.hold_max < training.hold_min) {
    throw std::invalid_argument("config: bad training section");
  }
  if (!gp.grid_search) gp.fixed.validate();
  if (estimator.history < 1 || estimator.gamma < 0.0 || !(estimator.tol > 0.0) ||
      estimator.max_iters < 1) {
    throw std::invalid_argument("config: bad estimator section");
  }
  if (!(p_x > 0.5) || !(p_x < 1.0)) {
    throw std::invalid_argument("config: p_x must lie in (0.5, 1)");
  }
  costs.tracking.validate();
  costs.avoidance.validate();
  if (!(costs.high_cost > 0.0)) {
    throw std::invalid_argument("config: high_cost must be positive");
  }
  mppi.validate();
  if (!(track_width > 0.0)) {
    throw std::invalid_argument("config: track_width must be positive");
  }
  if (scenario.kind != "tracking" && scenario.kind != "avoidance") {
    throw std::invalid_argument("config: scenario.kind must be tracking or avoidance");
  }
  if (scenario.track != "circle" && scenario.track != "square" && scenario.track != "lane") {
    throw std::invalid_argument("config: scenario.track must be circle, square or lane");
  }
  if (scenario.schedule.empty()) {
    throw std::invalid_argument("config: scenario.schedule must be non-empty");
  }
  double prev_t = -1.0;
  for (const auto& e : scenario.schedule) {
    if (e.time_s <= prev_t) {
      throw std::invalid_argument("config: schedule times must be strictly increasing");
    }
    prev_t = e.time_s;
    if (e.terrain < 0 || e.terrain >= static_cast<int>(terrains.size())) {
      throw std::invalid_argument("config: schedule references a missing terrain index");
    }
  }
  for (int t : bench.terrains) {
    if (t < 0 || t >= static_cast<int>(terrains.size())) {
      throw std::invalid_argument("config: bench references a missing terrain index");
    }
  }
  for (const auto& tr : bench.tracks) {
    if (tr != "circle" && tr != "square") {
      throw std::invalid_argument("config: bench tracks must be circle or square");
    }
  }
  if (bench.tracking_seeds < 1 || bench.avoidance_trials < 1) {
    throw std::invalid_argument("config: bench counts must be >= 1");
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("config: cannot open " + path);
  }
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config: parse error in " + path + ": " + e.what());
  }

  ExperimentConfig cfg = default_config();
  Section root(j, "$");
  root.get("seed", cfg.seed);
  root.get("threads", cfg.threads);
  if (root.has("planner")) {
    cfg.planner = planner_kind_from_string(root.at("planner").get<std::string>());
  }

  if (root.has("nominal")) {
    Section s(root.at("nominal"), "$.nominal");
    s.get("tau_v", cfg.nominal.tau_v);
    s.get("tau_omega", cfg.nominal.tau_omega);
    s.get("dt", cfg.nominal.dt);
    s.finish();
  }

  if (root.has("terrains")) {
    const json& arr = root.at("terrains");
    if (!arr.is_array() || arr.empty()) {
      throw std::invalid_argument("config: terrains must be a non-empty array");
    }
    cfg.terrains.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      cfg.terrains.push_back(parse_terrain(arr[i], "$.terrains[" + std::to_string(i) + "]"));
    }
  }

  if (root.has("training")) {
    Section s(root.at("training"), "$.training");
    s.get("n_points", cfg.training.n_points);
    s.get("hold_min", cfg.training.hold_min);
    s.get("hold_max", cfg.training.hold_max);
    s.finish();
  }

  if (root.has("gp")) {
    Section s(root.at("gp"), "$.gp");
    std::string mode = "grid";
    s.get("hyperparams", mode);
    if (mode == "grid") {
      cfg.gp.grid_search = true;
      // tolerate but ignore no fixed values in grid mode
      if (s.has("signal_var") || s.has("lengthscales") || s.has("noise_var")) {
        throw std::invalid_argument("config: fixed kernel values only allowed with hyperparams=fixed");
      }
    } else if (mode == "fixed") {
      cfg.gp.grid_search = false;
      s.get("signal_var", cfg.gp.fixed.signal_var);
      s.get("noise_var", cfg.gp.fixed.noise_var);
      if (s.has("lengthscales")) {
        std::vector<double> ls = s.at("lengthscales").get<std::vector<double>>();
        if (ls.size() != 4) {
          throw std::invalid_argument("config: gp.lengthscales must have 4 entries");
        }
        cfg.gp.fixed.lengthscales = Eigen::Vector4d(ls[0], ls[1], ls[2], ls[3]);
      }
    } else {
      throw std::invalid_argument("config: gp.hyperparams must be grid or fixed");
    }
    s.finish();
  }

  if (root.has("estimator")) {
    Section s(root.at("estimator"), "$.estimator");
    s.get("history", cfg.estimator.history);
    s.get("gamma", cfg.estimator.gamma);
    s.get("max_iters", cfg.estimator.max_iters);
    s.get("tol", cfg.estimator.tol);
    s.finish();
  }

  if (root.has("uncertainty")) {
    Section s(root.at("uncertainty"), "$.uncertainty");
    s.get("p_x", cfg.p_x);
    s.finish();
  }

  if (root.has("costs")) {
    Section s(root.at("costs"), "$.costs");
    if (s.has("tracking")) {
      Section t(s.at("tracking"), "$.costs.tracking");
      t.get("variance", cfg.costs.tracking.variance);
      t.get("deviation", cfg.costs.tracking.deviation);
      t.get("slip", cfg.costs.tracking.slip);
      t.get("safety", cfg.costs.tracking.safety);
      t.get("speed", cfg.costs.tracking.speed);
      t.finish();
    }
    if (s.has("avoidance")) {
      Section a(s.at("avoidance"), "$.costs.avoidance");
      a.get("variance", cfg.costs.avoidance.variance);
      a.get("obstacle", cfg.costs.avoidance.obstacle);
      a.get("stage", cfg.costs.avoidance.stage);
      a.get("terminal", cfg.costs.avoidance.terminal);
      a.finish();
    }
    s.get("high_cost", cfg.costs.high_cost);
    s.finish();
  }

  if (root.has("mppi")) {
    Section s(root.at("mppi"), "$.mppi");
    s.get("samples", cfg.mppi.samples);
    s.get("horizon", cfg.mppi.horizon);
    s.get("lambda", cfg.mppi.lambda);
    double sv = std::sqrt(cfg.mppi.sigma_sim(0)), sw = std::sqrt(cfg.mppi.sigma_sim(1));
    s.get("sigma_v_std", sv);
    s.get("sigma_omega_std", sw);
    cfg.mppi.sigma_sim << sv * sv, sw * sw;
    s.get("v_min", cfg.mppi.bounds.lo.v_ref);
    s.get("v_max", cfg.mppi.bounds.hi.v_ref);
    s.get("omega_min", cfg.mppi.bounds.lo.omega_ref);
    s.get("omega_max", cfg.mppi.bounds.hi.omega_ref);
    s.finish();
  }

  if (root.has("robot")) {
    Section s(root.at("robot"), "$.robot");
    s.get("track_width", cfg.track_width);
    s.finish();
  }

  if (root.has("geometry")) {
    Section s(root.at("geometry"), "$.geometry");
    if (s.has("circle")) {
      Section c(s.at("circle"), "$.geometry.circle");
      c.get_vec2("center", cfg.geometry.circle_center);
      c.get("radius", cfg.geometry.circle_radius);
      c.get("half_width", cfg.geometry.circle_half_width);
      c.finish();
    }
    if (s.has("square")) {
      Section c(s.at("square"), "$.geometry.square");
      c.get_vec2("center", cfg.geometry.square_center);
      c.get("side", cfg.geometry.square_side);
      c.get("half_width", cfg.geometry.square_half_width);
      c.finish();
    }
    if (s.has("lane")) {
      Section c(s.at("lane"), "$.geometry.lane");
      c.get_vec2("from", cfg.geometry.lane_from);
      c.get_vec2("to", cfg.geometry.lane_to);
      c.get("half_width", cfg.geometry.lane_half_width);
      c.finish();
    }
    s.finish();
  }

  if (root.has("scenario")) {
    Section s(root.at("scenario"), "$.scenario");
    s.get("kind", cfg.scenario.kind);
    s.get("track", cfg.scenario.track);
    s.get("v_desired", cfg.scenario.v_desired);
    if (s.has("start")) {
      const json& st = s.at("start");
      if (st.is_null()) {
        cfg.scenario.start.reset();
      } else {
        std::vector<double> v = st.get<std::vector<double>>();
        if (v.size() != 3) {
          throw std::invalid_argument("config: scenario.start must be [x, y, theta] or null");
        }
        cfg.scenario.start = Eigen::Vector3d(v[0], v[1], v[2]);
      }
    }
    if (s.has("goal")) {
      Section g(s.at("goal"), "$.scenario.goal");
      g.get_vec2("position", cfg.scenario.goal.position);
      g.get("capture_radius", cfg.scenario.goal.capture_radius);
      g.finish();
    }
    if (s.has("obstacles")) {
      cfg.scenario.obstacles.clear();
      cfg.scenario.use_random_obstacles = false;
      for (const auto& o : s.at("obstacles")) {
        std::vector<double> v = o.get<std::vector<double>>();
        if (v.size() != 3) {
          throw std::invalid_argument("config: each obstacle must be [x, y, radius]");
        }
        cfg.scenario.obstacles.push_back({{v[0], v[1]}, v[2]});
      }
    }
    if (s.has("random_obstacles")) {
      cfg.scenario.use_random_obstacles = true;
      Section r(s.at("random_obstacles"), "$.scenario.random_obstacles");
      r.get("count", cfg.scenario.random_obstacles.count);
      r.get("x_min", cfg.scenario.random_obstacles.x_min);
      r.get("x_max", cfg.scenario.random_obstacles.x_max);
      r.get("y_min", cfg.scenario.random_obstacles.y_min);
      r.get("y_max", cfg.scenario.random_obstacles.y_max);
      r.get("radius_min", cfg.scenario.random_obstacles.radius_min);
      r.get("radius_max", cfg.scenario.random_obstacles.radius_max);
      r.get("min_gap", cfg.scenario.random_obstacles.min_gap);
      r.finish();
    }
    if (s.has("schedule")) {
      cfg.scenario.schedule.clear();
      for (std::size_t i = 0; i < s.at("schedule").size(); ++i) {
        Section e(s.at("schedule")[i], "$.scenario.schedule[" + std::to_string(i) + "]");
        TerrainScheduleEntry entry;
        e.get("time", entry.time_s);
        e.get("terrain", entry.terrain);
        e.finish();
        cfg.scenario.schedule.push_back(entry);
      }
    }
    s.get("distance_budget", cfg.scenario.distance_budget);
    s.get("max_duration", cfg.scenario.max_duration);
    s.finish();
  }

  if (root.has("bench")) {
    Section s(root.at("bench"), "$.bench");
    if (s.has("planners")) {
      cfg.bench.planners.clear();
      for (const auto& p : s.at("planners")) {
        cfg.bench.planners.push_back(planner_kind_from_string(p.get<std::string>()));
      }
    }
    s.get("tracks", cfg.bench.tracks);
    s.get("terrains", cfg.bench.terrains);
    s.get("tracking_seeds", cfg.bench.tracking_seeds);
    s.get("avoidance_trials", cfg.bench.avoidance_trials);
    s.finish();
  }

  root.finish();
  cfg.validate();
  return cfg;
}

std::string dump_config(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["planner"] = to_string(cfg.planner);
  j["nominal"] = {{"tau_v", cfg.nominal.tau_v},
                  {"tau_omega", cfg.nominal.tau_omega},
                  {"dt", cfg.nominal.dt}};
  j["terrains"] = json::array();
  for (const auto& t : cfg.terrains) j["terrains"].push_back(terrain_to_json(t));
  j["training"] = {{"n_points", cfg.training.n_points},
                   {"hold_min", cfg.training.hold_min},
                   {"hold_max", cfg.training.hold_max}};
  if (cfg.gp.grid_search) {
    j["gp"] = {{"hyperparams", "grid"}};
  } else {
    j["gp"] = {{"hyperparams", "fixed"},
               {"signal_var", cfg.gp.fixed.signal_var},
               {"lengthscales",
                std::vector<double>{cfg.gp.fixed.lengthscales(0), cfg.gp.fixed.lengthscales(1),
                                    cfg.gp.fixed.lengthscales(2), cfg.gp.fixed.lengthscales(3)}},
               {"noise_var", cfg.gp.fixed.noise_var}};
  }
  j["estimator"] = {{"history", cfg.estimator.history},
                    {"gamma", cfg.estimator.gamma},
                    {"max_iters", cfg.estimator.max_iters},
                    {"tol", cfg.estimator.tol}};
  j["uncertainty"] = {{"p_x", cfg.p_x}};
  j["costs"] = {{"tracking",
                 {{"variance", cfg.costs.tracking.variance},
                  {"deviation", cfg.costs.tracking.deviation},
                  {"slip", cfg.costs.tracking.slip},
                  {"safety", cfg.costs.tracking.safety},
                  {"speed", cfg.costs.tracking.speed}}},
                {"avoidance",
                 {{"variance", cfg.costs.avoidance.variance},
                  {"obstacle", cfg.costs.avoidance.obstacle},
                  {"stage", cfg.costs.avoidance.stage},
                  {"terminal", cfg.costs.avoidance.terminal}}},
                {"high_cost", cfg.costs.high_cost}};
  j["mppi"] = {{"samples", cfg.mppi.samples},
               {"horizon", cfg.mppi.horizon},
               {"lambda", cfg.mppi.lambda},
               {"sigma_v_std", std::sqrt(cfg.mppi.sigma_sim(0))},
               {"sigma_omega_std", std::sqrt(cfg.mppi.sigma_sim(1))},
               {"v_min", cfg.mppi.bounds.lo.v_ref},
               {"v_max", cfg.mppi.bounds.hi.v_ref},
               {"omega_min", cfg.mppi.bounds.lo.omega_ref},
               {"omega_max", cfg.mppi.bounds.hi.omega_ref}};
  j["robot"] = {{"track_width", cfg.track_width}};
  j["geometry"] = {
      {"circle",
       {{"center", vec2_to_std(cfg.geometry.circle_center)},
        {"radius", cfg.geometry.circle_radius},
        {"half_width", cfg.geometry.circle_half_width}}},
      {"square",
       {{"center", vec2_to_std(cfg.geometry.square_center)},
        {"side", cfg.geometry.square_side},
        {"half_width", cfg.geometry.square_half_width}}},
      {"lane",
       {{"from", vec2_to_std(cfg.geometry.lane_from)},
        {"to", vec2_to_std(cfg.geometry.lane_to)},
        {"half_width", cfg.geometry.lane_half_width}}}};
  json sc;
  sc["kind"] = cfg.scenario.kind;
  sc["track"] = cfg.scenario.track;
  sc["v_desired"] = cfg.scenario.v_desired;
  if (cfg.scenario.start.has_value()) {
    const auto& v = *cfg.scenario.start;
    sc["start"] = std::vector<double>{v(0), v(1), v(2)};
  } else {
    sc["start"] = nullptr;
  }
  sc["goal"] = {{"position", vec2_to_std(cfg.scenario.goal.position)},
                {"capture_radius", cfg.scenario.goal.capture_radius}};
  if (cfg.scenario.use_random_obstacles) {
    const auto& r = cfg.scenario.random_obstacles;
    sc["random_obstacles"] = {{"count", r.count},         {"x_min", r.x_min},
                              {"x_max", r.x_max},         {"y_min", r.y_min},
                              {"y_max", r.y_max},         {"radius_min", r.radius_min},
                              {"radius_max", r.radius_max}, {"min_gap", r.min_gap}};
  } else {
    sc["obstacles"] = json::array();
    for (const auto& o : cfg.scenario.obstacles) {
      sc["obstacles"].push_back(std::vector<double>{o.center(0), o.center(1), o.radius});
    }
  }
  sc["schedule"] = json::array();
  for (const auto& e : cfg.scenario.schedule) {
    sc["schedule"].push_back({{"time", e.time_s}, {"terrain", e.terrain}});
  }
  sc["distance_budget"] = cfg.scenario.distance_budget;
  sc["max_duration"] = cfg.scenario.max_duration;
  j["scenario"] = sc;
  json bp = json::array();
  for (auto p : cfg.bench.planners) bp.push_back(to_string(p));
  j["bench"] = {{"planners", bp},
                {"tracks", cfg.bench.tracks},
                {"terrains", cfg.bench.terrains},
                {"tracking_seeds", cfg.bench.tracking_seeds},
                {"avoidance_trials", cfg.bench.avoidance_trials}};
  return j.dump(2) + "\n";
}

std::string config_hash_hex(const ExperimentConfig& cfg) {
  const std::string text = dump_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace gpmppi
