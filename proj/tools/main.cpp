#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "gpmppi/config.hpp"
#include "gpmppi/harness.hpp"

namespace {

using namespace gpmppi;

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> planner;
  std::optional<int> threads;
  std::string models_path;
  std::string out_path;
  std::string plot_data_path;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_planner = true) {
  cmd->add_option("--config", o.config_path, "experiment config JSON");
  cmd->add_option("--seed", o.seed, "run seed (overrides config)");
  if (with_planner) {
    cmd->add_option("--planner", o.planner, "gp, edd5 or unicycle (overrides config)")
        ->check(CLI::IsMember({"gp", "edd5", "unicycle"}));
  }
  cmd->add_option("--threads", o.threads, "rollout worker threads (0 = hardware)");
  cmd->add_option("--models", o.models_path, "trained models file (default: train in-process)");
  cmd->add_option("--out", o.out_path, "output CSV path (default: stdout)");
}

ExperimentConfig resolve_config(const CommonOpts& o) {
  ExperimentConfig cfg = o.config_path.empty() ? default_config() : load_config(o.config_path);
  if (o.seed.has_value()) cfg.seed = *o.seed;
  if (o.planner.has_value()) cfg.planner = planner_kind_from_string(*o.planner);
  if (o.threads.has_value()) cfg.threads = *o.threads;
  cfg.validate();
  return cfg;
}

TrainedModels resolve_models(const ExperimentConfig& cfg, const CommonOpts& o) {
  if (!o.models_path.empty()) return load_models(o.models_path);
  if (cfg.planner == PlannerKind::Unicycle) return TrainedModels{};  // nothing to fit
  std::cerr << "training models (seed " << cfg.seed << ")...\n";
  return train_models(cfg, cfg.seed);
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open output file " + path);
  os << text;
}

int run_single(const CommonOpts& o, bool tracking) {
  ExperimentConfig cfg = resolve_config(o);
  cfg.scenario.kind = tracking ? "tracking" : "avoidance";
  const TrainedModels models = resolve_models(cfg, o);
  const Scenario scenario = make_scenario(cfg, cfg.seed);

  Trace trace;
  Trace* trace_ptr = o.plot_data_path.empty() ? nullptr : &trace;
  const RunMetrics m = tracking
                           ? run_tracking_experiment(cfg, scenario, models, cfg.seed, trace_ptr)
                           : run_avoidance_experiment(cfg, scenario, models, cfg.seed, trace_ptr);

  const int terrain = scenario.schedule.size() == 1 ? scenario.schedule.front().terrain : -1;
  std::ostringstream csv;
  write_run_csv(csv, cfg, tracking ? "tracking" : "avoidance",
                tracking ? cfg.scenario.track : "", terrain, cfg.seed, m);
  write_output(o.out_path, csv.str());

  if (trace_ptr != nullptr) {
    std::ofstream ts(o.plot_data_path, std::ios::binary);
    if (!ts) throw std::runtime_error("cannot open plot-data file " + o.plot_data_path);
    write_trace_csv(ts, cfg, trace);
  }

  std::cerr << (tracking ? "tracking" : "avoidance") << " run: "
            << (m.aborted ? "aborted (" + m.abort_reason + ")"
                          : (m.success ? "success" : "incomplete"))
            << ", ticks " << m.ticks << ", latency median " << m.latency.median_ms << " ms\n";
  if (m.aborted) return 1;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chance-constrained GP-MPPI skid-steer planner and simulation harness"};
  app.require_subcommand(1);

  CommonOpts train_o, track_o, avoid_o, bench_o, dump_o;

  auto* train = app.add_subcommand("train", "generate data, fit GP and EDD5 models, save them");
  add_common(train, train_o, false);

  auto* track = app.add_subcommand("track", "one closed-loop path-tracking run");
  add_common(track, track_o);
  track->add_option("--plot-data", track_o.plot_data_path, "per-tick trajectory CSV");

  auto* avoid = app.add_subcommand("avoid", "one closed-loop obstacle-avoidance run");
  add_common(avoid, avoid_o);
  avoid->add_option("--plot-data", avoid_o.plot_data_path, "per-tick trajectory CSV");

  auto* bench = app.add_subcommand("bench", "full planner x scenario x seed suite");
  add_common(bench, bench_o);

  auto* quant = app.add_subcommand("quantiles", "print the quantile self-test");

  auto* dump = app.add_subcommand("dump-config", "write the resolved config JSON");
  add_common(dump, dump_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      ExperimentConfig cfg = resolve_config(train_o);
      const TrainedModels models = train_models(cfg, cfg.seed);
      const std::string out = train_o.out_path.empty() ? "models.bin" : train_o.out_path;
      save_models(out, models);
      std::cerr << "wrote " << out << " (gp n=" << models.gp.n_points()
                << ", outputs=" << models.gp.n_outputs() << ")\n";
      return 0;
    }
    if (track->parsed()) return run_single(track_o, true);
    if (avoid->parsed()) return run_single(avoid_o, false);
    if (bench->parsed()) {
      ExperimentConfig cfg = resolve_config(bench_o);
      const TrainedModels models = resolve_models(cfg, bench_o);
      std::ostringstream csv;
      benchmark_suite(cfg, models, csv);
      write_output(bench_o.out_path, csv.str());
      return 0;
    }
    if (quant->parsed()) {
      return quantile_self_test(std::cout) ? 0 : 1;
    }
    if (dump->parsed()) {
      ExperimentConfig cfg = resolve_config(dump_o);
      write_output(dump_o.out_path, dump_config(cfg));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
