#pragma once

#include <cstdint>
#include <memory>
#include <variant>
#include <vector>

#include "gpmppi/core.hpp"
#include "gpmppi/costs.hpp"
#include "gpmppi/dynamics.hpp"
#include "gpmppi/gp.hpp"
#include "gpmppi/uncertainty.hpp"

namespace gpmppi {

struct MppiConfig {
  int samples{1024};
  int horizon{30};
  double lambda{0.1};
  Eigen::Vector2d sigma_sim{0.09, 0.25};  // sampling variances [(m/s)^2, (rad/s)^2]
  ControlBounds bounds;
  std::uint64_t seed{0};
  int threads{0};  // 0 = hardware concurrency; results are thread-count independent

  void validate() const;
};

// Prediction models the planner can roll out. The GP ensemble corrects the
// nominal dynamic unicycle; the baselines are kinematic.
struct GpEnsemble {
  const GpModel* model{nullptr};  // 2M terrain-major outputs (dv_0, dw_0, dv_1, ...)
  int n_terrains{0};
};
struct Edd5Baseline {
  Edd5Params params;
  double track_width{0.4};
};
struct UnicycleBaseline {};
using PredictionModel = std::variant<GpEnsemble, Edd5Baseline, UnicycleBaseline>;

// Immutable per-tick task views.
struct TrackingTask {
  const Track* track{nullptr};
  double v_desired{0.0};
  TrackingWeights weights;
};
struct AvoidanceTask {
  const std::vector<CircleObstacle>* obstacles{nullptr};
  GoalSpec goal;
  AvoidanceWeights weights;
  double high_cost{1e4};
};

struct RolloutResult {
  std::vector<RobotState> states;               // N+1 mean states
  std::vector<GaussianCorrection> corrections;  // N ensemble outputs
};

// Reference mean-only rollout of one control sequence (assumed in-bounds).
RolloutResult rollout(const RobotState& x0, const ControlSequence& seq,
                      const PredictionModel& model, const TerrainWeights& weights,
                      const NominalParams& nominal);

// S x N x 2 zero-mean Gaussian perturbations with the configured sampling
// covariance; sample s draws from an independent substream derived from
// (cfg.seed, tick, s), so the tensor is identical for any worker layout.
std::vector<Eigen::MatrixX2d> sample_perturbations(const MppiConfig& cfg, std::uint64_t tick);

// Softmax weights over rollout costs with a min-cost baseline. Non-finite
// costs get zero weight; if no cost is finite the result is all zeros.
Eigen::VectorXd trajectory_weights(const Eigen::VectorXd& costs, double lambda);

// Perturbation-weighted control update, clamped to bounds.
ControlSequence update_controls(const ControlSequence& nominal,
                                const std::vector<Eigen::MatrixX2d>& eps,
                                const Eigen::VectorXd& weights, const ControlBounds& bounds);

// Receding-horizon warm start: drop the first control, repeat the last.
ControlSequence shift_horizon(const ControlSequence& seq);

struct StepDiagnostics {
  double best_cost{0.0};
  double mean_cost{0.0};
  double ess{0.0};             // effective sample size 1 / sum w^2
  double weight_entropy{0.0};  // -sum w ln w
  int nonfinite_samples{0};
  bool tightening_infeasible{false};
  double plan_ms{0.0};  // wall clock, excluded from any deterministic output
};

// Stochastic MPPI planner: perturbation sampling, GP-corrected mean rollouts,
// cost-softmax control update, horizon shift, then the constraint-tightening
// pass along the shifted warm start whose thresholds the next tick's costs
// consume. Rollouts run in fixed 128-sample chunks so results are bit-equal
// for any thread count.
class Planner {
 public:
  Planner(const MppiConfig& cfg, PredictionModel model, NominalParams nominal, double p_x);
  ~Planner();
  Planner(Planner&&) noexcept;
  Planner& operator=(Planner&&) noexcept;

  Control plan_step(const RobotState& x0, const TrackingTask& task,
                    StepDiagnostics* diag = nullptr);
  Control plan_step(const RobotState& x0, const AvoidanceTask& task,
                    StepDiagnostics* diag = nullptr);

  void set_terrain_weights(const TerrainWeights& w);
  const TerrainWeights& terrain_weights() const { return weights_; }
  const ControlSequence& nominal_sequence() const { return nominal_seq_; }
  const std::vector<Matrix5d>& horizon_covariances() const { return horizon_cov_; }
  const Eigen::VectorXd& lane_radii() const { return lane_r_bar_; }
  const Eigen::MatrixXd& obstacle_margins() const { return obstacle_margins_; }
  const MppiConfig& config() const { return cfg_; }
  std::uint64_t tick() const { return tick_; }

 private:
  struct Scratch;
  template <class Task>
  Control plan_step_impl(const RobotState& x0, const Task& task, StepDiagnostics* diag);
  void ensure_thresholds(const TrackingTask& task);
  void ensure_thresholds(const AvoidanceTask& task);
  void tightening_pass(const RobotState& x0, const TrackingTask& task, StepDiagnostics* diag);
  void tightening_pass(const RobotState& x0, const AvoidanceTask& task, StepDiagnostics* diag);
  GaussianCorrection correction_at(const RobotState& s, const Control& u) const;
  template <class Task>
  void rollout_chunk(const RobotState& x0, int s_begin, int s_end,
                     const std::vector<Eigen::MatrixX2d>& eps, const Task& task,
                     Eigen::VectorXd& costs, Scratch& scratch) const;

  MppiConfig cfg_;
  PredictionModel model_;
  NominalParams nominal_;
  QuantileTables quant_;
  ControlSequence nominal_seq_;
  TerrainWeights weights_;
  std::vector<Matrix5d> horizon_cov_;
  Eigen::VectorXd lane_r_bar_;      // tracking thresholds, size N
  Eigen::MatrixXd obstacle_margins_;  // avoidance margins, N x n_obstacles
  std::uint64_t tick_{0};
  std::vector<Eigen::MatrixX2d> eps_;  // reused perturbation buffer
  mutable std::vector<std::unique_ptr<Scratch>> scratch_;
};

}  // namespace gpmppi
