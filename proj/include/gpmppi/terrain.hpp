#pragma once

#include "gpmppi/core.hpp"
#include "gpmppi/dynamics.hpp"
#include "gpmppi/gp.hpp"

namespace gpmppi {

// Sliding window of measured next-step velocities and the per-terrain GP
// predictions for the same transitions. FIFO once full.
class HistoryBuffer {
 public:
  HistoryBuffer(int capacity, int n_terrains);

  void push(const Eigen::Vector2d& measured, const Eigen::Ref<const Eigen::MatrixX2d>& per_terrain);

  int size() const { return size_; }
  int capacity() const { return capacity_; }
  int n_terrains() const { return m_; }

  // Rows ordered oldest to newest.
  Eigen::VectorXd y_v() const;
  Eigen::VectorXd y_omega() const;
  Eigen::MatrixXd f_v() const;
  Eigen::MatrixXd f_omega() const;

 private:
  int capacity_{0}, m_{0}, head_{0}, size_{0};
  Eigen::VectorXd yv_, yw_;   // ring storage, capacity entries
  Eigen::MatrixXd fv_, fw_;   // capacity x M
};

struct WeightSolverConfig {
  double gamma{0.1};   // L1 pull toward the previous weights
  int max_iters{200};
  double tol{1e-8};
  double step0{1.0};   // base step for the diminishing schedule step0 / (1 + t)
};

// Euclidean projection onto the probability simplex (sorted-threshold rule).
Eigen::VectorXd project_simplex(const Eigen::VectorXd& z);

struct WeightSolveResult {
  TerrainWeights weights;
  double objective{0.0};
  bool buffer_empty{false};
};

// Minimizes |Yv - Fv w|^2 + |Yw - Fw w|^2 + gamma |w - prev|_1 over the
// simplex: projected subgradient with a diminishing step and backtracking,
// then exact pairwise coordinate polishing so the returned objective is within
// cfg.tol of the best found. Deterministic. An empty buffer returns prev,
// flagged rather than raised.
WeightSolveResult solve_weights(const HistoryBuffer& buf, const TerrainWeights& prev,
                                const WeightSolverConfig& cfg);

// Per-terrain absolute next-step velocity predictions for one transition:
// nominal next velocities plus each terrain's GP mean residual. The model
// holds 2M terrain-major outputs (dv_0, dw_0, dv_1, ...).
Eigen::MatrixX2d per_terrain_mean_prediction(const GpModel& model, const Eigen::Vector4d& query,
                                             const NominalParams& nominal);

}  // namespace gpmppi
