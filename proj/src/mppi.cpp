#include "gpmppi/mppi.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "gpmppi/rng.hpp"

namespace gpmppi {

namespace {
constexpr int kChunk = 128;  // fixed chunk size keeps results thread-count independent

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

RobotState baseline_step(const PredictionModel& model, const RobotState& s, const Control& u,
                         const NominalParams& nominal) {
  if (const auto* edd = std::get_if<Edd5Baseline>(&model)) {
    return step_edd5(s, u, edd->params, edd->track_width, nominal.dt);
  }
  return step_kinematic_unicycle(s, u, nominal.dt);
}

// Ensemble accumulation over terrain-major (dv_0, dw_0, dv_1, ...) outputs.
// Same ascending-index arithmetic as ensemble_combine, shared by the scalar
// and batched rollout paths so they agree bit-for-bit.
template <class MeanGetter, class VarGetter>
GaussianCorrection combine_terrains(const Eigen::VectorXd& w, int m, MeanGetter&& mean_at,
                                    VarGetter&& var_at) {
  GaussianCorrection out;
  double var_v = 0.0, var_w = 0.0;
  for (int i = 0; i < m; ++i) {
    const double wi = w(i);
    out.mean(0) += wi * mean_at(2 * i);
    out.mean(1) += wi * mean_at(2 * i + 1);
    var_v += wi * wi * var_at(2 * i);
    var_w += wi * wi * var_at(2 * i + 1);
  }
  out.cov(0, 0) = var_v;
  out.cov(1, 1) = var_w;
  return out;
}

// Fills one sample's perturbation rows from its substream; the layout and
// draw order match sample_perturbations exactly.
void fill_perturbations(Eigen::MatrixX2d& m, int horizon, double sv, double sw,
                        std::uint64_t seed, std::uint64_t tick, std::uint64_t sample) {
  m.resize(horizon, 2);
  RngStream rng(derive_seed(seed, tick, sample));
  for (int k = 0; k < horizon; ++k) {
    const auto [z1, z2] = rng.gaussian_pair();
    m(k, 0) = sv * z1;
    m(k, 1) = sw * z2;
  }
}
}  // namespace

void MppiConfig::validate() const {
  if (samples < 1 || horizon < 1) {
    throw std::invalid_argument("MppiConfig: samples and horizon must be >= 1");
  }
  if (!(lambda > 0.0)) {
    throw std::invalid_argument("MppiConfig: lambda must be positive");
  }
  if (!(sigma_sim.array() > 0.0).all()) {
    throw std::invalid_argument("MppiConfig: sampling variances must be positive");
  }
  if (bounds.lo.v_ref >= bounds.hi.v_ref || bounds.lo.omega_ref >= bounds.hi.omega_ref) {
    throw std::invalid_argument("MppiConfig: control bounds must be a nonempty box");
  }
}

RolloutResult rollout(const RobotState& x0, const ControlSequence& seq,
                      const PredictionModel& model, const TerrainWeights& weights,
                      const NominalParams& nominal) {
  RolloutResult out;
  const std::size_t n = seq.size();
  out.states.reserve(n + 1);
  out.corrections.resize(n);
  out.states.push_back(x0);

  if (const auto* gp = std::get_if<GpEnsemble>(&model)) {
    if (!weights.on_simplex(1e-6)) {
      throw std::invalid_argument("rollout: terrain weights must lie on the simplex");
    }
    const int m = gp->n_terrains;
    for (std::size_t k = 0; k < n; ++k) {
      const RobotState& s = out.states.back();
      const Eigen::Vector4d q(s.v, s.omega, seq[k].v_ref, seq[k].omega_ref);
      const auto pred = gp->model->predict(q);
      out.corrections[k] = combine_terrains(
          weights.w, m, [&](int j) { return pred.mean(j); }, [&](int j) { return pred.var(j); });
      RobotState next = step_nominal(s, seq[k], nominal);
      next.v += out.corrections[k].mean(0);
      next.omega += out.corrections[k].mean(1);
      out.states.push_back(next);
    }
  } else {
    for (std::size_t k = 0; k < n; ++k) {
      out.states.push_back(baseline_step(model, out.states.back(), seq[k], nominal));
    }
  }
  return out;
}

std::vector<Eigen::MatrixX2d> sample_perturbations(const MppiConfig& cfg, std::uint64_t tick) {
  cfg.validate();
  const double sv = std::sqrt(cfg.sigma_sim(0));
  const double sw = std::sqrt(cfg.sigma_sim(1));
  std::vector<Eigen::MatrixX2d> eps(static_cast<std::size_t>(cfg.samples));
  for (int s = 0; s < cfg.samples; ++s) {
    fill_perturbations(eps[static_cast<std::size_t>(s)], cfg.horizon, sv, sw, cfg.seed, tick,
                       static_cast<std::uint64_t>(s));
  }
  return eps;
}

Eigen::VectorXd trajectory_weights(const Eigen::VectorXd& costs, double lambda) {
  if (!(lambda > 0.0)) {
    throw std::invalid_argument("trajectory_weights: lambda must be positive");
  }
  const auto s = costs.size();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(s);
  double lo = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < s; ++i) {
    if (std::isfinite(costs(i))) lo = std::min(lo, costs(i));
  }
  if (!std::isfinite(lo)) return w;  // no valid sample this tick
  double sum = 0.0;
  for (Eigen::Index i = 0; i < s; ++i) {
    if (std::isfinite(costs(i))) {
      w(i) = std::exp(-(costs(i) - lo) / lambda);
      sum += w(i);
    }
  }
  w /= sum;
  return w;
}

ControlSequence update_controls(const ControlSequence& nominal,
                                const std::vector<Eigen::MatrixX2d>& eps,
                                const Eigen::VectorXd& weights, const ControlBounds& bounds) {
  if (eps.size() != static_cast<std::size_t>(weights.size())) {
    throw std::invalid_argument("update_controls: one weight per sample required");
  }
  ControlSequence out(nominal.size());
  for (std::size_t k = 0; k < nominal.size(); ++k) {
    double dv = 0.0, dw = 0.0;
    for (std::size_t s = 0; s < eps.size(); ++s) {
      const double w = weights(static_cast<Eigen::Index>(s));
      dv += w * eps[s](static_cast<Eigen::Index>(k), 0);
      dw += w * eps[s](static_cast<Eigen::Index>(k), 1);
    }
    out[k] = bounds.clamp({nominal[k].v_ref + dv, nominal[k].omega_ref + dw});
  }
  return out;
}

ControlSequence shift_horizon(const ControlSequence& seq) {
  if (seq.empty()) {
    throw std::invalid_argument("shift_horizon: empty sequence");
  }
  ControlSequence out(seq.begin() + 1, seq.end());
  out.push_back(seq.back());
  return out;
}

// Per-thread scratch for the chunked rollout pipeline.
struct Planner::Scratch {
  GpModel::Workspace ws;
  Eigen::MatrixXd queries;            // chunk x 4
  Eigen::MatrixXd mean_blk, var_blk;  // chunk x 2M
  Eigen::MatrixXd v_sampled;          // N x chunk (column per sample)
  std::vector<RobotState> states;        // chunk x (N+1), sample-major
  std::vector<GaussianCorrection> corr;  // chunk x N, sample-major
  std::vector<Control> controls;         // chunk x N, sample-major
  std::vector<char> alive;               // per sample; frozen on non-finite states
};

Planner::Planner(const MppiConfig& cfg, PredictionModel model, NominalParams nominal, double p_x)
    : cfg_(cfg), model_(std::move(model)), nominal_(nominal), quant_(QuantileTables::make(p_x)) {
  cfg_.validate();
  nominal_.validate();
  if (const auto* gp = std::get_if<GpEnsemble>(&model_)) {
    if (gp->model == nullptr || gp->n_terrains < 1 ||
        gp->model->n_outputs() != 2 * gp->n_terrains) {
      throw std::invalid_argument("Planner: GP ensemble needs a model with 2M outputs");
    }
    weights_ = TerrainWeights::uniform(gp->n_terrains);
  } else {
    weights_ = TerrainWeights::uniform(1);
  }
  nominal_seq_.assign(static_cast<std::size_t>(cfg_.horizon), cfg_.bounds.clamp(Control{}));
  horizon_cov_.assign(static_cast<std::size_t>(cfg_.horizon), Matrix5d::Zero());
}

Planner::~Planner() = default;
Planner::Planner(Planner&&) noexcept = default;
Planner& Planner::operator=(Planner&&) noexcept = default;

void Planner::set_terrain_weights(const TerrainWeights& w) {
  if (const auto* gp = std::get_if<GpEnsemble>(&model_)) {
    if (w.size() != gp->n_terrains) {
      throw std::invalid_argument("set_terrain_weights: size mismatch with terrain count");
    }
  }
  if (!w.on_simplex(1e-6)) {
    throw std::invalid_argument("set_terrain_weights: weights must lie on the simplex");
  }
  weights_ = w;
}

GaussianCorrection Planner::correction_at(const RobotState& s, const Control& u) const {
  const auto* gp = std::get_if<GpEnsemble>(&model_);
  if (gp == nullptr) return {};
  const Eigen::Vector4d q(s.v, s.omega, u.v_ref, u.omega_ref);
  const auto pred = gp->model->predict(q);
  Eigen::MatrixX2d means(gp->n_terrains, 2), vars(gp->n_terrains, 2);
  for (int i = 0; i < gp->n_terrains; ++i) {
    means(i, 0) = pred.mean(2 * i);
    means(i, 1) = pred.mean(2 * i + 1);
    vars(i, 0) = pred.var(2 * i);
    vars(i, 1) = pred.var(2 * i + 1);
  }
  return ensemble_combine(means, vars, weights_);
}

void Planner::ensure_thresholds(const TrackingTask& task) {
  const auto n = static_cast<Eigen::Index>(cfg_.horizon);
  if (lane_r_bar_.size() != n) {
    lane_r_bar_ = Eigen::VectorXd::Constant(n, task.track->half_width);
  }
}

void Planner::ensure_thresholds(const AvoidanceTask& task) {
  const auto n = static_cast<Eigen::Index>(cfg_.horizon);
  const auto m = static_cast<Eigen::Index>(task.obstacles->size());
  if (obstacle_margins_.rows() != n || obstacle_margins_.cols() != m) {
    obstacle_margins_ = Eigen::MatrixXd::Zero(n, m);
  }
}

void Planner::tightening_pass(const RobotState& x0, const TrackingTask& task,
                              StepDiagnostics* diag) {
  BeliefState b;
  b.mean = x0;
  for (int k = 0; k < cfg_.horizon; ++k) {
    const Control& u = nominal_seq_[static_cast<std::size_t>(k)];
    b = propagate_belief(b, u, correction_at(b.mean, u), nominal_);
    horizon_cov_[static_cast<std::size_t>(k)] = b.cov;
    const double r_bar =
        tighten_lane_radius(task.track->half_width, b.cov.topLeftCorner<2, 2>(), quant_);
    lane_r_bar_(k) = r_bar;
    if (r_bar <= 0.0 && diag != nullptr) diag->tightening_infeasible = true;
  }
}

void Planner::tightening_pass(const RobotState& x0, const AvoidanceTask& task,
                              StepDiagnostics* diag) {
  BeliefState b;
  b.mean = x0;
  for (int k = 0; k < cfg_.horizon; ++k) {
    const Control& u = nominal_seq_[static_cast<std::size_t>(k)];
    b = propagate_belief(b, u, correction_at(b.mean, u), nominal_);
    horizon_cov_[static_cast<std::size_t>(k)] = b.cov;
    const Eigen::Matrix2d cov_xy = b.cov.topLeftCorner<2, 2>();
    for (std::size_t o = 0; o < task.obstacles->size(); ++o) {
      const auto& obs = (*task.obstacles)[o];
      const auto t = tighten_obstacle_distance(b.mean.position(), obs.center, obs.radius, cov_xy,
                                               quant_);
      obstacle_margins_(k, static_cast<Eigen::Index>(o)) = t.d - t.d_bar;
      if (t.d_bar <= 0.0 && diag != nullptr) diag->tightening_infeasible = true;
    }
  }
}

template <class Task>
void Planner::rollout_chunk(const RobotState& x0, int s_begin, int s_end,
                            const std::vector<Eigen::MatrixX2d>& eps, const Task& task,
                            Eigen::VectorXd& costs, Scratch& sc) const {
  const int cs = s_end - s_begin;
  const int n = cfg_.horizon;
  const auto* gp = std::get_if<GpEnsemble>(&model_);
  const int m2 = gp != nullptr ? gp->model->n_outputs() : 0;

  sc.states.resize(static_cast<std::size_t>(cs) * (n + 1));
  sc.corr.assign(static_cast<std::size_t>(cs) * n, GaussianCorrection{});
  sc.controls.resize(static_cast<std::size_t>(cs) * n);
  sc.v_sampled.resize(n, cs);

  // Clamp the sampled controls once.
  for (int i = 0; i < cs; ++i) {
    const auto& e = eps[static_cast<std::size_t>(s_begin + i)];
    for (int k = 0; k < n; ++k) {
      const Control u = cfg_.bounds.clamp({nominal_seq_[static_cast<std::size_t>(k)].v_ref + e(k, 0),
                                           nominal_seq_[static_cast<std::size_t>(k)].omega_ref +
                                               e(k, 1)});
      sc.controls[static_cast<std::size_t>(i) * n + k] = u;
      sc.v_sampled(k, i) = u.v_ref;
    }
  }

  sc.alive.assign(static_cast<std::size_t>(cs), 1);
  if (gp != nullptr) {
    const int m = gp->n_terrains;
    sc.queries.resize(cs, 4);
    sc.mean_blk.resize(cs, m2);
    sc.var_blk.resize(cs, m2);
    for (int i = 0; i < cs; ++i) {
      sc.states[static_cast<std::size_t>(i) * (n + 1)] = x0;
    }
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < cs; ++i) {
        const RobotState& s = sc.states[static_cast<std::size_t>(i) * (n + 1) + k];
        const Control& u = sc.controls[static_cast<std::size_t>(i) * n + k];
        sc.queries(i, 0) = s.v;
        sc.queries(i, 1) = s.omega;
        sc.queries(i, 2) = u.v_ref;
        sc.queries(i, 3) = u.omega_ref;
      }
      gp->model->predict_batch_into(sc.queries, sc.mean_blk, sc.var_blk, sc.ws);
      for (int i = 0; i < cs; ++i) {
        const std::size_t si = static_cast<std::size_t>(i) * (n + 1) + k;
        const RobotState& s = sc.states[si];
        if (sc.alive[static_cast<std::size_t>(i)] == 0) {
          sc.states[si + 1] = s;
          continue;
        }
        const GaussianCorrection corr = combine_terrains(
            weights_.w, m, [&](int j) { return sc.mean_blk(i, j); },
            [&](int j) { return sc.var_blk(i, j); });
        const Control& u = sc.controls[static_cast<std::size_t>(i) * n + k];
        RobotState next = step_nominal(s, u, nominal_);
        next.v += corr.mean(0);
        next.omega += corr.mean(1);
        if (!next.finite()) {
          sc.alive[static_cast<std::size_t>(i)] = 0;
          next = s;
        }
        sc.states[si + 1] = next;
        sc.corr[static_cast<std::size_t>(i) * n + k] = corr;
      }
    }
  } else {
    for (int i = 0; i < cs; ++i) {
      RobotState s = x0;
      sc.states[static_cast<std::size_t>(i) * (n + 1)] = s;
      for (int k = 0; k < n; ++k) {
        if (sc.alive[static_cast<std::size_t>(i)] == 1) {
          RobotState next =
              baseline_step(model_, s, sc.controls[static_cast<std::size_t>(i) * n + k], nominal_);
          if (!next.finite()) {
            sc.alive[static_cast<std::size_t>(i)] = 0;
          } else {
            s = next;
          }
        }
        sc.states[static_cast<std::size_t>(i) * (n + 1) + k + 1] = s;
      }
    }
  }

  for (int i = 0; i < cs; ++i) {
    const std::span<const RobotState> states(&sc.states[static_cast<std::size_t>(i) * (n + 1)],
                                             static_cast<std::size_t>(n + 1));
    const std::span<const GaussianCorrection> corr(&sc.corr[static_cast<std::size_t>(i) * n],
                                                   static_cast<std::size_t>(n));
    double c;
    if (sc.alive[static_cast<std::size_t>(i)] == 0) {
      c = std::numeric_limits<double>::quiet_NaN();
    } else if constexpr (std::is_same_v<Task, TrackingTask>) {
      c = tracking_cost(states, corr, *task.track, lane_r_bar_, task.v_desired, sc.v_sampled.col(i),
                        task.weights);
    } else {
      c = avoidance_cost(states, corr, *task.obstacles, obstacle_margins_, task.goal, task.weights,
                         task.high_cost);
    }
    costs(s_begin + i) = c;
  }
}

template <class Task>
Control Planner::plan_step_impl(const RobotState& x0, const Task& task, StepDiagnostics* diag) {
  const auto t_start = std::chrono::steady_clock::now();
  if (!x0.finite()) {
    throw std::invalid_argument("plan_step: non-finite state estimate");
  }
  ensure_thresholds(task);

  const int s_total = cfg_.samples;
  eps_.resize(static_cast<std::size_t>(s_total));
  Eigen::VectorXd costs(s_total);

  const int n_chunks = (s_total + kChunk - 1) / kChunk;
  const int n_threads = std::min(resolve_threads(cfg_.threads), n_chunks);
  while (static_cast<int>(scratch_.size()) < n_threads) {
    scratch_.push_back(std::make_unique<Scratch>());
  }
  const double sv = std::sqrt(cfg_.sigma_sim(0));
  const double sw = std::sqrt(cfg_.sigma_sim(1));
  auto worker = [&](int t) {
    for (int c = t; c < n_chunks; c += n_threads) {
      const int lo = c * kChunk;
      const int hi = std::min(lo + kChunk, s_total);
      for (int s = lo; s < hi; ++s) {
        fill_perturbations(eps_[static_cast<std::size_t>(s)], cfg_.horizon, sv, sw, cfg_.seed,
                           tick_, static_cast<std::uint64_t>(s));
      }
      rollout_chunk(x0, lo, hi, eps_, task, costs, *scratch_[static_cast<std::size_t>(t)]);
    }
  };
  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }

  const Eigen::VectorXd w = trajectory_weights(costs, cfg_.lambda);
  nominal_seq_ = update_controls(nominal_seq_, eps_, w, cfg_.bounds);
  const Control command = nominal_seq_.front();
  nominal_seq_ = shift_horizon(nominal_seq_);
  if (diag != nullptr) diag->tightening_infeasible = false;
  tightening_pass(x0, task, diag);

  if (diag != nullptr) {
    double best = std::numeric_limits<double>::infinity();
    double sum = 0.0;
    int finite = 0;
    for (Eigen::Index i = 0; i < costs.size(); ++i) {
      if (std::isfinite(costs(i))) {
        best = std::min(best, costs(i));
        sum += costs(i);
        ++finite;
      }
    }
    diag->best_cost = best;
    diag->mean_cost = finite > 0 ? sum / finite : std::numeric_limits<double>::quiet_NaN();
    diag->nonfinite_samples = s_total - finite;
    const double w2 = w.squaredNorm();
    diag->ess = w2 > 0.0 ? 1.0 / w2 : 0.0;
    double h = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (w(i) > 0.0) h -= w(i) * std::log(w(i));
    }
    diag->weight_entropy = h;
    diag->plan_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
            .count();
  }
  ++tick_;
  return command;
}

Control Planner::plan_step(const RobotState& x0, const TrackingTask& task, StepDiagnostics* diag) {
  if (task.track == nullptr) throw std::invalid_argument("plan_step: tracking task needs a track");
  return plan_step_impl(x0, task, diag);
}

Control Planner::plan_step(const RobotState& x0, const AvoidanceTask& task,
                           StepDiagnostics* diag) {
  if (task.obstacles == nullptr) {
    throw std::invalid_argument("plan_step: avoidance task needs an obstacle list");
  }
  return plan_step_impl(x0, task, diag);
}

}  // namespace gpmppi
