#include "gpmppi/terrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gpmppi {

HistoryBuffer::HistoryBuffer(int capacity, int n_terrains) : capacity_(capacity), m_(n_terrains) {
  if (capacity < 1 || n_terrains < 1) {
    throw std::invalid_argument("HistoryBuffer: capacity and n_terrains must be >= 1");
  }
  yv_.setZero(capacity);
  yw_.setZero(capacity);
  fv_.setZero(capacity, n_terrains);
  fw_.setZero(capacity, n_terrains);
}

void HistoryBuffer::push(const Eigen::Vector2d& measured,
                         const Eigen::Ref<const Eigen::MatrixX2d>& per_terrain) {
  if (per_terrain.rows() != m_) {
    throw std::invalid_argument("HistoryBuffer::push: expected one prediction row per terrain");
  }
  yv_(head_) = measured(0);
  yw_(head_) = measured(1);
  fv_.row(head_) = per_terrain.col(0).transpose();
  fw_.row(head_) = per_terrain.col(1).transpose();
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

namespace {
// Oldest-first index order for a ring with given head/size.
std::vector<int> ring_order(int head, int size, int capacity) {
  std::vector<int> idx(static_cast<std::size_t>(size));
  const int start = (head - size + capacity) % capacity;
  for (int i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = (start + i) % capacity;
  return idx;
}
}  // namespace

Eigen::VectorXd HistoryBuffer::y_v() const {
  Eigen::VectorXd out(size_);
  const auto idx = ring_order(head_, size_, capacity_);
  for (int i = 0; i < size_; ++i) out(i) = yv_(idx[static_cast<std::size_t>(i)]);
  return out;
}

Eigen::VectorXd HistoryBuffer::y_omega() const {
  Eigen::VectorXd out(size_);
  const auto idx = ring_order(head_, size_, capacity_);
  for (int i = 0; i < size_; ++i) out(i) = yw_(idx[static_cast<std::size_t>(i)]);
  return out;
}

Eigen::MatrixXd HistoryBuffer::f_v() const {
  Eigen::MatrixXd out(size_, m_);
  const auto idx = ring_order(head_, size_, capacity_);
  for (int i = 0; i < size_; ++i) out.row(i) = fv_.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

Eigen::MatrixXd HistoryBuffer::f_omega() const {
  Eigen::MatrixXd out(size_, m_);
  const auto idx = ring_order(head_, size_, capacity_);
  for (int i = 0; i < size_; ++i) out.row(i) = fw_.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

Eigen::VectorXd project_simplex(const Eigen::VectorXd& z) {
  const auto m = z.size();
  if (m < 1 || !z.allFinite()) {
    throw std::invalid_argument("project_simplex: need a finite non-empty vector");
  }
  std::vector<double> u(z.data(), z.data() + m);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumsum = 0.0;
  double tau = 0.0;
  int rho = 0;
  for (int i = 0; i < m; ++i) {
    cumsum += u[static_cast<std::size_t>(i)];
    const double t = (cumsum - 1.0) / static_cast<double>(i + 1);
    if (u[static_cast<std::size_t>(i)] - t > 0.0) {
      rho = i + 1;
      tau = t;
    }
  }
  (void)rho;
  return (z.array() - tau).cwiseMax(0.0);
}

namespace {

struct WeightObjective {
  Eigen::MatrixXd fv, fw;   // h x M
  Eigen::VectorXd yv, yw;   // h
  Eigen::VectorXd prev;     // M
  double gamma{0.0};

  double operator()(const Eigen::VectorXd& w) const {
    const double rv = (yv - fv * w).squaredNorm();
    const double rw = (yw - fw * w).squaredNorm();
    return rv + rw + gamma * (w - prev).cwiseAbs().sum();
  }

  // Subgradient with the minimizing selection (0) on the L1 kinks.
  Eigen::VectorXd subgradient(const Eigen::VectorXd& w) const {
    Eigen::VectorXd g = 2.0 * (fv.transpose() * (fv * w - yv) + fw.transpose() * (fw * w - yw));
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double d = w(i) - prev(i);
      if (d > 0.0) g(i) += gamma;
      else if (d < 0.0) g(i) -= gamma;
    }
    return g;
  }
};

// Exact minimization along w + t (e_i - e_j): piecewise quadratic in t with
// kinks where w_i + t or w_j - t crosses its prev value.
double pairwise_line_min(const WeightObjective& obj, const Eigen::VectorXd& w, int i, int j) {
  const Eigen::VectorXd d =
      Eigen::VectorXd::Unit(w.size(), i) - Eigen::VectorXd::Unit(w.size(), j);
  const Eigen::VectorXd fvd = obj.fv * d, fwd = obj.fw * d;
  const double a2 = fvd.squaredNorm() + fwd.squaredNorm();
  const double a1 = 2.0 * (fvd.dot(obj.fv * w - obj.yv) + fwd.dot(obj.fw * w - obj.yw));
  const double t_lo = -w(i), t_hi = w(j);

  std::vector<double> cand = {t_lo, t_hi};
  const double k1 = obj.prev(i) - w(i);
  const double k2 = w(j) - obj.prev(j);
  if (k1 > t_lo && k1 < t_hi) cand.push_back(k1);
  if (k2 > t_lo && k2 < t_hi) cand.push_back(k2);
  // Unconstrained minimizer of each smooth piece: t = -(a1 + gamma * s) / (2 a2)
  // where s in {-2, 0, 2} covers the possible sign combinations.
  if (a2 > 0.0) {
    for (double sgn : {-2.0, 0.0, 2.0}) {
      const double t = -(a1 + obj.gamma * sgn) / (2.0 * a2);
      if (t > t_lo && t < t_hi) cand.push_back(t);
    }
  }
  // val(t) is the objective change relative to t = 0, which scores 0.
  double best_t = 0.0;
  double best = 0.0;
  for (double t : cand) {
    const double val = a2 * t * t + a1 * t +
                       obj.gamma * (std::abs(w(i) + t - obj.prev(i)) - std::abs(w(i) - obj.prev(i)) +
                                    std::abs(w(j) - t - obj.prev(j)) - std::abs(w(j) - obj.prev(j)));
    if (val < best) {
      best = val;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace

WeightSolveResult solve_weights(const HistoryBuffer& buf, const TerrainWeights& prev,
                                const WeightSolverConfig& cfg) {
  if (!prev.on_simplex(1e-6)) {
    throw std::invalid_argument("solve_weights: prev weights must lie on the simplex");
  }
  if (cfg.gamma < 0.0 || !(cfg.tol > 0.0)) {
    throw std::invalid_argument("solve_weights: gamma >= 0 and tol > 0 required");
  }
  WeightSolveResult res;
  if (buf.size() == 0) {
    res.weights = prev;
    res.buffer_empty = true;
    return res;
  }

  WeightObjective obj{buf.f_v(), buf.f_omega(), buf.y_v(), buf.y_omega(), prev.w, cfg.gamma};
  Eigen::VectorXd w = project_simplex(prev.w);
  double fcur = obj(w);
  Eigen::VectorXd best_w = w;
  double best = fcur;

  // Phase 1: projected subgradient, diminishing base step with backtracking.
  const double grad_scale = std::max(obj.subgradient(w).cwiseAbs().maxCoeff(), 1e-12);
  for (int t = 0; t < cfg.max_iters; ++t) {
    const Eigen::VectorXd g = obj.subgradient(w);
    double step = cfg.step0 / ((1.0 + t) * grad_scale);
    bool moved = false;
    for (int back = 0; back < 20; ++back) {
      const Eigen::VectorXd cand = project_simplex(w - step * g);
      const double fc = obj(cand);
      if (fc <= fcur) {
        w = cand;
        fcur = fc;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (fcur < best) {
      best = fcur;
      best_w = w;
    }
    if (!moved) break;
  }

  // Phase 2: sweep coordinate pairs with exact line minimization until no
  // pair improves the objective beyond tol.
  const int m = buf.n_terrains();
  w = best_w;
  fcur = best;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double improved = 0.0;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        if (i == j) continue;
        const double t = pairwise_line_min(obj, w, i, j);
        if (t == 0.0) continue;
        Eigen::VectorXd cand = w;
        cand(i) = std::clamp(cand(i) + t, 0.0, 1.0);
        cand(j) = std::clamp(cand(j) - t, 0.0, 1.0);
        const double fc = obj(cand);
        if (fc < fcur - 1e-16) {
          improved += fcur - fc;
          w = cand;
          fcur = fc;
        }
      }
    }
    if (improved < 0.1 * cfg.tol) break;
  }
  if (fcur < best) {
    best = fcur;
    best_w = w;
  }

  // Phase 2 moves preserve the simplex up to round-off; re-project so the
  // returned weights satisfy the invariants exactly.
  res.weights.w = project_simplex(best_w);
  res.objective = obj(res.weights.w);
  return res;
}

Eigen::MatrixX2d per_terrain_mean_prediction(const GpModel& model, const Eigen::Vector4d& query,
                                             const NominalParams& nominal) {
  const int m2 = model.n_outputs();
  if (m2 < 2 || m2 % 2 != 0) {
    throw std::invalid_argument("per_terrain_mean_prediction: model must have 2M outputs");
  }
  const int m = m2 / 2;
  const double v_next = query(0) + (nominal.dt / nominal.tau_v) * (query(2) - query(0));
  const double w_next = query(1) + (nominal.dt / nominal.tau_omega) * (query(3) - query(1));
  const auto pred = model.predict(query);
  Eigen::MatrixX2d out(m, 2);
  for (int i = 0; i < m; ++i) {
    out(i, 0) = v_next + pred.mean(2 * i);
    out(i, 1) = w_next + pred.mean(2 * i + 1);
  }
  return out;
}

}  // namespace gpmppi
