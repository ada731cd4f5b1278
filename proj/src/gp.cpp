#include "gpmppi/gp.hpp"

#include <Eigen/Cholesky>

#include <algorithm>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace gpmppi {

namespace {

constexpr char kMagic[8] = {'G', 'P', 'M', 'P', 'P', 'I', 'G', '1'};

// K(A, B)_ij = exp(A_i . B_j + an_i + bn_j), with the log signal variance
// folded into the B-side norms. A, B are lengthscale-scaled inputs. Kept as
// separate statements so every pass stays on Eigen's packet (vectorized) path.
void cross_kernel(const Eigen::MatrixXd& a, const Eigen::VectorXd& an, const Eigen::MatrixXd& b,
                  const Eigen::VectorXd& bn, Eigen::MatrixXd& out) {
  out.noalias() = a * b.transpose();
  out.colwise() += an;
  out.rowwise() += bn.transpose();
  out = out.array().exp();
}

Eigen::VectorXd half_neg_sq_norms(const Eigen::MatrixXd& scaled) {
  return -0.5 * scaled.rowwise().squaredNorm();
}

void write_raw(std::ostream& os, const void* p, std::size_t bytes) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(bytes));
}

void read_raw(std::istream& is, void* p, std::size_t bytes) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(bytes));
  if (!is) throw std::runtime_error("GpModel::load: truncated record");
}

}  // namespace

void KernelParams::validate() const {
  if (!(signal_var > 0.0) || !(noise_var > 0.0) || !(lengthscales.array() > 0.0).all()) {
    throw std::invalid_argument("KernelParams: all parameters must be strictly positive");
  }
}

double kernel_eval(const Eigen::Vector4d& a, const Eigen::Vector4d& b, const KernelParams& p) {
  if (!a.allFinite() || !b.allFinite()) {
    throw std::invalid_argument("kernel_eval: non-finite input");
  }
  const Eigen::Array4d d = (a - b).array() / p.lengthscales.array();
  return p.signal_var * std::exp(-0.5 * d.square().sum());
}

GpModel GpModel::fit(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& outputs,
                     const std::vector<KernelParams>& kernels) {
  const auto n = inputs.rows();
  const auto m = outputs.cols();
  if (n < 1 || inputs.cols() != 4) {
    throw std::invalid_argument("GpModel::fit: inputs must be n x 4 with n >= 1");
  }
  if (outputs.rows() != n || m < 1) {
    throw std::invalid_argument("GpModel::fit: outputs must be n x m with m >= 1");
  }
  if (static_cast<Eigen::Index>(kernels.size()) != m) {
    throw std::invalid_argument("GpModel::fit: one KernelParams per output column required");
  }
  if (!inputs.allFinite() || !outputs.allFinite()) {
    throw std::invalid_argument("GpModel::fit: non-finite training data");
  }

  GpModel model;
  model.inputs_ = inputs;
  model.outputs_ = outputs;
  model.kernels_ = kernels;
  model.lml_.assign(m, 0.0);

  // Group output columns by identical kernels; each group shares one factor.
  for (int j = 0; j < m; ++j) {
    kernels[j].validate();
    int g = -1;
    for (std::size_t k = 0; k < model.groups_.size(); ++k) {
      if (model.groups_[k].params == kernels[j]) {
        g = static_cast<int>(k);
        break;
      }
    }
    if (g < 0) {
      model.groups_.push_back(KernelGroup{});
      model.groups_.back().params = kernels[j];
      g = static_cast<int>(model.groups_.size()) - 1;
    }
    model.groups_[g].outputs.push_back(j);
  }

  const double log2pi = std::log(2.0 * kPi);
  for (auto& grp : model.groups_) {
    grp.scaled_inputs = inputs.array().rowwise() / grp.params.lengthscales.transpose().array();
    grp.input_norms = half_neg_sq_norms(grp.scaled_inputs);
    grp.input_norms_sv = grp.input_norms.array() + std::log(grp.params.signal_var);
    grp.inputs_aug.resize(n, 6);
    grp.inputs_aug.leftCols<4>() = grp.scaled_inputs;
    grp.inputs_aug.col(4).setOnes();
    grp.inputs_aug.col(5) = grp.input_norms_sv;

    Eigen::MatrixXd K(n, n);
    cross_kernel(grp.scaled_inputs, grp.input_norms, grp.scaled_inputs, grp.input_norms_sv, K);
    K = (0.5 * (K + K.transpose())).eval();

    // Jitter escalation: plain noise first, then 1e-10 .. 1e-6 in decade steps.
    Eigen::LLT<Eigen::MatrixXd> llt;
    bool ok = false;
    double jitter = 0.0;
    for (int attempt = 0; attempt <= 5 && !ok; ++attempt) {
      jitter = attempt == 0 ? 0.0 : std::pow(10.0, -11 + attempt);  // 1e-10 .. 1e-6
      Eigen::MatrixXd kreg = K;
      kreg.diagonal().array() += grp.params.noise_var + jitter;
      llt.compute(kreg);
      ok = llt.info() == Eigen::Success;
    }
    if (!ok) {
      std::ostringstream msg;
      msg << "GpModel::fit: Cholesky failed for kernel group after jitter up to 1e-6"
          << " (signal_var=" << grp.params.signal_var << ", noise_var=" << grp.params.noise_var
          << ")";
      throw std::runtime_error(msg.str());
    }
    grp.jitter = jitter;
    grp.chol_lower = llt.matrixL();
    grp.inv_lower_t = grp.chol_lower.triangularView<Eigen::Lower>()
                          .solve(Eigen::MatrixXd::Identity(n, n))
                          .transpose();

    grp.alphas.resize(n, static_cast<Eigen::Index>(grp.outputs.size()));
    const double logdet = grp.chol_lower.diagonal().array().log().sum();
    for (std::size_t c = 0; c < grp.outputs.size(); ++c) {
      const int j = grp.outputs[c];
      grp.alphas.col(static_cast<Eigen::Index>(c)) = llt.solve(outputs.col(j));
      model.lml_[j] = -0.5 * outputs.col(j).dot(grp.alphas.col(static_cast<Eigen::Index>(c))) -
                      logdet - 0.5 * static_cast<double>(n) * log2pi;
    }
  }
  return model;
}

void GpModel::predict_batch_into(const Eigen::Ref<const Eigen::MatrixXd>& queries,
                                 Eigen::Ref<Eigen::MatrixXd> mean, Eigen::Ref<Eigen::MatrixXd> var,
                                 Workspace& ws) const {
  const auto s = queries.rows();
  if (queries.cols() != 4) {
    throw std::invalid_argument("GpModel::predict_batch: queries must be S x 4");
  }
  if (groups_.empty()) {
    throw std::logic_error("GpModel::predict_batch: model not fitted");
  }
  if (mean.rows() != s || mean.cols() != n_outputs() || var.rows() != s ||
      var.cols() != n_outputs()) {
    throw std::invalid_argument("GpModel::predict_batch: result blocks mis-sized");
  }
  if (s == 0) return;

  const auto n = inputs_.rows();
  for (const auto& grp : groups_) {
    // Augmented product folds the query and input norm offsets into one GEMM:
    // [q_scaled | qn | 1] [x_scaled | 1 | xn]^T = q.x + qn + xn, then one exp.
    ws.q_aug.resize(s, 6);
    ws.q_aug.leftCols<4>() =
        queries.array().rowwise() / grp.params.lengthscales.transpose().array();
    ws.q_aug.col(4) = -0.5 * ws.q_aug.leftCols<4>().rowwise().squaredNorm();
    ws.q_aug.col(5).setOnes();
    ws.kstar.resize(s, n);
    ws.kstar.noalias() = ws.q_aug * grp.inputs_aug.transpose();
    ws.kstar = ws.kstar.array().exp();

    ws.group_mean.resize(s, static_cast<Eigen::Index>(grp.outputs.size()));
    ws.group_mean.noalias() = ws.kstar * grp.alphas;

    ws.a.resize(s, n);
    ws.a.noalias() = ws.kstar * grp.inv_lower_t.triangularView<Eigen::Upper>();
    // Column-accumulated |L^{-1} k*|^2 keeps the reduction on contiguous data.
    ws.group_var.setConstant(s, grp.params.signal_var);
    for (Eigen::Index j = 0; j < n; ++j) {
      ws.group_var.array() -= ws.a.col(j).array().square();
    }
    ws.group_var = ws.group_var.cwiseMax(0.0);

    for (std::size_t c = 0; c < grp.outputs.size(); ++c) {
      mean.col(grp.outputs[c]) = ws.group_mean.col(static_cast<Eigen::Index>(c));
      var.col(grp.outputs[c]) = ws.group_var;
    }
  }
}

GpModel::BatchPrediction GpModel::predict_batch(const Eigen::MatrixXd& queries) const {
  BatchPrediction out;
  out.mean.resize(queries.rows(), n_outputs());
  out.var.resize(queries.rows(), n_outputs());
  Workspace ws;
  predict_batch_into(queries, out.mean, out.var, ws);
  return out;
}

GpModel::Prediction GpModel::predict(const Eigen::Vector4d& query) const {
  if (!query.allFinite()) {
    throw std::invalid_argument("GpModel::predict: non-finite query");
  }
  const auto batch = predict_batch(query.transpose());
  return {batch.mean.row(0).transpose(), batch.var.row(0).transpose()};
}

double GpModel::total_log_marginal_likelihood() const {
  double total = 0.0;
  for (double v : lml_) total += v;
  return total;
}

void GpModel::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("GpModel::save: cannot open " + path);
  save(os);
  if (!os) throw std::runtime_error("GpModel::save: write failed for " + path);
}

void GpModel::save(std::ostream& os) const {
  write_raw(os, kMagic, sizeof(kMagic));
  const std::int64_t n = inputs_.rows(), m = outputs_.cols();
  write_raw(os, &n, sizeof(n));
  write_raw(os, &m, sizeof(m));
  write_raw(os, inputs_.data(), sizeof(double) * static_cast<std::size_t>(n * 4));
  write_raw(os, outputs_.data(), sizeof(double) * static_cast<std::size_t>(n * m));
  for (const auto& k : kernels_) {
    write_raw(os, &k.signal_var, sizeof(double));
    write_raw(os, k.lengthscales.data(), sizeof(double) * 4);
    write_raw(os, &k.noise_var, sizeof(double));
  }
}

GpModel GpModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("GpModel::load: cannot open " + path);
  return load(is);
}

GpModel GpModel::load(std::istream& is) {
  char magic[8];
  read_raw(is, magic, sizeof(magic));
  if (!std::equal(magic, magic + 8, kMagic)) {
    throw std::runtime_error("GpModel::load: bad magic");
  }
  std::int64_t n = 0, m = 0;
  read_raw(is, &n, sizeof(n));
  read_raw(is, &m, sizeof(m));
  if (n < 1 || m < 1 || n > (1 << 24) || m > (1 << 16)) {
    throw std::runtime_error("GpModel::load: implausible dimensions");
  }
  Eigen::MatrixXd inputs(n, 4), outputs(n, m);
  read_raw(is, inputs.data(), sizeof(double) * static_cast<std::size_t>(n * 4));
  read_raw(is, outputs.data(), sizeof(double) * static_cast<std::size_t>(n * m));
  std::vector<KernelParams> kernels(static_cast<std::size_t>(m));
  for (auto& k : kernels) {
    read_raw(is, &k.signal_var, sizeof(double));
    read_raw(is, k.lengthscales.data(), sizeof(double) * 4);
    read_raw(is, &k.noise_var, sizeof(double));
  }
  return fit(inputs, outputs, kernels);
}

KernelParams select_kernel_grid(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& outputs) {
  const auto n = inputs.rows();
  const auto m = outputs.cols();
  if (n < 2) {
    throw std::invalid_argument("select_kernel_grid: need at least 2 points");
  }

  Eigen::Vector4d base;
  for (int d = 0; d < 4; ++d) {
    const double mu = inputs.col(d).mean();
    const double var = (inputs.col(d).array() - mu).square().sum() / static_cast<double>(n - 1);
    base(d) = std::max(std::sqrt(var), 1e-3);
  }
  double pooled = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double mu = outputs.col(j).mean();
    pooled += (outputs.col(j).array() - mu).square().sum() / static_cast<double>(n - 1);
  }
  pooled = std::max(pooled / static_cast<double>(m), 1e-10);

  // Base squared distances at unit scale; a shared scale s divides them by s^2.
  const Eigen::MatrixXd scaled = inputs.array().rowwise() / base.transpose().array();
  const Eigen::VectorXd sq = scaled.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * scaled * scaled.transpose();
  d2.colwise() += sq;
  d2.rowwise() += sq.transpose();
  d2 = (0.5 * (d2 + d2.transpose())).cwiseMax(0.0).eval();

  const double log2pi = std::log(2.0 * kPi);
  const auto score = [&](double sv, double scale, double nv) {
    Eigen::MatrixXd K = (sv * (-d2 / (2.0 * scale * scale)).array().exp()).matrix();
    K.diagonal().array() += nv;
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const double logdet = Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    double total = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::VectorXd alpha = llt.solve(outputs.col(j));
      total += -0.5 * outputs.col(j).dot(alpha) - logdet - 0.5 * static_cast<double>(n) * log2pi;
    }
    return total;
  };

  const auto logspace = [](double lo, double hi, int k) {
    std::vector<double> v(k);
    for (int i = 0; i < k; ++i) {
      v[i] = std::pow(10.0, lo + (hi - lo) * (k == 1 ? 0.0 : static_cast<double>(i) / (k - 1)));
    }
    return v;
  };

  double best_sv = pooled, best_s = 1.0, best_nv = pooled * 0.1;
  double best = -std::numeric_limits<double>::infinity();
  const auto sweep = [&](const std::vector<double>& svs, const std::vector<double>& ss,
                         const std::vector<double>& nvs) {
    for (double sv : svs) {
      for (double s : ss) {
        for (double nv : nvs) {
          const double val = score(sv, s, nv);
          if (val > best) {
            best = val;
            best_sv = sv;
            best_s = s;
            best_nv = nv;
          }
        }
      }
    }
  };

  // Coarse pass, then one refinement around the winning cell.
  {
    std::vector<double> svs, ss, nvs;
    for (double f : logspace(-1.5, 1.5, 5)) svs.push_back(pooled * f);
    ss = logspace(-1.0, 1.0, 7);
    for (double f : logspace(-3.0, 0.5, 5)) nvs.push_back(pooled * f);
    sweep(svs, ss, nvs);
  }
  {
    const double sv0 = best_sv, s0 = best_s, nv0 = best_nv;
    std::vector<double> svs, ss, nvs;
    for (double f : logspace(-0.5, 0.5, 5)) svs.push_back(sv0 * f);
    for (double f : logspace(-0.35, 0.35, 7)) ss.push_back(s0 * f);
    for (double f : logspace(-0.6, 0.6, 5)) nvs.push_back(nv0 * f);
    sweep(svs, ss, nvs);
  }

  KernelParams params;
  params.signal_var = best_sv;
  params.lengthscales = base * best_s;
  params.noise_var = best_nv;
  return params;
}

GaussianCorrection ensemble_combine(const Eigen::Ref<const Eigen::MatrixX2d>& means,
                                    const Eigen::Ref<const Eigen::MatrixX2d>& var_diags,
                                    const TerrainWeights& w) {
  const auto m = means.rows();
  if (m < 1 || var_diags.rows() != m || w.size() != m) {
    throw std::invalid_argument("ensemble_combine: size mismatch");
  }
  if (!w.on_simplex(1e-6)) {
    throw std::invalid_argument("ensemble_combine: weights off the simplex beyond 1e-6");
  }
  GaussianCorrection out;
  double var_v = 0.0, var_w = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double wi = w.w(i);
    out.mean(0) += wi * means(i, 0);
    out.mean(1) += wi * means(i, 1);
    var_v += wi * wi * var_diags(i, 0);
    var_w += wi * wi * var_diags(i, 1);
  }
  out.cov << var_v, 0.0, 0.0, var_w;
  return out;
}

}  // namespace gpmppi
