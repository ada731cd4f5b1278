#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gpmppi/core.hpp"

namespace gpmppi {

// Squared-exponential kernel with per-dimension lengthscales (ARD).
struct KernelParams {
  double signal_var{1.0};
  Eigen::Vector4d lengthscales{Eigen::Vector4d::Ones()};
  double noise_var{1e-4};

  void validate() const;
  bool operator==(const KernelParams& o) const {
    return signal_var == o.signal_var && noise_var == o.noise_var &&
           lengthscales == o.lengthscales;
  }
};

double kernel_eval(const Eigen::Vector4d& a, const Eigen::Vector4d& b, const KernelParams& p);

// Exact GP over shared 4-D inputs with one or more outputs. Outputs that share
// a kernel share the factorization and the predictive variance; with the
// terrain-major output layout (dv_0, dw_0, dv_1, ...) and a single shared
// kernel this is the batch model: one Cholesky factor, per-output alphas.
class GpModel {
 public:
  GpModel() = default;

  static GpModel fit(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& outputs,
                     const std::vector<KernelParams>& kernels);

  struct Prediction {
    Eigen::VectorXd mean;  // per output
    Eigen::VectorXd var;   // per output, clamped at >= 0
  };
  Prediction predict(const Eigen::Vector4d& query) const;

  struct BatchPrediction {
    Eigen::MatrixXd mean;  // S x n_outputs
    Eigen::MatrixXd var;   // S x n_outputs
  };
  BatchPrediction predict_batch(const Eigen::MatrixXd& queries) const;

  // Reusable scratch for the batched path; one per worker thread.
  struct Workspace {
    Eigen::MatrixXd q_aug, kstar, a, group_mean;
    Eigen::VectorXd group_var;
  };
  // Writes S x n_outputs blocks; mean/var must be pre-sized by the caller.
  void predict_batch_into(const Eigen::Ref<const Eigen::MatrixXd>& queries,
                          Eigen::Ref<Eigen::MatrixXd> mean, Eigen::Ref<Eigen::MatrixXd> var,
                          Workspace& ws) const;

  int n_points() const { return static_cast<int>(inputs_.rows()); }
  int n_outputs() const { return static_cast<int>(outputs_.cols()); }
  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::MatrixXd& outputs() const { return outputs_; }
  const std::vector<KernelParams>& kernels() const { return kernels_; }

  double log_marginal_likelihood(int output) const { return lml_.at(output); }
  double total_log_marginal_likelihood() const;

  int n_groups() const { return static_cast<int>(groups_.size()); }
  const Eigen::MatrixXd& group_chol(int g) const { return groups_.at(g).chol_lower; }
  double group_jitter(int g) const { return groups_.at(g).jitter; }
  const std::vector<int>& group_outputs(int g) const { return groups_.at(g).outputs; }

  // Flat binary record of (inputs, outputs, kernel params); the factorization
  // is rebuilt on load, so save/load round-trips bit-exactly.
  void save(const std::string& path) const;
  static GpModel load(const std::string& path);
  void save(std::ostream& os) const;
  static GpModel load(std::istream& is);

 private:
  struct KernelGroup {
    KernelParams params;
    std::vector<int> outputs;        // column indices into outputs_
    Eigen::MatrixXd scaled_inputs;   // n x 4, divided by lengthscales
    Eigen::VectorXd input_norms;     // -0.5 |scaled row|^2
    Eigen::VectorXd input_norms_sv;  // input_norms + log(signal_var)
    Eigen::MatrixXd inputs_aug;      // n x 6: [scaled | 1 | input_norms_sv]
    Eigen::MatrixXd chol_lower;      // L with L L^T = K + (noise + jitter) I
    Eigen::MatrixXd inv_lower_t;     // L^{-T}, upper triangular
    Eigen::MatrixXd alphas;          // n x |outputs|
    double jitter{0.0};
  };

  Eigen::MatrixXd inputs_, outputs_;
  std::vector<KernelParams> kernels_;
  std::vector<KernelGroup> groups_;
  std::vector<double> lml_;
};

// Deterministic hyperparameter selection: coarse log-grid over (signal_var,
// shared lengthscale scale, noise_var) maximizing the summed log marginal
// likelihood across outputs, refined once around the best cell. Returns one
// kernel shared by every output.
KernelParams select_kernel_grid(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& outputs);

// Weighted GP ensemble: mean combines linearly, covariance with squared
// weights. Rows of means/var_diags are per-terrain (v, omega) pairs.
GaussianCorrection ensemble_combine(const Eigen::Ref<const Eigen::MatrixX2d>& means,
                                    const Eigen::Ref<const Eigen::MatrixX2d>& var_diags,
                                    const TerrainWeights& w);

}  // namespace gpmppi
