#pragma once

// Joint phase unwrapping of all pairwise differences: BLUE combination of
// unwrapped velocities, a pruned set of wrapping-integer candidates, and
// selection by the Gaussian negative log likelihood.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "promkit/congruence.hpp"
#include "promkit/covariance.hpp"

namespace promkit {

struct CandidateSolution {
  std::vector<int> k;
  double v_hat = 0.0;
  double nll = 0.0;
};

struct PromResult {
  double v_hat = 0.0;
  /// Sorted by nll ascending, ties by lexicographic k.
  std::vector<CandidateSolution> candidates;
  Eigen::VectorXd weights;
  std::vector<int> h;
  /// w^T Sigma(n) w, the error variance given correct wrapping integers.
  double predicted_variance = 0.0;
  double predicted_rmse() const;
};

/// Eigen pseudo-inverse with eigenvalues below 1e-10 * max treated as zero.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& sigma_n);

/// w = Sigma^+ 1 / (1^T Sigma^+ 1). Throws DegenerateCovariance when the
/// denominator vanishes.
Eigen::VectorXd blue_weights(const Eigen::MatrixXd& sigma_n);

/// The pruned wrapping-integer set for v in [0, omega), one vector per
/// interval between consecutive breakpoints, identified modulo h.
std::vector<std::vector<int>> candidate_wrap_set(const WrappedVelocities& v_tilde,
                                                 double omega);

/// 1/2 d^T Sigma^+ d with d = d_{2 venc}(v_tilde, v).
double neg_log_likelihood(const WrappedVelocities& v_tilde, double v,
                          const Eigen::MatrixXd& sigma_n);

/// Scratch buffers for PromSolver::solve; reuse one per thread.
struct PromWorkspace {
  struct Breakpoint {
    double position;
    int pair;
  };
  std::vector<Breakpoint> breakpoints;
  std::vector<int> k;
  std::vector<int> best_k;
  std::vector<double> d;
};

/// Estimator state that depends only on the vencs and the noise covariance.
/// Reusable across voxels sharing the same covariance (model mode, Monte
/// Carlo studies).
class PromSolver {
 public:
  PromSolver(const VencSet& vencs, const Eigen::MatrixXd& sigma_n, double offset = 0.0);

  struct Best {
    double v_hat;
    double nll;
    std::span<const int> k;  // views into the workspace
  };

  /// Minimum-nll candidate, no allocation once the workspace is warm.
  Best solve(std::span<const double> v_tilde, PromWorkspace& ws) const;

  /// Every candidate in K(v_tilde), sorted.
  std::vector<CandidateSolution> candidates(std::span<const double> v_tilde) const;

  PromResult estimate(std::span<const double> v_tilde) const;

  /// BLUE combination for a fixed k, wrapped into [offset, offset + omega).
  double combine(std::span<const double> v_tilde, std::span<const int> k) const;
  double nll(std::span<const double> v_tilde, double v) const;

  const VencSet& vencs() const { return vencs_; }
  double omega() const { return omega_; }
  double offset() const { return offset_; }
  const Eigen::VectorXd& weights() const { return w_; }
  const Eigen::MatrixXd& sigma_n() const { return sigma_n_; }
  const std::vector<int>& h() const { return h_; }
  double predicted_variance() const { return variance_; }

 private:
  template <typename Visit>
  void for_each_candidate(std::span<const double> v_tilde, PromWorkspace& ws,
                          Visit&& visit) const;

  VencSet vencs_;
  Eigen::MatrixXd sigma_n_;
  Eigen::MatrixXd sigma_pinv_;
  std::vector<double> pinv_upper_;
  Eigen::VectorXd w_;
  std::vector<double> period_;  // 2 venc
  std::vector<double> inv_period_;
  std::vector<double> step_;  // w_i * 2 venc_i
  double inv_omega_ = 0.0;
  std::vector<int> h_;
  double omega_;
  double offset_;
  double variance_;
};

/// r_ab = sum_b y_a y_b^*, canonical pair order.
Eigen::VectorXcd conjugate_products(const MeasurementMatrix& y);

/// Wrapped velocities from the phases of the coil-combined conjugate products.
WrappedVelocities wrapped_velocities_from_data(const MeasurementMatrix& y,
                                               const VencSet& vencs);

/// Allocation-free variant for Monte Carlo loops; `out` has one slot per pair.
void wrapped_velocities_into(const MeasurementMatrix& y, const VencSet& vencs,
                             std::span<double> out);

/// Which covariance the estimator uses: data-driven (default) or the model
/// form from known SNRs.
class CovarianceMode {
 public:
  static CovarianceMode data() { return CovarianceMode{}; }
  static CovarianceMode model(SnrMatrix snr) {
    CovarianceMode m;
    m.snr_ = std::move(snr);
    m.use_model_ = true;
    return m;
  }
  bool is_model() const { return use_model_; }
  const SnrMatrix& snr() const { return snr_; }

 private:
  bool use_model_ = false;
  SnrMatrix snr_;
};

/// Velocity-domain covariance for one voxel under the chosen mode.
Eigen::MatrixXd voxel_velocity_cov(const MeasurementMatrix& y, const VencSet& vencs,
                                   const CovarianceMode& mode);

PromResult prom_estimate(const MeasurementMatrix& y, const EncodingScheme& scheme,
                         const CovarianceMode& mode = CovarianceMode::data(),
                         double offset = 0.0);

/// Same as prom_estimate, with the vencs already derived.
PromResult prom_estimate(const MeasurementMatrix& y, const VencSet& vencs,
                         const CovarianceMode& mode = CovarianceMode::data(),
                         double offset = 0.0);

}  // namespace promkit
