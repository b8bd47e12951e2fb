#pragma once

// Error analysis for the joint unwrapping estimator: tube labels, the
// wrapped-normal mixture of the estimate, unwrapping-error rates and the
// Cramer-Rao bound of the complex-data model.

#include <cstdint>
#include <span>
#include <vector>

#include "promkit/congruence.hpp"
#include "promkit/covariance.hpp"
#include "promkit/estimator.hpp"

namespace promkit {

struct MixtureComponent {
  std::vector<int> x;  // canonical tube label, see tube_label
  double weight = 0.0;
  double center = 0.0;
  double variance = 0.0;
  std::uint64_t count = 0;
};

/// Wrapping integers with <v_tilde + k 2venc> equal to v + d_{2venc}(v_tilde, v),
/// i.e. the truth when every noise component lies within one venc.
void true_wraps(std::span<const double> v_tilde, double v, std::span<const double> venc,
                std::span<int> k);

/// k* - k_true for remainders <v + n>_{2 venc}, shifted by the smallest
/// multiple of h that makes every entry nonnegative. Shifting by h as a whole
/// leaves the estimate unchanged, so this is the canonical tube label.
std::vector<int> tube_label(std::span<const double> noise, double v, const PromSolver& solver);

/// Same label from observed remainders, with the truth recovered as in
/// true_wraps. Writes into `x`; returns true when x is all zero.
bool tube_label_observed(std::span<const double> v_tilde, double v, const PromSolver& solver,
                         PromWorkspace& ws, std::span<int> x);

struct DistributionOptions {
  std::uint64_t seed = 1;
  int threads = 0;
  /// NaN selects -omega/2.
  double offset = std::numeric_limits<double>::quiet_NaN();
};

/// Monte Carlo mixture of v_hat at true velocity v, complex data with model
/// covariance weights; the top_m components by weight.
std::vector<MixtureComponent> estimate_distribution(double v, const SnrMatrix& s,
                                                    const EncodingScheme& scheme,
                                                    std::uint64_t trials, int top_m,
                                                    const DistributionOptions& opts = {});

struct ErrorCount {
  std::uint64_t trials = 0;
  std::uint64_t errors = 0;
  bool stopped_early = false;
  double rate() const { return trials ? static_cast<double>(errors) / trials : 0.0; }
};

/// Unwrapping errors at v = 0 over `trials` complex-data draws (model
/// covariance). Stops once `stop_at` errors are seen, checked after each
/// fixed wave of blocks so the result does not depend on thread count.
ErrorCount count_unwrap_errors(const SnrMatrix& s, const VencSet& vencs, std::uint64_t trials,
                               std::uint64_t stop_at, std::uint64_t seed, int threads = 0);

double unwrap_error_prob(const SnrMatrix& s, const VencSet& vencs, std::uint64_t trials,
                         std::uint64_t seed = 1, int threads = 0);

/// Complex Gaussian model y = A_a S_b exp(i(phi0 + gamma m1_a v)) with the
/// gauge fixed by S_1: real parameters are v, phi0, A_1..A_Ne and, for
/// Nc > 1, |S_b / S_1| and arg(S_b / S_1) for b >= 2.
class CrlbModel {
 public:
  CrlbModel(double v, double phi0, std::vector<double> A, Eigen::VectorXcd S, double sigma,
            EncodingScheme scheme);

  Eigen::VectorXd parameters() const { return theta_; }
  /// Stacked noiseless measurements, encodings outer, coils inner.
  Eigen::VectorXcd mean(const Eigen::VectorXd& theta) const;
  Eigen::MatrixXcd jacobian() const;
  /// Central differences with the given step.
  Eigen::MatrixXcd numeric_jacobian(double step = 1e-6) const;
  /// (2 / sigma^2) Re(J^H J).
  Eigen::MatrixXd fisher() const;
  /// [FIM^-1]_vv in (cm/s)^2; throws NonIdentifiable on a singular FIM.
  double velocity_bound() const;

 private:
  std::vector<double> gamma_m1_;
  int ne_, nc_;
  double sigma_;
  Eigen::VectorXd theta_;
};

double crlb_velocity(double v, double phi0, const std::vector<double>& A,
                     const Eigen::VectorXcd& S, double sigma, const EncodingScheme& scheme);

}  // namespace promkit
