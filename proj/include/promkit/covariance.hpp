#pragma once

// Phase-difference noise covariance, from known SNRs or from the data.

#include <Eigen/Dense>

#include "promkit/congruence.hpp"

namespace promkit {

/// Per-voxel complex data, encodings x coils.
using MeasurementMatrix = Eigen::MatrixXcd;

/// s(a, b) = |A_a S_b| / sigma, encodings x coils.
struct SnrMatrix {
  Eigen::MatrixXd s;

  /// Same per-encoding SNR on every coil.
  static SnrMatrix per_encoding(std::span<const double> snr, int num_coils = 1);
  int num_encodings() const { return static_cast<int>(s.rows()); }
  int num_coils() const { return static_cast<int>(s.cols()); }
};

struct PhaseCovariance {
  Eigen::MatrixXd sigma;
  /// False for the data-driven form, which is only known up to a global scale.
  bool scale_known = true;
};

/// Covariance of the pairwise phase differences (canonical order) given
/// no wrapping. Shared-encoding terms are positive when the shared encoding
/// plays the same role (minuend/subtrahend) in both pairs, negative otherwise.
PhaseCovariance model_phase_cov(const SnrMatrix& snr);

/// Scaled covariance from observed magnitudes |y|, PSD-projected.
PhaseCovariance data_phase_cov(const MeasurementMatrix& y);

/// Frobenius-nearest positive semi-definite matrix (eigenvalues clamped at 0).
Eigen::MatrixXd psd_project(const Eigen::MatrixXd& m);

/// Velocity-domain noise covariance (1/pi^2) diag(venc) Pi(Sigma) diag(venc).
Eigen::MatrixXd velocity_cov(const PhaseCovariance& theta_cov, const VencSet& vencs);

/// Trace(A^T B) / (|A|_F |B|_F).
double cosine_similarity(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace promkit
