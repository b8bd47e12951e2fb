#include "promkit/covariance.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "promkit/errors.hpp"

namespace promkit {

namespace {

// +1 when the shared encoding has the same role in both pairs, -1 when
// opposite, 0 when the pairs are disjoint. `shared` receives the encoding.
int shared_sign(EncodingPair p, EncodingPair q, int& shared) {
  if (p.minuend == q.minuend) { shared = p.minuend; return +1; }
  if (p.subtrahend == q.subtrahend) { shared = p.subtrahend; return +1; }
  if (p.minuend == q.subtrahend) { shared = p.minuend; return -1; }
  if (p.subtrahend == q.minuend) { shared = p.subtrahend; return -1; }
  return 0;
}

// Fills the covariance from per-encoding magnitudes `mag` (Ne x Nc). `extra`
// is the "+1" noise-floor term of the model form, 0 for the data form.
Eigen::MatrixXd pairwise_cov(const Eigen::MatrixXd& mag, double extra, ErrorKind zero_kind) {
  const int ne = static_cast<int>(mag.rows());
  const double nc = static_cast<double>(mag.cols());
  const auto pairs = canonical_pairs(ne);
  const int d = static_cast<int>(pairs.size());

  Eigen::VectorXd power = mag.array().square().rowwise().sum();
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    const auto [a, b] = pairs[static_cast<std::size_t>(i)];
    const double cross = (mag.row(a).array() * mag.row(b).array()).sum();
    if (!(cross > 0.0)) {
      std::ostringstream os;
      os << "pair " << a + 1 << b + 1 << " has zero signal product";
      throw Error(zero_kind, os.str());
    }
    sigma(i, i) = (power(a) + power(b) + extra * nc) / (2.0 * cross * cross);
    for (int j = 0; j < i; ++j) {
      int e = -1;
      const int sign = shared_sign(pairs[static_cast<std::size_t>(i)],
                                   pairs[static_cast<std::size_t>(j)], e);
      if (sign == 0) continue;
      const double c = sign * nc / (2.0 * power(e));
      sigma(i, j) = c;
      sigma(j, i) = c;
    }
  }
  return sigma;
}

}  // namespace

SnrMatrix SnrMatrix::per_encoding(std::span<const double> snr, int num_coils) {
  SnrMatrix out{Eigen::MatrixXd(static_cast<Eigen::Index>(snr.size()), num_coils)};
  for (Eigen::Index a = 0; a < out.s.rows(); ++a)
    out.s.row(a).setConstant(snr[static_cast<std::size_t>(a)]);
  return out;
}

PhaseCovariance model_phase_cov(const SnrMatrix& snr) {
  if ((snr.s.array() < 0.0).any() || !snr.s.allFinite())
    throw Error(ErrorKind::Validation, "SNR entries must be finite and nonnegative");
  return {pairwise_cov(snr.s, 1.0, ErrorKind::SingularPair), true};
}

PhaseCovariance data_phase_cov(const MeasurementMatrix& y) {
  const Eigen::MatrixXd mag = y.cwiseAbs();
  for (Eigen::Index a = 0; a < mag.rows(); ++a)
    if (!(mag.row(a).sum() > 0.0))
      throw Error(ErrorKind::MaskedVoxel, "encoding row has zero magnitude");
  return {psd_project(pairwise_cov(mag, 0.0, ErrorKind::MaskedVoxel)), false};
}

Eigen::MatrixXd psd_project(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const Eigen::VectorXd clamped = eig.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd out =
      eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd velocity_cov(const PhaseCovariance& theta_cov, const VencSet& vencs) {
  const auto d = static_cast<Eigen::Index>(vencs.size());
  if (theta_cov.sigma.rows() != d || theta_cov.sigma.cols() != d)
    throw Error(ErrorKind::Validation, "covariance and venc dimensions disagree");
  const Eigen::VectorXd scale =
      Eigen::Map<const Eigen::VectorXd>(vencs.values().data(), d) / std::numbers::pi;
  return scale.asDiagonal() * psd_project(theta_cov.sigma) * scale.asDiagonal();
}

double cosine_similarity(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorKind::Validation, "cosine similarity needs equal shapes");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0)
    throw Error(ErrorKind::UndefinedSimilarity, "cosine similarity of a zero matrix");
  return (a.transpose() * b).trace() / (na * nb);
}

}  // namespace promkit
