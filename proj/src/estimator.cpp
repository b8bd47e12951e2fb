#include "promkit/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "promkit/errors.hpp"

namespace promkit {

namespace {

constexpr double kRankCutoff = 1e-10;

// Calls visit(midpoint) once per nonempty interval between consecutive
// breakpoints v = <v_tilde_i + (2j+1) venc_i>_omega, taken circularly so the
// intervals on either side of 0 merge into one.
template <typename Visit>
void for_each_interval(std::span<const double> v_tilde, std::span<const double> period,
                       std::span<const int> h, double omega,
                       std::vector<PromWorkspace::Breakpoint>& bps, Visit&& visit) {
  bps.clear();
  for (std::size_t i = 0; i < v_tilde.size(); ++i) {
    const double z = period[i];
    const double first = wrap_to_range(v_tilde[i] + 0.5 * z, z);
    for (int j = 0; j < h[i]; ++j) {
      double pos = first + j * z;
      if (pos >= omega) pos -= omega;
      bps.push_back({pos, static_cast<int>(i)});
    }
  }
  std::sort(bps.begin(), bps.end(),
            [](const auto& a, const auto& b) { return a.position < b.position; });
  const std::size_t m = bps.size();
  for (std::size_t t = 0; t < m; ++t) {
    const double lo = bps[t].position;
    const double hi = t + 1 < m ? bps[t + 1].position : bps[0].position + omega;
    if (!(hi > lo)) continue;
    double mid = 0.5 * (lo + hi);
    if (mid >= omega) mid -= omega;
    visit(mid);
  }
}

// Round half to even without a libm call; assumes the default rounding mode.
inline double round_even(double x) {
  constexpr double kShift = 6755399441055744.0;  // 1.5 * 2^52
  if (!(std::fabs(x) < 1e15)) return std::nearbyint(x);
  return (x + kShift) - kShift;
}

inline double floor_fast(double x) {
  const double r = round_even(x);
  return r > x ? r - 1.0 : r;
}

inline int ceiling_wrap(double v_tilde, double v, double period) {
  return static_cast<int>(std::ceil(-0.5 - (v_tilde - v) / period));
}

std::vector<int> wrap_counts(const VencSet& vencs, double omega) {
  std::vector<int> h(vencs.size());
  for (std::size_t i = 0; i < vencs.size(); ++i)
    h[i] = static_cast<int>(std::lround(omega / (2.0 * vencs[i])));
  return h;
}

std::vector<double> periods(const VencSet& vencs) {
  std::vector<double> z(vencs.size());
  for (std::size_t i = 0; i < vencs.size(); ++i) z[i] = 2.0 * vencs[i];
  return z;
}

bool lex_less(std::span<const int> a, std::span<const int> b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

double PromResult::predicted_rmse() const { return std::sqrt(predicted_variance); }

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& sigma_n) {
  const Eigen::MatrixXd sym = 0.5 * (sigma_n + sigma_n.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double cutoff = kRankCutoff * lambda.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (lambda(i) > cutoff) inv(i) = 1.0 / lambda(i);
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::VectorXd blue_weights(const Eigen::MatrixXd& sigma_n) {
  const Eigen::MatrixXd pinv = pseudo_inverse(sigma_n);
  const Eigen::VectorXd u = pinv * Eigen::VectorXd::Ones(sigma_n.rows());
  const double denom = u.sum();
  if (!(std::abs(denom) > 0.0) || !std::isfinite(denom))
    throw Error(ErrorKind::DegenerateCovariance, "1^T Sigma^+ 1 vanishes");
  return u / denom;
}

std::vector<std::vector<int>> candidate_wrap_set(const WrappedVelocities& v_tilde,
                                                 double omega) {
  const auto h = wrap_counts(v_tilde.vencs, omega);
  const auto z = periods(v_tilde.vencs);
  std::vector<PromWorkspace::Breakpoint> bps;
  std::vector<std::vector<int>> out;
  for_each_interval(v_tilde.v_tilde, z, h, omega, bps, [&](double mid) {
    std::vector<int> k(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) k[i] = ceiling_wrap(v_tilde.v_tilde[i], mid, z[i]);
    out.push_back(std::move(k));
  });
  return out;
}

double neg_log_likelihood(const WrappedVelocities& v_tilde, double v,
                          const Eigen::MatrixXd& sigma_n) {
  const auto z = periods(v_tilde.vencs);
  const auto d = wrapped_displacement(v_tilde.v_tilde, std::span<const double>(&v, 1), z);
  const Eigen::Map<const Eigen::VectorXd> dv(d.data(), static_cast<Eigen::Index>(d.size()));
  return 0.5 * dv.dot(pseudo_inverse(sigma_n) * dv);
}

PromSolver::PromSolver(const VencSet& vencs, const Eigen::MatrixXd& sigma_n, double offset)
    : vencs_(vencs),
      sigma_n_(sigma_n),
      sigma_pinv_(pseudo_inverse(sigma_n)),
      w_(blue_weights(sigma_n)),
      period_(periods(vencs)),
      omega_(unambiguous_range(vencs)),
      offset_(offset) {
  if (sigma_n.rows() != static_cast<Eigen::Index>(vencs.size()))
    throw Error(ErrorKind::Validation, "covariance and venc dimensions disagree");
  h_ = wrap_counts(vencs, omega_);
  variance_ = w_.dot(sigma_n_ * w_);
  inv_omega_ = 1.0 / omega_;
  for (Eigen::Index i = 0; i < sigma_pinv_.rows(); ++i)
    for (Eigen::Index j = i; j < sigma_pinv_.cols(); ++j)
      pinv_upper_.push_back(i == j ? sigma_pinv_(i, i) : sigma_pinv_(i, j) + sigma_pinv_(j, i));
  for (std::size_t i = 0; i < period_.size(); ++i) {
    inv_period_.push_back(1.0 / period_[i]);
    step_.push_back(w_(static_cast<Eigen::Index>(i)) * period_[i]);
  }
}

double PromSolver::combine(std::span<const double> v_tilde, std::span<const int> k) const {
  double s = 0.0;
  for (std::size_t i = 0; i < v_tilde.size(); ++i)
    s += w_(static_cast<Eigen::Index>(i)) * (v_tilde[i] + k[i] * period_[i]);
  return wrap_to_range(s, omega_, offset_);
}

namespace {

// Upper triangle of the symmetric pseudo-inverse, off-diagonals doubled.
template <std::size_t D>
double quadratic_nll(const double* v_tilde, double v, const double* inv_period,
                     const double* period, const double* upper, std::size_t d = D) {
  double dv[D == 0 ? 64 : D];
  const std::size_t n = D == 0 ? d : D;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = v_tilde[i] - v;
    dv[i] = x - round_even(x * inv_period[i]) * period[i];
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = i; j < n; ++j) row += *upper++ * dv[j];
    acc += dv[i] * row;
  }
  return 0.5 * acc;
}

}  // namespace

double PromSolver::nll(std::span<const double> v_tilde, double v) const {
  if (v_tilde.size() == 3)
    return quadratic_nll<3>(v_tilde.data(), v, inv_period_.data(), period_.data(),
                            pinv_upper_.data());
  return quadratic_nll<0>(v_tilde.data(), v, inv_period_.data(), period_.data(),
                          pinv_upper_.data(), v_tilde.size());
}

// Walks the breakpoints once: crossing a breakpoint of pair p raises k_p by
// one, so k and the unwrapped BLUE sum are updated instead of recomputed.
// Pair i has breakpoints r_i + j 2venc_i, j < h_i, already sorted and below
// omega, so the sweep merges d arithmetic sequences.
template <typename Visit>
void PromSolver::for_each_candidate(std::span<const double> v_tilde, PromWorkspace& ws,
                                    Visit&& visit) const {
  const std::size_t d = v_tilde.size();
  double start[64];
  double next[64];
  int left[64];
  double lowest = std::numeric_limits<double>::infinity();
  double highest = -lowest;
  for (std::size_t i = 0; i < d; ++i) {
    const double z = period_[i];
    const double shifted = v_tilde[i] + 0.5 * z;
    double r = shifted - z * floor_fast(shifted * inv_period_[i]);
    if (r >= z) r -= z;
    if (r < 0.0) r += z;
    start[i] = r;
    next[i] = r;
    left[i] = h_[i];
    lowest = std::min(lowest, r);
    highest = std::max(highest, r + (h_[i] - 1) * z);
  }

  // Start inside the interval that straddles 0 (always nonempty).
  const double mid0 = 0.5 * (highest - omega_ + lowest);
  ws.k.resize(d);
  double raw = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    ws.k[i] = ceiling_wrap(v_tilde[i], mid0, period_[i]);
    raw += w_(static_cast<Eigen::Index>(i)) * (v_tilde[i] + ws.k[i] * period_[i]);
  }
  const auto emit = [&](double sum) {
    double v_hat = sum - omega_ * floor_fast((sum - offset_) * inv_omega_);
    if (v_hat >= offset_ + omega_) v_hat -= omega_;
    if (v_hat < offset_) v_hat += omega_;
    visit(std::span<const int>(ws.k), v_hat, nll(v_tilde, v_hat));
  };
  const auto head = [&] {
    std::size_t p = d;
    for (std::size_t i = 0; i < d; ++i)
      if (left[i] > 0 && (p == d || next[i] < next[p])) p = i;
    return p;
  };
  if (mid0 >= 0.0) emit(raw);
  std::size_t p = head();
  while (p < d) {
    const double pos = next[p];
    ++ws.k[p];
    raw += step_[p];
    --left[p];
    next[p] = start[p] + (h_[p] - left[p]) * period_[p];
    p = head();
    if (p < d && next[p] > pos) emit(raw);
  }
  // After a full turn k has grown by h; that representative belongs to the
  // straddling interval only when its midpoint lies in [0, omega).
  if (mid0 < 0.0) emit(raw);
}

PromSolver::Best PromSolver::solve(std::span<const double> v_tilde, PromWorkspace& ws) const {
  if (v_tilde.size() > 64 || v_tilde.size() != vencs_.size())
    throw Error(ErrorKind::Validation, "wrapped velocity dimension mismatch");
  double best_nll = std::numeric_limits<double>::infinity();
  double best_v = 0.0;
  ws.best_k.assign(v_tilde.size(), 0);
  bool any = false;
  for_each_candidate(v_tilde, ws, [&](std::span<const int> k, double v_hat, double l) {
    if (!any || l < best_nll || (l == best_nll && lex_less(k, ws.best_k))) {
      any = true;
      best_nll = l;
      best_v = v_hat;
      std::copy(k.begin(), k.end(), ws.best_k.begin());
    }
  });
  return {best_v, best_nll, ws.best_k};
}

std::vector<CandidateSolution> PromSolver::candidates(std::span<const double> v_tilde) const {
  PromWorkspace ws;
  std::vector<CandidateSolution> out;
  for_each_candidate(v_tilde, ws, [&](std::span<const int> k, double v_hat, double l) {
    out.push_back({std::vector<int>(k.begin(), k.end()), v_hat, l});
  });
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.nll != b.nll) return a.nll < b.nll;
    return lex_less(a.k, b.k);
  });
  return out;
}

PromResult PromSolver::estimate(std::span<const double> v_tilde) const {
  PromResult r;
  r.candidates = candidates(v_tilde);
  r.v_hat = r.candidates.front().v_hat;
  r.weights = w_;
  r.h = h_;
  r.predicted_variance = variance_;
  return r;
}

Eigen::VectorXcd conjugate_products(const MeasurementMatrix& y) {
  const auto pairs = canonical_pairs(static_cast<int>(y.rows()));
  Eigen::VectorXcd r(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i)
    r(static_cast<Eigen::Index>(i)) = y.row(pairs[i].minuend).dot(y.row(pairs[i].subtrahend));
  // Eigen's dot conjugates the first argument: sum conj(y_a) y_b.
  return r.conjugate();
}

WrappedVelocities wrapped_velocities_from_data(const MeasurementMatrix& y,
                                               const VencSet& vencs) {
  if (num_pairs(static_cast<int>(y.rows())) != static_cast<int>(vencs.size()))
    throw Error(ErrorKind::Validation, "measurement rows do not match the encoding count");
  const Eigen::VectorXcd r = conjugate_products(y);
  std::vector<double> theta(static_cast<std::size_t>(r.size()));
  for (Eigen::Index i = 0; i < r.size(); ++i) theta[static_cast<std::size_t>(i)] = std::arg(r(i));
  return WrappedVelocities::from_phases(theta, vencs);
}

void wrapped_velocities_into(const MeasurementMatrix& y, const VencSet& vencs,
                             std::span<double> out) {
  const double two_pi = 2.0 * std::numbers::pi;
  std::size_t i = 0;
  for (Eigen::Index a = 1; a < y.rows(); ++a)
    for (Eigen::Index b = 0; b < a; ++b, ++i) {
      std::complex<double> r = 0.0;
      for (Eigen::Index c = 0; c < y.cols(); ++c) r += y(a, c) * std::conj(y(b, c));
      double t = std::arg(r);
      if (t < 0.0) t += two_pi;
      double v = t / std::numbers::pi * vencs[i];
      if (v >= 2.0 * vencs[i]) v = 0.0;
      out[i] = v;
    }
}

Eigen::MatrixXd voxel_velocity_cov(const MeasurementMatrix& y, const VencSet& vencs,
                                   const CovarianceMode& mode) {
  if (mode.is_model()) return velocity_cov(model_phase_cov(mode.snr()), vencs);
  return velocity_cov(data_phase_cov(y), vencs);
}

PromResult prom_estimate(const MeasurementMatrix& y, const VencSet& vencs,
                         const CovarianceMode& mode, double offset) {
  const auto v_tilde = wrapped_velocities_from_data(y, vencs);
  const PromSolver solver(vencs, voxel_velocity_cov(y, vencs, mode), offset);
  return solver.estimate(v_tilde.v_tilde);
}

PromResult prom_estimate(const MeasurementMatrix& y, const EncodingScheme& scheme,
                         const CovarianceMode& mode, double offset) {
  return prom_estimate(y, vencs_from_moments(scheme), mode, offset);
}

}  // namespace promkit
