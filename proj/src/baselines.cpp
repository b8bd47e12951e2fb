#include "promkit/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/tools/minima.hpp>

#include "promkit/errors.hpp"

namespace promkit {

namespace {

constexpr double kTieTolerance = 1e-12;
constexpr double kPi = std::numbers::pi;

void require_three_point(const VencSet& vencs) {
  if (vencs.num_encodings() != 3)
    throw Error(ErrorKind::Validation, "dual-venc estimators need exactly three encodings");
}

double signed_wrap(double v, double venc) { return wrap_to_range(v, 2.0 * venc, -venc); }

std::size_t first_within_tolerance(const std::vector<double>& cost) {
  const double best = *std::min_element(cost.begin(), cost.end());
  for (std::size_t i = 0; i < cost.size(); ++i)
    if (cost[i] <= best + kTieTolerance) return i;
  return 0;
}

bool one_signed(const Eigen::VectorXd& u) {
  const double tol = 1e-12 * u.cwiseAbs().maxCoeff();
  return (u.array() >= -tol).all() || (u.array() <= tol).all();
}

// max of x^T M x over unit x >= 0: scans the one-signed eigenvectors of
// every principal submatrix.
double nonneg_rayleigh_max(const Eigen::MatrixXd& m) {
  const auto n = m.rows();
  if (n == 3) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;
    eig.computeDirect(Eigen::Matrix3d(m));
    if (one_signed(eig.eigenvectors().col(2))) return eig.eigenvalues()(2);
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    if (one_signed(eig.eigenvectors().col(n - 1))) return eig.eigenvalues()(n - 1);
  }
  double best = m.diagonal().maxCoeff();
  std::vector<Eigen::Index> idx;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    idx.clear();
    for (Eigen::Index i = 0; i < n; ++i)
      if (mask & (1u << i)) idx.push_back(i);
    if (idx.size() < 2) continue;
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd sub(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
      for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = m(idx[a], idx[b]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sub);
    for (Eigen::Index j = 0; j < k; ++j)
      if (eig.eigenvalues()(j) > best && one_signed(eig.eigenvectors().col(j))) best = eig.eigenvalues()(j);
  }
  return best;
}

}  // namespace

void GridSpec::validate() const {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
    throw Error(ErrorKind::Validation, "grid needs lo < hi");
  if (!(step > 0.0) || step > hi - lo)
    throw Error(ErrorKind::Validation, "grid step must lie in (0, hi - lo]");
}

std::size_t GridSpec::size() const {
  auto n = static_cast<std::size_t>(std::ceil((hi - lo) / step));
  while (n > 0 && at(n - 1) >= hi) --n;
  while (at(n) < hi) ++n;
  return n;
}

GridSpec default_dual_venc_grid(const VencSet& vencs) {
  require_three_point(vencs);
  const double omega = unambiguous_range(vencs);
  return {-0.5 * omega, 0.5 * omega, vencs[1] / 1000.0};
}

double sdv_estimate(const WrappedVelocities& v_tilde, SdvMode mode) {
  const VencSet& venc = v_tilde.vencs;
  require_three_point(venc);
  const double v21 = signed_wrap(v_tilde.v_tilde[0], venc[0]);
  const double v31 = signed_wrap(v_tilde.v_tilde[1], venc[1]);
  const double r = (v21 - v31) / (2.0 * venc[1]);

  if (mode == SdvMode::AsPrinted) {
    if (r > -2.4 && r < -1.6) return v21 - 4.0 * venc[1];
    if (r > -1.2 && r < -0.8) return v21 - 2.0 * venc[1];
    if (r > 0.8 && r < 1.2) return v21 + 2.0 * venc[1];
    if (r > 1.6 && r < 2.4) return v21 + 4.0 * venc[1];
    return v21;
  }
  const double limit = std::floor(venc[0] / venc[1]);
  const double j = std::clamp(std::nearbyint(r), -limit, limit);
  return v31 + 2.0 * j * venc[1];
}

DualVencGrid::DualVencGrid(const VencSet& vencs, const GridSpec& grid) : grid_(grid) {
  require_three_point(vencs);
  grid_.validate();
  const std::size_t n = grid_.size();
  v_.resize(n);
  c31_.resize(n);
  s31_.resize(n);
  c32_.resize(n);
  s32_.resize(n);
  scratch_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = grid_.at(i);
    v_[i] = v;
    c31_[i] = std::cos(kPi * v / vencs[1]);
    s31_[i] = std::sin(kPi * v / vencs[1]);
    c32_[i] = std::cos(kPi * v / vencs[2]);
    s32_[i] = std::sin(kPi * v / vencs[2]);
  }
}

double DualVencGrid::cost(std::size_t i, double theta31, double theta32, double w31,
                          double w32) const {
  // cos(a - t) = cos a cos t + sin a sin t
  return w31 * (1.0 - (c31_[i] * std::cos(theta31) + s31_[i] * std::sin(theta31))) +
         w32 * (1.0 - (c32_[i] * std::cos(theta32) + s32_[i] * std::sin(theta32)));
}

double DualVencGrid::argmin(double theta31, double theta32, double w31, double w32) const {
  const double a1 = w31 * std::cos(theta31), b1 = w31 * std::sin(theta31);
  const double a2 = w32 * std::cos(theta32), b2 = w32 * std::sin(theta32);
  const double base = w31 + w32;
  const std::size_t n = v_.size();
  for (std::size_t i = 0; i < n; ++i)
    scratch_[i] = base - (c31_[i] * a1 + s31_[i] * b1 + c32_[i] * a2 + s32_[i] * b2);
  return v_[first_within_tolerance(scratch_)];
}

double odv_cost(const WrappedVelocities& v_tilde, double v) {
  require_three_point(v_tilde.vencs);
  const auto theta = v_tilde.phases();
  double c = 0.0;
  for (std::size_t l = 1; l < 3; ++l)
    c += 1.0 - std::cos(kPi * v / v_tilde.vencs[l] - theta[l]);
  return c;
}

double odv_estimate(const WrappedVelocities& v_tilde, const GridSpec& grid) {
  const DualVencGrid search(v_tilde.vencs, grid);
  const auto theta = v_tilde.phases();
  return search.argmin(theta[1], theta[2]);
}

double nco_cost(std::complex<double> r31, std::complex<double> r32, const VencSet& vencs,
                double v) {
  require_three_point(vencs);
  const auto term = [&](std::complex<double> r, double venc) {
    const std::complex<double> model = std::polar(1.0, kPi * v / venc);
    const std::complex<double> meas = std::polar(1.0, std::arg(r));
    return std::norm(r) * std::norm(model - meas);
  };
  return term(r31, vencs[1]) + term(r32, vencs[2]);
}

double nco_estimate(std::complex<double> r31, std::complex<double> r32, const VencSet& vencs,
                    const GridSpec& grid) {
  // |e^{ia} - e^{it}|^2 = 2 (1 - cos(a - t)), so the weighted two-cosine
  // search has the same argmin.
  const DualVencGrid search(vencs, grid);
  return search.argmin(std::arg(r31), std::arg(r32), std::norm(r31), std::norm(r32));
}

ComplexMle::ComplexMle(const MeasurementMatrix& y, const EncodingScheme& scheme)
    : r_(y * y.adjoint()), gamma_m1_(scheme.gamma_m1()), trace_(r_.trace().real()) {
  if (y.rows() != scheme.num_encodings())
    throw Error(ErrorKind::Validation, "measurement rows do not match the encoding count");
}

double ComplexMle::residual(double v) const {
  const auto ne = static_cast<Eigen::Index>(gamma_m1_.size());
  Eigen::MatrixXd m(ne, ne);
  for (Eigen::Index a = 0; a < ne; ++a) {
    m(a, a) = r_(a, a).real();
    for (Eigen::Index b = 0; b < a; ++b) {
      const double phase = (gamma_m1_[static_cast<std::size_t>(b)] -
                            gamma_m1_[static_cast<std::size_t>(a)]) * v;
      const double val = (r_(a, b) * std::polar(1.0, phase)).real();
      m(a, b) = val;
      m(b, a) = val;
    }
  }
  return trace_ - nonneg_rayleigh_max(m);
}

MleCurve complex_mle_grid(const MeasurementMatrix& y, const EncodingScheme& scheme,
                          const GridSpec& grid) {
  grid.validate();
  const ComplexMle mle(y, scheme);
  MleCurve out;
  const std::size_t n = grid.size();
  out.v.resize(n);
  out.residual.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.v[i] = grid.at(i);
    out.residual[i] = mle.residual(out.v[i]);
  }
  out.v_hat = out.v[first_within_tolerance(out.residual)];
  return out;
}

double complex_mle_refined(const MeasurementMatrix& y, const EncodingScheme& scheme,
                           double offset, int coarse_div, int refine_count) {
  const VencSet vencs = vencs_from_moments(scheme);
  const double omega = unambiguous_range(vencs);
  const double min_venc = *std::min_element(vencs.values().begin(), vencs.values().end());
  const double step = min_venc / coarse_div;
  const auto n = static_cast<std::size_t>(std::ceil(omega / step));
  const double h = omega / static_cast<double>(n);
  const ComplexMle mle(y, scheme);

  std::vector<double> coarse(n);
  for (std::size_t i = 0; i < n; ++i) coarse[i] = mle.residual(offset + h * static_cast<double>(i));

  std::vector<std::size_t> minima;
  for (std::size_t i = 0; i < n; ++i) {
    const double left = coarse[(i + n - 1) % n], right = coarse[(i + 1) % n];
    if (coarse[i] <= left && coarse[i] <= right) minima.push_back(i);
  }
  std::sort(minima.begin(), minima.end(),
            [&](std::size_t a, std::size_t b) { return coarse[a] < coarse[b]; });
  if (minima.size() > static_cast<std::size_t>(refine_count))
    minima.resize(static_cast<std::size_t>(refine_count));

  double best_v = offset, best_cost = std::numeric_limits<double>::infinity();
  const int bits = std::numeric_limits<double>::digits / 2;
  for (std::size_t i : minima) {
    const double centre = offset + h * static_cast<double>(i);
    auto [v, c] = boost::math::tools::brent_find_minima(
        [&](double x) { return mle.residual(x); }, centre - h, centre + h, bits);
    if (c < best_cost) {
      best_cost = c;
      best_v = v;
    }
  }
  return wrap_to_range(best_v, omega, offset);
}

}  // namespace promkit
