#include "promkit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>

#include "promkit/errors.hpp"
#include "promkit/parallel.hpp"
#include "promkit/simulation.hpp"

namespace promkit {

namespace {

constexpr std::size_t kBlocksPerWave = 64;

// Shifts x by the smallest multiple of h that leaves every entry >= 0.
bool canonical_label(std::span<int> x, const std::vector<int>& h) {
  int m = std::numeric_limits<int>::min();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int need = -x[i] >= 0 ? (-x[i] + h[i] - 1) / h[i] : -((x[i]) / h[i]);
    m = std::max(m, need);
  }
  bool zero = true;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] += m * h[i];
    zero = zero && x[i] == 0;
  }
  return zero;
}

using LabelCounts = std::map<std::vector<int>, std::uint64_t>;

}  // namespace

void true_wraps(std::span<const double> v_tilde, double v, std::span<const double> venc,
                std::span<int> k) {
  for (std::size_t i = 0; i < v_tilde.size(); ++i)
    k[i] = -static_cast<int>(std::nearbyint((v_tilde[i] - v) / (2.0 * venc[i])));
}

std::vector<int> tube_label(std::span<const double> noise, double v, const PromSolver& solver) {
  const auto& venc = solver.vencs();
  const std::size_t d = venc.size();
  if (noise.size() != d) throw Error(ErrorKind::Validation, "noise dimension mismatch");
  std::vector<double> v_tilde(d);
  std::vector<int> k_true(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double z = 2.0 * venc[i];
    v_tilde[i] = wrap_to_range(v + noise[i], z);
    k_true[i] = static_cast<int>(std::nearbyint((v + noise[i] - v_tilde[i]) / z));
  }
  PromWorkspace ws;
  const auto best = solver.solve(v_tilde, ws);
  std::vector<int> x(d);
  for (std::size_t i = 0; i < d; ++i) x[i] = best.k[i] - k_true[i];
  canonical_label(x, solver.h());
  return x;
}

bool tube_label_observed(std::span<const double> v_tilde, double v, const PromSolver& solver,
                         PromWorkspace& ws, std::span<int> x) {
  const auto& venc = solver.vencs().values();
  const std::size_t d = v_tilde.size();
  const auto best = solver.solve(v_tilde, ws);
  for (std::size_t i = 0; i < d; ++i) {
    const int k_true = -static_cast<int>(std::nearbyint((v_tilde[i] - v) / (2.0 * venc[i])));
    x[i] = best.k[i] - k_true;
  }
  return canonical_label(x, solver.h());
}

std::vector<MixtureComponent> estimate_distribution(double v, const SnrMatrix& s,
                                                    const EncodingScheme& scheme,
                                                    std::uint64_t trials, int top_m,
                                                    const DistributionOptions& opts) {
  if (trials == 0 || top_m < 1)
    throw Error(ErrorKind::Validation, "trials and top_m must be positive");
  const VencSet vencs = vencs_from_moments(scheme);
  const double omega = unambiguous_range(vencs);
  const double offset = std::isnan(opts.offset) ? -0.5 * omega : opts.offset;
  const PromSolver solver(vencs, velocity_cov(model_phase_cov(s), vencs), offset);
  const std::size_t d = vencs.size();

  const std::size_t blocks = num_blocks(trials);
  std::vector<LabelCounts> partial(blocks);
  parallel_for(blocks, resolve_threads(opts.threads), [&](std::size_t b) {
    GaussianStream rng(opts.seed, 0, b);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    PromWorkspace ws;
    MeasurementMatrix y;
    std::vector<double> v_tilde(d);
    std::vector<int> x(d);
    const std::uint64_t begin = b * kTrialsPerBlock;
    const std::uint64_t end = std::min<std::uint64_t>(trials, begin + kTrialsPerBlock);
    for (std::uint64_t t = begin; t < end; ++t) {
      synth_from_snr(s, v, phase(rng.engine()), scheme, rng, y);
      wrapped_velocities_into(y, vencs, v_tilde);
      tube_label_observed(v_tilde, v, solver, ws, x);
      ++partial[b][x];
    }
  });

  LabelCounts total;
  for (const auto& p : partial)
    for (const auto& [x, c] : p) total[x] += c;

  std::vector<MixtureComponent> out;
  const Eigen::VectorXd& w = solver.weights();
  for (const auto& [x, c] : total) {
    double shift = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      shift += w(static_cast<Eigen::Index>(i)) * x[i] * 2.0 * vencs[i];
    MixtureComponent m;
    m.x = x;
    m.count = c;
    m.weight = static_cast<double>(c) / static_cast<double>(trials);
    m.center = wrap_to_range(v + shift, omega, offset);
    m.variance = solver.predicted_variance();
    out.push_back(std::move(m));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.count > b.count; });
  if (out.size() > static_cast<std::size_t>(top_m)) out.resize(static_cast<std::size_t>(top_m));
  return out;
}

ErrorCount count_unwrap_errors(const SnrMatrix& s, const VencSet& vencs, std::uint64_t trials,
                               std::uint64_t stop_at, std::uint64_t seed, int threads) {
  if (s.num_encodings() != vencs.num_encodings())
    throw Error(ErrorKind::Validation, "SNR rows do not match the venc set");
  const PromSolver solver(vencs, velocity_cov(model_phase_cov(s), vencs));
  const std::size_t d = vencs.size();
  // At v = 0 the moments only enter through the remainders, so any scheme
  // with these vencs gives the same data; use a unit one.
  std::vector<double> zero_moments(static_cast<std::size_t>(vencs.num_encodings()));
  for (std::size_t a = 0; a < zero_moments.size(); ++a) zero_moments[a] = static_cast<double>(a);
  const EncodingScheme carrier(zero_moments);
  const int workers = resolve_threads(threads);

  const std::uint64_t blocks = num_blocks(trials);
  ErrorCount result;
  std::vector<std::uint64_t> errors(kBlocksPerWave);
  for (std::uint64_t wave = 0; wave * kBlocksPerWave < blocks; ++wave) {
    const std::uint64_t first = wave * kBlocksPerWave;
    const std::size_t count = static_cast<std::size_t>(std::min<std::uint64_t>(kBlocksPerWave, blocks - first));
    std::fill(errors.begin(), errors.end(), 0);
    parallel_for(count, workers, [&](std::size_t i) {
      const std::uint64_t b = first + i;
      GaussianStream rng(seed, 0, b);
      PromWorkspace ws;
      MeasurementMatrix y;
      std::vector<double> v_tilde(d);
      std::vector<int> x(d);
      const std::uint64_t begin = b * kTrialsPerBlock;
      const std::uint64_t end = std::min<std::uint64_t>(trials, begin + kTrialsPerBlock);
      std::uint64_t e = 0;
      for (std::uint64_t t = begin; t < end; ++t) {
        synth_from_snr(s, 0.0, 0.0, carrier, rng, y);
        wrapped_velocities_into(y, vencs, v_tilde);
        if (!tube_label_observed(v_tilde, 0.0, solver, ws, x)) ++e;
      }
      errors[i] = e;
    });
    for (std::size_t i = 0; i < count; ++i) result.errors += errors[i];
    result.trials = std::min<std::uint64_t>(trials, (first + count) * kTrialsPerBlock);
    if (stop_at > 0 && result.errors >= stop_at && result.trials < trials) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

double unwrap_error_prob(const SnrMatrix& s, const VencSet& vencs, std::uint64_t trials,
                         std::uint64_t seed, int threads) {
  return count_unwrap_errors(s, vencs, trials, 0, seed, threads).rate();
}

CrlbModel::CrlbModel(double v, double phi0, std::vector<double> A, Eigen::VectorXcd S,
                     double sigma, EncodingScheme scheme)
    : gamma_m1_(scheme.gamma_m1()),
      ne_(scheme.num_encodings()),
      nc_(static_cast<int>(S.size())),
      sigma_(sigma) {
  if (static_cast<int>(A.size()) != ne_)
    throw Error(ErrorKind::Validation, "amplitude count does not match the encoding count");
  if (nc_ < 1) throw Error(ErrorKind::Validation, "need at least one coil");
  if (!(sigma > 0.0)) throw Error(ErrorKind::Validation, "noise std must be positive");
  const std::complex<double> s1 = S(0);
  if (std::abs(s1) == 0.0)
    throw Error(ErrorKind::NonIdentifiable, "first coil sensitivity is zero");
  theta_.resize(2 + ne_ + 2 * (nc_ - 1));
  theta_(0) = v;
  theta_(1) = phi0 + std::arg(s1);
  for (int a = 0; a < ne_; ++a) theta_(2 + a) = A[static_cast<std::size_t>(a)] * std::abs(s1);
  for (int b = 1; b < nc_; ++b) {
    const std::complex<double> rel = S(b) / s1;
    theta_(2 + ne_ + (b - 1)) = std::abs(rel);
    theta_(2 + ne_ + (nc_ - 1) + (b - 1)) = std::arg(rel);
  }
}

Eigen::VectorXcd CrlbModel::mean(const Eigen::VectorXd& theta) const {
  Eigen::VectorXcd mu(ne_ * nc_);
  for (int a = 0; a < ne_; ++a)
    for (int b = 0; b < nc_; ++b) {
      const double mag = b == 0 ? 1.0 : theta(2 + ne_ + (b - 1));
      const double ang = b == 0 ? 0.0 : theta(2 + ne_ + (nc_ - 1) + (b - 1));
      mu(a * nc_ + b) = theta(2 + a) * mag *
                        std::polar(1.0, theta(1) + ang + gamma_m1_[static_cast<std::size_t>(a)] * theta(0));
    }
  return mu;
}

Eigen::MatrixXcd CrlbModel::jacobian() const {
  const std::complex<double> i(0.0, 1.0);
  const Eigen::VectorXcd mu = mean(theta_);
  Eigen::MatrixXcd J = Eigen::MatrixXcd::Zero(mu.size(), theta_.size());
  for (int a = 0; a < ne_; ++a)
    for (int b = 0; b < nc_; ++b) {
      const int row = a * nc_ + b;
      const double mag = b == 0 ? 1.0 : theta_(2 + ne_ + (b - 1));
      const double ang = b == 0 ? 0.0 : theta_(2 + ne_ + (nc_ - 1) + (b - 1));
      const double gm = gamma_m1_[static_cast<std::size_t>(a)];
      const std::complex<double> unit = std::polar(1.0, theta_(1) + ang + gm * theta_(0));
      J(row, 0) = i * gm * mu(row);
      J(row, 1) = i * mu(row);
      J(row, 2 + a) = mag * unit;
      if (b > 0) {
        J(row, 2 + ne_ + (b - 1)) = theta_(2 + a) * unit;
        J(row, 2 + ne_ + (nc_ - 1) + (b - 1)) = i * mu(row);
      }
    }
  return J;
}

Eigen::MatrixXcd CrlbModel::numeric_jacobian(double step) const {
  Eigen::MatrixXcd J(ne_ * nc_, theta_.size());
  for (Eigen::Index p = 0; p < theta_.size(); ++p) {
    Eigen::VectorXd up = theta_, down = theta_;
    up(p) += step;
    down(p) -= step;
    J.col(p) = (mean(up) - mean(down)) / (2.0 * step);
  }
  return J;
}

Eigen::MatrixXd CrlbModel::fisher() const {
  const Eigen::MatrixXcd J = jacobian();
  return (2.0 / (sigma_ * sigma_)) * (J.adjoint() * J).real();
}

double CrlbModel::velocity_bound() const {
  const Eigen::MatrixXd F = fisher();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(F);
  const double top = eig.eigenvalues().maxCoeff();
  if (!(eig.eigenvalues().minCoeff() > 1e-12 * top))
    throw Error(ErrorKind::NonIdentifiable, "Fisher information is singular");
  const Eigen::VectorXd e0 = Eigen::VectorXd::Unit(F.rows(), 0);
  return e0.dot(F.ldlt().solve(e0));
}

double crlb_velocity(double v, double phi0, const std::vector<double>& A,
                     const Eigen::VectorXcd& S, double sigma, const EncodingScheme& scheme) {
  return CrlbModel(v, phi0, A, S, sigma, scheme).velocity_bound();
}

}  // namespace promkit
