#include "promkit/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "promkit/errors.hpp"

namespace promkit {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

VoxelGroundTruth VoxelGroundTruth::from_snr(double v, std::span<const double> snr,
                                            int num_coils, double phi0) {
  VoxelGroundTruth gt;
  gt.v = v;
  gt.phi0 = phi0;
  gt.A.assign(snr.begin(), snr.end());
  gt.S = Eigen::VectorXcd::Ones(num_coils);
  gt.sigma = 1.0;
  return gt;
}

SnrMatrix VoxelGroundTruth::snr() const {
  SnrMatrix out{Eigen::MatrixXd(static_cast<Eigen::Index>(A.size()), S.size())};
  for (Eigen::Index a = 0; a < out.s.rows(); ++a)
    for (Eigen::Index b = 0; b < out.s.cols(); ++b)
      out.s(a, b) = A[static_cast<std::size_t>(a)] * std::abs(S(b)) / sigma;
  return out;
}

void synth_voxel(const VoxelGroundTruth& gt, const EncodingScheme& scheme, GaussianStream& rng,
                 MeasurementMatrix& out) {
  const int ne = scheme.num_encodings();
  if (static_cast<int>(gt.A.size()) != ne)
    throw Error(ErrorKind::Validation, "amplitude count does not match the encoding count");
  if (!(gt.sigma >= 0.0)) throw Error(ErrorKind::Validation, "noise std must be nonnegative");
  const auto nc = gt.S.size();
  out.resize(ne, nc);
  const double scale = gt.sigma / std::numbers::sqrt2;
  for (int a = 0; a < ne; ++a) {
    const std::complex<double> carrier =
        gt.A[static_cast<std::size_t>(a)] *
        std::polar(1.0, gt.phi0 + scheme.gamma_m1()[static_cast<std::size_t>(a)] * gt.v);
    for (Eigen::Index b = 0; b < nc; ++b) {
      const double re = rng(), im = rng();
      out(a, b) = carrier * gt.S(b) + std::complex<double>(scale * re, scale * im);
    }
  }
}

MeasurementMatrix synth_voxel(const VoxelGroundTruth& gt, const EncodingScheme& scheme,
                              GaussianStream& rng) {
  MeasurementMatrix out;
  synth_voxel(gt, scheme, rng, out);
  return out;
}

void synth_from_snr(const SnrMatrix& s, double v, double phi0, const EncodingScheme& scheme,
                    GaussianStream& rng, MeasurementMatrix& out) {
  const auto ne = s.s.rows(), nc = s.s.cols();
  out.resize(ne, nc);
  const double scale = 1.0 / std::numbers::sqrt2;
  for (Eigen::Index a = 0; a < ne; ++a) {
    const std::complex<double> carrier =
        std::polar(1.0, phi0 + scheme.gamma_m1()[static_cast<std::size_t>(a)] * v);
    for (Eigen::Index b = 0; b < nc; ++b) {
      const double re = rng(), im = rng();
      out(a, b) = s.s(a, b) * carrier + std::complex<double>(scale * re, scale * im);
    }
  }
}

EstimatorId parse_estimator(std::string_view name) {
  if (name == "prom") return EstimatorId::Prom;
  if (name == "sdv") return EstimatorId::Sdv;
  if (name == "odv") return EstimatorId::Odv;
  if (name == "nco") return EstimatorId::Nco;
  if (name == "mle") return EstimatorId::Mle;
  throw Error(ErrorKind::Validation, "unknown estimator '" + std::string(name) + "'");
}

const char* to_string(EstimatorId id) {
  switch (id) {
    case EstimatorId::Prom: return "prom";
    case EstimatorId::Sdv: return "sdv";
    case EstimatorId::Odv: return "odv";
    case EstimatorId::Nco: return "nco";
    case EstimatorId::Mle: return "mle";
  }
  return "unknown";
}

VoxelEstimator::VoxelEstimator(EstimatorId id, const EncodingScheme& scheme, double offset,
                               std::optional<SnrMatrix> model_snr)
    : id_(id), scheme_(scheme), vencs_(vencs_from_moments(scheme)), offset_(offset) {
  const double omega = unambiguous_range(vencs_);
  period_ = id == EstimatorId::Sdv ? 2.0 * vencs_[0] : omega;
  v_tilde_.resize(vencs_.size());
  if (id == EstimatorId::Prom && model_snr)
    fixed_.emplace(vencs_, velocity_cov(model_phase_cov(*model_snr), vencs_), offset);
  if (id == EstimatorId::Odv || id == EstimatorId::Nco)
    grid_.emplace(vencs_, GridSpec{offset, offset + omega, vencs_[1] / 1000.0});
}

double VoxelEstimator::operator()(const MeasurementMatrix& y) {
  switch (id_) {
    case EstimatorId::Prom: {
      wrapped_velocities_into(y, vencs_, v_tilde_);
      if (fixed_) return fixed_->solve(v_tilde_, ws_).v_hat;
      const PromSolver solver(vencs_, voxel_velocity_cov(y, vencs_, CovarianceMode::data()),
                              offset_);
      return solver.solve(v_tilde_, ws_).v_hat;
    }
    case EstimatorId::Sdv: {
      wrapped_velocities_into(y, vencs_, v_tilde_);
      return sdv_estimate(WrappedVelocities{v_tilde_, vencs_});
    }
    case EstimatorId::Odv: {
      wrapped_velocities_into(y, vencs_, v_tilde_);
      const double pi = std::numbers::pi;
      return grid_->argmin(pi * v_tilde_[1] / vencs_[1], pi * v_tilde_[2] / vencs_[2]);
    }
    case EstimatorId::Nco: {
      const auto r = conjugate_products(y);
      return grid_->argmin(std::arg(r(1)), std::arg(r(2)), std::norm(r(1)), std::norm(r(2)));
    }
    case EstimatorId::Mle:
      return complex_mle_refined(y, scheme_, offset_);
  }
  return 0.0;
}

std::vector<double> inclusive_points(const GridSpec& grid) {
  if (!(grid.step > 0.0) || !(grid.hi >= grid.lo))
    throw Error(ErrorKind::Validation, "velocity grid needs step > 0 and hi >= lo");
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::floor((grid.hi - grid.lo) / grid.step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) out.push_back(grid.at(i));
  return out;
}

double RmseCurve::mean() const {
  if (rmse.empty()) return 0.0;
  return std::accumulate(rmse.begin(), rmse.end(), 0.0) / static_cast<double>(rmse.size());
}

RmseCurve monte_carlo_rmse(EstimatorId id, const EncodingScheme& scheme, const SnrMatrix& s,
                           const GridSpec& v_grid, const MonteCarloOptions& opts) {
  if (s.num_encodings() != scheme.num_encodings())
    throw Error(ErrorKind::Validation, "SNR rows do not match the encoding count");
  if (opts.trials == 0) throw Error(ErrorKind::Validation, "trials must be positive");
  const double omega = unambiguous_range(vencs_from_moments(scheme));
  const double offset = std::isnan(opts.offset) ? -0.5 * omega : opts.offset;

  RmseCurve curve;
  curve.v = inclusive_points(v_grid);
  const std::size_t points = curve.v.size();
  const std::size_t blocks = num_blocks(opts.trials);
  std::vector<double> sq(points * blocks, 0.0);

  std::optional<SnrMatrix> model;
  if (opts.model_covariance) model = s;

  parallel_for(points * blocks, resolve_threads(opts.threads), [&](std::size_t task) {
    const std::size_t p = task / blocks, b = task % blocks;
    GaussianStream rng(opts.seed, p, b);
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    VoxelEstimator est(id, scheme, offset, model);
    MeasurementMatrix y;
    const std::size_t begin = b * kTrialsPerBlock;
    const std::size_t end = std::min(opts.trials, begin + kTrialsPerBlock);
    double acc = 0.0;
    for (std::size_t t = begin; t < end; ++t) {
      const double phi0 = opts.random_phase ? phase(rng.engine()) : 0.0;
      synth_from_snr(s, curve.v[p], phi0, scheme, rng, y);
      const double e = wrapped_displacement(est(y), curve.v[p], est.native_period());
      acc += e * e;
    }
    sq[task] = acc;
  });

  curve.rmse.resize(points);
  for (std::size_t p = 0; p < points; ++p) {
    double total = 0.0;
    for (std::size_t b = 0; b < blocks; ++b) total += sq[p * blocks + b];
    curve.rmse[p] = std::sqrt(total / static_cast<double>(opts.trials));
  }
  return curve;
}

void VesselPhantomSpec::validate() const {
  if (diameters.empty()) throw Error(ErrorKind::Validation, "phantom needs at least one vessel");
  if (!(fine_res > 0.0) || block < 1) throw Error(ErrorKind::Validation, "bad phantom resolution");
  for (double d : {density_background, density_static, density_vessel})
    if (!(d >= 0.0 && d <= 1.0)) throw Error(ErrorKind::Validation, "densities must lie in [0, 1]");
  if (!(max_snr > 0.0)) throw Error(ErrorKind::Validation, "max SNR must be positive");
}

VesselPhantom vessel_phantom(const VesselPhantomSpec& spec, const EncodingScheme& scheme,
                             std::uint64_t seed) {
  spec.validate();
  const int ne = scheme.num_encodings();
  const int blk = spec.block;
  const double res = spec.fine_res;

  // Vessels sit on one horizontal line inside a static-tissue band, each
  // centred on a coarse voxel.
  const double coarse = blk * res;
  const auto snap = [&](double mm) { return (std::ceil(mm / coarse - 0.5 - 1e-9) + 0.5) * coarse; };
  const double max_d = *std::max_element(spec.diameters.begin(), spec.diameters.end());
  const double pad = spec.static_margin + spec.outer_margin;

  VesselPhantom out;
  out.voxel_mm = coarse;
  double cursor = pad;
  for (double d : spec.diameters) {
    const double c = snap(cursor + 0.5 * d);
    out.vessel_centers_mm.push_back(c);
    cursor = c + 0.5 * d + spec.gap;
  }
  const double row_end = out.vessel_centers_mm.back() + 0.5 * spec.diameters.back();
  const int nx = static_cast<int>(std::ceil((row_end + pad) / coarse - 1e-9));
  const double cy = snap(0.5 * max_d + pad);
  const int ny = static_cast<int>(std::lround(2.0 * cy / coarse));

  const double tissue_x0 = out.vessel_centers_mm.front() - 0.5 * spec.diameters.front() - spec.static_margin;
  const double tissue_x1 = row_end + spec.static_margin;
  const double tissue_y0 = cy - 0.5 * max_d - spec.static_margin;
  const double tissue_y1 = cy + 0.5 * max_d + spec.static_margin;

  out.image = ComplexImage(ne, 1, ny, nx);
  out.truth.assign(static_cast<std::size_t>(ny) * nx, 0.0);
  out.flow.assign(static_cast<std::size_t>(ny) * nx, 0);
  std::vector<std::complex<double>> clean(static_cast<std::size_t>(ne) * ny * nx, 0.0);

  // The vessel axis runs along z, so the profile is the same in every fine
  // slice of a block; the depth loop still averages all blk^3 fine voxels.
  const double per_block = static_cast<double>(blk) * blk * blk;
  for (int by = 0; by < ny; ++by)
    for (int bx = 0; bx < nx; ++bx) {
      std::vector<std::complex<double>> sum(static_cast<std::size_t>(ne), 0.0);
      double vsum = 0.0;
      bool touches = false;
      for (int z = 0; z < blk; ++z)
        for (int iy = 0; iy < blk; ++iy)
          for (int ix = 0; ix < blk; ++ix) {
            const double x = (bx * blk + ix + 0.5) * res;
            const double y = (by * blk + iy + 0.5) * res;
            double rho = spec.density_background, v = 0.0;
            if (x >= tissue_x0 && x < tissue_x1 && y >= tissue_y0 && y < tissue_y1)
              rho = spec.density_static;
            for (std::size_t k = 0; k < spec.diameters.size(); ++k) {
              const double radius = 0.5 * spec.diameters[k];
              const double dx = x - out.vessel_centers_mm[k], dy = y - cy;
              const double r2 = (dx * dx + dy * dy) / (radius * radius);
              if (r2 < 1.0) {
                rho = spec.density_vessel;
                v = spec.peak_velocity * (1.0 - r2);
                touches = true;
              }
            }
            vsum += v;
            for (int a = 0; a < ne; ++a)
              sum[static_cast<std::size_t>(a)] +=
                  rho * std::polar(1.0, scheme.gamma_m1()[static_cast<std::size_t>(a)] * v);
          }
      const std::size_t vox = static_cast<std::size_t>(by) * nx + bx;
      out.truth[vox] = vsum / per_block;
      out.flow[vox] = touches ? 1 : 0;
      for (int a = 0; a < ne; ++a)
        clean[static_cast<std::size_t>(a) * ny * nx + vox] = sum[static_cast<std::size_t>(a)] / per_block;
    }

  double peak = 0.0;
  for (std::size_t vox = 0; vox < out.truth.size(); ++vox)
    if (out.flow[vox])
      for (int a = 0; a < ne; ++a)
        peak = std::max(peak, std::abs(clean[static_cast<std::size_t>(a) * ny * nx + vox]));
  // Image in noise units: sigma = 1 and the brightest flow voxel has
  // amplitude max_snr.
  const double gain = spec.max_snr / peak;
  for (auto& c : clean) c *= gain;
  out.sigma = 1.0;

  GaussianStream rng(seed, 0, 0);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  const double scale = out.sigma / std::numbers::sqrt2;
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x) {
      const std::size_t vox = static_cast<std::size_t>(y) * nx + x;
      const auto rot = std::polar(1.0, spec.random_phase ? phase(rng.engine()) : 0.0);
      for (int a = 0; a < ne; ++a) {
        const double re = rng(), im = rng();
        const auto val = clean[static_cast<std::size_t>(a) * ny * nx + vox] * rot +
                         std::complex<double>(scale * re, scale * im);
        out.image.data[out.image.index(a, 0, y, x)] = {static_cast<float>(val.real()),
                                                      static_cast<float>(val.imag())};
      }
    }
  return out;
}

}  // namespace promkit
