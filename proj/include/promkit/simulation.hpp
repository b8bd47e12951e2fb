#pragma once

// Synthetic measurements, the five-vessel dephasing phantom and the Monte
// Carlo RMSE harness.

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "promkit/baselines.hpp"
#include "promkit/congruence.hpp"
#include "promkit/covariance.hpp"
#include "promkit/estimator.hpp"
#include "promkit/io.hpp"
#include "promkit/parallel.hpp"

namespace promkit {

struct VoxelGroundTruth {
  double v = 0.0;
  double phi0 = 0.0;
  std::vector<double> A;  // per encoding
  Eigen::VectorXcd S;     // per coil
  double sigma = 1.0;

  /// A = snr, S = 1 on every coil, sigma = 1.
  static VoxelGroundTruth from_snr(double v, std::span<const double> snr, int num_coils = 1,
                                   double phi0 = 0.0);
  SnrMatrix snr() const;
};

/// y = A_a S_b exp(i(phi0 + gamma m1_a v)) + noise, noise real and imaginary
/// parts each N(0, sigma^2 / 2).
void synth_voxel(const VoxelGroundTruth& gt, const EncodingScheme& scheme, GaussianStream& rng,
                 MeasurementMatrix& out);
MeasurementMatrix synth_voxel(const VoxelGroundTruth& gt, const EncodingScheme& scheme,
                              GaussianStream& rng);

/// Same model with per-(encoding, coil) magnitudes taken from an SnrMatrix
/// and unit noise.
void synth_from_snr(const SnrMatrix& s, double v, double phi0, const EncodingScheme& scheme,
                    GaussianStream& rng, MeasurementMatrix& out);

enum class EstimatorId { Prom, Sdv, Odv, Nco, Mle };

/// Throws Validation on an unknown name.
EstimatorId parse_estimator(std::string_view name);
const char* to_string(EstimatorId id);

/// One estimator bound to an encoding, with whatever tables it can cache.
/// Not thread-safe; make one per worker.
class VoxelEstimator {
 public:
  /// `model_snr` switches PRoM to a fixed model covariance.
  VoxelEstimator(EstimatorId id, const EncodingScheme& scheme, double offset,
                 std::optional<SnrMatrix> model_snr = std::nullopt);

  double operator()(const MeasurementMatrix& y);

  EstimatorId id() const { return id_; }
  /// Length of the interval the estimate is reported in: 2 venc21 for SDV,
  /// the unambiguous range otherwise.
  double native_period() const { return period_; }

 private:
  EstimatorId id_;
  EncodingScheme scheme_;
  VencSet vencs_;
  double offset_;
  double period_;
  std::optional<PromSolver> fixed_;
  std::optional<DualVencGrid> grid_;
  PromWorkspace ws_;
  std::vector<double> v_tilde_;
};

/// Points lo, lo + step, ... up to and including hi (within step * 1e-9).
std::vector<double> inclusive_points(const GridSpec& grid);

struct MonteCarloOptions {
  std::size_t trials = 10000;
  std::uint64_t seed = 1;
  int threads = 0;
  /// NaN selects -omega/2.
  double offset = std::numeric_limits<double>::quiet_NaN();
  bool model_covariance = false;
  bool random_phase = true;
};

struct RmseCurve {
  std::vector<double> v;
  std::vector<double> rmse;
  double mean() const;
};

/// RMSE per true v (grid endpoints inclusive). Errors are wrapped
/// displacements modulo the estimator's native period.
RmseCurve monte_carlo_rmse(EstimatorId id, const EncodingScheme& scheme, const SnrMatrix& s,
                           const GridSpec& v_grid, const MonteCarloOptions& opts);

struct VesselPhantomSpec {
  double peak_velocity = 60.0;                                // cm/s
  std::vector<double> diameters = {5.5, 3.9, 3.2, 2.7, 2.4};  // mm
  double fine_res = 0.1;                                      // mm
  int block = 5;
  double density_background = 0.3;
  double density_static = 0.5;
  double density_vessel = 1.0;
  double max_snr = 30.0;
  double gap = 2.0;            // mm between vessel walls
  double static_margin = 2.0;  // mm of static tissue around the vessel row
  double outer_margin = 2.0;   // mm of background around the tissue
  bool random_phase = true;

  void validate() const;
};

struct VesselPhantom {
  ComplexImage image;              // single coil
  std::vector<double> truth;       // block mean velocity, ny*nx
  std::vector<std::uint8_t> flow;  // block touches a vessel
  std::vector<double> vessel_centers_mm;
  double sigma = 0.0;              // noise std; the image is scaled so this is 1
  double voxel_mm = 0.0;
};

VesselPhantom vessel_phantom(const VesselPhantomSpec& spec, const EncodingScheme& scheme,
                             std::uint64_t seed);

}  // namespace promkit
