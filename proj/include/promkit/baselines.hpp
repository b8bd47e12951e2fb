#pragma once

// Reference estimators: threshold dual-venc unwrapping, the two-cosine grid
// searches (unweighted and magnitude-weighted), and the complex-data
// maximum likelihood grid.

#include <complex>
#include <vector>

#include "promkit/congruence.hpp"
#include "promkit/covariance.hpp"

namespace promkit {

struct GridSpec {
  double lo = 0.0;
  double hi = 0.0;
  double step = 0.0;

  /// Throws Validation unless lo < hi and 0 < step <= hi - lo.
  void validate() const;
  /// Points lo + i*step strictly below hi.
  std::size_t size() const;
  double at(std::size_t i) const { return lo + static_cast<double>(i) * step; }
};

/// [-omega/2, omega/2) with step venc31/1000.
GridSpec default_dual_venc_grid(const VencSet& vencs);

enum class SdvMode { Corrected, AsPrinted };

/// Unwraps the low venc31 measurement with the high venc21 one. Inputs are
/// read as signed values in [-venc, venc); the result lies near
/// [-venc21, venc21). Three-point only.
double sdv_estimate(const WrappedVelocities& v_tilde, SdvMode mode = SdvMode::Corrected);

/// Two-cosine cost on pairs 31 and 32 with per-pair weights; ties within
/// 1e-12 of the minimum go to the lowest grid point.
class DualVencGrid {
 public:
  DualVencGrid(const VencSet& vencs, const GridSpec& grid);

  /// sum_l weight_l (1 - cos(pi v / venc_l - theta_l)) at grid point i.
  double cost(std::size_t i, double theta31, double theta32, double w31 = 1.0,
              double w32 = 1.0) const;
  double argmin(double theta31, double theta32, double w31 = 1.0, double w32 = 1.0) const;

  const GridSpec& grid() const { return grid_; }
  std::size_t size() const { return v_.size(); }

 private:
  GridSpec grid_;
  std::vector<double> v_;
  std::vector<double> c31_, s31_, c32_, s32_;
  mutable std::vector<double> scratch_;
};

/// ODV cost at a single velocity.
double odv_cost(const WrappedVelocities& v_tilde, double v);
double odv_estimate(const WrappedVelocities& v_tilde, const GridSpec& grid);

/// |r31|^2 |e^{i pi v/venc31} - e^{i theta31}|^2 + |r32|^2 |...|^2.
double nco_cost(std::complex<double> r31, std::complex<double> r32, const VencSet& vencs,
                double v);
double nco_estimate(std::complex<double> r31, std::complex<double> r32, const VencSet& vencs,
                    const GridSpec& grid);

/// Complex-data likelihood with free per-coil complex gains and nonnegative
/// amplitudes. The concentrated residual is Tr(R) minus the largest value of
/// a^T Re(D^H R D) a over unit a >= 0, R = sum over coils of y y^H,
/// D = diag(exp(i gamma m1 v)).
class ComplexMle {
 public:
  ComplexMle(const MeasurementMatrix& y, const EncodingScheme& scheme);

  double residual(double v) const;

 private:
  Eigen::MatrixXcd r_;
  std::vector<double> gamma_m1_;
  double trace_;
};

struct MleCurve {
  double v_hat = 0.0;
  std::vector<double> v;
  std::vector<double> residual;
};

/// Residual on every grid point; v_hat is the first minimizer.
MleCurve complex_mle_grid(const MeasurementMatrix& y, const EncodingScheme& scheme,
                          const GridSpec& grid);

/// Coarse grid over [offset, offset + omega) with step min(venc)/coarse_div,
/// then Brent refinement of the `refine_count` best coarse local minima.
double complex_mle_refined(const MeasurementMatrix& y, const EncodingScheme& scheme,
                           double offset, int coarse_div = 50, int refine_count = 3);

}  // namespace promkit
