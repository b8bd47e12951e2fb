#pragma once

// Spatial post-processing: alternate a local quadratic (loess) surface fit
// with per-voxel re-selection among the most likely wrapping candidates.

#include <cstdint>
#include <vector>

#include "promkit/estimator.hpp"
#include "promkit/io.hpp"

namespace promkit {

struct VelocityField {
  int ny = 0, nx = 0;
  /// Per voxel, candidates sorted by nll; empty for masked voxels.
  std::vector<std::vector<CandidateSolution>> candidates;
  std::vector<int> selected;
  std::vector<double> magnitude;
  std::vector<std::uint8_t> mask;  // 1 = voxel in use
  double omega = 0.0;
  double offset = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(ny) * nx; }
  /// Selected estimate, NaN when masked.
  double value(std::size_t vox) const;
  std::vector<double> values() const;
};

struct FieldOptions {
  CovarianceMode mode = CovarianceMode::data();
  double offset = 0.0;
  int top_m = 2;
  /// Voxels below this fraction of the maximum magnitude are masked.
  double mask_fraction = 0.3;
  int threads = 0;
};

/// Per-voxel joint unwrapping over an image. Magnitude is the root sum of
/// squares over coils, averaged over encodings.
VelocityField estimate_field(const ComplexImage& image, const VencSet& vencs,
                             const FieldOptions& opts);

/// Locally weighted quadratic fit at every unmasked voxel over the
/// ceil(span * N) nearest unmasked voxels, tricube weights. NaN where the
/// fit has fewer than six supporting voxels or is rank deficient.
std::vector<double> loess_quadratic_fit(const VelocityField& field, double span);

/// sum over usable voxels of nll + lambda (v - u)^2; voxels with NaN u
/// contribute nll only.
double prom_plus_cost(const VelocityField& field, const std::vector<double>& u, double lambda);

struct PromPlusResult {
  VelocityField field;
  int iterations = 0;
  std::vector<std::size_t> changes;   // per sweep
  std::vector<double> cost_after_fit;  // per sweep, before re-selection
  std::vector<double> cost_after_select;
};

/// Stops after the first sweep that changes no selection, or at max_iter.
PromPlusResult prom_plus(const VelocityField& field, double span, double lambda, int max_iter,
                         int threads = 0);

}  // namespace promkit
