#pragma once

// Named experiment recipes. Each returns plain numeric tables plus a few
// scalar summaries; the CLI writes them as CSV and the acceptance suite
// checks them.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "promkit/congruence.hpp"
#include "promkit/io.hpp"
#include "promkit/postprocess.hpp"
#include "promkit/simulation.hpp"

namespace promkit {

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  explicit Table(std::vector<std::string> cols = {}) : columns(std::move(cols)) {}
  void add(std::vector<double> row);
  std::size_t column(std::string_view name) const;
  std::vector<double> values(std::string_view name) const;
  /// Header line then one line per row; shortest round-trip formatting,
  /// "nan" for NaN.
  std::string to_csv() const;
};

struct RecipeOutput {
  std::map<std::string, Table> tables;
  std::map<std::string, double> summary;
};

/// 0 fields fall back to each recipe's own default.
struct RecipeOptions {
  std::uint64_t seed = 1;
  int threads = 0;
  std::size_t trials = 0;
  double grid_step = 0.0;
  /// Overrides the three-point venc of recipes that take one (fig8).
  std::optional<VencSet> venc;
};

std::vector<std::string> recipe_names();
/// Throws Validation for an unknown name.
RecipeOutput run_recipe(std::string_view name, const RecipeOptions& opts);

/// Complex-data residual curve for one noisy realization at v = 0.
RecipeOutput fig1_cost_curve(const RecipeOptions& opts);
/// Mean cosine similarity of the data-driven, SNR-model and identity
/// covariances against the sample covariance of the phase differences.
RecipeOutput fig2_covariance_similarity(const RecipeOptions& opts);
/// Histogram of the joint estimate at v = 0 plus the leading mixture
/// components, s21 in {5, 10}.
RecipeOutput fig5_distribution(const RecipeOptions& opts);
/// RMSE versus v for every fast estimator on venc [15, 6, 10].
RecipeOutput fig6_rmse_vs_velocity(const RecipeOptions& opts);
/// RMSE of the joint and complex-MLE estimators against the CRLB versus s21.
RecipeOutput fig7_rmse_vs_crlb(const RecipeOptions& opts);
/// Designed three-point venc against the dual-venc reference acquisitions.
RecipeOutput fig8_design_comparison(const RecipeOptions& opts);
/// Five-vessel phantom: per-voxel maps for SDV, ODV, joint and spatially
/// regularized estimates.
RecipeOutput fig9_vessel_phantom(const RecipeOptions& opts);

/// Velocity error over the flow region, ignoring aliased voxels.
struct MapScore {
  std::size_t voxels = 0;
  std::size_t aliased = 0;
  double rmse = 0.0;        // excluding aliased voxels
  double error_norm = 0.0;  // root-sum-square error, excluding aliased voxels
};

/// A voxel is aliased when |estimate - truth| exceeds half the estimator's
/// reporting period. NaN estimates are skipped.
MapScore score_map(const std::vector<double>& estimate, const std::vector<double>& truth,
                   const std::vector<std::uint8_t>& region, double period);

/// Per-voxel estimate of a whole image with one of the baseline or joint
/// estimators (PRoM uses data-driven covariance).
std::vector<double> estimate_image(const ComplexImage& image, const EncodingScheme& scheme,
                                   EstimatorId id, double offset, int threads = 0);

}  // namespace promkit
