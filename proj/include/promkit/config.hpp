#pragma once

// Run configuration: a JSON document validated against a fixed schema.
// Unknown keys anywhere are rejected.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "promkit/design.hpp"
#include "promkit/postprocess.hpp"
#include "promkit/simulation.hpp"

namespace promkit {

struct EstimateSection {
  std::string input;   // container path
  std::string truth;   // optional float32 truth map
  std::string region;  // optional float32 map, nonzero = scored voxel
  bool write_candidates = true;
};

struct CovarianceSection {
  std::string mode = "data";  // "data" or "model"
  std::vector<double> snr;    // per encoding, model mode only
};

struct PostprocessSection {
  double span = 0.25;
  double lambda = 1.0;
  int max_iter = 20;
  int top_m = 2;
  double mask_fraction = 0.3;
};

struct SimulationSection {
  std::string kind = "phantom";      // "phantom", "uniform" or "rotation"
  std::vector<double> venc;          // default per kind
  // uniform and rotation fields
  int ny = 16, nx = 16;
  double velocity = 0.0;             // rotation: largest |v|
  std::vector<double> snr;           // per encoding; empty = noiseless
  // recipes
  std::size_t trials = 0;
  double grid_step = 0.0;
  VesselPhantomSpec phantom;
};

struct DesignSection {
  bool present = false;
  DesignSpec spec;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 0;
  std::string output_dir = "out";
  std::string estimator = "prom";
  std::optional<double> offset;
  CovarianceSection covariance;
  EstimateSection estimate;
  DesignSection design;
  SimulationSection simulation;
  PostprocessSection postprocess;
  /// Canonical JSON text of the parsed document (sorted keys), hashed into
  /// the run manifest.
  std::string canonical;
};

/// Throws Validation on malformed JSON, wrong types, out-of-range values or
/// unknown keys.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// Estimator names accepted by the estimate command.
const std::vector<std::string>& estimator_names();

}  // namespace promkit
