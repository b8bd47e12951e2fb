// promkit: batch front end for estimation, design, simulation and the
// figure recipes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <json.hpp>

#include "promkit/config.hpp"
#include "promkit/design.hpp"
#include "promkit/errors.hpp"
#include "promkit/io.hpp"
#include "promkit/parallel.hpp"
#include "promkit/postprocess.hpp"
#include "promkit/recipes.hpp"
#include "promkit/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace promkit;

namespace {

constexpr const char* kVersion = "0.1.0";

enum ExitCode { kOk = 0, kFailure = 1, kValidation = 2, kIo = 3, kInfeasible = 4 };

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Io: return kIo;
    case ErrorKind::InfeasibleDesign: return kInfeasible;
    default: return kValidation;
  }
}

struct Context {
  RunConfig cfg;
  fs::path out;
  std::vector<std::string> argv;
  std::string command;
  json overrides = json::object();
  json outputs = json::array();

  void write(const std::string& name, const std::string& bytes) {
    write_file_atomic(out / name, bytes);
    outputs.push_back({{"file", name}, {"fnv1a64", hex64(fnv1a64(bytes))}, {"bytes", bytes.size()}});
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
  /// Records a file written by another routine.
  void record(const std::string& name) {
    const std::string bytes = read_file(out / name);
    outputs.push_back({{"file", name}, {"fnv1a64", hex64(fnv1a64(bytes))}, {"bytes", bytes.size()}});
  }

  void write_manifest() {
    json m;
    m["tool"] = "promkit";
    m["command"] = command;
    m["argv"] = argv;
    m["config"] = json::parse(cfg.canonical);
    m["config_hash"] = hex64(fnv1a64(cfg.canonical));
    m["overrides"] = overrides;
    m["seed"] = cfg.seed;
    m["threads"] = resolve_threads(cfg.threads);
    m["versions"] = {
        {"promkit", kVersion},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"boost", BOOST_LIB_VERSION},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
        {"cli11", CLI11_VERSION},
        {"compiler", __VERSION__}};
    m["outputs"] = outputs;
    write_file_atomic(out / "manifest.json", m.dump(2) + "\n");
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json map_metadata(int ny, int nx, const std::string& what, const std::string& units) {
  return {{"ny", ny}, {"nx", nx}, {"dtype", "float32-le"}, {"order", "x fastest, then y"},
          {"content", what}, {"units", units}, {"nan", "masked or not estimated"}};
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

int run_estimate(Context& ctx, const std::string& input_flag, const std::string& estimator_flag) {
  RunConfig& cfg = ctx.cfg;
  const std::string input = !input_flag.empty() ? input_flag : cfg.estimate.input;
  if (input.empty()) throw Error(ErrorKind::Validation, "estimate needs an input container (--input or estimate.input)");
  const std::string name = !estimator_flag.empty() ? estimator_flag : cfg.estimator;
  const auto& known = estimator_names();
  if (std::find(known.begin(), known.end(), name) == known.end())
    throw Error(ErrorKind::Validation, "unknown estimator '" + name + "'");

  const ContainerSidecar side = read_sidecar(input);
  const ComplexImage image = read_container(input);
  if (static_cast<int>(side.gamma_m1.size()) != image.ne)
    throw Error(ErrorKind::Io, "sidecar lists " + std::to_string(side.gamma_m1.size()) +
                                   " encodings but the container has " + std::to_string(image.ne));
  const EncodingScheme scheme(side.gamma_m1);
  const VencSet venc = vencs_from_moments(scheme);
  const double omega = unambiguous_range(venc);
  const double offset = cfg.offset ? *cfg.offset : side.offset;

  CovarianceMode mode = CovarianceMode::data();
  if (cfg.covariance.mode == "model") {
    if (static_cast<int>(cfg.covariance.snr.size()) != image.ne)
      throw Error(ErrorKind::Validation, "covariance.snr needs one value per encoding");
    mode = CovarianceMode::model(SnrMatrix::per_encoding(cfg.covariance.snr, image.nc));
  }

  json summary;
  summary["estimator"] = name;
  summary["input"] = input;
  summary["voxels"] = image.num_voxels();
  summary["offset"] = offset;
  summary["omega"] = omega;

  std::vector<double> values;
  std::optional<VelocityField> field;
  double period = omega;
  const auto t0 = std::chrono::steady_clock::now();
  if (name == "prom" || name == "prom+") {
    FieldOptions fo;
    fo.mode = mode;
    fo.offset = offset;
    fo.top_m = cfg.postprocess.top_m;
    fo.threads = cfg.threads;
    fo.mask_fraction = name == "prom+" ? cfg.postprocess.mask_fraction : 0.0;
    field = estimate_field(image, venc, fo);
    if (name == "prom+") {
      const PromPlusResult r =
          prom_plus(*field, cfg.postprocess.span, cfg.postprocess.lambda, cfg.postprocess.max_iter, cfg.threads);
      summary["iterations"] = r.iterations;
      summary["changes_per_sweep"] = r.changes;
      field = r.field;
    }
    values = field->values();
  } else {
    const EstimatorId id = parse_estimator(name);
    if (id == EstimatorId::Sdv) period = 2.0 * venc[0];
    values = estimate_image(image, scheme, id, offset, cfg.threads);
  }
  const double wall = seconds_since(t0);

  std::size_t estimated = 0;
  for (double v : values) estimated += std::isfinite(v);
  summary["estimated_voxels"] = estimated;
  summary["wall_seconds"] = wall;
  summary["voxels_per_second"] = wall > 0.0 ? static_cast<double>(image.num_voxels()) / wall : 0.0;
  summary["threads"] = resolve_threads(cfg.threads);
  summary["period"] = period;

  if (!cfg.estimate.truth.empty()) {
    const auto truth = decode_float_map(read_file(cfg.estimate.truth), image.num_voxels());
    std::vector<std::uint8_t> region(truth.size(), 1);
    if (!cfg.estimate.region.empty()) {
      const auto r = decode_float_map(read_file(cfg.estimate.region), image.num_voxels());
      for (std::size_t i = 0; i < r.size(); ++i) region[i] = r[i] != 0.0;
    }
    for (std::size_t i = 0; i < truth.size(); ++i) region[i] = region[i] && std::isfinite(truth[i]);
    const MapScore sc = score_map(values, truth, region, period);
    summary["scored_voxels"] = sc.voxels;
    summary["aliased_voxels"] = sc.aliased;
    summary["rmse_excluding_aliased"] = number_or_null(sc.rmse);
    summary["error_norm_excluding_aliased"] = sc.error_norm;
  }

  ctx.write("velocity.f32", encode_float_map(values));
  json meta = map_metadata(image.ny, image.nx, "velocity", side.units);
  meta["estimator"] = name;
  meta["offset"] = offset;
  meta["period"] = period;
  ctx.write_json("velocity.json", meta);
  if (field && cfg.estimate.write_candidates) {
    json cands = json::array();
    for (std::size_t i = 0; i < field->size(); ++i) {
      json list = json::array();
      for (const auto& c : field->candidates[i]) list.push_back({{"v", c.v_hat}, {"nll", c.nll}, {"k", c.k}});
      cands.push_back({{"selected", field->selected[i]}, {"candidates", list}});
    }
    ctx.write_json("candidates.json", {{"ny", image.ny}, {"nx", image.nx}, {"voxels", cands}});
  }
  int code = kOk;
  if (estimated == 0) {
    summary["warning"] = "empty-output: every voxel is masked";
    std::cerr << "warning: every voxel is masked; the velocity map is empty\n";
  }
  ctx.write_json("summary.json", summary);
  std::cout << name << ": " << estimated << "/" << image.num_voxels() << " voxels in " << wall << " s\n";
  return code;
}

int run_design(Context& ctx) {
  RunConfig& cfg = ctx.cfg;
  if (!cfg.design.present) throw Error(ErrorKind::Validation, "design needs a 'design' section in the config");
  DesignSpec spec = cfg.design.spec;
  spec.seed = cfg.seed;
  spec.threads = cfg.threads;
  const auto t0 = std::chrono::steady_clock::now();
  json j;
  try {
    const DesignResult r = design_three_point(spec);
    j["p"] = r.p;
    j["q"] = r.q;
    j["c"] = r.c;
    j["venc"] = r.venc.values();
    j["gamma_m1"] = r.moments.gamma_m1();
    j["omega"] = unambiguous_range(r.venc);
    j["predicted_rmse"] = r.predicted_rmse;
    j["unwrap_error_prob"] = r.unwrap_error_prob;
    j["trials_used"] = r.trials_used;
    json cands = json::array();
    for (const auto& c : r.candidates)
      cands.push_back({{"p", c.p}, {"q", c.q}, {"status", to_string(c.status)}, {"c", c.c},
                       {"predicted_rmse", c.predicted_rmse}, {"errors", c.errors}, {"trials", c.trials}});
    j["candidates"] = cands;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InfeasibleDesign) {
      ctx.write_json("design.json", {{"error", e.what()}, {"seed", cfg.seed}});
      ctx.write_manifest();
    }
    throw;
  }
  j["seed"] = cfg.seed;
  j["wall_seconds"] = seconds_since(t0);
  ctx.write_json("design.json", j);
  std::cout << "design: (p, q) = (" << j["p"] << ", " << j["q"] << "), c = " << j["c"] << ", venc = " << j["venc"]
            << "\n";
  return kOk;
}

void write_recipe(Context& ctx, const std::string& recipe) {
  const RunConfig& cfg = ctx.cfg;
  RecipeOptions ro;
  ro.seed = cfg.seed;
  ro.threads = cfg.threads;
  ro.trials = cfg.simulation.trials;
  ro.grid_step = cfg.simulation.grid_step;
  if (!cfg.simulation.venc.empty()) ro.venc = VencSet(cfg.simulation.venc);
  const auto t0 = std::chrono::steady_clock::now();
  const RecipeOutput r = run_recipe(recipe, ro);
  for (const auto& [name, table] : r.tables) ctx.write(recipe + "_" + name + ".csv", table.to_csv());
  json s = json::object();
  for (const auto& [k, v] : r.summary) s[k] = number_or_null(v);
  s["wall_seconds"] = seconds_since(t0);
  ctx.write_json(recipe + "_summary.json", s);
  std::cout << recipe << ": " << r.tables.size() << " table(s) written to " << ctx.out.string() << "\n";
}

int run_simulate(Context& ctx, const std::string& recipe) {
  if (!recipe.empty()) {
    write_recipe(ctx, recipe);
    return kOk;
  }
  const RunConfig& cfg = ctx.cfg;
  const SimulationSection& sim = cfg.simulation;
  ContainerSidecar side;
  side.seed = cfg.seed;
  if (sim.kind == "phantom") {
    const VencSet venc(sim.venc.empty() ? std::vector<double>{60.0, 20.0, 30.0} : sim.venc);
    const EncodingScheme scheme = symmetric_moments_from_vencs(venc[1], venc[2]);
    const VesselPhantom ph = vessel_phantom(sim.phantom, scheme, cfg.seed);
    const double omega = unambiguous_range(vencs_from_moments(scheme));
    side.gamma_m1 = scheme.gamma_m1();
    side.venc = vencs_from_moments(scheme).values();
    side.offset = 0.5 * sim.phantom.peak_velocity - 0.5 * omega;
    side.provenance = json({{"kind", "vessel_phantom"}, {"sigma", ph.sigma}, {"voxel_mm", ph.voxel_mm},
                            {"vessel_centers_mm", ph.vessel_centers_mm}, {"truth", "truth.f32"},
                            {"region", "flow.f32"}})
                          .dump();
    write_container(ctx.out / "phantom.bin", ph.image, side);
    ctx.record("phantom.bin");
    ctx.record("phantom.bin.json");
    ctx.write("truth.f32", encode_float_map(ph.truth));
    ctx.write_json("truth.json", map_metadata(ph.image.ny, ph.image.nx, "block-mean true velocity", "cm/s"));
    std::vector<double> flow(ph.flow.begin(), ph.flow.end());
    ctx.write("flow.f32", encode_float_map(flow));
    ctx.write_json("flow.json", map_metadata(ph.image.ny, ph.image.nx, "1 = block touches a vessel", "1"));
    std::cout << "phantom: " << ph.image.ny << " x " << ph.image.nx << " voxels, sigma " << ph.sigma << "\n";
    return kOk;
  }
  const bool rotation = sim.kind == "rotation";
  const std::vector<double> default_venc =
      rotation ? std::vector<double>{250.0, 100.0, 500.0 / 3.0} : std::vector<double>{35.0, 10.0, 14.0};
  const VencSet venc(sim.venc.empty() ? default_venc : sim.venc);
  const EncodingScheme scheme = symmetric_moments_from_vencs(venc[1], venc[2]);
  const double omega = unambiguous_range(vencs_from_moments(scheme));
  // rotation: velocity grows linearly from -velocity to +velocity across x
  auto velocity_at = [&](int x) {
    if (!rotation) return sim.velocity;
    return sim.velocity * (2.0 * (x + 0.5) / sim.nx - 1.0);
  };
  ComplexImage image(3, 1, sim.ny, sim.nx);
  std::vector<double> truth(image.num_voxels());
  const bool noiseless = sim.snr.empty();
  const SnrMatrix s = SnrMatrix::per_encoding(noiseless ? std::vector<double>{1.0, 1.0, 1.0} : sim.snr);
  MeasurementMatrix y(3, 1);
  for (int r = 0; r < sim.ny; ++r) {
    GaussianStream rng(cfg.seed, static_cast<std::uint64_t>(r), 0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (int x = 0; x < sim.nx; ++x) {
      const double v = velocity_at(x);
      truth[static_cast<std::size_t>(r) * sim.nx + x] = v;
      if (noiseless) {
        for (int a = 0; a < 3; ++a) y(a, 0) = std::polar(1.0, scheme.gamma_m1()[static_cast<std::size_t>(a)] * v);
      } else {
        synth_from_snr(s, v, rotation ? phase(rng.engine()) : 0.0, scheme, rng, y);
      }
      image.set_voxel(r, x, y);
    }
  }
  const std::string stem = rotation ? "rotation" : "uniform";
  side.gamma_m1 = scheme.gamma_m1();
  side.venc = vencs_from_moments(scheme).values();
  side.offset = -0.5 * omega;
  side.provenance = json({{"kind", stem}, {"velocity", sim.velocity}, {"noiseless", noiseless},
                          {"truth", "truth.f32"}})
                        .dump();
  write_container(ctx.out / (stem + ".bin"), image, side);
  ctx.record(stem + ".bin");
  ctx.record(stem + ".bin.json");
  ctx.write("truth.f32", encode_float_map(truth));
  if (rotation) {
    std::cout << "rotation field: " << sim.ny << " x " << sim.nx << ", |v| <= " << std::abs(sim.velocity) << "\n";
    return kOk;
  }
  std::cout << "uniform field: " << sim.ny << " x " << sim.nx << " at v = " << sim.velocity << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint phase unwrapping for multi-point phase-contrast velocity encoding"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path, output, estimator, recipe, input;
  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("--config", config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Master seed");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads (default: PROMKIT_THREADS, then all cores)")
                          ->check(CLI::NonNegativeNumber);
  auto* output_opt = app.add_option("--output", output, "Output directory");

  auto* est = app.add_subcommand("estimate", "Estimate a velocity map from a complex-image container");
  est->add_option("--estimator", estimator, "prom, prom+, sdv, odv, nco or mle");
  est->add_option("--input", input, "Container path (overrides estimate.input)");
  app.add_subcommand("design", "Optimal three-point venc design");
  auto* sim = app.add_subcommand("simulate", "Write a synthetic container, or run a recipe");
  sim->add_option("--recipe", recipe, "fig1, fig2, fig5, fig6, fig7, fig8 or fig9");
  auto* ana = app.add_subcommand("analyze", "Run a figure recipe and write CSV tables");
  ana->add_option("--recipe", recipe, "fig1, fig2, fig5, fig6, fig7, fig8 or fig9")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    Context ctx;
    ctx.argv.assign(argv, argv + argc);
    ctx.cfg = config_path.empty() ? parse_run_config("{}") : load_run_config(config_path);
    if (*seed_opt) {
      ctx.cfg.seed = seed;
      ctx.overrides["seed"] = seed;
    }
    if (*threads_opt) {
      ctx.cfg.threads = threads;
      ctx.overrides["threads"] = threads;
    }
    if (*output_opt) ctx.cfg.output_dir = output;
    if (!estimator.empty()) ctx.overrides["estimator"] = estimator;
    if (!recipe.empty()) ctx.overrides["recipe"] = recipe;
    if (!input.empty()) ctx.overrides["input"] = input;
    ctx.out = ctx.cfg.output_dir;
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create output directory " + ctx.out.string() + ": " + ec.message());

    int rc = kOk;
    if (est->parsed()) {
      ctx.command = "estimate";
      rc = run_estimate(ctx, input, estimator);
    } else if (app.got_subcommand("design")) {
      ctx.command = "design";
      rc = run_design(ctx);
    } else if (sim->parsed()) {
      ctx.command = "simulate";
      rc = run_simulate(ctx, recipe);
    } else {
      ctx.command = "analyze";
      write_recipe(ctx, recipe);
    }
    ctx.write_manifest();
    return rc;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
