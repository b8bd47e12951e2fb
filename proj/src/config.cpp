#include "promkit/config.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>

#include <json.hpp>

#include "promkit/errors.hpp"
#include "promkit/io.hpp"

namespace promkit {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::Validation, "config " + where + ": " + what);
}

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) fail(where, "expected an object");
  for (const auto& [k, _] : obj.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
      fail(where, "unknown key '" + k + "'");
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(where, "must be finite");
  return v;
}

double positive(const json& j, const std::string& where) {
  const double v = number(j, where);
  if (!(v > 0.0)) fail(where, "must be positive");
  return v;
}

std::int64_t integer(const json& j, const std::string& where) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  // Large trial counts are often written as 1e9.
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 9.0e18) return static_cast<std::int64_t>(v);
  }
  fail(where, "expected an integer");
}

std::string text(const json& j, const std::string& where) {
  if (!j.is_string()) fail(where, "expected a string");
  return j.get<std::string>();
}

bool boolean(const json& j, const std::string& where) {
  if (!j.is_boolean()) fail(where, "expected true or false");
  return j.get<bool>();
}

std::vector<double> numbers(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

// Either one SNR per encoding or one row per encoding with a value per coil.
SnrMatrix snr_matrix(const json& j, int coils, const std::string& where) {
  if (!j.is_array() || j.empty()) fail(where, "expected a non-empty array");
  SnrMatrix s;
  if (j[0].is_array()) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    s.s.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto row = numbers(j[static_cast<std::size_t>(r)], where);
      if (static_cast<Eigen::Index>(row.size()) != cols) fail(where, "ragged SNR rows");
      for (Eigen::Index c = 0; c < cols; ++c) s.s(r, c) = row[static_cast<std::size_t>(c)];
    }
  } else {
    s = SnrMatrix::per_encoding(numbers(j, where), coils);
  }
  if ((s.s.array() < 0.0).any()) fail(where, "SNR must be nonnegative");
  return s;
}

void parse_design(const json& j, DesignSection& d) {
  const std::string w = "design";
  allow_keys(j, w, {"P", "Q", "snr", "coils", "eps", "omega_eps", "gamma_m_tau", "trials_override", "trial_cap"});
  d.present = true;
  auto& s = d.spec;
  if (j.contains("P")) s.P = static_cast<int>(integer(j["P"], w + ".P"));
  if (j.contains("Q")) s.Q = static_cast<int>(integer(j["Q"], w + ".Q"));
  int coils = 1;
  if (j.contains("coils")) coils = static_cast<int>(integer(j["coils"], w + ".coils"));
  if (coils < 1) fail(w + ".coils", "must be positive");
  if (!j.contains("snr")) fail(w, "missing 'snr'");
  s.s = snr_matrix(j["snr"], coils, w + ".snr");
  if (j.contains("eps")) {
    const auto e = numbers(j["eps"], w + ".eps");
    if (e.size() != 2) fail(w + ".eps", "expected [unwrap, alias]");
    s.eps_unwrap = e[0];
    s.eps_alias = e[1];
  }
  if (!j.contains("omega_eps")) fail(w, "missing 'omega_eps'");
  s.omega_eps = number(j["omega_eps"], w + ".omega_eps");
  if (!j.contains("gamma_m_tau")) fail(w, "missing 'gamma_m_tau'");
  s.gamma_m_tau = number(j["gamma_m_tau"], w + ".gamma_m_tau");
  if (j.contains("trials_override")) {
    const auto t = integer(j["trials_override"], w + ".trials_override");
    if (t <= 0) fail(w + ".trials_override", "must be positive");
    s.trials_override = static_cast<std::uint64_t>(t);
  }
  if (j.contains("trial_cap")) {
    const auto t = integer(j["trial_cap"], w + ".trial_cap");
    if (t <= 0) fail(w + ".trial_cap", "must be positive");
    s.trial_cap = static_cast<std::uint64_t>(t);
  }
  s.validate();
}

void parse_phantom(const json& j, VesselPhantomSpec& p) {
  const std::string w = "simulation.phantom";
  allow_keys(j, w, {"peak_velocity", "diameters", "fine_res", "block", "density_background", "density_static",
                    "density_vessel", "max_snr", "gap", "static_margin", "outer_margin", "random_phase"});
  if (j.contains("peak_velocity")) p.peak_velocity = number(j["peak_velocity"], w + ".peak_velocity");
  if (j.contains("diameters")) p.diameters = numbers(j["diameters"], w + ".diameters");
  if (j.contains("fine_res")) p.fine_res = positive(j["fine_res"], w + ".fine_res");
  if (j.contains("block")) p.block = static_cast<int>(integer(j["block"], w + ".block"));
  if (j.contains("density_background")) p.density_background = number(j["density_background"], w + ".density_background");
  if (j.contains("density_static")) p.density_static = number(j["density_static"], w + ".density_static");
  if (j.contains("density_vessel")) p.density_vessel = number(j["density_vessel"], w + ".density_vessel");
  if (j.contains("max_snr")) p.max_snr = positive(j["max_snr"], w + ".max_snr");
  if (j.contains("gap")) p.gap = number(j["gap"], w + ".gap");
  if (j.contains("static_margin")) p.static_margin = number(j["static_margin"], w + ".static_margin");
  if (j.contains("outer_margin")) p.outer_margin = number(j["outer_margin"], w + ".outer_margin");
  if (j.contains("random_phase")) p.random_phase = boolean(j["random_phase"], w + ".random_phase");
  p.validate();
}

void parse_simulation(const json& j, SimulationSection& s) {
  const std::string w = "simulation";
  allow_keys(j, w, {"kind", "venc", "ny", "nx", "velocity", "snr", "trials", "grid_step", "phantom"});
  if (j.contains("kind")) {
    s.kind = text(j["kind"], w + ".kind");
    if (s.kind != "phantom" && s.kind != "uniform" && s.kind != "rotation")
      fail(w + ".kind", "expected 'phantom', 'uniform' or 'rotation'");
  }
  if (j.contains("venc")) {
    s.venc = numbers(j["venc"], w + ".venc");
    if (s.venc.size() != 3) fail(w + ".venc", "expected three values (pairs 21, 31, 32)");
    for (double v : s.venc)
      if (!(v > 0.0)) fail(w + ".venc", "must be positive");
  }
  if (j.contains("ny")) s.ny = static_cast<int>(integer(j["ny"], w + ".ny"));
  if (j.contains("nx")) s.nx = static_cast<int>(integer(j["nx"], w + ".nx"));
  if (s.ny < 1 || s.nx < 1) fail(w, "ny and nx must be positive");
  if (j.contains("velocity")) s.velocity = number(j["velocity"], w + ".velocity");
  if (j.contains("snr")) {
    s.snr = numbers(j["snr"], w + ".snr");
    if (s.snr.size() != 3) fail(w + ".snr", "expected three values");
  }
  if (j.contains("trials")) {
    const auto t = integer(j["trials"], w + ".trials");
    if (t <= 0) fail(w + ".trials", "must be positive");
    s.trials = static_cast<std::size_t>(t);
  }
  if (j.contains("grid_step")) s.grid_step = positive(j["grid_step"], w + ".grid_step");
  if (j.contains("phantom")) parse_phantom(j["phantom"], s.phantom);
}

void parse_postprocess(const json& j, PostprocessSection& p) {
  const std::string w = "postprocess";
  allow_keys(j, w, {"span", "lambda", "max_iter", "top_m", "mask_fraction"});
  if (j.contains("span")) p.span = number(j["span"], w + ".span");
  if (!(p.span > 0.0 && p.span <= 1.0)) fail(w + ".span", "must lie in (0, 1]");
  if (j.contains("lambda")) p.lambda = number(j["lambda"], w + ".lambda");
  if (p.lambda < 0.0) fail(w + ".lambda", "must be nonnegative");
  if (j.contains("max_iter")) p.max_iter = static_cast<int>(integer(j["max_iter"], w + ".max_iter"));
  if (p.max_iter < 1) fail(w + ".max_iter", "must be positive");
  if (j.contains("top_m")) p.top_m = static_cast<int>(integer(j["top_m"], w + ".top_m"));
  if (p.top_m < 1) fail(w + ".top_m", "must be positive");
  if (j.contains("mask_fraction")) p.mask_fraction = number(j["mask_fraction"], w + ".mask_fraction");
  if (!(p.mask_fraction >= 0.0 && p.mask_fraction < 1.0)) fail(w + ".mask_fraction", "must lie in [0, 1)");
}

}  // namespace

const std::vector<std::string>& estimator_names() {
  static const std::vector<std::string> names{"prom", "prom+", "sdv", "odv", "nco", "mle"};
  return names;
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Validation, std::string("config is not valid JSON: ") + e.what());
  }
  allow_keys(j, "root", {"seed", "threads", "output_dir", "estimator", "offset", "covariance", "estimate",
                         "design", "simulation", "postprocess"});
  RunConfig c;
  if (j.contains("seed")) {
    const auto s = integer(j["seed"], "seed");
    if (s < 0) fail("seed", "must be nonnegative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (j.contains("threads")) {
    c.threads = static_cast<int>(integer(j["threads"], "threads"));
    if (c.threads < 0) fail("threads", "must be nonnegative");
  }
  if (j.contains("output_dir")) c.output_dir = text(j["output_dir"], "output_dir");
  if (j.contains("estimator")) {
    c.estimator = text(j["estimator"], "estimator");
    const auto& n = estimator_names();
    if (std::find(n.begin(), n.end(), c.estimator) == n.end()) fail("estimator", "unknown estimator '" + c.estimator + "'");
  }
  if (j.contains("offset")) c.offset = number(j["offset"], "offset");
  if (j.contains("covariance")) {
    const auto& cj = j["covariance"];
    allow_keys(cj, "covariance", {"mode", "snr"});
    if (cj.contains("mode")) c.covariance.mode = text(cj["mode"], "covariance.mode");
    if (c.covariance.mode != "data" && c.covariance.mode != "model")
      fail("covariance.mode", "expected 'data' or 'model'");
    if (cj.contains("snr")) c.covariance.snr = numbers(cj["snr"], "covariance.snr");
    if (c.covariance.mode == "model" && c.covariance.snr.empty())
      fail("covariance", "model mode needs 'snr'");
  }
  if (j.contains("estimate")) {
    const auto& ej = j["estimate"];
    allow_keys(ej, "estimate", {"input", "truth", "region", "write_candidates"});
    if (ej.contains("input")) c.estimate.input = text(ej["input"], "estimate.input");
    if (ej.contains("truth")) c.estimate.truth = text(ej["truth"], "estimate.truth");
    if (ej.contains("region")) c.estimate.region = text(ej["region"], "estimate.region");
    if (ej.contains("write_candidates"))
      c.estimate.write_candidates = boolean(ej["write_candidates"], "estimate.write_candidates");
  }
  if (j.contains("design")) parse_design(j["design"], c.design);
  if (j.contains("simulation")) parse_simulation(j["simulation"], c.simulation);
  if (j.contains("postprocess")) parse_postprocess(j["postprocess"], c.postprocess);
  c.canonical = j.dump();
  return c;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_file(path)); }

}  // namespace promkit
