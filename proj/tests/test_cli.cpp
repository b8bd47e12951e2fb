#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

#include "promkit/io.hpp"

using nlohmann::json;
using namespace promkit;
namespace fs = std::filesystem;

namespace {

const fs::path& root() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("promkit_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(PROMKIT_CLI) + " " + args + " >" + (root() / "stdout.txt").string() +
                          " 2>" + (root() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const std::string& name, const std::string& text) {
  auto p = root() / name;
  std::ofstream(p) << text;
  return p;
}

json load_json(const fs::path& p) { return json::parse(read_file(p)); }

std::string dir(const std::string& name) { return (root() / name).string(); }

}  // namespace

TEST_CASE("noiseless uniform field round trip") {
  auto cfg = write_config("uniform.json", R"({"offset": 0, "simulation": {"kind": "uniform", "velocity": 77,
      "venc": [35, 10, 14], "ny": 6, "nx": 7}})");
  REQUIRE(run("--config " + cfg.string() + " --output " + dir("u") + " simulate") == 0);
  for (const char* est : {"prom", "prom+", "odv", "nco", "mle"}) {
    INFO(est);
    const std::string out = dir(std::string("u_") + est);
    REQUIRE(run("--config " + cfg.string() + " --output " + out + " estimate --estimator " + est + " --input " +
                dir("u") + "/uniform.bin") == 0);
    auto v = decode_float_map(read_file(out + "/velocity.f32"), 42);
    for (double x : v) CHECK(std::abs(x - 77) <= (std::string(est) == "prom" || std::string(est) == "prom+" ? 1e-4 : 0.011));
    auto summary = load_json(out + "/summary.json");
    CHECK(summary["estimated_voxels"] == 42);
    CHECK(summary.contains("voxels_per_second"));
    auto manifest = load_json(out + "/manifest.json");
    CHECK(manifest["seed"] == 1);
    CHECK(manifest["config_hash"].get<std::string>().size() == 16);
    CHECK(manifest["overrides"]["estimator"] == est);
  }
  auto m = load_json(dir("u") + "/manifest.json");
  bool hashed = false;
  for (const auto& o : m["outputs"]) hashed |= o["file"] == "uniform.bin" && o.contains("fnv1a64");
  CHECK(hashed);
  CHECK(fs::exists(dir("u_prom") + "/candidates.json"));
}

TEST_CASE("exit codes") {
  auto bad_key = write_config("bad_key.json", R"({"seeed": 3})");
  CHECK(run("--config " + bad_key.string() + " design") == 2);
  CHECK(run("--output " + dir("x") + " design") == 2);
  CHECK(run("--output " + dir("x") + " analyze --recipe fig4") == 2);
  CHECK(run("--output " + dir("x") + " analyze") == 2);
  CHECK(run("--bogus-flag design") == 2);
  CHECK(run("--config /nonexistent.json design") == 2);

  auto zero_range = write_config("zero_range.json",
                                 R"({"design": {"snr": [5, 10, 5], "omega_eps": 0, "gamma_m_tau": 0.0785}})");
  CHECK(run("--config " + zero_range.string() + " design") == 2);

  auto infeasible = write_config("infeasible.json", R"({"design": {"P": 4, "Q": 4, "snr": [0.5, 1, 0.5],
      "eps": [1e-3, 1e-3], "omega_eps": 300, "gamma_m_tau": 0.0628}})");
  CHECK(run("--config " + infeasible.string() + " --output " + dir("inf") + " design") == 4);
  CHECK(load_json(dir("inf") + "/design.json").contains("error"));

  auto budget = write_config("budget.json", R"({"design": {"snr": [5, 10, 5], "eps": [1e-9, 1e-9],
      "omega_eps": 200, "gamma_m_tau": 0.0785}})");
  CHECK(run("--config " + budget.string() + " --output " + dir("bud") + " design") == 2);

  // truncated and corrupted containers
  fs::create_directories(root() / "broken");
  ComplexImage img(3, 1, 2, 2);
  auto bytes = encode_container(img);
  write_file_atomic(root() / "broken" / "t.bin", bytes.substr(0, 20));
  write_file_atomic(root() / "broken" / "t.bin.json",
                    R"({"gamma_m1": [-0.15707963267948966, -0.06731984257692414, 0.15707963267948966],
                        "venc": [35, 10, 14], "offset": 0, "units": "cm/s", "seed": 0, "provenance": ""})");
  CHECK(run("--output " + dir("b") + " estimate --input " + dir("broken") + "/t.bin") == 3);
  CHECK(read_file(root() / "stderr.txt").find("byte 20") != std::string::npos);
  CHECK(run("--output " + dir("b") + " estimate --input " + dir("broken") + "/none.bin") == 3);
  CHECK(run("--output " + dir("b") + " estimate --estimator magic --input " + dir("broken") + "/t.bin") == 2);
}

TEST_CASE("all-masked input warns and writes an empty map") {
  fs::create_directories(root() / "zero");
  ComplexImage img(3, 1, 3, 3);
  ContainerSidecar side;
  side.gamma_m1 = {-0.15707963267948966, -0.06731984257692414, 0.15707963267948966};
  side.venc = {35, 10, 14};
  write_container(root() / "zero" / "z.bin", img, side);
  CHECK(run("--output " + dir("zo") + " estimate --estimator prom+ --input " + dir("zero") + "/z.bin") == 0);
  auto s = load_json(dir("zo") + "/summary.json");
  CHECK(s["estimated_voxels"] == 0);
  CHECK(s.contains("warning"));
  CHECK(read_file(root() / "stderr.txt").find("warning") != std::string::npos);
}

TEST_CASE("phantom pipeline") {
  // venc21 = 35 sits below the 60 cm/s peak, so SDV wraps the vessel cores.
  auto sim = write_config("ph_sim.json", R"({"simulation": {"kind": "phantom", "venc": [35, 10, 14]}})");
  REQUIRE(run("--config " + sim.string() + " --seed 3 --output " + dir("ph") + " simulate") == 0);
  const std::string in = dir("ph") + "/phantom.bin";
  auto cfg = write_config("score.json", R"({"estimate": {"truth": ")" + dir("ph") + R"(/truth.f32", "region": ")" +
                                            dir("ph") + R"(/flow.f32"}, "postprocess": {"span": 0.03}})");
  json s[3];
  const char* names[3] = {"sdv", "prom", "prom+"};
  for (int i = 0; i < 3; ++i) {
    const std::string out = dir(std::string("ph_") + names[i]);
    REQUIRE(run("--config " + cfg.string() + " --output " + out + " estimate --estimator " + names[i] +
                " --input " + in) == 0);
    s[i] = load_json(out + "/summary.json");
  }
  CHECK(s[0]["aliased_voxels"].get<int>() > 0);
  CHECK(s[1]["aliased_voxels"].get<int>() == 0);
  CHECK(s[2]["aliased_voxels"].get<int>() == 0);
  CHECK(s[1]["rmse_excluding_aliased"].get<double>() < 2.0);
}

TEST_CASE("prom+ repairs a noisy rotation field in two sweeps") {
  auto cfg = write_config("rot.json", R"({"simulation": {"kind": "rotation", "velocity": 240, "ny": 40, "nx": 40,
      "snr": [3, 6, 3]}, "estimate": {"truth": ")" + dir("rot") + R"(/truth.f32"}})");
  REQUIRE(run("--config " + cfg.string() + " --output " + dir("rot") + " simulate") == 0);
  const std::string in = dir("rot") + "/rotation.bin";
  REQUIRE(run("--config " + cfg.string() + " --output " + dir("rot_p") + " estimate --estimator prom --input " + in) == 0);
  REQUIRE(run("--config " + cfg.string() + " --output " + dir("rot_pp") + " estimate --estimator prom+ --input " + in) ==
          0);
  const json p = load_json(dir("rot_p") + "/summary.json");
  const json pp = load_json(dir("rot_pp") + "/summary.json");
  CHECK(pp["iterations"].get<int>() == 2);
  CHECK(pp["aliased_voxels"].get<int>() == 0);
  CHECK(pp["rmse_excluding_aliased"].get<double>() < 0.6 * p["rmse_excluding_aliased"].get<double>());
  auto truth = load_json(dir("rot") + "/rotation.bin.json");
  CHECK(truth.contains("venc"));
}

TEST_CASE("recipes are deterministic across runs and thread counts") {
  auto cfg = write_config("small.json", R"({"simulation": {"trials": 5000}})");
  REQUIRE(run("--config " + cfg.string() + " --threads 1 --output " + dir("r1") + " analyze --recipe fig5") == 0);
  REQUIRE(run("--config " + cfg.string() + " --threads 3 --output " + dir("r3") + " analyze --recipe fig5") == 0);
  CHECK(read_file(dir("r1") + "/fig5_histogram.csv") == read_file(dir("r3") + "/fig5_histogram.csv"));
  CHECK(read_file(dir("r1") + "/fig5_components.csv") == read_file(dir("r3") + "/fig5_components.csv"));

  REQUIRE(run("--output " + dir("f1a") + " analyze --recipe fig1") == 0);
  REQUIRE(run("--output " + dir("f1b") + " simulate --recipe fig1") == 0);
  CHECK(read_file(dir("f1a") + "/fig1_cost.csv") == read_file(dir("f1b") + "/fig1_cost.csv"));
  auto header = read_file(dir("f1a") + "/fig1_cost.csv").substr(0, 22);
  CHECK(header == "v,residual,local_min\n-");

  auto fig7 = write_config("fig7.json", R"({"simulation": {"trials": 2000}})");
  REQUIRE(run("--config " + fig7.string() + " --output " + dir("f7") + " analyze --recipe fig7") == 0);
  auto csv = read_file(dir("f7") + "/fig7_crlb.csv");
  CHECK(csv.substr(0, csv.find('\n')) == "s21,crlb_sqrt,rmse_mle,rmse_prom");
}

TEST_CASE("design command writes the result") {
  auto cfg = write_config("design.json", R"({"design": {"snr": [10, 20, 10], "eps": [1e-3, 1e-3],
      "omega_eps": 300, "gamma_m_tau": 0.0628}})");
  REQUIRE(run("--config " + cfg.string() + " --output " + dir("d") + " design") == 0);
  auto j = load_json(dir("d") + "/design.json");
  for (const char* k : {"p", "q", "c", "venc", "gamma_m1", "predicted_rmse", "unwrap_error_prob", "trials_used", "seed"})
    CHECK(j.contains(k));
  CHECK(j["venc"].size() == 3);
}
