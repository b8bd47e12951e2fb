#include "promkit/recipes.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <random>

#include "promkit/analysis.hpp"
#include "promkit/baselines.hpp"
#include "promkit/errors.hpp"
#include "promkit/estimator.hpp"
#include "promkit/parallel.hpp"

namespace promkit {

namespace {

constexpr double kPi = std::numbers::pi;

std::size_t or_default(std::size_t v, std::size_t fallback) { return v ? v : fallback; }
double or_default(double v, double fallback) { return v > 0.0 ? v : fallback; }

// Two-fold dephasing on the outer encodings: 2 s1 = s2 = 2 s3.
SnrMatrix dephased(double s21) {
  const std::vector<double> s{0.5 * s21, s21, 0.5 * s21};
  return SnrMatrix::per_encoding(s);
}

SnrMatrix uniform_snr(double s) {
  const std::vector<double> v{s, s, s};
  return SnrMatrix::per_encoding(v);
}

EncodingScheme three_point(const VencSet& venc) { return symmetric_moments_from_vencs(venc[1], venc[2]); }

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

}  // namespace

void Table::add(std::vector<double> row) {
  if (row.size() != columns.size()) throw Error(ErrorKind::Validation, "row width does not match the table");
  rows.push_back(std::move(row));
}

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  throw Error(ErrorKind::Validation, "no column named " + std::string(name));
}

std::vector<double> Table::values(std::string_view name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[c]);
  return out;
}

std::string Table::to_csv() const {
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
  out += '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + format_number(r[i]);
    out += '\n';
  }
  return out;
}

std::vector<std::string> recipe_names() {
  return {"fig1", "fig2", "fig5", "fig6", "fig7", "fig8", "fig9"};
}

RecipeOutput run_recipe(std::string_view name, const RecipeOptions& opts) {
  if (name == "fig1") return fig1_cost_curve(opts);
  if (name == "fig2") return fig2_covariance_similarity(opts);
  if (name == "fig5") return fig5_distribution(opts);
  if (name == "fig6") return fig6_rmse_vs_velocity(opts);
  if (name == "fig7") return fig7_rmse_vs_crlb(opts);
  if (name == "fig8") return fig8_design_comparison(opts);
  if (name == "fig9") return fig9_vessel_phantom(opts);
  std::string known;
  for (const auto& n : recipe_names()) known += " " + n;
  throw Error(ErrorKind::Validation, "unknown recipe '" + std::string(name) + "'; known:" + known);
}

RecipeOutput fig1_cost_curve(const RecipeOptions& opts) {
  const EncodingScheme scheme({-kPi / 20.0, kPi / 70.0, kPi / 20.0});
  const double omega = moment_period_range(scheme);
  const SnrMatrix s = dephased(5.0);
  GaussianStream rng(opts.seed, 0, 0);
  MeasurementMatrix y;
  synth_from_snr(s, 0.0, 0.0, scheme, rng, y);
  const MleCurve curve =
      complex_mle_grid(y, scheme, GridSpec{-0.5 * omega, 0.5 * omega, or_default(opts.grid_step, 0.01)});

  RecipeOutput out;
  Table t({"v", "residual", "local_min"});
  const std::size_t n = curve.v.size();
  std::size_t minima = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double prev = curve.residual[(i + n - 1) % n];
    const double next = curve.residual[(i + 1) % n];
    const bool is_min = curve.residual[i] < prev && curve.residual[i] <= next;
    minima += is_min;
    t.add({curve.v[i], curve.residual[i], is_min ? 1.0 : 0.0});
  }
  out.tables["cost"] = std::move(t);
  out.summary["v_true"] = 0.0;
  out.summary["v_global_min"] = curve.v_hat;
  out.summary["local_minima"] = static_cast<double>(minima);
  out.summary["omega"] = omega;
  return out;
}

RecipeOutput fig2_covariance_similarity(const RecipeOptions& opts) {
  const EncodingScheme scheme({-1.0, 0.0, 1.0});
  const std::size_t draws = or_default(opts.trials, std::size_t{100000});
  const double step = or_default(opts.grid_step, 0.5);
  const std::vector<double> grid = inclusive_points(GridSpec{step, 10.0, step});
  const std::size_t blocks = num_blocks(draws);
  const int workers = resolve_threads(opts.threads);
  const auto pairs = canonical_pairs(3);

  // Phase differences of one draw, pairs in canonical order.
  const auto differences = [&](const MeasurementMatrix& y) {
    Eigen::Vector3d th;
    for (std::size_t p = 0; p < pairs.size(); ++p)
      th(static_cast<Eigen::Index>(p)) = std::arg(y(pairs[p].minuend, 0) * std::conj(y(pairs[p].subtrahend, 0)));
    return th;
  };

  RecipeOutput out;
  Table t({"s21", "similarity_data", "similarity_model", "similarity_identity"});
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const SnrMatrix s = dephased(grid[g]);
    std::vector<Eigen::Vector3d> sum(blocks, Eigen::Vector3d::Zero());
    std::vector<Eigen::Matrix3d> outer(blocks, Eigen::Matrix3d::Zero());
    parallel_for(blocks, workers, [&](std::size_t b) {
      GaussianStream rng(opts.seed, g, b);
      std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
      MeasurementMatrix y;
      for (std::size_t i = b * kTrialsPerBlock; i < std::min(draws, (b + 1) * kTrialsPerBlock); ++i) {
        synth_from_snr(s, 0.0, phase(rng.engine()), scheme, rng, y);
        const Eigen::Vector3d th = differences(y);
        sum[b] += th;
        outer[b] += th * th.transpose();
      }
    });
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Matrix3d second = Eigen::Matrix3d::Zero();
    for (std::size_t b = 0; b < blocks; ++b) {
      mean += sum[b];
      second += outer[b];
    }
    const double n = static_cast<double>(draws);
    mean /= n;
    const Eigen::Matrix3d sample = (second - n * mean * mean.transpose()) / (n - 1.0);

    // Second pass over the same streams: per-draw data-driven covariance.
    std::vector<double> acc(blocks, 0.0);
    parallel_for(blocks, workers, [&](std::size_t b) {
      GaussianStream rng(opts.seed, g, b);
      std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
      MeasurementMatrix y;
      for (std::size_t i = b * kTrialsPerBlock; i < std::min(draws, (b + 1) * kTrialsPerBlock); ++i) {
        synth_from_snr(s, 0.0, phase(rng.engine()), scheme, rng, y);
        acc[b] += cosine_similarity(data_phase_cov(y).sigma, sample);
      }
    });
    double total = 0.0;
    for (double a : acc) total += a;
    t.add({grid[g], total / n, cosine_similarity(model_phase_cov(s).sigma, sample),
           cosine_similarity(Eigen::Matrix3d::Identity(), sample)});
  }
  out.tables["similarity"] = std::move(t);
  return out;
}

RecipeOutput fig5_distribution(const RecipeOptions& opts) {
  const EncodingScheme scheme = symmetric_moments_from_vencs(18.0, 22.0);
  const VencSet venc = vencs_from_moments(scheme);
  const double omega = unambiguous_range(venc);
  const double offset = -0.5 * omega;
  const std::size_t trials = or_default(opts.trials, std::size_t{100000});
  const double width = or_default(opts.grid_step, 1.0);
  const auto bins = static_cast<std::size_t>(std::ceil(omega / width));
  const std::vector<double> levels{5.0, 10.0};
  const std::size_t blocks = num_blocks(trials);
  const int workers = resolve_threads(opts.threads);

  RecipeOutput out;
  Table hist({"s21", "v", "count"});
  Table comps({"s21", "rank", "x21", "x31", "x32", "weight", "center", "variance", "count"});
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const SnrMatrix s = dephased(levels[l]);
    const PromSolver solver(venc, velocity_cov(model_phase_cov(s), venc), offset);
    std::vector<std::vector<std::uint64_t>> counts(blocks, std::vector<std::uint64_t>(bins, 0));
    parallel_for(blocks, workers, [&](std::size_t b) {
      GaussianStream rng(opts.seed, l, b);
      std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
      PromWorkspace ws;
      MeasurementMatrix y;
      std::vector<double> v_tilde(venc.size());
      for (std::size_t i = b * kTrialsPerBlock; i < std::min(trials, (b + 1) * kTrialsPerBlock); ++i) {
        synth_from_snr(s, 0.0, phase(rng.engine()), scheme, rng, y);
        wrapped_velocities_into(y, venc, v_tilde);
        const double v = solver.solve(v_tilde, ws).v_hat;
        const auto bin = std::min(bins - 1, static_cast<std::size_t>((v - offset) / width));
        ++counts[b][bin];
      }
    });
    for (std::size_t k = 0; k < bins; ++k) {
      std::uint64_t c = 0;
      for (const auto& block : counts) c += block[k];
      hist.add({levels[l], offset + (static_cast<double>(k) + 0.5) * width, static_cast<double>(c)});
    }
    DistributionOptions dopt;
    dopt.seed = opts.seed;
    dopt.threads = opts.threads;
    dopt.offset = offset;
    const auto mix = estimate_distribution(0.0, s, scheme, trials, 5, dopt);
    for (std::size_t r = 0; r < mix.size(); ++r)
      comps.add({levels[l], static_cast<double>(r + 1), static_cast<double>(mix[r].x[0]),
                 static_cast<double>(mix[r].x[1]), static_cast<double>(mix[r].x[2]), mix[r].weight,
                 mix[r].center, mix[r].variance, static_cast<double>(mix[r].count)});
  }
  out.tables["histogram"] = std::move(hist);
  out.tables["components"] = std::move(comps);
  out.summary["omega"] = omega;
  return out;
}

RecipeOutput fig6_rmse_vs_velocity(const RecipeOptions& opts) {
  const EncodingScheme scheme = three_point(VencSet({15.0, 6.0, 10.0}));
  const SnrMatrix s = dephased(20.0);
  MonteCarloOptions mc;
  mc.trials = or_default(opts.trials, std::size_t{10000});
  mc.seed = opts.seed;
  mc.threads = opts.threads;
  const GridSpec grid{-30.0, 30.0, or_default(opts.grid_step, 0.5)};
  const std::vector<std::pair<const char*, EstimatorId>> ids{
      {"sdv", EstimatorId::Sdv}, {"odv", EstimatorId::Odv}, {"nco", EstimatorId::Nco}, {"prom", EstimatorId::Prom}};

  RecipeOutput out;
  std::vector<RmseCurve> curves;
  for (const auto& [name, id] : ids) {
    curves.push_back(monte_carlo_rmse(id, scheme, s, grid, mc));
    out.summary[std::string("mean_rmse_") + name] = curves.back().mean();
  }
  Table t({"v", "rmse_sdv", "rmse_odv", "rmse_nco", "rmse_prom"});
  for (std::size_t i = 0; i < curves[0].v.size(); ++i)
    t.add({curves[0].v[i], curves[0].rmse[i], curves[1].rmse[i], curves[2].rmse[i], curves[3].rmse[i]});
  out.tables["rmse"] = std::move(t);
  return out;
}

RecipeOutput fig7_rmse_vs_crlb(const RecipeOptions& opts) {
  const EncodingScheme scheme = three_point(VencSet({15.0, 6.0, 10.0}));
  const std::vector<double> levels{2, 3, 4, 5, 6, 8, 10, 12, 15, 20};
  MonteCarloOptions mc;
  mc.trials = or_default(opts.trials, std::size_t{100000});
  mc.seed = opts.seed;
  mc.threads = opts.threads;
  const GridSpec at_zero{0.0, 0.0, 1.0};

  RecipeOutput out;
  Table t({"s21", "crlb_sqrt", "rmse_mle", "rmse_prom"});
  for (double s21 : levels) {
    const SnrMatrix s = dephased(s21);
    const std::vector<double> amp{0.5 * s21, s21, 0.5 * s21};
    const double crlb = crlb_velocity(0.0, 0.0, amp, Eigen::VectorXcd::Ones(1), 1.0, scheme);
    const double mle = monte_carlo_rmse(EstimatorId::Mle, scheme, s, at_zero, mc).rmse[0];
    const double prom = monte_carlo_rmse(EstimatorId::Prom, scheme, s, at_zero, mc).rmse[0];
    t.add({s21, std::sqrt(crlb), mle, prom});
  }
  out.tables["crlb"] = std::move(t);
  return out;
}

RecipeOutput fig8_design_comparison(const RecipeOptions& opts) {
  const VencSet designed = opts.venc ? *opts.venc : VencSet({5.1242 * 30.0, 5.1242 * 5.0, 5.1242 * 6.0});
  MonteCarloOptions mc;
  mc.trials = or_default(opts.trials, std::size_t{10000});
  mc.seed = opts.seed;
  mc.threads = opts.threads;
  const GridSpec grid{-150.0, 150.0, or_default(opts.grid_step, 0.5)};

  const RmseCurve prom = monte_carlo_rmse(EstimatorId::Prom, three_point(designed), dephased(20.0), grid, mc);
  const RmseCurve odv = monte_carlo_rmse(EstimatorId::Odv, three_point(VencSet({150.0, 50.0, 75.0})),
                                         uniform_snr(20.0), grid, mc);
  const RmseCurve sdv = monte_carlo_rmse(EstimatorId::Sdv, three_point(VencSet({150.0, 60.0, 100.0})),
                                         uniform_snr(20.0), grid, mc);
  RecipeOutput out;
  Table t({"v", "rmse_prom", "rmse_odv", "rmse_sdv"});
  for (std::size_t i = 0; i < prom.v.size(); ++i) t.add({prom.v[i], prom.rmse[i], odv.rmse[i], sdv.rmse[i]});
  out.tables["rmse"] = std::move(t);
  out.summary["mean_rmse_prom"] = prom.mean();
  out.summary["mean_rmse_odv"] = odv.mean();
  out.summary["mean_rmse_sdv"] = sdv.mean();
  out.summary["reduction_vs_odv_pct"] = 100.0 * (1.0 - prom.mean() / odv.mean());
  out.summary["reduction_vs_sdv_pct"] = 100.0 * (1.0 - prom.mean() / sdv.mean());
  out.summary["venc21"] = designed[0];
  out.summary["venc31"] = designed[1];
  out.summary["venc32"] = designed[2];
  return out;
}

MapScore score_map(const std::vector<double>& estimate, const std::vector<double>& truth,
                   const std::vector<std::uint8_t>& region, double period) {
  if (estimate.size() != truth.size() || region.size() != truth.size())
    throw Error(ErrorKind::Validation, "map sizes differ");
  MapScore s;
  double sq = 0.0;
  std::size_t kept = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!region[i] || std::isnan(estimate[i])) continue;
    ++s.voxels;
    const double e = estimate[i] - truth[i];
    if (std::fabs(e) > 0.5 * period) {
      ++s.aliased;
      continue;
    }
    sq += e * e;
    ++kept;
  }
  s.rmse = kept ? std::sqrt(sq / static_cast<double>(kept)) : std::numeric_limits<double>::quiet_NaN();
  s.error_norm = std::sqrt(sq);
  return s;
}

std::vector<double> estimate_image(const ComplexImage& image, const EncodingScheme& scheme,
                                   EstimatorId id, double offset, int threads) {
  if (image.ne != scheme.num_encodings())
    throw Error(ErrorKind::Validation, "image encodings do not match the scheme");
  std::vector<double> out(image.num_voxels(), std::numeric_limits<double>::quiet_NaN());
  parallel_for(static_cast<std::size_t>(image.ny), resolve_threads(threads), [&](std::size_t row) {
    VoxelEstimator est(id, scheme, offset);
    for (int x = 0; x < image.nx; ++x) {
      const auto yy = static_cast<int>(row);
      try {
        out[row * static_cast<std::size_t>(image.nx) + static_cast<std::size_t>(x)] = est(image.voxel(yy, x));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::MaskedVoxel && e.kind() != ErrorKind::DegenerateCovariance) throw;
      }
    }
  });
  return out;
}

RecipeOutput fig9_vessel_phantom(const RecipeOptions& opts) {
  const EncodingScheme scheme = three_point(VencSet({60.0, 20.0, 30.0}));
  const VencSet venc = vencs_from_moments(scheme);
  const double omega = unambiguous_range(venc);
  const VesselPhantomSpec spec;
  // Reporting interval centred on the expected flow range [0, peak].
  const double offset = 0.5 * spec.peak_velocity - 0.5 * omega;
  const VesselPhantom ph = vessel_phantom(spec, scheme, opts.seed);

  const auto sdv = estimate_image(ph.image, scheme, EstimatorId::Sdv, offset, opts.threads);
  const auto odv = estimate_image(ph.image, scheme, EstimatorId::Odv, offset, opts.threads);
  const auto prom = estimate_image(ph.image, scheme, EstimatorId::Prom, offset, opts.threads);

  FieldOptions fo;
  fo.offset = offset;
  fo.threads = opts.threads;
  const VelocityField field = estimate_field(ph.image, venc, fo);
  // The vessel map is not smooth at the scale of a 25% span.
  const PromPlusResult plus = prom_plus(field, 0.03, 1.0, 20, opts.threads);
  const auto regularized = plus.field.values();

  RecipeOutput out;
  const std::vector<std::pair<std::string, const std::vector<double>*>> maps{
      {"sdv", &sdv}, {"odv", &odv}, {"prom", &prom}, {"prom_plus", &regularized}};
  for (const auto& [name, m] : maps) {
    const double period = name == "sdv" ? 2.0 * venc[0] : omega;
    const MapScore sc = score_map(*m, ph.truth, ph.flow, period);
    out.summary["aliased_" + name] = static_cast<double>(sc.aliased);
    out.summary["rmse_" + name] = sc.rmse;
    out.summary["error_norm_" + name] = sc.error_norm;
    out.summary["scored_" + name] = static_cast<double>(sc.voxels);
  }
  out.summary["prom_plus_iterations"] = plus.iterations;
  out.summary["flow_voxels"] = static_cast<double>(std::count(ph.flow.begin(), ph.flow.end(), 1));
  out.summary["sigma"] = ph.sigma;
  out.summary["offset"] = offset;

  Table t({"y", "x", "truth", "flow", "magnitude", "sdv", "odv", "prom", "prom_plus"});
  for (int y = 0; y < ph.image.ny; ++y)
    for (int x = 0; x < ph.image.nx; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * ph.image.nx + x;
      t.add({static_cast<double>(y), static_cast<double>(x), ph.truth[i], static_cast<double>(ph.flow[i]),
             field.magnitude[i], sdv[i], odv[i], prom[i], regularized[i]});
    }
  out.tables["maps"] = std::move(t);
  return out;
}

}  // namespace promkit
