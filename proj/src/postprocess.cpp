#include "promkit/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "promkit/errors.hpp"
#include "promkit/parallel.hpp"

namespace promkit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kVoxelsPerTask = 256;

}  // namespace

double VelocityField::value(std::size_t vox) const {
  if (!mask[vox] || candidates[vox].empty()) return kNaN;
  return candidates[vox][static_cast<std::size_t>(selected[vox])].v_hat;
}

std::vector<double> VelocityField::values() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = value(i);
  return out;
}

VelocityField estimate_field(const ComplexImage& image, const VencSet& vencs,
                             const FieldOptions& opts) {
  if (num_pairs(image.ne) != static_cast<int>(vencs.size()))
    throw Error(ErrorKind::Validation, "image encodings do not match the venc set");
  if (opts.top_m < 1) throw Error(ErrorKind::Validation, "top_m must be positive");
  VelocityField f;
  f.ny = image.ny;
  f.nx = image.nx;
  f.omega = unambiguous_range(vencs);
  f.offset = opts.offset;
  const std::size_t n = f.size();
  f.candidates.assign(n, {});
  f.selected.assign(n, 0);
  f.magnitude.assign(n, 0.0);
  f.mask.assign(n, 0);

  for (int y = 0; y < image.ny; ++y)
    for (int x = 0; x < image.nx; ++x) {
      double m = 0.0;
      for (int e = 0; e < image.ne; ++e) {
        double ss = 0.0;
        for (int c = 0; c < image.nc; ++c) ss += std::norm(image.data[image.index(e, c, y, x)]);
        m += std::sqrt(ss);
      }
      f.magnitude[static_cast<std::size_t>(y) * image.nx + x] = m / image.ne;
    }
  const double peak = *std::max_element(f.magnitude.begin(), f.magnitude.end());
  for (std::size_t i = 0; i < n; ++i)
    f.mask[i] = peak > 0.0 && f.magnitude[i] >= opts.mask_fraction * peak ? 1 : 0;

  std::optional<PromSolver> fixed;
  if (opts.mode.is_model())
    fixed.emplace(vencs, velocity_cov(model_phase_cov(opts.mode.snr()), vencs), opts.offset);

  const std::size_t tasks = (n + kVoxelsPerTask - 1) / kVoxelsPerTask;
  parallel_for(tasks, resolve_threads(opts.threads), [&](std::size_t t) {
    std::vector<double> v_tilde(vencs.size());
    for (std::size_t i = t * kVoxelsPerTask; i < std::min(n, (t + 1) * kVoxelsPerTask); ++i) {
      if (!f.mask[i]) continue;
      const MeasurementMatrix y = image.voxel(static_cast<int>(i / image.nx),
                                              static_cast<int>(i % image.nx));
      try {
        wrapped_velocities_into(y, vencs, v_tilde);
        std::vector<CandidateSolution> c;
        if (fixed) {
          c = fixed->candidates(v_tilde);
        } else {
          const PromSolver solver(vencs, voxel_velocity_cov(y, vencs, opts.mode), opts.offset);
          c = solver.candidates(v_tilde);
        }
        if (c.size() > static_cast<std::size_t>(opts.top_m)) c.resize(static_cast<std::size_t>(opts.top_m));
        f.candidates[i] = std::move(c);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::MaskedVoxel && e.kind() != ErrorKind::DegenerateCovariance) throw;
        f.mask[i] = 0;
      }
    }
  });
  return f;
}

std::vector<double> loess_quadratic_fit(const VelocityField& field, double span) {
  if (!(span > 0.0 && span <= 1.0)) throw Error(ErrorKind::Validation, "span must lie in (0, 1]");
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < field.size(); ++i)
    if (field.mask[i] && !field.candidates[i].empty()) active.push_back(i);
  std::vector<double> u(field.size(), kNaN);
  const std::size_t n = active.size();
  if (n == 0) return u;
  const auto q = std::min(n, static_cast<std::size_t>(std::ceil(span * static_cast<double>(n))));
  std::vector<double> vals(n);
  for (std::size_t j = 0; j < n; ++j) vals[j] = field.value(active[j]);

  struct Near {
    double d2;
    std::size_t j;
  };
  std::vector<Near> near(n);
  for (std::size_t a = 0; a < n; ++a) {
    const double y0 = static_cast<double>(active[a] / static_cast<std::size_t>(field.nx));
    const double x0 = static_cast<double>(active[a] % static_cast<std::size_t>(field.nx));
    for (std::size_t j = 0; j < n; ++j) {
      const double dy = static_cast<double>(active[j] / static_cast<std::size_t>(field.nx)) - y0;
      const double dx = static_cast<double>(active[j] % static_cast<std::size_t>(field.nx)) - x0;
      near[j] = {dx * dx + dy * dy, j};
    }
    const auto by_dist = [](const Near& l, const Near& r) {
      return l.d2 != r.d2 ? l.d2 < r.d2 : l.j < r.j;
    };
    std::nth_element(near.begin(), near.begin() + static_cast<std::ptrdiff_t>(q - 1), near.end(), by_dist);
    const double dmax = std::sqrt(near[q - 1].d2);
    if (!(dmax > 0.0)) continue;

    Eigen::Matrix<double, 6, 6> normal = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> rhs = Eigen::Matrix<double, 6, 1>::Zero();
    int support = 0;
    for (std::size_t t = 0; t < q; ++t) {
      const double r = std::sqrt(near[t].d2) / dmax;
      if (r >= 1.0) continue;
      const double w = std::pow(1.0 - r * r * r, 3);
      const std::size_t j = near[t].j;
      const double dy = static_cast<double>(active[j] / static_cast<std::size_t>(field.nx)) - y0;
      const double dx = static_cast<double>(active[j] % static_cast<std::size_t>(field.nx)) - x0;
      Eigen::Matrix<double, 6, 1> b;
      b << 1.0, dx, dy, dx * dx, dx * dy, dy * dy;
      normal.noalias() += w * b * b.transpose();
      rhs.noalias() += w * vals[j] * b;
      ++support;
    }
    if (support < 6) continue;
    Eigen::ColPivHouseholderQR<Eigen::Matrix<double, 6, 6>> qr(normal);
    qr.setThreshold(1e-12);
    if (qr.rank() < 6) continue;
    u[active[a]] = qr.solve(rhs)(0);
  }
  return u;
}

double prom_plus_cost(const VelocityField& field, const std::vector<double>& u, double lambda) {
  double total = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (!field.mask[i] || field.candidates[i].empty()) continue;
    const auto& c = field.candidates[i][static_cast<std::size_t>(field.selected[i])];
    total += c.nll;
    if (std::isfinite(u[i])) total += lambda * (c.v_hat - u[i]) * (c.v_hat - u[i]);
  }
  return total;
}

PromPlusResult prom_plus(const VelocityField& field, double span, double lambda, int max_iter,
                         int threads) {
  if (!(lambda >= 0.0)) throw Error(ErrorKind::Validation, "lambda must be nonnegative");
  if (max_iter < 1) throw Error(ErrorKind::Validation, "max_iter must be positive");
  PromPlusResult out;
  out.field = field;
  VelocityField& f = out.field;
  const std::size_t n = f.size();
  const int workers = resolve_threads(threads);
  for (int iter = 1; iter <= max_iter; ++iter) {
    const std::vector<double> u = loess_quadratic_fit(f, span);
    out.cost_after_fit.push_back(prom_plus_cost(f, u, lambda));
    std::vector<std::size_t> changed((n + kVoxelsPerTask - 1) / kVoxelsPerTask, 0);
    parallel_for(changed.size(), workers, [&](std::size_t t) {
      for (std::size_t i = t * kVoxelsPerTask; i < std::min(n, (t + 1) * kVoxelsPerTask); ++i) {
        if (!f.mask[i] || f.candidates[i].empty() || !std::isfinite(u[i])) continue;
        const auto& c = f.candidates[i];
        int best = f.selected[i];
        auto score = [&](int j) {
          const auto& s = c[static_cast<std::size_t>(j)];
          return s.nll + lambda * (s.v_hat - u[i]) * (s.v_hat - u[i]);
        };
        double best_score = score(best);
        for (int j = 0; j < static_cast<int>(c.size()); ++j) {
          const double sj = score(j);
          if (sj < best_score) {
            best = j;
            best_score = sj;
          }
        }
        if (best != f.selected[i]) {
          f.selected[i] = best;
          ++changed[t];
        }
      }
    });
    std::size_t total = 0;
    for (auto c : changed) total += c;
    out.changes.push_back(total);
    out.cost_after_select.push_back(prom_plus_cost(f, u, lambda));
    out.iterations = iter;
    if (total == 0) break;
  }
  return out;
}

}  // namespace promkit
