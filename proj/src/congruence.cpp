#include "promkit/congruence.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>

#include "promkit/errors.hpp"

namespace promkit {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateEncoding: return "degenerate-encoding";
    case ErrorKind::UnsupportedGeometry: return "unsupported-geometry";
    case ErrorKind::NoFiniteRange: return "no-finite-range";
    case ErrorKind::SingularPair: return "singular-pair";
    case ErrorKind::MaskedVoxel: return "masked-voxel";
    case ErrorKind::DegenerateCovariance: return "degenerate-covariance";
    case ErrorKind::UndefinedSimilarity: return "undefined-similarity";
    case ErrorKind::NonIdentifiable: return "non-identifiable";
    case ErrorKind::InfeasibleDesign: return "infeasible-design";
    case ErrorKind::TrialBudget: return "trial-budget";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

namespace {

using i128 = __int128;

// Anything above this is treated as "no usable rational form".
constexpr std::int64_t kIntegerCap = std::int64_t{1} << 53;

std::optional<RationalForm> rational_form_of(std::span<const double> values) {
  if (values.empty()) return std::nullopt;
  const double ref = values[0];
  if (!(ref > 0.0) || !std::isfinite(ref)) return std::nullopt;

  std::vector<std::int64_t> num(values.size()), den(values.size());
  std::int64_t common = 1;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto [p, q] = rationalize(values[i] / ref);
    if (q == 0) return std::nullopt;
    num[i] = p;
    den[i] = q;
    const i128 l = static_cast<i128>(common) / std::gcd(common, q) * q;
    if (l > kIntegerCap) return std::nullopt;
    common = static_cast<std::int64_t>(l);
  }

  RationalForm form;
  form.integers.resize(values.size());
  std::int64_t g = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const i128 n = static_cast<i128>(num[i]) * (common / den[i]);
    if (n > kIntegerCap || n <= 0) return std::nullopt;
    form.integers[i] = static_cast<std::int64_t>(n);
    g = std::gcd(g, form.integers[i]);
  }
  for (auto& n : form.integers) n /= g;

  // Least-squares scale so that every value is reproduced, not just the first.
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double n = static_cast<double>(form.integers[i]);
    sxy += values[i] * n;
    sxx += n * n;
  }
  form.scale = sxy / sxx;
  return form;
}

std::optional<double> rational_lcm(const RationalForm& form) {
  i128 l = 1;
  for (auto n : form.integers) {
    l = l / std::gcd(static_cast<std::int64_t>(l), n) * n;
    if (l > kIntegerCap) return std::nullopt;
  }
  return form.scale * static_cast<double>(l);
}

}  // namespace

std::vector<EncodingPair> canonical_pairs(int num_encodings) {
  std::vector<EncodingPair> pairs;
  pairs.reserve(static_cast<std::size_t>(num_pairs(num_encodings)));
  for (int a = 1; a < num_encodings; ++a)
    for (int b = 0; b < a; ++b) pairs.push_back({a, b});
  return pairs;
}

EncodingScheme::EncodingScheme(std::vector<double> gamma_m1)
    : gamma_m1_(std::move(gamma_m1)) {
  if (gamma_m1_.size() < 2)
    throw Error(ErrorKind::DegenerateEncoding, "at least two encodings are required");
  for (double m : gamma_m1_)
    if (!std::isfinite(m))
      throw Error(ErrorKind::DegenerateEncoding, "non-finite first moment");
  for (std::size_t a = 0; a < gamma_m1_.size(); ++a)
    for (std::size_t b = 0; b < a; ++b)
      if (gamma_m1_[a] == gamma_m1_[b]) {
        std::ostringstream os;
        os << "encodings " << b + 1 << " and " << a + 1 << " share first moment "
           << gamma_m1_[a];
        throw Error(ErrorKind::DegenerateEncoding, os.str());
      }
}

bool EncodingScheme::is_ordered() const {
  return std::is_sorted(gamma_m1_.begin(), gamma_m1_.end(),
                        [](double a, double b) { return a <= b; });
}

VencSet::VencSet(std::vector<double> venc) : venc_(std::move(venc)) {
  const int d = static_cast<int>(venc_.size());
  int ne = 2;
  while (num_pairs(ne) < d) ++ne;
  if (d == 0 || num_pairs(ne) != d)
    throw Error(ErrorKind::Validation, "venc count is not Ne(Ne-1)/2 for any Ne");
  for (double v : venc_)
    if (!(v > 0.0) || !std::isfinite(v))
      throw Error(ErrorKind::DegenerateEncoding, "venc values must be positive and finite");
  num_encodings_ = ne;
  if (auto form = rational_form_of(venc_)) rational_ = std::move(*form);
}

std::pair<std::int64_t, std::int64_t> rationalize(double x, std::int64_t max_den,
                                                  double rel_tol) {
  if (!(x > 0.0) || !std::isfinite(x)) return {0, 0};
  // Convergents h/k of the continued fraction of x.
  i128 h_prev = 1, h = static_cast<i128>(std::floor(x));
  i128 k_prev = 0, k = 1;
  double frac = x - std::floor(x);
  for (int iter = 0; iter < 64; ++iter) {
    const double approx = static_cast<double>(h) / static_cast<double>(k);
    if (std::abs(approx - x) <= rel_tol * x)
      return {static_cast<std::int64_t>(h), static_cast<std::int64_t>(k)};
    if (frac <= 0.0) break;
    const double inv = 1.0 / frac;
    const auto a = static_cast<i128>(std::floor(inv));
    frac = inv - std::floor(inv);
    const i128 h_next = a * h + h_prev;
    const i128 k_next = a * k + k_prev;
    if (k_next > max_den) break;
    h_prev = h;
    h = h_next;
    k_prev = k;
    k = k_next;
  }
  return {0, 0};
}

VencSet vencs_from_moments(const EncodingScheme& scheme) {
  const auto& m = scheme.gamma_m1();
  std::vector<double> venc;
  for (auto [a, b] : canonical_pairs(scheme.num_encodings())) {
    const double diff = m[static_cast<std::size_t>(a)] - m[static_cast<std::size_t>(b)];
    if (diff == 0.0) throw Error(ErrorKind::DegenerateEncoding, "repeated first moment");
    // venc is a magnitude; an unordered scheme still yields positive values.
    venc.push_back(std::numbers::pi / std::abs(diff));
  }
  return VencSet(std::move(venc));
}

EncodingScheme symmetric_moments_from_vencs(double venc31, double venc32) {
  if (!(venc31 > 0.0) || !(venc32 > venc31) || !(venc32 < 2.0 * venc31)) {
    std::ostringstream os;
    os << "venc32/venc31 = " << venc32 / venc31 << " is outside (1, 2)";
    throw Error(ErrorKind::UnsupportedGeometry, os.str());
  }
  const double pi = std::numbers::pi;
  const double m11 = -pi / (2.0 * venc31);
  const double m12 = pi / (2.0 * venc31) - pi / venc32;
  return EncodingScheme({m11, m12, -m11});
}

double unambiguous_range(const VencSet& vencs) {
  if (!vencs.has_rational_form())
    throw Error(ErrorKind::NoFiniteRange,
                "venc ratios are not rational within tolerance; no finite range");
  auto l = rational_lcm(vencs.rational_form());
  if (!l) throw Error(ErrorKind::NoFiniteRange, "venc LCM overflows");
  return 2.0 * *l;
}

double moment_period_range(const EncodingScheme& scheme) {
  std::vector<double> periods;
  for (double m : scheme.gamma_m1())
    if (m != 0.0) periods.push_back(2.0 * std::numbers::pi / std::abs(m));
  auto form = rational_form_of(periods);
  if (!form) throw Error(ErrorKind::NoFiniteRange, "moment periods are incommensurable");
  auto l = rational_lcm(*form);
  if (!l) throw Error(ErrorKind::NoFiniteRange, "moment period LCM overflows");
  return *l;
}

double wrapped_displacement(double x, double y, double z) {
  const double diff = x - y;
  return diff - std::nearbyint(diff / z) * z;
}

void wrapped_displacement(std::span<const double> x, double y,
                          std::span<const double> z, std::span<double> out) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = wrapped_displacement(x[i], y, z[i]);
}

std::vector<double> wrapped_displacement(std::span<const double> x,
                                         std::span<const double> y,
                                         std::span<const double> z) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double yi = y.size() == 1 ? y[0] : y[i];
    out[i] = wrapped_displacement(x[i], yi, z[i]);
  }
  return out;
}

double wrap_to_range(double v, double period, double offset) {
  double r = std::fmod(v - offset, period);
  if (r < 0.0) r += period;
  if (r >= period) r -= period;
  return offset + r;
}

WrappedVelocities WrappedVelocities::from_phases(std::span<const double> theta,
                                                 const VencSet& vencs) {
  WrappedVelocities out{std::vector<double>(theta.size()), vencs};
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double t = wrap_to_range(theta[i], two_pi);
    double v = t / std::numbers::pi * vencs[i];
    if (v >= 2.0 * vencs[i]) v = 0.0;
    out.v_tilde[i] = v;
  }
  return out;
}

WrappedVelocities WrappedVelocities::from_velocity(double v, std::span<const double> noise,
                                                   const VencSet& vencs) {
  WrappedVelocities out{std::vector<double>(vencs.size()), vencs};
  for (std::size_t i = 0; i < vencs.size(); ++i) {
    const double n = noise.empty() ? 0.0 : noise[i];
    out.v_tilde[i] = wrap_to_range(v + n, 2.0 * vencs[i]);
  }
  return out;
}

std::vector<double> WrappedVelocities::phases() const {
  std::vector<double> theta(v_tilde.size());
  for (std::size_t i = 0; i < v_tilde.size(); ++i)
    theta[i] = v_tilde[i] * std::numbers::pi / vencs[i];
  return theta;
}

}  // namespace promkit
