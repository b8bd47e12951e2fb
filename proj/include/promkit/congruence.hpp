#pragma once

// Venc and unambiguous-range arithmetic for multi-point phase encodings.
//
// Pairwise quantities are always laid out in the canonical order
// (21, 31, 32, 41, 42, 43, ...): pair (a, b) with a > b, a outer.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace promkit {

/// One phase-difference pair, zero-based: `minuend` > `subtrahend`.
struct EncodingPair {
  int minuend;
  int subtrahend;
};

/// Canonical pair list for `num_encodings` encodings.
std::vector<EncodingPair> canonical_pairs(int num_encodings);

inline int num_pairs(int num_encodings) {
  return num_encodings * (num_encodings - 1) / 2;
}

/// First-moment products gamma*m1 (s/cm), one per encoding.
class EncodingScheme {
 public:
  EncodingScheme() = default;
  /// Throws DegenerateEncoding for fewer than two encodings or repeated
  /// moments.
  explicit EncodingScheme(std::vector<double> gamma_m1);

  const std::vector<double>& gamma_m1() const { return gamma_m1_; }
  int num_encodings() const { return static_cast<int>(gamma_m1_.size()); }

  /// True when moments are strictly increasing (the symmetric three-point
  /// convention m11 < m12 < m13).
  bool is_ordered() const;

 private:
  std::vector<double> gamma_m1_;
};

/// venc = scale * integers, integers coprime as a set.
struct RationalForm {
  double scale = 0.0;
  std::vector<std::int64_t> integers;
};

class VencSet {
 public:
  VencSet() = default;
  /// Builds from venc values (cm/s, canonical order). Rationalizes the
  /// ratios; an irrational set keeps an empty rational form and
  /// unambiguous_range() then throws NoFiniteRange.
  explicit VencSet(std::vector<double> venc);

  const std::vector<double>& values() const { return venc_; }
  double operator[](std::size_t i) const { return venc_[i]; }
  std::size_t size() const { return venc_.size(); }
  int num_encodings() const { return num_encodings_; }

  bool has_rational_form() const { return !rational_.integers.empty(); }
  const RationalForm& rational_form() const { return rational_; }

 private:
  std::vector<double> venc_;
  int num_encodings_ = 0;
  RationalForm rational_;
};

/// Continued-fraction approximation p/q of x with q <= max_den and
/// |p/q - x| <= rel_tol * |x|. Returns {0, 0} when none exists.
std::pair<std::int64_t, std::int64_t> rationalize(double x,
                                                  std::int64_t max_den = 1'000'000,
                                                  double rel_tol = 1e-9);

VencSet vencs_from_moments(const EncodingScheme& scheme);

/// Symmetric three-point moments (m11 = -m13) for a requested venc31 and
/// venc32. Requires venc31 < venc32 < 2 venc31.
EncodingScheme symmetric_moments_from_vencs(double venc31, double venc32);

/// Least common multiple of 2*venc, computed on the rational form.
double unambiguous_range(const VencSet& vencs);

/// LCM of 2*pi/|gamma m1| over the nonzero moments. Throws NoFiniteRange
/// when the periods are not commensurable.
double moment_period_range(const EncodingScheme& scheme);

/// d_z(x, y) = x - y - round((x - y) / z) * z, rounding half to even.
double wrapped_displacement(double x, double y, double z);
void wrapped_displacement(std::span<const double> x, double y,
                          std::span<const double> z, std::span<double> out);
std::vector<double> wrapped_displacement(std::span<const double> x,
                                         std::span<const double> y,
                                         std::span<const double> z);

/// Representative of v modulo period in [offset, offset + period).
double wrap_to_range(double v, double period, double offset = 0.0);

/// Pairwise wrapped velocities, each in [0, 2 venc_ab).
struct WrappedVelocities {
  std::vector<double> v_tilde;
  VencSet vencs;

  /// Maps phases in any interval to [0, 2 pi) and scales by venc / pi.
  static WrappedVelocities from_phases(std::span<const double> theta,
                                       const VencSet& vencs);
  /// Noiseless or noisy remainders <v + n>_{2 venc}.
  static WrappedVelocities from_velocity(double v, std::span<const double> noise,
                                         const VencSet& vencs);

  std::vector<double> phases() const;
};

}  // namespace promkit
