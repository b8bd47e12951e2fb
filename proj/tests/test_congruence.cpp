#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "promkit/congruence.hpp"
#include "promkit/errors.hpp"

using namespace promkit;
using doctest::Approx;

namespace {

constexpr double kPi = 3.14159265358979323846;

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an exception");
  return ErrorKind::Validation;
}

}  // namespace

TEST_CASE("canonical pair order") {
  auto pairs = canonical_pairs(4);
  REQUIRE(pairs.size() == 6);
  const int expect[6][2] = {{1, 0}, {2, 0}, {2, 1}, {3, 0}, {3, 1}, {3, 2}};
  for (int i = 0; i < 6; ++i) {
    CHECK(pairs[i].minuend == expect[i][0]);
    CHECK(pairs[i].subtrahend == expect[i][1]);
  }
}

TEST_CASE("vencs from moments") {
  SUBCASE("35 10 14") {
    auto v = vencs_from_moments(EncodingScheme({-kPi / 20, -3 * kPi / 140, kPi / 20}));
    REQUIRE(v.size() == 3);
    CHECK(v[0] == Approx(35).epsilon(1e-12));
    CHECK(v[1] == Approx(10).epsilon(1e-12));
    CHECK(v[2] == Approx(14).epsilon(1e-12));
  }
  SUBCASE("asymmetric moments") {
    auto v = vencs_from_moments(EncodingScheme({-kPi / 20, kPi / 70, kPi / 20}));
    CHECK(v[0] == Approx(140.0 / 9).epsilon(1e-12));
    CHECK(v[1] == Approx(10).epsilon(1e-12));
    CHECK(v[2] == Approx(28).epsilon(1e-12));
  }
  SUBCASE("two point") {
    auto v = vencs_from_moments(EncodingScheme({0.0, kPi / 10}));
    REQUIRE(v.size() == 1);
    CHECK(v[0] == Approx(10).epsilon(1e-12));
  }
  SUBCASE("repeated moments") {
    CHECK(kind_of([] { EncodingScheme({0.1, 0.1, 0.2}); }) == ErrorKind::DegenerateEncoding);
    CHECK(kind_of([] { EncodingScheme({0.1}); }) == ErrorKind::DegenerateEncoding);
  }
}

TEST_CASE("rational form reconstructs the vencs") {
  VencSet v({52.5, 21, 35});
  REQUIRE(v.has_rational_form());
  const auto& rf = v.rational_form();
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(std::abs(rf.scale * rf.integers[i] - v[i]) <= 1e-12 * v[i]);
  CHECK(std::gcd(std::gcd(rf.integers[0], rf.integers[1]), rf.integers[2]) == 1);
}

TEST_CASE("symmetric moments from vencs") {
  SUBCASE("highest moment") {
    auto s = symmetric_moments_from_vencs(21, 35);
    CHECK(s.gamma_m1()[2] == Approx(kPi / 42).epsilon(1e-12));
    CHECK(s.gamma_m1()[0] == Approx(-kPi / 42).epsilon(1e-12));
  }
  SUBCASE("inverse of the 35 10 14 scheme") {
    auto s = symmetric_moments_from_vencs(10, 14);
    CHECK(s.gamma_m1()[0] == Approx(-kPi / 20).epsilon(1e-12));
    CHECK(s.gamma_m1()[1] == Approx(-3 * kPi / 140).epsilon(1e-12));
    CHECK(s.gamma_m1()[2] == Approx(kPi / 20).epsilon(1e-12));
    CHECK(s.is_ordered());
  }
  SUBCASE("round trip") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(1.01, 1.99);
    for (int i = 0; i < 50; ++i) {
      double v31 = 5 + 50 * u(rng), v32 = v31 * u(rng);
      auto v = vencs_from_moments(symmetric_moments_from_vencs(v31, v32));
      CHECK(v[1] == Approx(v31).epsilon(1e-12));
      CHECK(v[2] == Approx(v32).epsilon(1e-12));
    }
  }
  SUBCASE("degenerate ratios") {
    CHECK(kind_of([] { symmetric_moments_from_vencs(10, 10); }) == ErrorKind::UnsupportedGeometry);
    CHECK(kind_of([] { symmetric_moments_from_vencs(10, 25); }) == ErrorKind::UnsupportedGeometry);
  }
}

TEST_CASE("unambiguous range") {
  CHECK(unambiguous_range(VencSet({35, 10, 14})) == Approx(140).epsilon(1e-12));
  CHECK(unambiguous_range(VencSet({52.5, 21, 35})) == Approx(210).epsilon(1e-12));
  CHECK(unambiguous_range(VencSet({99, 18, 22})) == Approx(396).epsilon(1e-12));
  CHECK(kind_of([] { unambiguous_range(VencSet({30, 10, 10 * (1 + std::sqrt(2.0) * 1e-7)})); }) ==
        ErrorKind::NoFiniteRange);
}

TEST_CASE("range equals 2(p-q) venc21 for coprime p/q") {
  for (int p = 2; p <= 30; ++p)
    for (int q = p / 2 + 1; q < p; ++q) {
      if (std::gcd(p, q) != 1) continue;
      double c = 0.37 + 0.01 * p;
      VencSet v({c * p * q, c * q * (p - q), c * p * (p - q)});
      CHECK(unambiguous_range(v) == Approx(2.0 * (p - q) * v[0]).epsilon(1e-12));
    }
}

TEST_CASE("scale equivariance of vencs and range") {
  EncodingScheme base({-kPi / 20, -3 * kPi / 140, kPi / 20});
  for (double t : {0.5, 2.0, 3.7}) {
    std::vector<double> m = base.gamma_m1();
    for (double& x : m) x /= t;
    auto a = vencs_from_moments(base), b = vencs_from_moments(EncodingScheme(m));
    for (std::size_t i = 0; i < 3; ++i) CHECK(b[i] == Approx(t * a[i]).epsilon(1e-12));
    CHECK(unambiguous_range(b) == Approx(t * unambiguous_range(a)).epsilon(1e-12));
  }
}

TEST_CASE("moment period range is a multiple of the unambiguous range") {
  EncodingScheme s({-kPi / 20, -3 * kPi / 140, kPi / 20});
  double omega = unambiguous_range(vencs_from_moments(s));
  double prime = moment_period_range(s);
  double ratio = prime / omega;
  CHECK(ratio >= 1.0 - 1e-12);
  CHECK(std::abs(ratio - std::round(ratio)) < 1e-9);
}

TEST_CASE("wrapped displacement") {
  CHECK(wrapped_displacement(3, 9, 10) == Approx(4));
  CHECK(wrapped_displacement(18.5, 0.5, 20) == Approx(-2));
  CHECK(wrapped_displacement(7.25, 7.25, 3) == 0.0);
  // half to even
  CHECK(wrapped_displacement(5, 0, 10) == Approx(5));
  CHECK(wrapped_displacement(15, 0, 10) == Approx(-5));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int i = 0; i < 200; ++i) {
    double x = u(rng), y = u(rng), z = 1 + std::abs(u(rng)) / 10;
    double d = wrapped_displacement(x, y, z);
    CHECK(std::abs(d) <= z / 2 + 1e-12);
    int j = static_cast<int>(u(rng) / 10);
    CHECK(wrapped_displacement(x + j * z, y, z) == Approx(d).epsilon(1e-9).scale(z));
    CHECK(wrapped_displacement(x, y - j * z, z) == Approx(d).epsilon(1e-9).scale(z));
  }
}

TEST_CASE("wrap to range") {
  CHECK(wrap_to_range(215, 210, 0) == Approx(5));
  CHECK(wrap_to_range(-5, 210, -105) == Approx(-5));
  CHECK(wrap_to_range(200, 210, -105) == Approx(-10));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1000, 1000);
  for (int i = 0; i < 200; ++i) {
    double v = u(rng), off = u(rng) / 10;
    double r = wrap_to_range(v, 140, off);
    CHECK(r >= off);
    CHECK(r < off + 140);
    double n = (v - r) / 140;
    CHECK(std::abs(n - std::round(n)) < 1e-9);
  }
}

TEST_CASE("wrapped velocities") {
  VencSet v({35, 10, 14});
  std::vector<double> zero(3, 0.0);
  auto w = WrappedVelocities::from_velocity(77, zero, v);
  CHECK(w.v_tilde[0] == Approx(7));
  CHECK(w.v_tilde[1] == Approx(17));
  CHECK(w.v_tilde[2] == Approx(21));
  auto phases = w.phases();
  auto back = WrappedVelocities::from_phases(phases, v);
  for (int i = 0; i < 3; ++i) CHECK(back.v_tilde[i] == Approx(w.v_tilde[i]).epsilon(1e-12));
  std::vector<double> neg = {-kPi / 2, -0.1, -3.0};
  auto wn = WrappedVelocities::from_phases(neg, v);
  for (int i = 0; i < 3; ++i) {
    CHECK(wn.v_tilde[i] >= 0.0);
    CHECK(wn.v_tilde[i] < 2 * v[i]);
  }
}
