#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>

#include <Eigen/Eigenvalues>

#include "promkit/congruence.hpp"
#include "promkit/covariance.hpp"
#include "promkit/errors.hpp"
#include "promkit/estimator.hpp"
#include "promkit/parallel.hpp"
#include "promkit/simulation.hpp"

using namespace promkit;
using doctest::Approx;

namespace {

constexpr double kPi = 3.14159265358979323846;

double min_eig(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvalues().minCoeff();
}

Eigen::MatrixXd random_symmetric(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  return (a + a.transpose()) / 2;
}

}  // namespace

TEST_CASE("model covariance entries") {
  std::vector<double> s = {2.5, 5, 2.5};
  auto cov = model_phase_cov(SnrMatrix::per_encoding(s)).sigma;
  CHECK(cov(0, 0) == Approx(32.25 / 312.5).epsilon(1e-12));
  CHECK(cov(0, 1) == Approx(0.08).epsilon(1e-12));
  CHECK(cov(0, 2) == Approx(-0.02).epsilon(1e-12));
  // pair 31 and 32 share encoding 3 as minuend
  CHECK(cov(1, 2) == Approx(1.0 / (2 * 2.5 * 2.5)).epsilon(1e-12));
  CHECK(cov(1, 1) == Approx((2.5 * 2.5 * 2 + 1) / (2 * std::pow(2.5 * 2.5, 2))).epsilon(1e-12));
  CHECK((cov - cov.transpose()).norm() == 0.0);
}

TEST_CASE("model covariance with disjoint pairs and coils") {
  // four encodings: pairs 21 and 43 share nothing
  std::vector<double> s = {3, 4, 5, 6};
  auto cov = model_phase_cov(SnrMatrix::per_encoding(s)).sigma;
  REQUIRE(cov.rows() == 6);
  CHECK(cov(0, 5) == 0.0);
  // 31 and 42 disjoint
  CHECK(cov(1, 4) == 0.0);
  // 21 and 42: encoding 2 as subtrahend in 42, minuend in 21
  CHECK(cov(0, 4) == Approx(-1.0 / (2 * 16)).epsilon(1e-12));

  SnrMatrix m;
  m.s.resize(3, 2);
  m.s << 1, 2, 3, 4, 5, 6;
  SnrMatrix swapped;
  swapped.s = m.s.rowwise().reverse();
  CHECK((model_phase_cov(m).sigma - model_phase_cov(swapped).sigma).norm() < 1e-14);
  // shared term: Nc / (2 sum_b s_eb^2) with Nc = 2
  CHECK(model_phase_cov(m).sigma(0, 1) == Approx(2.0 / (2 * (1 + 4))).epsilon(1e-12));
}

TEST_CASE("zero-SNR pair is rejected") {
  std::vector<double> s = {0, 5, 2.5};
  try {
    model_phase_cov(SnrMatrix::per_encoding(s));
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularPair);
  }
}

TEST_CASE("data covariance from noiseless magnitudes") {
  MeasurementMatrix y(3, 1);
  y << std::polar(2.5, 0.3), std::polar(5.0, -1.0), std::polar(2.5, 2.0);
  auto cov = data_phase_cov(y);
  CHECK_FALSE(cov.scale_known);
  Eigen::MatrixXd expect(3, 3);
  double d21 = (6.25 + 25) / (2 * 12.5 * 12.5), d31 = (6.25 + 6.25) / (2 * 6.25 * 6.25);
  expect << d21, 0.08, -0.02, 0.08, d31, 0.08, -0.02, 0.08, d21;
  const Eigen::MatrixXd expect_raw = expect;
  expect = psd_project(expect);
  CHECK((cov.sigma - expect).norm() < 1e-12);

  SUBCASE("duplicated coils") {
    // variances halve; shared-encoding terms carry Nc / (2 sum |y_e|^2) and stay put
    MeasurementMatrix y2(3, 2);
    y2 << y, y;
    Eigen::MatrixXd e2 = expect_raw;
    e2.diagonal() /= 2;
    CHECK((data_phase_cov(y2).sigma - psd_project(e2)).norm() < 1e-12);
  }
  SUBCASE("global rescaling") {
    MeasurementMatrix y3 = y * 4.0;
    CHECK((data_phase_cov(y3).sigma - cov.sigma / 16).norm() < 1e-12);
    VencSet v({35, 10, 14});
    auto w1 = blue_weights(velocity_cov(cov, v));
    auto w3 = blue_weights(velocity_cov(data_phase_cov(y3), v));
    CHECK((w1 - w3).norm() < 1e-10);
  }
  SUBCASE("zero row") {
    MeasurementMatrix z = y;
    z(1, 0) = 0;
    try {
      data_phase_cov(z);
      FAIL("no throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MaskedVoxel);
    }
  }
}

TEST_CASE("data covariance is PSD on random inputs") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (int t = 0; t < 100; ++t) {
    MeasurementMatrix y(3, 2);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) y(i, j) = {g(rng) + 0.1, g(rng)};
    auto s = data_phase_cov(y).sigma;
    CHECK(min_eig(s) >= -1e-12 * s.norm());
  }
}

TEST_CASE("psd projection") {
  Eigen::MatrixXd a(2, 2);
  a << 1, 0, 0, -1;
  Eigen::MatrixXd ea(2, 2);
  ea << 1, 0, 0, 0;
  CHECK((psd_project(a) - ea).norm() < 1e-14);

  Eigen::MatrixXd b(2, 2);
  b << 0, 1, 1, 0;
  CHECK((psd_project(b) - Eigen::MatrixXd::Constant(2, 2, 0.5)).norm() < 1e-14);

  std::mt19937_64 rng(7);
  for (int t = 0; t < 20; ++t) {
    Eigen::MatrixXd m = random_symmetric(rng, 4);
    Eigen::MatrixXd p = psd_project(m);
    CHECK(min_eig(p) >= -1e-12 * p.norm());
    CHECK((p - p.transpose()).norm() < 1e-12);
    CHECK((psd_project(p) - p).norm() <= 1e-12 * (1 + p.norm()));
    double best = (m - p).norm();
    for (int k = 0; k < 100; ++k) {
      Eigen::MatrixXd r = random_symmetric(rng, 4);
      Eigen::MatrixXd q = r * r.transpose();
      CHECK(best <= (m - q).norm() + 1e-12);
    }
    Eigen::MatrixXd fixed = p * 1.0;
    CHECK((psd_project(fixed) - fixed).norm() <= 1e-12 * fixed.norm());
  }
}

TEST_CASE("velocity covariance") {
  VencSet v({35, 10, 14});
  PhaseCovariance id{Eigen::MatrixXd::Identity(3, 3), true};
  Eigen::MatrixXd e = Eigen::Vector3d(35 * 35, 100, 196).asDiagonal();
  CHECK((velocity_cov(id, v) - e / (kPi * kPi)).norm() < 1e-10);

  std::vector<double> s = {2.5, 5, 2.5};
  auto m = model_phase_cov(SnrMatrix::per_encoding(s));
  auto sv = velocity_cov(m, v);
  CHECK(sv(0, 0) == Approx(32.25 / 312.5 * 35 * 35 / (kPi * kPi)).epsilon(1e-12));
  VencSet v2({70, 20, 28});
  CHECK((velocity_cov(m, v2) - 4 * sv).norm() < 1e-10 * sv.norm());
}

TEST_CASE("cosine similarity") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd b(2, 2);
  b << 0, 1, 1, 0;
  CHECK(cosine_similarity(a, a) == Approx(1));
  CHECK(cosine_similarity(a, b) == Approx(0).scale(1));
  try {
    cosine_similarity(a, Eigen::MatrixXd::Zero(2, 2));
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UndefinedSimilarity);
  }
}

TEST_CASE("sample variance of the 21 phase difference matches the model") {
  const double s21 = 5;
  std::vector<double> s = {s21 / 2, s21, s21 / 2};
  SnrMatrix snr = SnrMatrix::per_encoding(s);
  EncodingScheme scheme({-kPi / 20, -3 * kPi / 140, kPi / 20});
  const int n = 100000;
  GaussianStream rng(9, 0, 0);
  MeasurementMatrix y;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(3, 3);
  for (int t = 0; t < n; ++t) {
    synth_from_snr(snr, 0.0, 0.0, scheme, rng, y);
    Eigen::VectorXcd r = conjugate_products(y);
    Eigen::Vector3d th(std::arg(r(0)), std::arg(r(1)), std::arg(r(2)));
    acc += th * th.transpose();
  }
  acc /= n;
  auto model = model_phase_cov(snr).sigma;
  CHECK(acc(0, 0) == Approx(model(0, 0)).epsilon(0.05));
}
