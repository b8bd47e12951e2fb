#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "promkit/analysis.hpp"
#include "promkit/congruence.hpp"
#include "promkit/errors.hpp"
#include "promkit/estimator.hpp"

using namespace promkit;
using doctest::Approx;

namespace {

SnrMatrix fig_snr(double s21, int coils = 1) {
  std::vector<double> s = {s21 / 2, s21, s21 / 2};
  return SnrMatrix::per_encoding(s, coils);
}

EncodingScheme scheme_for(double v31, double v32) { return symmetric_moments_from_vencs(v31, v32); }

}  // namespace

TEST_CASE("tube labels are invariant to a common noise shift") {
  VencSet v({99, 18, 22});
  PromSolver solver(v, velocity_cov(model_phase_cov(fig_snr(5)), v), -198);
  Eigen::LLT<Eigen::MatrixXd> llt(solver.sigma_n());
  Eigen::MatrixXd l = llt.matrixL();
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> eta(-400, 400);
  int agree = 0, nonzero = 0;
  for (int i = 0; i < 1000; ++i) {
    Eigen::Vector3d z(g(rng), g(rng), g(rng));
    Eigen::Vector3d n = 4.0 * (l * z);
    double e = eta(rng);
    std::vector<double> a(n.data(), n.data() + 3), b(3);
    for (int j = 0; j < 3; ++j) b[j] = a[j] + e;
    auto xa = tube_label(a, 10.0, solver), xb = tube_label(b, 10.0, solver);
    if (xa == xb) ++agree;
    if (xa != std::vector<int>{0, 0, 0}) ++nonzero;
  }
  CHECK(agree == 1000);
  CHECK(nonzero > 0);
}

TEST_CASE("mixture components") {
  EncodingScheme scheme = scheme_for(18, 22);
  const double omega = 396;
  DistributionOptions opts;
  opts.seed = 5;
  auto comps = estimate_distribution(0.0, fig_snr(5), scheme, 100000, 1000, opts);
  REQUIRE(comps.size() > 1);
  double total = 0;
  for (const auto& c : comps) {
    total += c.weight;
    CHECK(c.variance == Approx(comps.front().variance));
    CHECK(c.center >= -omega / 2);
    CHECK(c.center < omega / 2);
    CHECK(c.weight == Approx(c.count / 1e5));
  }
  CHECK(total == Approx(1).epsilon(1e-12));
  CHECK(comps.front().x == std::vector<int>{0, 0, 0});
  CHECK(comps.front().center == Approx(0).scale(1));

  SUBCASE("weights do not depend on the true velocity") {
    auto other = estimate_distribution(omega / 3, fig_snr(5), scheme, 100000, 1000, opts);
    std::map<std::vector<int>, double> w;
    for (const auto& c : other) w[c.x] = c.weight;
    for (const auto& c : comps) {
      double p = c.weight, q = w.count(c.x) ? w[c.x] : 0.0;
      double sd = std::sqrt(std::max(p, 1e-5) / 1e5);
      CHECK(std::abs(p - q) <= 5 * sd);
    }
  }
}

TEST_CASE("infinite SNR gives a single component at the truth") {
  auto comps = estimate_distribution(37.5, fig_snr(500), scheme_for(18, 22), 20000, 5);
  REQUIRE(comps.size() == 1);
  CHECK(comps[0].weight == 1.0);
  CHECK(comps[0].center == Approx(37.5).epsilon(1e-6));
}

TEST_CASE("unwrap error probability") {
  VencSet v({15, 6, 10});
  std::vector<double> big = {1e4, 2e4, 1e4};
  CHECK(unwrap_error_prob(SnrMatrix::per_encoding(big), v, 10000) == 0.0);
  std::vector<double> s = {10, 20, 10};
  double p = unwrap_error_prob(SnrMatrix::per_encoding(s), v, 100000, 3);
  CHECK(p < 1e-3);

  std::vector<double> low = {2, 4, 2};
  auto snr = SnrMatrix::per_encoding(low);
  double a = unwrap_error_prob(snr, v, 50000, 9);
  double b = unwrap_error_prob(snr, VencSet({15 * 3.3, 6 * 3.3, 10 * 3.3}), 50000, 9);
  CHECK(a > 0.0);
  CHECK(a == Approx(b).epsilon(1e-12));

  SUBCASE("early stop and thread independence") {
    auto one = count_unwrap_errors(snr, v, 1 << 20, 50, 9, 1);
    auto many = count_unwrap_errors(snr, v, 1 << 20, 50, 9, 4);
    CHECK(one.stopped_early);
    CHECK(one.errors >= 50);
    CHECK(one.trials == many.trials);
    CHECK(one.errors == many.errors);
  }
}

TEST_CASE("Cramer-Rao bound") {
  EncodingScheme scheme = scheme_for(6, 10);
  std::vector<double> a = {5, 10, 5};
  Eigen::VectorXcd s1 = Eigen::VectorXcd::Ones(1);
  double b1 = crlb_velocity(3.0, 0.2, a, s1, 1.0, scheme);
  double b2 = crlb_velocity(3.0, 0.2, a, s1, 2.0, scheme);
  CHECK(b2 == Approx(4 * b1).epsilon(1e-10));
  CHECK(b1 > 0);

  Eigen::VectorXcd s2(2);
  s2 << std::complex<double>(1, 0), std::polar(0.7, 0.9);
  CrlbModel m(3.0, 0.2, a, s2, 1.5, scheme);
  auto ja = m.jacobian();
  auto jn = m.numeric_jacobian(1e-6);
  CHECK((ja - jn).norm() <= 1e-5 * ja.norm());
  CrlbModel m1(3.0, 0.2, a, s1, 1.5, scheme);
  CHECK((m1.jacobian() - m1.numeric_jacobian(1e-6)).norm() <= 1e-5 * m1.jacobian().norm());

  // two coils with the same total SNR tighten the bound
  Eigen::VectorXcd s3(2);
  s3 << 1, 1;
  CHECK(crlb_velocity(3.0, 0.2, a, s3, 1.0, scheme) < b1);

  std::vector<double> zero = {0, 0, 0};
  CHECK_THROWS_AS(crlb_velocity(3.0, 0.2, zero, s1, 1.0, scheme), Error);
}
