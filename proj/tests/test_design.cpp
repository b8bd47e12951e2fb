#include <doctest.h>

#include <cmath>
#include <numbers>

#include "promkit/analysis.hpp"
#include "promkit/design.hpp"
#include "promkit/errors.hpp"

using namespace promkit;
using doctest::Approx;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an exception");
  return ErrorKind::Validation;
}

DesignSpec quick_spec() {
  DesignSpec sp;
  std::vector<double> s = {10, 20, 10};
  sp.s = SnrMatrix::per_encoding(s);
  sp.eps_unwrap = sp.eps_alias = 1e-3;
  sp.omega_eps = 300;
  sp.gamma_m_tau = std::numbers::pi / 50;
  return sp;
}

}  // namespace

TEST_CASE("base venc") {
  CHECK(base_venc(7, 5) == std::array<std::int64_t, 3>{35, 10, 14});
  CHECK(base_venc(5, 3) == std::array<std::int64_t, 3>{15, 6, 10});
  CHECK(base_venc(6, 5) == std::array<std::int64_t, 3>{30, 5, 6});
  CHECK(unambiguous_range(VencSet({35, 10, 14})) == Approx(2 * 7 * 5 * 2));
  CHECK(unambiguous_range(VencSet({30, 5, 6})) == Approx(60));
  CHECK(kind_of([] { base_venc(6, 4); }) == ErrorKind::Validation);
  CHECK(kind_of([] { base_venc(4, 2); }) == ErrorKind::Validation);
  CHECK(kind_of([] { base_venc(3, 3); }) == ErrorKind::Validation);
}

TEST_CASE("normal upper quantile") {
  CHECK(std::abs(normal_upper_quantile(0.025) - 1.959963984540054) < 1e-10);
  CHECK(std::abs(normal_upper_quantile(1e-7) - 5.199337582192817) < 1e-10);
  CHECK(std::abs(normal_upper_quantile(0.5)) < 1e-12);
  CHECK(kind_of([] { normal_upper_quantile(0.0); }) == ErrorKind::Validation);
}

TEST_CASE("spec validation and trial budget") {
  auto sp = quick_spec();
  CHECK(sp.trials() == 100000);
  sp.omega_eps = 0;
  CHECK(kind_of([&] { sp.validate(); }) == ErrorKind::Validation);
  sp = quick_spec();
  sp.eps_unwrap = 1e-7;
  CHECK(kind_of([&] { sp.trials(); }) == ErrorKind::TrialBudget);
  sp.trials_override = 1234;
  CHECK(sp.trials() == 1234);
  sp = quick_spec();
  sp.gamma_m_tau = -1;
  CHECK(kind_of([&] { sp.validate(); }) == ErrorKind::Validation);
  sp = quick_spec();
  sp.eps_alias = 1;
  CHECK(kind_of([&] { sp.validate(); }) == ErrorKind::Validation);
}

TEST_CASE("design result satisfies both constraints") {
  auto sp = quick_spec();
  auto r = design_three_point(sp);
  REQUIRE(r.p > 0);
  auto base = base_venc(r.p, r.q);
  for (int i = 0; i < 3; ++i) CHECK(r.venc[i] == Approx(r.c * base[i]).epsilon(1e-12));
  double omega = unambiguous_range(r.venc);
  CHECK(omega == Approx(2.0 * r.p * r.q * (r.p - r.q) * r.c).epsilon(1e-9));
  CHECK(omega - sp.omega_eps >=
        2 * normal_upper_quantile(sp.eps_alias) * r.predicted_rmse - 1e-9);
  CHECK(r.moments.gamma_m1()[2] <= sp.gamma_m_tau + 1e-12);
  CHECK(r.unwrap_error_prob < sp.eps_unwrap);

  // Re-simulate with a fresh seed: the rate stays under the budget within a
  // binomial 95% interval.
  std::uint64_t n = 100000;
  double p = unwrap_error_prob(sp.s, VencSet({double(base[0]), double(base[1]), double(base[2])}),
                               n, 77);
  CHECK(p - 1.96 * std::sqrt(sp.eps_unwrap / n) < sp.eps_unwrap);

  // predicted RMSE scales with c; the error rate does not
  double p_scaled = unwrap_error_prob(sp.s, r.venc, n, 77);
  CHECK(p_scaled == Approx(p).epsilon(1e-12));
  for (const auto& c : r.candidates)
    if (c.status != CandidateStatus::AliasInfeasible)
      CHECK(c.predicted_rmse == Approx(c.c * c.sigma_base).epsilon(1e-12));

  // the winner has the lowest predicted RMSE among passing candidates
  for (const auto& c : r.candidates)
    if (c.status == CandidateStatus::Passed) CHECK(r.predicted_rmse <= c.predicted_rmse);

  SUBCASE("determinism") {
    auto again = design_three_point(sp);
    CHECK(again.p == r.p);
    CHECK(again.q == r.q);
    CHECK(again.c == r.c);
    CHECK(again.unwrap_error_prob == r.unwrap_error_prob);
    sp.threads = 3;
    auto threaded = design_three_point(sp);
    CHECK(threaded.unwrap_error_prob == r.unwrap_error_prob);
  }
}

TEST_CASE("moment cap binds when the other constraints vanish") {
  DesignSpec sp;
  std::vector<double> s = {1e4, 2e4, 1e4};
  sp.s = SnrMatrix::per_encoding(s);
  sp.eps_unwrap = sp.eps_alias = 0.99;
  sp.omega_eps = 1e-9;
  sp.gamma_m_tau = 0.05;
  auto r = design_three_point(sp);
  CHECK(r.c == std::numbers::pi / (2 * sp.gamma_m_tau * r.q * (r.p - r.q)));
  CHECK(r.moments.gamma_m1()[2] == Approx(sp.gamma_m_tau).epsilon(1e-12));
}

TEST_CASE("infeasible design lists every candidate") {
  DesignSpec sp = quick_spec();
  std::vector<double> s = {0.5, 1, 0.5};
  sp.s = SnrMatrix::per_encoding(s);
  sp.P = sp.Q = 4;
  try {
    design_three_point(sp);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InfeasibleDesign);
    CHECK(std::string(e.what()).find("(3,2)") != std::string::npos);
  }
}
