#include "promkit/design.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "promkit/analysis.hpp"
#include "promkit/errors.hpp"
#include "promkit/estimator.hpp"

namespace promkit {

std::array<std::int64_t, 3> base_venc(int p, int q) {
  if (q < 1 || p <= q || p >= 2 * q || std::gcd(p, q) != 1) {
    std::ostringstream os;
    os << "(p, q) = (" << p << ", " << q << ") needs gcd 1 and 1 < p/q < 2";
    throw Error(ErrorKind::Validation, os.str());
  }
  const std::int64_t P = p, Q = q;
  return {P * Q, Q * (P - Q), P * (P - Q)};
}

double normal_upper_quantile(double tail) {
  if (!(tail > 0.0 && tail < 1.0))
    throw Error(ErrorKind::Validation, "tail probability must lie in (0, 1)");
  return boost::math::quantile(boost::math::complement(boost::math::normal_distribution<>(), tail));
}

void DesignSpec::validate() const {
  if (P < 2 || Q < 1) throw Error(ErrorKind::Validation, "P must be >= 2 and Q >= 1");
  if (!(eps_unwrap > 0.0 && eps_unwrap < 1.0) || !(eps_alias > 0.0 && eps_alias < 1.0))
    throw Error(ErrorKind::Validation, "error budgets must lie in (0, 1)");
  if (!(omega_eps > 0.0) || !std::isfinite(omega_eps))
    throw Error(ErrorKind::Validation, "required range must be positive");
  if (!(gamma_m_tau > 0.0) || !std::isfinite(gamma_m_tau))
    throw Error(ErrorKind::Validation, "first-moment cap must be positive");
  if (s.num_encodings() != 3 || s.num_coils() < 1)
    throw Error(ErrorKind::Validation, "design needs a three-encoding SNR matrix");
}

std::uint64_t DesignSpec::trials() const {
  if (trials_override) {
    if (*trials_override == 0) throw Error(ErrorKind::Validation, "trial override must be positive");
    return *trials_override;
  }
  const double n = std::ceil(100.0 / eps_unwrap - 1e-9);
  if (n > static_cast<double>(trial_cap)) {
    std::ostringstream os;
    os << "unwrapping budget needs " << n << " trials, above the cap of " << trial_cap
       << "; set an explicit trial override";
    throw Error(ErrorKind::TrialBudget, os.str());
  }
  return static_cast<std::uint64_t>(n);
}

const char* to_string(CandidateStatus s) {
  switch (s) {
    case CandidateStatus::Passed: return "passed";
    case CandidateStatus::UnwrapErrors: return "unwrap-errors";
    case CandidateStatus::AliasInfeasible: return "alias-infeasible";
    case CandidateStatus::NotEvaluated: return "not-evaluated";
  }
  return "unknown";
}

DesignResult design_three_point(const DesignSpec& spec) {
  spec.validate();
  const std::uint64_t trials = spec.trials();
  // Pass means an observed rate below eps; 100/eps trials gives "fewer
  // than 100 errors".
  const auto stop_at =
      static_cast<std::uint64_t>(std::ceil(spec.eps_unwrap * static_cast<double>(trials) - 1e-9));
  const double z = normal_upper_quantile(spec.eps_alias);

  std::vector<DesignCandidate> cands;
  for (int q = 1; q <= spec.Q; ++q)
    for (int p = q + 1; p <= spec.P && p < 2 * q; ++p) {
      if (std::gcd(p, q) != 1) continue;
      const auto base = base_venc(p, q);
      const VencSet venc({static_cast<double>(base[0]), static_cast<double>(base[1]),
                          static_cast<double>(base[2])});
      const Eigen::MatrixXd sigma_n = velocity_cov(model_phase_cov(spec.s), venc);
      const Eigen::VectorXd w = blue_weights(sigma_n);
      DesignCandidate c;
      c.p = p;
      c.q = q;
      c.sigma_base = std::sqrt(w.dot(sigma_n * w));
      const double omega = 2.0 * p * q * (p - q);
      const double margin = omega - 2.0 * z * c.sigma_base;
      if (margin <= 0.0) {
        c.status = CandidateStatus::AliasInfeasible;
      } else {
        const double cap = std::numbers::pi / (2.0 * spec.gamma_m_tau * q * (p - q));
        c.c = std::max(spec.omega_eps / margin, cap);
        c.predicted_rmse = c.c * c.sigma_base;
      }
      cands.push_back(c);
    }

  std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    const bool fa = a.status != CandidateStatus::AliasInfeasible;
    const bool fb = b.status != CandidateStatus::AliasInfeasible;
    if (fa != fb) return fa;
    if (a.predicted_rmse != b.predicted_rmse) return a.predicted_rmse < b.predicted_rmse;
    return std::make_pair(a.p, a.q) < std::make_pair(b.p, b.q);
  });

  DesignResult result;
  std::uint64_t used = 0;
  for (auto& c : cands) {
    if (c.status == CandidateStatus::AliasInfeasible) continue;
    const auto base = base_venc(c.p, c.q);
    const VencSet venc({static_cast<double>(base[0]), static_cast<double>(base[1]),
                        static_cast<double>(base[2])});
    const ErrorCount count =
        count_unwrap_errors(spec.s, venc, trials, stop_at, spec.seed, spec.threads);
    c.trials = count.trials;
    c.errors = count.errors;
    used += count.trials;
    if (count.errors >= stop_at) {
      c.status = CandidateStatus::UnwrapErrors;
      continue;
    }
    c.status = CandidateStatus::Passed;
    result.p = c.p;
    result.q = c.q;
    result.c = c.c;
    result.venc = VencSet({c.c * base[0], c.c * base[1], c.c * base[2]});
    result.moments = symmetric_moments_from_vencs(result.venc[1], result.venc[2]);
    result.predicted_rmse = c.predicted_rmse;
    result.unwrap_error_prob = count.rate();
    break;
  }
  result.trials_used = used;
  result.candidates = cands;

  if (result.p == 0) {
    std::ostringstream os;
    os << "no (p, q) meets the error budget:";
    for (const auto& c : cands)
      os << " (" << c.p << "," << c.q << ")=" << to_string(c.status);
    throw Error(ErrorKind::InfeasibleDesign, os.str());
  }
  return result;
}

}  // namespace promkit
