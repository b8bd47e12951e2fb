#pragma once

// Optimal symmetric three-point encoding: search over rational venc ratios
// p/q, check the unwrapping-error budget by simulation, then scale for the
// aliasing margin and the first-moment cap.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "promkit/congruence.hpp"
#include "promkit/covariance.hpp"

namespace promkit {

/// [pq, q(p-q), p(p-q)] in canonical order. Requires gcd(p, q) = 1 and
/// 1 < p/q < 2.
std::array<std::int64_t, 3> base_venc(int p, int q);

/// Phi^-1(1 - tail) for the standard normal.
double normal_upper_quantile(double tail);

struct DesignSpec {
  int P = 10;
  int Q = 10;
  SnrMatrix s;
  double eps_unwrap = 1e-6;  // bound on unwrapping-error probability
  double eps_alias = 1e-6;   // bound on aliasing probability
  double omega_eps = 0.0;    // required reliable range, cm/s
  double gamma_m_tau = 0.0;  // cap on gamma m13, s/cm
  std::optional<std::uint64_t> trials_override;
  std::uint64_t trial_cap = 100'000'000;
  std::uint64_t seed = 1;
  int threads = 0;

  void validate() const;
  /// 100 / eps_unwrap, or the override. Throws TrialBudget above the cap
  /// without an override.
  std::uint64_t trials() const;
};

enum class CandidateStatus { Passed, UnwrapErrors, AliasInfeasible, NotEvaluated };
const char* to_string(CandidateStatus s);

struct DesignCandidate {
  int p = 0, q = 0;
  double sigma_base = 0.0;  // predicted RMSE at c = 1
  double c = 0.0;
  double predicted_rmse = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t errors = 0;
  CandidateStatus status = CandidateStatus::NotEvaluated;
};

struct DesignResult {
  int p = 0, q = 0;
  double c = 0.0;
  VencSet venc;
  EncodingScheme moments;
  double predicted_rmse = 0.0;
  double unwrap_error_prob = 0.0;
  std::uint64_t trials_used = 0;
  std::vector<DesignCandidate> candidates;  // in evaluation order
};

/// Candidates are simulated in ascending order of predicted RMSE, so the
/// first one within the error budget is the optimum. Throws
/// InfeasibleDesign listing every candidate's status when none passes.
DesignResult design_three_point(const DesignSpec& spec);

}  // namespace promkit
