#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "disteval/report.hpp"
#include "disteval/serialization.hpp"

namespace disteval {

/// Outcome of one property. `observed` is compared against `limit`; for
/// inequality checks it is the worst excess lhs - rhs over all samples.
struct CheckResult {
  std::string name;
  bool pass = false;
  double observed = 0.0;
  double limit = 0.0;
  std::string detail;
};

struct NamedMDP {
  std::string name;
  MDPFile file;
};

/// Every gallery file, by name. A malformed file raises SpecError naming it.
std::vector<NamedMDP> load_full_gallery();

// Individual properties, shared by `verify` and the acceptance tests. Sizes
// and slacks are arguments so both can run them at their own scale.
namespace checks {

/// W1 and W2 under factor gamma, Cramér under sqrt(gamma), and the projected
/// operator under sqrt(gamma) in Cramér, on random model pairs.
std::vector<CheckResult> contraction(const NamedMDP& mdp, int pairs, double slack, std::uint64_t seed);

/// cramer^2 <= w1 <= cramer / sqrt(1 - gamma) and
/// wp <= (1 - gamma)^(-(1 - 1/p)) w1^(1/p) on random pairs.
std::vector<CheckResult> metric_inequalities(int pairs, double slack, std::uint64_t seed);

/// Non-expansiveness in Cramér and W1, idempotence, mass and mean.
std::vector<CheckResult> projection(int pairs, double slack, std::uint64_t seed);

/// Sup Cramér gap between dcfp_solve and categorical DP iterated to
/// tol / 10.
CheckResult dcfp_vs_dp(const NamedMDP& mdp, int K, double tol);

/// Means of the categorical fixed point against (I - gamma P) V = r.
CheckResult mean_consistency(const NamedMDP& mdp, int K, double tol);

/// The return distributions used by the approximation and second-order
/// checks, with a Cramér certificate on their distance to the truth.
struct CertifiedReturns {
  ReturnModel model;
  double certificate;
};
CertifiedReturns certified_returns(const NamedMDP& mdp, std::size_t particle_budget = 2048);

/// l2(truth, dcfp at K) <= 1 / (sqrt(K) (1 - gamma)) with the reference
/// certificate added to the measured distance. One result per K.
std::vector<CheckResult> approximation_bound(const NamedMDP& mdp, const CertifiedReturns& truth,
                                             const std::vector<int>& Ks);

/// Smallest ratio bound / (measured - certificate) over the given K values;
/// infinity when no measured distance exceeds the certificate.
double approximation_ratio(const NamedMDP& mdp, const CertifiedReturns& truth, const std::vector<int>& Ks);

/// Sigma against the truncated Neumann series and against 1 / (1 - gamma).
std::vector<CheckResult> second_order(const NamedMDP& mdp, const ReturnModel& returns, double tol);

/// Equal-weight mixture of n empirical operator draws per state, each state
/// within the DKW band at `level` of the exact operator.
CheckResult unbiasedness(const NamedMDP& mdp, long samples, double level, std::uint64_t seed);

/// Stationarity residual and minimality of the mixing time.
std::vector<CheckResult> chain(const NamedMDP& mdp, double tol);

/// Violation rates for every shipped martingale spec at both deltas, the
/// burst tightness ratio, and path-wise W_k / increment invariants.
std::vector<CheckResult> freedman(long trials, std::uint64_t seed, int workers);

/// freedman_bound monotone in W and b, in H wherever W_k is at least the
/// variance floor, and antitone in delta, over a grid.
CheckResult freedman_monotone(double slack);

}  // namespace checks

struct VerifyOptions {
  /// Multiplies every numerical slack and agreement tolerance; values below
  /// one tighten the suite.
  double tolerance_scale = 1.0;
  int workers = 1;
  std::uint64_t seed = 12345;
};

/// The full property suite. Throws SpecError when a gallery file is broken.
std::vector<CheckResult> run_verify(const VerifyOptions& options);

Table verify_table(const std::vector<CheckResult>& results);

}  // namespace disteval
