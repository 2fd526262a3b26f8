#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "disteval/rng.hpp"

namespace disteval {

enum class GeneratorKind { Zero, IidBounded, StateDependent, VarianceBurst };
enum class Embedding { Euclidean, Cramer };

/// Martingale difference generator. Every kind draws a direction of norm
/// exactly one and scales it by a predictable factor, so E[X_k | past] = 0,
/// ||X_k|| <= b, and the conditional variance is known in closed form.
///
/// Euclidean directions are Rademacher vectors over sqrt(dimension). Cramér
/// directions are (delta_{x_i} - delta_{x_j}) / sqrt(|x_i - x_j|) for a
/// uniformly drawn pair of atoms of a grid with `dimension` + 1 atoms on
/// [0, 1 / (1 - grid_gamma)], with a random sign, under the l2 norm of CDFs.
struct MartingaleSpec {
  std::string name;
  Embedding embedding = Embedding::Euclidean;
  int dimension = 4;
  double grid_gamma = 0.5;
  GeneratorKind kind = GeneratorKind::IidBounded;
  double b = 1.0;
  int n = 100;
  /// VarianceBurst: steps in [burst_begin, burst_end) fire with probability
  /// one, the others with probability quiet_prob.
  int burst_begin = 0;
  int burst_end = 0;
  double quiet_prob = 0.001;

  void validate() const;
  /// Conditional variance of step k (1-based) given ||Y_{k-1}||.
  double step_variance(int k, double prev_norm) const;
  /// Almost-sure upper bound on W_n.
  double variance_cap() const;
};

struct MartingalePath {
  /// Entries 0..n; norm_y[0] = w[0] = 0.
  std::vector<double> norm_y;
  std::vector<double> w;
};

MartingalePath simulate(const MartingaleSpec& spec, Rng& rng);

struct FreedmanParams {
  double delta = 0.05;
  int H = 1;
  double sigma2 = 1.0;
  double b = 1.0;

  void validate() const;
};

/// sqrt(8 max{W_k, sigma^2 / 2^H} log(2H/delta)) + (4/3) b log(2H/delta).
double freedman_bound(double W_k, const FreedmanParams& params);
/// 2 exp(-(eps^2 / 2) / (sigma^2 + b eps / 3)).
double freedman_tail(double eps, double sigma2, double b);
/// sqrt(2 n b^2 log(2/delta)).
double azuma_bound(long n, double b, double delta);
/// sqrt(4 sigma^2 log(2/delta)).
double bernstein_crude_bound(double sigma2, double delta);

/// Smallest H >= 1 with variance_cap / 2^H <= b^2.
int variance_floor_levels(const MartingaleSpec& spec);

/// ceil(2 log2(1 / (1 - gamma))), at least 1.
int default_horizon_levels(double gamma);

struct Interval {
  double lo;
  double hi;
};

/// Wilson score interval; z defaults to the two-sided 95% quantile.
Interval wilson_interval(long successes, long trials, double z = 1.959963984540054);

struct ViolationResult {
  double rate = 0.0;
  Interval ci{0.0, 0.0};
  long violations = 0;
  long trials = 0;
};

/// True when some k in 1..n has ||Y_k|| > freedman_bound(W_k).
bool violates(const MartingalePath& path, const FreedmanParams& params);

/// Trial i uses Rng(master_seed, i). Needs at least 1000 trials.
ViolationResult violation_rate(const MartingaleSpec& spec, const FreedmanParams& params, long trials,
                               std::uint64_t master_seed, int workers = 1);

/// Several failure levels evaluated on the same simulated paths.
std::vector<ViolationResult> violation_rates(const MartingaleSpec& spec, const std::vector<FreedmanParams>& params,
                                             long trials, std::uint64_t master_seed, int workers = 1);

/// The specs validated by the acceptance suite.
std::vector<MartingaleSpec> shipped_martingale_specs();

}  // namespace disteval
