#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "disteval/mdp.hpp"
#include "disteval/measures.hpp"

namespace disteval {

class BellmanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One outcome of a single transition from a fixed state: probability of the
/// (reward, next state) pair after summing over actions.
struct Branch {
  double prob;
  double reward;
  int s_next;
};

/// Exact distributional Bellman operator of an (MDP, policy) pair. The branch
/// tree is enumerated once at construction.
class BellmanOperator {
 public:
  BellmanOperator(const TabularMDP& mdp, const Policy& policy);

  int n_states() const { return static_cast<int>(branches_.size()); }
  double gamma() const { return gamma_; }
  std::span<const Branch> branches(int s) const { return branches_[s]; }
  /// Distinct reward values appearing anywhere in the tree, ascending.
  const std::vector<double>& reward_values() const { return rewards_; }

  /// Exact mixture of pushforwards, in particle form.
  ParticleDist apply(const ReturnModel& model, int s) const;
  ReturnModel apply(const ReturnModel& model) const;

  /// Grid projection of the exact operator. Categorical inputs on the same
  /// grid take a direct O(branches * K) path.
  CategoricalDist apply_projected(const ReturnModel& model, int s, const SupportGrid& grid) const;
  ReturnModel apply_projected(const ReturnModel& model, const SupportGrid& grid) const;

  /// Expected squared Cramér distance between one sampled branch and the
  /// exact operator, per state.
  std::vector<double> sigma(const ReturnModel& model) const;

 private:
  std::vector<std::vector<Branch>> branches_;
  std::vector<double> rewards_;
  double gamma_;
};

ReturnModel apply_bellman(const TabularMDP& mdp, const Policy& policy, const ReturnModel& model);

/// (b_{r, gamma})_# model(s_next) for one sampled transition.
ParticleDist apply_empirical(const Transition& t, const ReturnModel& model, double gamma);

ReturnModel apply_projected_bellman(const TabularMDP& mdp, const Policy& policy,
                                    const ReturnModel& model, const SupportGrid& grid);

struct DPOptions {
  MetricSpec metric = MetricSpec::w1();
  double tol = 1e-8;
  int max_iter = 100'000;
  /// When set, iterate the projected operator on this grid.
  std::optional<SupportGrid> grid;
  /// Particle mode only: atoms kept per state after each iteration.
  std::size_t particle_budget = 1024;
};

struct DPResult {
  ReturnModel model;
  int iterations = 0;
  double last_gap = 0.0;
  /// Particle mode: W1 drift introduced by compression, propagated through
  /// the contraction (e <- gamma * e + c_k).
  double compression_error = 0.0;
};

/// Contraction factor used by the stopping rule for a metric: gamma for
/// W1/Wp, sqrt(gamma) for Cramér.
double contraction_factor(MetricSpec metric, double gamma);

/// Iterates until the gap between consecutive iterates is at most
/// tol * (1 - kappa) / kappa, so the distance to the fixed point is at most tol.
/// In particle mode the threshold is raised by twice the W1 cost of the
/// latest compression, since the gap cannot fall below it.
DPResult distributional_dp(const TabularMDP& mdp, const Policy& policy, const ReturnModel& init,
                           const DPOptions& options);

/// delta_0 at every state, in the representation implied by the options.
ReturnModel dp_default_init(int n_states, const DPOptions& options);

struct DCFPResult {
  ReturnModel model;
  double residual = 0.0;
  double clipped_mass = 0.0;
};

/// Categorical fixed point from one sparse linear solve. The projected
/// operator is linear in the stacked probability vectors; its fixed-point
/// equations, with the last one per state traded for the unit-mass
/// constraint, form a nonsingular system of size S * (K + 1). `residual` is
/// the sup-norm residual of the full fixed-point equation.
DCFPResult dcfp_solve(const TabularMDP& mdp, const Policy& policy, const SupportGrid& grid,
                      std::size_t max_dimension = 200'000);

/// sup_s d(model(s), (T model)(s)) under the exact operator. For a model x,
/// d(x, eta) <= residual / (1 - kappa) with eta the true return distributions.
double fixed_point_residual(const TabularMDP& mdp, const Policy& policy, const ReturnModel& model,
                            MetricSpec metric);

std::vector<double> sigma_variation(const TabularMDP& mdp, const Policy& policy, const ReturnModel& model);

/// Solves Sigma = sigma + gamma P Sigma with sigma evaluated at `return_model`.
Vector second_order_sigma(const TabularMDP& mdp, const Policy& policy, const ReturnModel& return_model);

/// As above, with the return distributions computed by particle DP.
Vector second_order_sigma(const TabularMDP& mdp, const Policy& policy);

/// Classical value function from (I - gamma P) V = r.
Vector value_function(const TabularMDP& mdp, const Policy& policy);

}  // namespace disteval
