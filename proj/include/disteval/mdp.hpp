#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "disteval/rng.hpp"

namespace disteval {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an induced chain is reducible, periodic, or mixes too slowly.
class ChainError : public ModelError {
 public:
  using ModelError::ModelError;
};

struct RewardOutcome {
  double value;
  double prob;
};

/// Finite MDP with finitely supported reward laws on [0, 1].
class TabularMDP {
 public:
  /// `transition` is laid out as [s][a][s'] in row-major order; `rewards`
  /// holds one law per (s, a) pair, index s * n_actions + a.
  TabularMDP(int n_states, int n_actions, std::vector<double> transition,
             std::vector<std::vector<RewardOutcome>> rewards, double gamma);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double gamma() const { return gamma_; }

  double transition(int s, int a, int s_next) const {
    return transition_[(static_cast<std::size_t>(s) * n_actions_ + a) * n_states_ + s_next];
  }
  std::span<const double> transition_row(int s, int a) const {
    return {transition_.data() + (static_cast<std::size_t>(s) * n_actions_ + a) * n_states_,
            static_cast<std::size_t>(n_states_)};
  }
  const std::vector<RewardOutcome>& rewards(int s, int a) const {
    return rewards_[static_cast<std::size_t>(s) * n_actions_ + a];
  }
  double mean_reward(int s, int a) const;

  /// Same dynamics under a different discount.
  TabularMDP with_gamma(double gamma) const;

 private:
  int n_states_;
  int n_actions_;
  std::vector<double> transition_;
  std::vector<std::vector<RewardOutcome>> rewards_;
  double gamma_;
};

class Policy {
 public:
  Policy(int n_states, int n_actions, std::vector<double> probs);

  static Policy uniform(int n_states, int n_actions);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double prob(int s, int a) const { return probs_[static_cast<std::size_t>(s) * n_actions_ + a]; }
  std::span<const double> row(int s) const {
    return {probs_.data() + static_cast<std::size_t>(s) * n_actions_, static_cast<std::size_t>(n_actions_)};
  }

 private:
  int n_states_;
  int n_actions_;
  std::vector<double> probs_;
};

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// P^pi(s'|s) = sum_a pi(a|s) P(s'|s,a).
Matrix induced_kernel(const TabularMDP& mdp, const Policy& policy);

/// Expected one-step reward under the policy, per state.
Vector expected_reward(const TabularMDP& mdp, const Policy& policy);

/// Throws ChainError naming the offending property when the chain is not
/// irreducible or not aperiodic.
void check_ergodic(const Matrix& kernel);

/// Left fixed vector of an ergodic kernel, by power iteration to a residual
/// of at most 1e-12.
Vector stationary(const Matrix& kernel);

/// Smallest t >= 1 with max_s TV(P^t(s, .), mu) <= 1/4.
int mixing_time(const Matrix& kernel, const Vector& stationary, int cap = 1'000'000);

double total_variation(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

struct ChainInfo {
  Matrix kernel;
  Vector stationary;
  double mu_min = 0.0;
  int t_mix = 0;

  static ChainInfo analyze(const TabularMDP& mdp, const Policy& policy);
};

struct Transition {
  int s;
  int a;
  double r;
  int s_next;
};

struct GenerativeConfig {
  std::vector<double> mu;
  double mu_min = 0.0;

  explicit GenerativeConfig(std::vector<double> mu);
  static GenerativeConfig uniform(int n_states);
};

/// Inverse-CDF sampler over the policy, reward laws and transitions of one
/// (MDP, policy) pair.
class TransitionSampler {
 public:
  TransitionSampler(const TabularMDP& mdp, const Policy& policy);

  Transition step(Rng& rng, int s) const;
  Transition generative(Rng& rng, const GenerativeConfig& cfg) const;
  int n_states() const { return n_states_; }

 private:
  int n_states_;
  int n_actions_;
  std::vector<double> policy_;
  std::vector<double> transition_;
  std::vector<std::vector<double>> reward_probs_;
  std::vector<std::vector<double>> reward_values_;
};

Transition sample_generative(Rng& rng, const GenerativeConfig& cfg, const TabularMDP& mdp,
                             const Policy& policy);
Transition sample_step(Rng& rng, const TabularMDP& mdp, const Policy& policy, int s);

}  // namespace disteval
