#include "disteval/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace disteval {

namespace {

constexpr double kRowTolerance = 1e-12;

void check_probability_row(std::span<const double> row, const std::string& what) {
  double total = 0.0;
  for (double p : row) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ModelError(what + ": negative or non-finite entry");
    total += p;
  }
  if (std::abs(total - 1.0) > kRowTolerance) {
    throw ModelError(what + ": entries sum to " + std::to_string(total));
  }
}

std::vector<int> bfs_levels(const Matrix& kernel, bool reverse) {
  const auto n = static_cast<int>(kernel.rows());
  std::vector<int> level(n, -1);
  std::queue<int> frontier;
  level[0] = 0;
  frontier.push(0);
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v = 0; v < n; ++v) {
      const double p = reverse ? kernel(v, u) : kernel(u, v);
      if (p > 0.0 && level[v] < 0) {
        level[v] = level[u] + 1;
        frontier.push(v);
      }
    }
  }
  return level;
}

}  // namespace

TabularMDP::TabularMDP(int n_states, int n_actions, std::vector<double> transition,
                       std::vector<std::vector<RewardOutcome>> rewards, double gamma)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      rewards_(std::move(rewards)),
      gamma_(gamma) {
  if (n_states < 1 || n_actions < 1) throw ModelError("TabularMDP: needs at least one state and action");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ModelError("TabularMDP: gamma must lie in (0, 1)");
  const auto pairs = static_cast<std::size_t>(n_states) * n_actions;
  if (transition_.size() != pairs * n_states) throw ModelError("TabularMDP: transition tensor has wrong size");
  if (rewards_.size() != pairs) throw ModelError("TabularMDP: expected one reward law per (s, a)");
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      const auto where = "(s=" + std::to_string(s) + ", a=" + std::to_string(a) + ")";
      check_probability_row(transition_row(s, a), "transition row " + where);
      const auto& law = this->rewards(s, a);
      if (law.empty()) throw ModelError("reward law " + where + " is empty");
      std::vector<double> probs;
      for (const auto& o : law) {
        if (!(o.value >= 0.0 && o.value <= 1.0)) {
          throw ModelError("reward law " + where + ": value " + std::to_string(o.value) + " outside [0, 1]");
        }
        probs.push_back(o.prob);
      }
      check_probability_row(probs, "reward law " + where);
    }
  }
}

double TabularMDP::mean_reward(int s, int a) const {
  double total = 0.0;
  for (const auto& o : rewards(s, a)) total += o.prob * o.value;
  return total;
}

TabularMDP TabularMDP::with_gamma(double gamma) const {
  return TabularMDP(n_states_, n_actions_, transition_, rewards_, gamma);
}

Policy::Policy(int n_states, int n_actions, std::vector<double> probs)
    : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
  if (probs_.size() != static_cast<std::size_t>(n_states) * n_actions) {
    throw ModelError("Policy: expected " + std::to_string(n_states * n_actions) + " entries");
  }
  for (int s = 0; s < n_states; ++s) check_probability_row(row(s), "policy row " + std::to_string(s));
}

Policy Policy::uniform(int n_states, int n_actions) {
  return Policy(n_states, n_actions,
                std::vector<double>(static_cast<std::size_t>(n_states) * n_actions, 1.0 / n_actions));
}

Matrix induced_kernel(const TabularMDP& mdp, const Policy& policy) {
  if (mdp.n_states() != policy.n_states() || mdp.n_actions() != policy.n_actions()) {
    throw ModelError("induced_kernel: policy shape does not match the MDP");
  }
  const int n = mdp.n_states();
  Matrix kernel = Matrix::Zero(n, n);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < mdp.n_actions(); ++a) {
      const double pa = policy.prob(s, a);
      if (pa == 0.0) continue;
      for (int t = 0; t < n; ++t) kernel(s, t) += pa * mdp.transition(s, a, t);
    }
  }
  return kernel;
}

Vector expected_reward(const TabularMDP& mdp, const Policy& policy) {
  Vector r = Vector::Zero(mdp.n_states());
  for (int s = 0; s < mdp.n_states(); ++s) {
    for (int a = 0; a < mdp.n_actions(); ++a) r(s) += policy.prob(s, a) * mdp.mean_reward(s, a);
  }
  return r;
}

void check_ergodic(const Matrix& kernel) {
  const auto n = static_cast<int>(kernel.rows());
  const auto forward = bfs_levels(kernel, false);
  const auto backward = bfs_levels(kernel, true);
  for (int s = 0; s < n; ++s) {
    if (forward[s] < 0 || backward[s] < 0) {
      throw ChainError("chain is reducible: state " + std::to_string(s) +
                       " does not communicate with state 0");
    }
  }
  // Period = gcd over edges u -> v of level(u) + 1 - level(v).
  int period = 0;
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (kernel(u, v) > 0.0) period = std::gcd(period, std::abs(forward[u] + 1 - forward[v]));
    }
  }
  if (period != 1) throw ChainError("chain is periodic with period " + std::to_string(period));
}

Vector stationary(const Matrix& kernel) {
  check_ergodic(kernel);
  const auto n = kernel.rows();
  // Repeated squaring brings every row close to the stationary law; power
  // iteration then polishes the residual.
  Matrix power = kernel;
  for (int i = 0; i < 64; ++i) {
    const double spread = (power.rowwise() - power.row(0)).cwiseAbs().maxCoeff();
    if (spread <= 1e-15) break;
    power = power * power;
  }
  Eigen::RowVectorXd mu = power.colwise().mean();
  mu /= mu.sum();
  for (int it = 0; it < 1'000'000; ++it) {
    Eigen::RowVectorXd next = mu * kernel;
    next /= next.sum();
    const double residual = (next - mu).cwiseAbs().maxCoeff();
    mu = next;
    if (residual <= 1e-12 && (mu * kernel - mu).cwiseAbs().maxCoeff() <= 1e-12) return mu.transpose();
  }
  throw ChainError("stationary: power iteration did not reach residual 1e-12 for a chain of size " +
                   std::to_string(n));
}

double total_variation(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  return 0.5 * (a - b).cwiseAbs().sum();
}

int mixing_time(const Matrix& kernel, const Vector& stationary, int cap) {
  Matrix power = kernel;
  for (int t = 1; t <= cap; ++t) {
    double worst = 0.0;
    for (Eigen::Index s = 0; s < power.rows(); ++s) {
      worst = std::max(worst, total_variation(power.row(s).transpose(), stationary));
    }
    if (worst <= 0.25) return t;
    power = power * kernel;
  }
  throw ChainError("mixing_time: exceeded cap of " + std::to_string(cap) + " steps");
}

ChainInfo ChainInfo::analyze(const TabularMDP& mdp, const Policy& policy) {
  ChainInfo info;
  info.kernel = induced_kernel(mdp, policy);
  info.stationary = disteval::stationary(info.kernel);
  info.mu_min = info.stationary.minCoeff();
  info.t_mix = mixing_time(info.kernel, info.stationary);
  return info;
}

GenerativeConfig::GenerativeConfig(std::vector<double> mu_in) : mu(std::move(mu_in)) {
  check_probability_row(mu, "generative distribution");
  mu_min = *std::min_element(mu.begin(), mu.end());
  if (!(mu_min > 0.0)) throw ModelError("generative distribution must put positive mass on every state");
}

GenerativeConfig GenerativeConfig::uniform(int n_states) {
  return GenerativeConfig(std::vector<double>(static_cast<std::size_t>(n_states), 1.0 / n_states));
}

TransitionSampler::TransitionSampler(const TabularMDP& mdp, const Policy& policy)
    : n_states_(mdp.n_states()), n_actions_(mdp.n_actions()) {
  if (mdp.n_states() != policy.n_states() || mdp.n_actions() != policy.n_actions()) {
    throw ModelError("TransitionSampler: policy shape does not match the MDP");
  }
  for (int s = 0; s < n_states_; ++s) {
    auto row = policy.row(s);
    policy_.insert(policy_.end(), row.begin(), row.end());
    for (int a = 0; a < n_actions_; ++a) {
      auto t = mdp.transition_row(s, a);
      transition_.insert(transition_.end(), t.begin(), t.end());
      std::vector<double> probs;
      std::vector<double> values;
      for (const auto& o : mdp.rewards(s, a)) {
        probs.push_back(o.prob);
        values.push_back(o.value);
      }
      reward_probs_.push_back(std::move(probs));
      reward_values_.push_back(std::move(values));
    }
  }
}

Transition TransitionSampler::step(Rng& rng, int s) const {
  const auto sa = [&](int a) { return static_cast<std::size_t>(s) * n_actions_ + a; };
  const int a = rng.categorical({policy_.data() + static_cast<std::size_t>(s) * n_actions_,
                                 static_cast<std::size_t>(n_actions_)});
  const int ri = rng.categorical(reward_probs_[sa(a)]);
  const int next = rng.categorical({transition_.data() + sa(a) * n_states_, static_cast<std::size_t>(n_states_)});
  return {s, a, reward_values_[sa(a)][ri], next};
}

Transition TransitionSampler::generative(Rng& rng, const GenerativeConfig& cfg) const {
  return step(rng, rng.categorical(cfg.mu));
}

Transition sample_generative(Rng& rng, const GenerativeConfig& cfg, const TabularMDP& mdp,
                             const Policy& policy) {
  return TransitionSampler(mdp, policy).generative(rng, cfg);
}

Transition sample_step(Rng& rng, const TabularMDP& mdp, const Policy& policy, int s) {
  return TransitionSampler(mdp, policy).step(rng, s);
}

}  // namespace disteval
