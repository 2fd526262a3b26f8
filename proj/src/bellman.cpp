#include "disteval/bellman.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>

namespace disteval {

BellmanOperator::BellmanOperator(const TabularMDP& mdp, const Policy& policy) : gamma_(mdp.gamma()) {
  if (mdp.n_states() != policy.n_states() || mdp.n_actions() != policy.n_actions()) {
    throw ModelError("BellmanOperator: policy shape does not match the MDP");
  }
  branches_.resize(mdp.n_states());
  for (int s = 0; s < mdp.n_states(); ++s) {
    std::map<std::pair<int, double>, double> merged;
    for (int a = 0; a < mdp.n_actions(); ++a) {
      const double pa = policy.prob(s, a);
      if (pa == 0.0) continue;
      for (const auto& outcome : mdp.rewards(s, a)) {
        if (outcome.prob == 0.0) continue;
        for (int t = 0; t < mdp.n_states(); ++t) {
          const double pt = mdp.transition(s, a, t);
          if (pt == 0.0) continue;
          merged[{t, outcome.value}] += pa * outcome.prob * pt;
        }
      }
    }
    for (const auto& [key, prob] : merged) {
      branches_[s].push_back({prob, key.second, key.first});
      rewards_.push_back(key.second);
    }
  }
  std::sort(rewards_.begin(), rewards_.end());
  rewards_.erase(std::unique(rewards_.begin(), rewards_.end()), rewards_.end());
}

ParticleDist BellmanOperator::apply(const ReturnModel& model, int s) const {
  if (model.n_states() != branches_.size()) throw BellmanError("BellmanOperator: model has wrong state count");
  std::vector<Atom> atoms;
  double total = 0.0;
  for (const auto& b : branches_[s]) {
    for (const auto& a : atoms_of(model[b.s_next])) {
      atoms.push_back({b.reward + gamma_ * a.x, b.prob * a.w});
      total += b.prob * a.w;
    }
  }
  for (auto& a : atoms) a.w /= total;
  return ParticleDist(std::move(atoms));
}

ReturnModel BellmanOperator::apply(const ReturnModel& model) const {
  std::vector<Distribution> out;
  out.reserve(branches_.size());
  for (int s = 0; s < n_states(); ++s) out.emplace_back(apply(model, s));
  return ReturnModel(std::move(out));
}

CategoricalDist BellmanOperator::apply_projected(const ReturnModel& model, int s,
                                                 const SupportGrid& grid) const {
  if (model.is_categorical() && model.categorical(0).grid() == grid) {
    std::vector<double> probs(grid.size(), 0.0);
    for (const auto& b : branches_[s]) {
      GridShift(grid, b.reward).accumulate(model.categorical(b.s_next).probs(), b.prob, probs);
    }
    double total = 0.0;
    for (double p : probs) total += p;
    for (double& p : probs) p /= total;
    return CategoricalDist(grid, std::move(probs));
  }
  return project_categorical(apply(model, s), grid);
}

ReturnModel BellmanOperator::apply_projected(const ReturnModel& model, const SupportGrid& grid) const {
  if (model.n_states() != branches_.size()) throw BellmanError("BellmanOperator: model has wrong state count");
  std::vector<Distribution> out;
  out.reserve(branches_.size());
  if (model.is_categorical() && model.categorical(0).grid() == grid) {
    std::map<double, GridShift> shifts;
    for (double r : rewards_) shifts.emplace(r, GridShift(grid, r));
    for (int s = 0; s < n_states(); ++s) {
      std::vector<double> probs(grid.size(), 0.0);
      for (const auto& b : branches_[s]) {
        shifts.at(b.reward).accumulate(model.categorical(b.s_next).probs(), b.prob, probs);
      }
      double total = 0.0;
      for (double p : probs) total += p;
      for (double& p : probs) p /= total;
      out.emplace_back(CategoricalDist(grid, std::move(probs)));
    }
    return ReturnModel(std::move(out));
  }
  for (int s = 0; s < n_states(); ++s) out.emplace_back(project_categorical(apply(model, s), grid));
  return ReturnModel(std::move(out));
}

std::vector<double> BellmanOperator::sigma(const ReturnModel& model) const {
  std::vector<double> out(branches_.size(), 0.0);
  for (int s = 0; s < n_states(); ++s) {
    const Distribution exact = apply(model, s);
    for (const auto& b : branches_[s]) {
      const double d = cramer(pushforward(model[b.s_next], b.reward, gamma_), exact);
      out[s] += b.prob * d * d;
    }
  }
  return out;
}

ReturnModel apply_bellman(const TabularMDP& mdp, const Policy& policy, const ReturnModel& model) {
  return BellmanOperator(mdp, policy).apply(model);
}

ParticleDist apply_empirical(const Transition& t, const ReturnModel& model, double gamma) {
  return pushforward(model[t.s_next], t.r, gamma);
}

ReturnModel apply_projected_bellman(const TabularMDP& mdp, const Policy& policy, const ReturnModel& model,
                                    const SupportGrid& grid) {
  return BellmanOperator(mdp, policy).apply_projected(model, grid);
}

double contraction_factor(MetricSpec metric, double gamma) {
  return metric.kind == MetricKind::Cramer ? std::sqrt(gamma) : gamma;
}

ReturnModel dp_default_init(int n_states, const DPOptions& options) {
  if (options.grid) return ReturnModel::constant(n_states, CategoricalDist::dirac(*options.grid, 0));
  return ReturnModel::constant(n_states, ParticleDist::dirac(0.0));
}

DPResult distributional_dp(const TabularMDP& mdp, const Policy& policy, const ReturnModel& init,
                           const DPOptions& options) {
  if (!(options.tol > 0.0)) throw BellmanError("distributional_dp: tol must be positive");
  if (options.grid && options.metric.kind == MetricKind::Wp && options.metric.p != 1.0) {
    throw BellmanError("distributional_dp: projected iteration supports the W1 and Cramér metrics only");
  }
  if (options.grid && !(options.grid->gamma() == mdp.gamma())) {
    throw BellmanError("distributional_dp: grid discount differs from the MDP discount");
  }
  const BellmanOperator op(mdp, policy);
  const double kappa = contraction_factor(options.metric, mdp.gamma());
  const double threshold = options.tol * (1.0 - kappa) / kappa;

  DPResult result{init, 0, 0.0, 0.0};
  ReturnModel current = init;
  for (int it = 0; it < options.max_iter; ++it) {
    ReturnModel next = options.grid ? op.apply_projected(current, *options.grid) : op.apply(current);
    double worst_compression = 0.0;
    if (!options.grid) {
      double& worst = worst_compression;
      std::vector<Distribution> kept;
      kept.reserve(next.n_states());
      for (const auto& d : next.dists()) {
        auto c = compress(std::get<ParticleDist>(d), options.particle_budget);
        worst = std::max(worst, c.w1_bound);
        kept.emplace_back(std::move(c.dist));
      }
      next = ReturnModel(std::move(kept));
      result.compression_error = mdp.gamma() * result.compression_error + worst;
    }
    const double gap = sup_metric(current, next, options.metric).sup;
    current = std::move(next);
    result.iterations = it + 1;
    result.last_gap = gap;
    // Once compression dominates the gap, further iterations only reshuffle
    // atoms; the reported compression error carries the rest.
    if (gap <= threshold + 2.0 * worst_compression) {
      result.model = std::move(current);
      return result;
    }
  }
  throw BellmanError("distributional_dp: no convergence after " + std::to_string(options.max_iter) +
                     " iterations (last gap " + std::to_string(result.last_gap) + ")");
}

double fixed_point_residual(const TabularMDP& mdp, const Policy& policy, const ReturnModel& model,
                            MetricSpec metric) {
  return sup_metric(model, BellmanOperator(mdp, policy).apply(model), metric).sup;
}

std::vector<double> sigma_variation(const TabularMDP& mdp, const Policy& policy, const ReturnModel& model) {
  return BellmanOperator(mdp, policy).sigma(model);
}

Vector second_order_sigma(const TabularMDP& mdp, const Policy& policy, const ReturnModel& return_model) {
  const auto sigma = sigma_variation(mdp, policy, return_model);
  const Matrix kernel = induced_kernel(mdp, policy);
  const auto n = kernel.rows();
  const Matrix system = Matrix::Identity(n, n) - mdp.gamma() * kernel;
  const Vector rhs = Eigen::Map<const Vector>(sigma.data(), n);
  Eigen::PartialPivLU<Matrix> lu(system);
  Vector out = lu.solve(rhs);
  if (!out.allFinite() || (system * out - rhs).cwiseAbs().maxCoeff() > 1e-10) {
    throw BellmanError("second_order_sigma: linear solve failed");
  }
  return out;
}

Vector second_order_sigma(const TabularMDP& mdp, const Policy& policy) {
  DPOptions options;
  options.metric = MetricSpec::w1();
  options.tol = 1e-7;
  options.particle_budget = 2048;
  const auto dp = distributional_dp(mdp, policy, dp_default_init(mdp.n_states(), options), options);
  return second_order_sigma(mdp, policy, dp.model);
}

Vector value_function(const TabularMDP& mdp, const Policy& policy) {
  const Matrix kernel = induced_kernel(mdp, policy);
  const auto n = kernel.rows();
  const Matrix system = Matrix::Identity(n, n) - mdp.gamma() * kernel;
  return system.partialPivLu().solve(expected_reward(mdp, policy));
}

}  // namespace disteval
