#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "disteval/bellman.hpp"
#include "disteval/serialization.hpp"

using namespace disteval;

namespace {

TabularMDP zero_reward(int n, double gamma) {
  return TabularMDP(n, 1, std::vector<double>(n * n, 1.0 / n), std::vector<std::vector<RewardOutcome>>(n, {{0.0, 1.0}}),
                    gamma);
}

TabularMDP single_state(double r, double gamma) { return TabularMDP(1, 1, {1.0}, {{{r, 1.0}}}, gamma); }

// Two states, two actions, stochastic rewards: every branch is distinct.
TabularMDP small_random() {
  return TabularMDP(2, 2, {0.6, 0.4, 0.1, 0.9, 0.3, 0.7, 0.8, 0.2},
                    {{{0.0, 0.5}, {1.0, 0.5}}, {{0.2, 1.0}}, {{0.4, 0.3}, {0.9, 0.7}}, {{0.6, 1.0}}}, 0.7);
}

Policy small_policy() { return Policy(2, 2, {0.25, 0.75, 0.5, 0.5}); }

ReturnModel small_model() {
  return ReturnModel({ParticleDist({{0.5, 0.5}, {2.0, 0.5}}), ParticleDist({{1.0, 0.2}, {1.5, 0.8}})});
}

}  // namespace

TEST(ApplyBellman, ZeroRewardFixedPoint) {
  const auto mdp = zero_reward(3, 0.9);
  const auto model = ReturnModel::constant(3, ParticleDist::dirac(0.0));
  const auto out = apply_bellman(mdp, Policy::uniform(3, 1), model);
  EXPECT_EQ(sup_metric(out, model, MetricSpec::w1()).sup, 0.0);
}

TEST(ApplyBellman, SingleStateRewardOne) {
  const auto out = apply_bellman(single_state(1.0, 0.5), Policy::uniform(1, 1),
                                 ReturnModel::constant(1, ParticleDist::dirac(0.0)));
  EXPECT_EQ(w1(out[0], ParticleDist::dirac(1.0)), 0.0);
}

TEST(ApplyBellman, MatchesBranchEnumeration) {
  const auto mdp = small_random();
  const auto pi = small_policy();
  const auto model = small_model();
  const auto out = apply_bellman(mdp, pi, model);
  for (int s = 0; s < 2; ++s) {
    std::vector<Atom> atoms;
    for (int a = 0; a < 2; ++a) {
      for (const auto& o : mdp.rewards(s, a)) {
        for (int t = 0; t < 2; ++t) {
          for (const auto& at : atoms_of(model[t])) {
            atoms.push_back({o.value + mdp.gamma() * at.x, pi.prob(s, a) * o.prob * mdp.transition(s, a, t) * at.w});
          }
        }
      }
    }
    EXPECT_NEAR(w1(out[s], ParticleDist(atoms)), 0.0, 1e-14);
    EXPECT_NEAR(cramer(out[s], ParticleDist(atoms)), 0.0, 1e-7);
  }
}

TEST(ApplyEmpirical, DeterministicMdpEqualsExactOperator) {
  const TabularMDP mdp(2, 1, {0, 1, 1, 0}, {{{0.3, 1.0}}, {{0.8, 1.0}}}, 0.6);
  const auto model = small_model();
  const auto exact = apply_bellman(mdp, Policy::uniform(2, 1), model);
  EXPECT_EQ(w1(apply_empirical({0, 0, 0.3, 1}, model, 0.6), exact[0]), 0.0);
  EXPECT_EQ(w1(apply_empirical({1, 0, 0.8, 0}, model, 0.6), exact[1]), 0.0);
}

TEST(DistributionalDp, ZeroRewardConvergesImmediately) {
  DPOptions options;
  options.tol = 1e-12;
  const auto mdp = zero_reward(3, 0.9);
  const auto r = distributional_dp(mdp, Policy::uniform(3, 1), ReturnModel::constant(3, ParticleDist::dirac(0.0)), options);
  EXPECT_LE(r.iterations, 2);
  EXPECT_EQ(sup_metric(r.model, ReturnModel::constant(3, ParticleDist::dirac(0.0)), MetricSpec::w1()).sup, 0.0);
}

TEST(DistributionalDp, GeometricSeries) {
  DPOptions options;
  options.tol = 1e-10;
  const auto r = distributional_dp(single_state(1.0, 0.5), Policy::uniform(1, 1),
                                   ReturnModel::constant(1, ParticleDist::dirac(0.0)), options);
  EXPECT_LE(w1(r.model[0], ParticleDist::dirac(2.0)), 1e-10);
}

TEST(DistributionalDp, CategoricalAgreesWithLinearSolve) {
  const auto file = load_gallery("chain3");
  const SupportGrid grid(512, file.mdp.gamma());
  DPOptions options;
  options.metric = MetricSpec::cramer();
  options.tol = 1e-11;
  options.grid = grid;
  const auto dp = distributional_dp(file.mdp, file.policy, dp_default_init(3, options), options);
  const auto solved = dcfp_solve(file.mdp, file.policy, grid);
  EXPECT_LE(sup_metric(dp.model, solved.model, MetricSpec::cramer()).sup, 1e-10);
  EXPECT_LE(solved.residual, 1e-10);
}

TEST(Dcfp, ZeroRewardIsPointMassAtZero) {
  const SupportGrid grid(16, 0.9);
  const auto r = dcfp_solve(zero_reward(4, 0.9), Policy::uniform(4, 1), grid);
  for (int s = 0; s < 4; ++s) EXPECT_NEAR(r.model.categorical(s).probs()[0], 1.0, 1e-12);
}

TEST(Dcfp, DeterministicSingleStateMatchesIteratedProjection) {
  const SupportGrid grid(20, 0.8);
  const auto mdp = single_state(0.37, 0.8);
  DPOptions options;
  options.metric = MetricSpec::cramer();
  options.tol = 1e-12;
  options.grid = grid;
  const auto dp = distributional_dp(mdp, Policy::uniform(1, 1), dp_default_init(1, options), options);
  const auto solved = dcfp_solve(mdp, Policy::uniform(1, 1), grid);
  EXPECT_LE(cramer(solved.model[0], dp.model[0]), 1e-11);
}

TEST(Dcfp, RejectsOversizedSystems) {
  const auto file = load_gallery("random10");
  EXPECT_THROW(dcfp_solve(file.mdp, file.policy, SupportGrid(64, file.mdp.gamma()), 100), BellmanError);
}

TEST(Sigma, ZeroForDeterministicDynamics) {
  const TabularMDP mdp(2, 1, {0, 1, 1, 0}, {{{0.3, 1.0}}, {{0.8, 1.0}}}, 0.6);
  for (double v : sigma_variation(mdp, Policy::uniform(2, 1), small_model())) EXPECT_EQ(v, 0.0);
  const auto zero = zero_reward(3, 0.5);
  for (double v : sigma_variation(zero, Policy::uniform(3, 1), ReturnModel::constant(3, ParticleDist::dirac(0.0)))) {
    EXPECT_EQ(v, 0.0);
  }
}

TEST(Sigma, MatchesMonteCarlo) {
  const auto mdp = small_random();
  const auto pi = small_policy();
  const auto model = small_model();
  const auto sigma = sigma_variation(mdp, pi, model);
  const auto exact = apply_bellman(mdp, pi, model);
  const TransitionSampler sampler(mdp, pi);
  Rng rng(2024);
  const long n = 1'000'000;
  for (int s = 0; s < 2; ++s) {
    double sum = 0.0, sum_sq = 0.0;
    for (long i = 0; i < n; ++i) {
      const double d = cramer(apply_empirical(sampler.step(rng, s), model, mdp.gamma()), exact[s]);
      sum += d * d;
      sum_sq += d * d * d * d;
    }
    const double m = sum / n;
    const double se = std::sqrt((sum_sq / n - m * m) / n);
    EXPECT_NEAR(sigma[s], m, 3 * se) << "state " << s;
  }
}

TEST(SecondOrder, ZeroRewardIsZero) {
  const auto zero = zero_reward(3, 0.9);
  const Vector sigma = second_order_sigma(zero, Policy::uniform(3, 1));
  EXPECT_EQ(sigma.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SecondOrder, MatchesNeumannSeries) {
  const auto mdp = small_random();
  const auto pi = small_policy();
  const auto model = small_model();
  const Vector solved = second_order_sigma(mdp, pi, model);
  const auto sigma = sigma_variation(mdp, pi, model);
  const Matrix P = induced_kernel(mdp, pi);
  Vector term(2);
  term << sigma[0], sigma[1];
  Vector series = Vector::Zero(2);
  const double gamma = mdp.gamma();
  for (double tail = term.maxCoeff() / (1 - gamma); tail > 1e-12; tail *= gamma) {
    series += term;
    term = gamma * (P * term);
  }
  EXPECT_LE((solved - series).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ValueFunction, MatchesCategoricalMeans) {
  const auto file = load_gallery("ring5");
  const auto solved = dcfp_solve(file.mdp, file.policy, SupportGrid(64, file.mdp.gamma()));
  const Vector v = value_function(file.mdp, file.policy);
  for (int s = 0; s < file.mdp.n_states(); ++s) EXPECT_NEAR(mean(solved.model[s]), v[s], 1e-8);
}

TEST(FixedPointResidual, ZeroAtTheFixedPoint) {
  const auto mdp = single_state(1.0, 0.5);
  const auto model = ReturnModel::constant(1, ParticleDist::dirac(2.0));
  EXPECT_NEAR(fixed_point_residual(mdp, Policy::uniform(1, 1), model, MetricSpec::cramer()), 0.0, 1e-15);
  const auto off = ReturnModel::constant(1, ParticleDist::dirac(1.0));
  EXPECT_NEAR(fixed_point_residual(mdp, Policy::uniform(1, 1), off, MetricSpec::w1()), 0.5, 1e-15);
}
