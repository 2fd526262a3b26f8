#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "../oracles/oracles.hpp"
#include "disteval/measures.hpp"
#include "disteval/rng.hpp"

using namespace disteval;

namespace {

ParticleDist two_point(double x0, double w0, double x1) { return ParticleDist({{x0, w0}, {x1, 1.0 - w0}}); }

std::vector<Atom> random_atoms(Rng& rng, int n, double upper) {
  std::vector<Atom> atoms;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    atoms.push_back({rng.uniform() * upper, rng.uniform() + 0.05});
    total += atoms.back().w;
  }
  for (auto& a : atoms) a.w /= total;
  return atoms;
}

}  // namespace

TEST(Cdf, IsLeftContinuous) {
  EXPECT_EQ(cdf(ParticleDist::dirac(0.0), 0.0), 0.0);
  EXPECT_EQ(cdf(ParticleDist::dirac(0.0), 0.5), 1.0);
  EXPECT_DOUBLE_EQ(cdf(two_point(0.0, 0.25, 2.0), 1.0), 0.25);
}

TEST(W1, PointMasses) {
  EXPECT_DOUBLE_EQ(w1(ParticleDist::dirac(0.0), ParticleDist::dirac(1.0)), 1.0);
  EXPECT_DOUBLE_EQ(w1(ParticleDist::dirac(0.0), two_point(0.0, 0.5, 1.0)), 0.5);
}

TEST(W1, MatchesFrozenTransportLp) {
  // Optimal value of the 3x3 transportation LP, solved once with an
  // interior-point LP solver and frozen here.
  const std::vector<Atom> a = {{0.1, 0.2}, {0.7, 0.5}, {1.5, 0.3}};
  const std::vector<Atom> b = {{0.3, 0.4}, {1.0, 0.35}, {1.8, 0.25}};
  EXPECT_NEAR(w1(ParticleDist(a), ParticleDist(b)), 0.31000000000000005, 1e-12);
  EXPECT_NEAR(wp(ParticleDist(a), ParticleDist(b), 2.0), 0.31937438845342625, 1e-9);
}

TEST(W1, MatchesCouplingEnumerationOnRandomTriples) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_atoms(rng, 3, 2.0);
    const auto b = random_atoms(rng, 3, 2.0);
    EXPECT_NEAR(w1(ParticleDist(a), ParticleDist(b)), oracle::coupling_cost(a, b, 1.0), 1e-12);
    EXPECT_NEAR(wp(ParticleDist(a), ParticleDist(b), 2.0), std::sqrt(oracle::coupling_cost(a, b, 2.0)), 1e-9);
    EXPECT_NEAR(wp(ParticleDist(a), ParticleDist(b), 3.0), std::cbrt(oracle::coupling_cost(a, b, 3.0)), 1e-9);
  }
}

TEST(Cramer, TrivialCases) {
  const auto d = two_point(0.2, 0.3, 0.9);
  EXPECT_EQ(cramer(d, d), 0.0);
  EXPECT_DOUBLE_EQ(cramer(ParticleDist::dirac(0.0), ParticleDist::dirac(1.0)), 1.0);
}

TEST(Cramer, MatchesDenseGridIntegral) {
  Rng rng(11);
  const SupportGrid grid(16, 0.5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> p(grid.size()), q(grid.size());
    double tp = 0.0, tq = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      p[k] = rng.uniform();
      q[k] = rng.uniform();
      tp += p[k];
      tq += q[k];
    }
    std::vector<Atom> a, b;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      p[k] /= tp;
      q[k] /= tq;
      a.push_back({grid.atom(static_cast<int>(k)), p[k]});
      b.push_back({grid.atom(static_cast<int>(k)), q[k]});
    }
    const CategoricalDist ca(grid, p), cb(grid, q);
    // Cell edges land on the grid atoms, so the midpoint rule is exact for
    // the step functions up to rounding.
    const double dense = oracle::dense_cramer(a, b, 0.0, grid.upper(), 16 * 4000);
    EXPECT_NEAR(cramer(ca, cb), dense, 1e-8);
    EXPECT_NEAR(cramer(ParticleDist(a), ParticleDist(b)), dense, 1e-8);
  }
}

TEST(Wp, Trivial) {
  EXPECT_DOUBLE_EQ(wp(ParticleDist::dirac(0.0), ParticleDist::dirac(1.0), 2.0), 1.0);
  const auto d = two_point(0.1, 0.6, 0.4);
  EXPECT_EQ(wp(d, d, 3.0), 0.0);
}

TEST(Kolmogorov, SupOfCdfGap) {
  EXPECT_DOUBLE_EQ(kolmogorov(ParticleDist::dirac(0.0), two_point(0.0, 0.3, 1.0)), 0.7);
}

TEST(SupMetric, PerStateAndSupremum) {
  const ReturnModel a({ParticleDist::dirac(0.0), ParticleDist::dirac(1.0), two_point(0.0, 0.5, 2.0)});
  const ReturnModel b({ParticleDist::dirac(0.0), ParticleDist::dirac(1.5), two_point(0.0, 0.5, 1.0)});
  const auto same = sup_metric(a, a, MetricSpec::w1());
  EXPECT_EQ(same.sup, 0.0);
  for (double v : same.per_state) EXPECT_EQ(v, 0.0);
  const auto r = sup_metric(a, b, MetricSpec::cramer());
  ASSERT_EQ(r.per_state.size(), 3u);
  for (std::size_t s = 0; s < 3; ++s) EXPECT_DOUBLE_EQ(r.per_state[s], cramer(a[s], b[s]));
  EXPECT_DOUBLE_EQ(r.sup, std::max({r.per_state[0], r.per_state[1], r.per_state[2]}));
}

TEST(Pushforward, AffineMapOfAtoms) {
  const auto d = pushforward(ParticleDist::dirac(2.0), 0.5, 0.5);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_DOUBLE_EQ(d.atoms()[0].x, 1.5);
  const double gamma = 0.8;
  const auto two = pushforward(two_point(0.0, 0.5, 1.0 / (1.0 - gamma)), 1.0, gamma);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_DOUBLE_EQ(two.atoms()[0].x, 1.0);
  EXPECT_NEAR(two.atoms()[1].x, 1.0 / (1.0 - gamma), 1e-12);
  EXPECT_DOUBLE_EQ(two.atoms()[1].w, 0.5);
  const auto base = two_point(0.3, 0.25, 1.7);
  EXPECT_NEAR(mean(pushforward(base, 0.4, gamma)), 0.4 + gamma * mean(base), 1e-14);
}

TEST(Mix, Weights) {
  const std::vector<std::pair<double, Distribution>> single = {{1.0, two_point(0.0, 0.4, 1.0)}};
  EXPECT_EQ(w1(mix(single), two_point(0.0, 0.4, 1.0)), 0.0);
  const std::vector<std::pair<double, Distribution>> pair = {{0.5, ParticleDist::dirac(0.0)},
                                                             {0.5, ParticleDist::dirac(1.0)}};
  const auto atoms = atoms_of(mix(pair));
  ASSERT_EQ(atoms.size(), 2u);
  EXPECT_DOUBLE_EQ(atoms[0].w, 0.5);
  EXPECT_DOUBLE_EQ(atoms[1].w, 0.5);
}

TEST(Projection, GridPointsAndMidpoints) {
  const SupportGrid grid(8, 0.5);
  const auto on_grid = project_categorical(ParticleDist::dirac(grid.atom(3)), grid);
  EXPECT_EQ(on_grid.probs()[3], 1.0);
  const auto mid = project_categorical(ParticleDist::dirac(0.5 * (grid.atom(3) + grid.atom(4))), grid);
  EXPECT_NEAR(mid.probs()[3], 0.5, 1e-12);
  EXPECT_NEAR(mid.probs()[4], 0.5, 1e-12);
}

TEST(Projection, MatchesHatFunctionSums) {
  Rng rng(3);
  const SupportGrid grid(12, 0.75);
  const auto atoms = random_atoms(rng, 10, grid.upper());
  const auto proj = project_categorical(ParticleDist(atoms), grid);
  for (int k = 0; k <= grid.K(); ++k) {
    double expected = 0.0;
    for (const auto& a : atoms) expected += a.w * oracle::hat_weight(a.x, k, grid.gap(), grid.K());
    EXPECT_NEAR(proj.probs()[k], expected, 1e-13) << "k = " << k;
  }
}

TEST(Compress, IdentityBelowBudget) {
  const auto d = two_point(0.1, 0.3, 0.8);
  const auto c = compress(d, 4);
  EXPECT_EQ(c.w1_bound, 0.0);
  EXPECT_EQ(w1(c.dist, d), 0.0);
}

TEST(Compress, TwoAtomsMergeToMidpoint) {
  // n_max >= 2, so the equal-weight pair sits next to a far atom that the
  // greedy rule leaves alone. The pair holds half the mass, so its cost is
  // half of the unit-mass value eps / 2.
  const double eps = 0.125;
  const auto c = compress(ParticleDist({{0.0, 0.25}, {eps, 0.25}, {10.0, 0.5}}), 2);
  ASSERT_EQ(c.dist.size(), 2u);
  EXPECT_DOUBLE_EQ(c.dist.atoms()[0].x, eps / 2);
  EXPECT_DOUBLE_EQ(c.dist.atoms()[0].w, 0.5);
  EXPECT_DOUBLE_EQ(c.w1_bound, eps / 4);
  EXPECT_DOUBLE_EQ(w1(c.dist, ParticleDist({{0.0, 0.25}, {eps, 0.25}, {10.0, 0.5}})), eps / 4);
  EXPECT_THROW(compress(ParticleDist({{0.0, 0.5}, {eps, 0.5}}), 1), MeasureError);
}

TEST(Compress, BoundCoversRealW1) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const ParticleDist d(random_atoms(rng, 100, 4.0));
    const auto c = compress(d, 16);
    EXPECT_LE(c.dist.size(), 16u);
    EXPECT_LE(w1(d, c.dist), c.w1_bound + 1e-12);
    EXPECT_NEAR(mean(c.dist), mean(d), 1e-12);
  }
}

TEST(Mean, Basics) {
  EXPECT_EQ(mean(ParticleDist::dirac(0.7)), 0.7);
  EXPECT_DOUBLE_EQ(mean(CategoricalDist::uniform(SupportGrid(2, 0.5))), 1.0);
}

TEST(Validation, RejectsBadMass) {
  EXPECT_THROW(ParticleDist({{0.0, 0.5}}), MeasureError);
  EXPECT_THROW(ParticleDist({{0.0, -0.1}, {1.0, 1.1}}), MeasureError);
  EXPECT_THROW(CategoricalDist(SupportGrid(2, 0.5), {0.5, 0.5}), MeasureError);
  EXPECT_THROW(SupportGrid(0, 0.5), MeasureError);
}

TEST(TotalWeight, CompensatedSum) {
  std::vector<Atom> atoms(1'000'000, Atom{0.0, 1e-6});
  EXPECT_NEAR(total_weight(atoms), 1.0, 1e-15);
}
