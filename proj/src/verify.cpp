#include "disteval/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "disteval/agents.hpp"
#include "disteval/bellman.hpp"
#include "disteval/concentration.hpp"

namespace disteval {

std::vector<NamedMDP> load_full_gallery() {
  std::vector<NamedMDP> out;
  for (const auto& name : gallery_names()) out.push_back({name, load_gallery(name)});
  if (out.empty()) throw SpecError("gallery directory " + gallery_dir().string() + " holds no MDP files");
  return out;
}

namespace checks {

namespace {

std::string short_number(double x) {
  std::ostringstream os;
  os.precision(3);
  os << x;
  return os.str();
}

CheckResult at_most(std::string name, double observed, double limit, std::string detail = {}) {
  return {std::move(name), observed <= limit, observed, limit, std::move(detail)};
}

ParticleDist random_particles(Rng& rng, double upper, int max_atoms) {
  const int n = 1 + static_cast<int>(rng.uniform() * max_atoms);
  std::vector<Atom> atoms;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = rng.uniform() + 1e-3;
    atoms.push_back({rng.uniform() * upper, w});
    total += w;
  }
  for (auto& a : atoms) a.w /= total;
  return ParticleDist(std::move(atoms));
}

CategoricalDist random_categorical(Rng& rng, const SupportGrid& grid) {
  std::vector<double> probs(grid.size());
  double total = 0.0;
  for (auto& p : probs) {
    // Sparse supports exercise the projection edge cases.
    p = rng.uniform() < 0.5 ? 0.0 : rng.uniform();
    total += p;
  }
  if (total == 0.0) {
    probs[0] = 1.0;
    total = 1.0;
  }
  for (auto& p : probs) p /= total;
  return CategoricalDist(grid, std::move(probs));
}

ReturnModel random_particle_model(Rng& rng, int n_states, double gamma) {
  std::vector<Distribution> dists;
  for (int s = 0; s < n_states; ++s) dists.emplace_back(random_particles(rng, 1.0 / (1.0 - gamma), 5));
  return ReturnModel(std::move(dists));
}

ReturnModel random_categorical_model(Rng& rng, int n_states, const SupportGrid& grid) {
  std::vector<Distribution> dists;
  for (int s = 0; s < n_states; ++s) dists.emplace_back(random_categorical(rng, grid));
  return ReturnModel(std::move(dists));
}

}  // namespace

std::vector<CheckResult> contraction(const NamedMDP& mdp, int pairs, double slack, std::uint64_t seed) {
  const auto& file = mdp.file;
  const double gamma = file.mdp.gamma();
  const int S = file.mdp.n_states();
  const BellmanOperator op(file.mdp, file.policy);
  const SupportGrid grid(32, gamma);
  Rng rng(seed);
  double w1_excess = -HUGE_VAL, w2_excess = -HUGE_VAL, cramer_excess = -HUGE_VAL, projected_excess = -HUGE_VAL;
  for (int i = 0; i < pairs; ++i) {
    const auto a = random_particle_model(rng, S, gamma);
    const auto b = random_particle_model(rng, S, gamma);
    const auto ta = op.apply(a);
    const auto tb = op.apply(b);
    w1_excess = std::max(w1_excess, sup_metric(ta, tb, MetricSpec::w1()).sup - gamma * sup_metric(a, b, MetricSpec::w1()).sup);
    w2_excess = std::max(w2_excess, sup_metric(ta, tb, MetricSpec::wasserstein(2)).sup -
                                        gamma * sup_metric(a, b, MetricSpec::wasserstein(2)).sup);
    cramer_excess = std::max(cramer_excess, sup_metric(ta, tb, MetricSpec::cramer()).sup -
                                                std::sqrt(gamma) * sup_metric(a, b, MetricSpec::cramer()).sup);
    const auto ca = random_categorical_model(rng, S, grid);
    const auto cb = random_categorical_model(rng, S, grid);
    projected_excess =
        std::max(projected_excess, sup_metric(op.apply_projected(ca, grid), op.apply_projected(cb, grid),
                                              MetricSpec::cramer()).sup -
                                       std::sqrt(gamma) * sup_metric(ca, cb, MetricSpec::cramer()).sup);
  }
  const std::string tag = mdp.name + ": ";
  return {at_most(tag + "W1 contraction (gamma)", w1_excess, slack),
          at_most(tag + "W2 contraction (gamma)", w2_excess, slack),
          at_most(tag + "Cramer contraction (sqrt gamma)", cramer_excess, slack),
          at_most(tag + "projected Cramer contraction (sqrt gamma)", projected_excess, slack)};
}

std::vector<CheckResult> metric_inequalities(int pairs, double slack, std::uint64_t seed) {
  Rng rng(seed);
  const double gammas[] = {0.5, 0.9, 0.99};
  const double powers[] = {1.5, 2.0, 3.0};
  double lower = -HUGE_VAL, upper = -HUGE_VAL, wp_excess = -HUGE_VAL;
  for (int i = 0; i < pairs; ++i) {
    const double gamma = gammas[i % 3];
    const double p = powers[(i / 3) % 3];
    const double L = 1.0 / (1.0 - gamma);
    Distribution a = random_particles(rng, L, 6);
    Distribution b = random_particles(rng, L, 6);
    if (i % 2 == 1) {
      const SupportGrid grid(16, gamma);
      a = random_categorical(rng, grid);
      b = random_categorical(rng, grid);
    }
    const double c = cramer(a, b);
    const double d1 = w1(a, b);
    lower = std::max(lower, c * c - d1);
    upper = std::max(upper, d1 - c * std::sqrt(L));
    wp_excess = std::max(wp_excess, wp(a, b, p) - std::pow(L, 1.0 - 1.0 / p) * std::pow(d1, 1.0 / p));
  }
  return {at_most("cramer^2 <= w1", lower, slack), at_most("w1 <= cramer / sqrt(1 - gamma)", upper, slack),
          at_most("wp <= (1 - gamma)^(1/p - 1) w1^(1/p)", wp_excess, slack)};
}

std::vector<CheckResult> projection(int pairs, double slack, std::uint64_t seed) {
  Rng rng(seed);
  double cramer_excess = -HUGE_VAL, w1_excess = -HUGE_VAL, mass_gap = 0.0, mean_gap = 0.0;
  long not_idempotent = 0;
  for (int i = 0; i < pairs; ++i) {
    const double gamma = i % 2 ? 0.9 : 0.5;
    const SupportGrid grid(8 + (i % 5) * 13, gamma);
    const auto a = random_particles(rng, grid.upper(), 8);
    const auto b = random_particles(rng, grid.upper(), 8);
    const auto pa = project_categorical(a, grid);
    const auto pb = project_categorical(b, grid);
    cramer_excess = std::max(cramer_excess, cramer(pa, pb) - cramer(a, b));
    w1_excess = std::max(w1_excess, w1(pa, pb) - w1(a, b));
    double total = 0.0;
    for (double p : pa.probs()) total += p;
    mass_gap = std::max(mass_gap, std::abs(total - 1.0));
    mean_gap = std::max(mean_gap, std::abs(mean(pa) - mean(a)));
    const auto again = project_categorical(pa, grid);
    if (!std::equal(again.probs().begin(), again.probs().end(), pa.probs().begin())) ++not_idempotent;
  }
  return {at_most("projection non-expansive in Cramer", cramer_excess, slack),
          at_most("projection non-expansive in W1", w1_excess, slack),
          at_most("projection keeps unit mass", mass_gap, slack),
          at_most("projection keeps the mean", mean_gap, slack),
          at_most("projection is idempotent (bitwise)", static_cast<double>(not_idempotent), 0.0,
                  std::to_string(not_idempotent) + " of " + std::to_string(pairs) + " differ")};
}

CheckResult dcfp_vs_dp(const NamedMDP& mdp, int K, double tol) {
  const auto& file = mdp.file;
  const SupportGrid grid(K, file.mdp.gamma());
  const auto solved = dcfp_solve(file.mdp, file.policy, grid);
  DPOptions options;
  options.metric = MetricSpec::cramer();
  options.tol = tol / 10.0;
  options.grid = grid;
  const auto dp = distributional_dp(file.mdp, file.policy, dp_default_init(file.mdp.n_states(), options), options);
  const double gap = sup_metric(solved.model, dp.model, MetricSpec::cramer()).sup;
  return at_most(mdp.name + ": DCFP vs DP, K = " + std::to_string(K), gap, tol,
                 std::to_string(dp.iterations) + " DP iterations, DCFP residual " + short_number(solved.residual));
}

CheckResult mean_consistency(const NamedMDP& mdp, int K, double tol) {
  const auto& file = mdp.file;
  const auto solved = dcfp_solve(file.mdp, file.policy, SupportGrid(K, file.mdp.gamma()));
  const Vector v = value_function(file.mdp, file.policy);
  double gap = 0.0;
  for (int s = 0; s < file.mdp.n_states(); ++s) gap = std::max(gap, std::abs(mean(solved.model[s]) - v[s]));
  return at_most(mdp.name + ": fixed-point means equal V", gap, tol);
}

CertifiedReturns certified_returns(const NamedMDP& mdp, std::size_t particle_budget) {
  const auto& file = mdp.file;
  DPOptions options;
  options.metric = MetricSpec::w1();
  options.tol = 1e-6;
  options.particle_budget = particle_budget;
  auto dp = distributional_dp(file.mdp, file.policy, dp_default_init(file.mdp.n_states(), options), options);
  const double residual = fixed_point_residual(file.mdp, file.policy, dp.model, MetricSpec::cramer());
  return {std::move(dp.model), residual / (1.0 - std::sqrt(file.mdp.gamma()))};
}

std::vector<CheckResult> approximation_bound(const NamedMDP& mdp, const CertifiedReturns& truth,
                                             const std::vector<int>& Ks) {
  const auto& file = mdp.file;
  const double gamma = file.mdp.gamma();
  std::vector<CheckResult> out;
  for (int K : Ks) {
    const auto cat = dcfp_solve(file.mdp, file.policy, SupportGrid(K, gamma)).model;
    const double measured = sup_metric(truth.model, cat, MetricSpec::cramer()).sup;
    const double bound = 1.0 / (std::sqrt(static_cast<double>(K)) * (1.0 - gamma));
    out.push_back(at_most(mdp.name + ": categorical error bound, K = " + std::to_string(K),
                          measured + truth.certificate, bound,
                          "measured " + short_number(measured) + " + certificate " + short_number(truth.certificate)));
  }
  return out;
}

double approximation_ratio(const NamedMDP& mdp, const CertifiedReturns& truth, const std::vector<int>& Ks) {
  const auto& file = mdp.file;
  const double gamma = file.mdp.gamma();
  double best = std::numeric_limits<double>::infinity();
  for (int K : Ks) {
    const auto cat = dcfp_solve(file.mdp, file.policy, SupportGrid(K, gamma)).model;
    const double lower = sup_metric(truth.model, cat, MetricSpec::cramer()).sup - truth.certificate;
    if (lower <= 0.0) continue;
    best = std::min(best, 1.0 / (std::sqrt(static_cast<double>(K)) * (1.0 - gamma)) / lower);
  }
  return best;
}

std::vector<CheckResult> second_order(const NamedMDP& mdp, const ReturnModel& returns, double tol) {
  const auto& file = mdp.file;
  const double gamma = file.mdp.gamma();
  const Vector solved = second_order_sigma(file.mdp, file.policy, returns);
  const auto sigma = sigma_variation(file.mdp, file.policy, returns);
  const Matrix kernel = induced_kernel(file.mdp, file.policy);
  // Neumann series sum_k (gamma P)^k sigma, stopped once the geometric tail
  // bound gamma^k |sigma| / (1 - gamma) is below 1e-12.
  Vector term = Eigen::Map<const Vector>(sigma.data(), static_cast<Eigen::Index>(sigma.size()));
  Vector series = Vector::Zero(term.size());
  const double scale = term.cwiseAbs().maxCoeff();
  for (double tail = scale / (1.0 - gamma); tail > 1e-12; tail *= gamma) {
    series += term;
    term = gamma * (kernel * term);
  }
  const double gap = (solved - series).cwiseAbs().maxCoeff();
  return {at_most(mdp.name + ": second-order Sigma vs Neumann series", gap, tol),
          at_most(mdp.name + ": max Sigma <= 1 / (1 - gamma)", solved.maxCoeff(), 1.0 / (1.0 - gamma))};
}

CheckResult unbiasedness(const NamedMDP& mdp, long samples, double level, std::uint64_t seed) {
  const auto& file = mdp.file;
  const int S = file.mdp.n_states();
  const double gamma = file.mdp.gamma();
  const auto model = dcfp_solve(file.mdp, file.policy, SupportGrid(64, gamma)).model;
  const TransitionSampler sampler(file.mdp, file.policy);
  const GenerativeConfig gen = file.mu ? GenerativeConfig(*file.mu) : GenerativeConfig::uniform(S);
  Rng rng(seed);
  std::vector<Transition> batch;
  batch.reserve(static_cast<std::size_t>(samples));
  for (long i = 0; i < samples; ++i) batch.push_back(sampler.generative(rng, gen));
  const auto empirical = build_reference_operator(batch, model, gamma);
  const BellmanOperator op(file.mdp, file.policy);
  double worst = -HUGE_VAL;
  std::string detail;
  for (int s = 0; s < S; ++s) {
    const long n = empirical.counts[s];
    if (n == 0) return {mdp.name + ": empirical operator unbiased", false, HUGE_VAL, 0.0, "state never sampled"};
    const double band = std::sqrt(std::log(2.0 / level) / (2.0 * static_cast<double>(n)));
    const double gap = kolmogorov(empirical.per_state[s], op.apply(model, s));
    if (gap - band > worst) {
      worst = gap - band;
      detail = "state " + std::to_string(s) + ": gap " + short_number(gap) + ", band " + short_number(band);
    }
  }
  return at_most(mdp.name + ": empirical operator within DKW band", worst, 0.0, detail);
}

std::vector<CheckResult> chain(const NamedMDP& mdp, double tol) {
  const auto info = ChainInfo::analyze(mdp.file.mdp, mdp.file.policy);
  const double residual = (info.stationary.transpose() * info.kernel - info.stationary.transpose()).cwiseAbs().maxCoeff();
  const auto worst_tv = [&](int t) {
    Matrix power = Matrix::Identity(info.kernel.rows(), info.kernel.cols());
    for (int i = 0; i < t; ++i) power = power * info.kernel;
    double worst = 0.0;
    for (Eigen::Index s = 0; s < power.rows(); ++s) {
      worst = std::max(worst, total_variation(power.row(s).transpose(), info.stationary));
    }
    return worst;
  };
  const bool minimal = worst_tv(info.t_mix) <= 0.25 && (info.t_mix == 1 || worst_tv(info.t_mix - 1) > 0.25);
  return {at_most(mdp.name + ": stationary residual", residual, tol),
          {mdp.name + ": mixing time is minimal", minimal, static_cast<double>(info.t_mix),
           static_cast<double>(info.t_mix), "t_mix = " + std::to_string(info.t_mix)}};
}

std::vector<CheckResult> freedman(long trials, std::uint64_t seed, int workers) {
  std::vector<CheckResult> out;
  const double deltas[] = {0.2, 0.05};
  for (const auto& spec : shipped_martingale_specs()) {
    const double cap = spec.variance_cap();
    std::vector<FreedmanParams> params;
    for (int H : {1, variance_floor_levels(spec)}) {
      for (double d : deltas) params.push_back({d, H, cap, spec.b});
    }
    const auto rates = violation_rates(spec, params, trials, seed, workers);
    double worst_rate = -HUGE_VAL, worst_ci = -HUGE_VAL;
    std::string detail;
    for (std::size_t k = 0; k < params.size(); ++k) {
      worst_rate = std::max(worst_rate, rates[k].rate - params[k].delta);
      if (rates[k].ci.hi - 1.5 * params[k].delta > worst_ci) {
        worst_ci = rates[k].ci.hi - 1.5 * params[k].delta;
        detail = "H = " + std::to_string(params[k].H) + ", delta = " + short_number(params[k].delta) + ": rate " +
                 short_number(rates[k].rate) + ", Wilson upper " + short_number(rates[k].ci.hi);
      }
    }
    out.push_back(at_most(spec.name + ": violation rate <= delta", worst_rate, 0.0));
    out.push_back(at_most(spec.name + ": Wilson upper bound <= 1.5 delta", worst_ci, 0.0, detail));
    if (spec.kind == GeneratorKind::VarianceBurst) {
      double ratio = 0.0;
      for (double d : deltas) {
        ratio = std::max(ratio, freedman_bound(cap, {d, 1, cap, spec.b}) / azuma_bound(spec.n, spec.b, d));
      }
      out.push_back(at_most(spec.name + ": Freedman / Azuma at k = n", ratio, 0.5));
    }
    // Path-wise invariants on a few hundred fresh paths.
    long broken = 0;
    for (std::uint64_t t = 0; t < 200; ++t) {
      Rng rng(seed ^ 0x9e3779b97f4a7c15ULL, t);
      const auto path = simulate(spec, rng);
      for (int k = 1; k <= spec.n; ++k) {
        if (path.w[k] < path.w[k - 1] || std::abs(path.norm_y[k] - path.norm_y[k - 1]) > spec.b * (1.0 + 1e-12)) {
          ++broken;
          break;
        }
      }
    }
    out.push_back(at_most(spec.name + ": W_k monotone and increments <= b", static_cast<double>(broken), 0.0));
  }
  return out;
}

CheckResult freedman_monotone(double slack) {
  double worst = -HUGE_VAL;
  const double Ws[] = {0.0, 0.5, 1.0, 4.0, 20.0};
  const double bs[] = {0.5, 1.0, 2.0};
  const int Hs[] = {1, 2, 5, 10};
  const double deltas[] = {0.01, 0.05, 0.2, 0.5};
  for (double W : Ws) {
    for (double b : bs) {
      for (int H : Hs) {
        for (double d : deltas) {
          const FreedmanParams base{d, H, 4.0, b};
          const double v = freedman_bound(W, base);
          worst = std::max(worst, v - freedman_bound(W * 1.5 + 0.1, base));
          worst = std::max(worst, v - freedman_bound(W, {d, H, 4.0, b * 1.5}));
          // Raising H halves the variance floor, so the bound can only grow
          // with H where the floor is inactive.
          if (W >= 4.0 / std::ldexp(1.0, H)) worst = std::max(worst, v - freedman_bound(W, {d, H + 1, 4.0, b}));
          worst = std::max(worst, freedman_bound(W, {std::min(d * 1.5, 0.99), H, 4.0, b}) - v);
        }
      }
    }
  }
  return at_most("Freedman bound monotone in W, b, H (W above floor), antitone in delta", worst, slack);
}

}  // namespace checks

std::vector<CheckResult> run_verify(const VerifyOptions& options) {
  const double scale = options.tolerance_scale;
  if (!(scale > 0.0)) throw SpecError("tolerance scale must be positive");
  const auto gallery = load_full_gallery();
  std::vector<CheckResult> out;
  const auto append = [&](std::vector<CheckResult> more) {
    for (auto& r : more) out.push_back(std::move(r));
  };
  const std::uint64_t seed = options.seed;
  append(checks::metric_inequalities(1000, 1e-9 * scale, seed));
  append(checks::projection(1000, 1e-9 * scale, seed + 1));
  append({checks::freedman_monotone(1e-12 * scale)});
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    const auto& g = gallery[i];
    append(checks::chain(g, 1e-10 * scale));
    append(checks::contraction(g, 100, 1e-9 * scale, seed + 10 + i));
    for (int K : {64, 512}) out.push_back(checks::dcfp_vs_dp(g, K, 1e-10 * scale));
    out.push_back(checks::mean_consistency(g, 64, 1e-8 * scale));
    const auto truth = checks::certified_returns(g);
    append(checks::approximation_bound(g, truth, {8, 64, 512}));
    append(checks::second_order(g, truth.model, 1e-9 * scale));
    out.push_back(checks::unbiasedness(g, 100000, 0.01, seed + 20 + i));
  }
  append(checks::freedman(2000, seed + 30, options.workers));
  return out;
}

Table verify_table(const std::vector<CheckResult>& results) {
  Table t;
  t.header = {"check", "result", "observed", "limit", "detail"};
  for (const auto& r : results) {
    t.add_row({r.name, r.pass ? "pass" : "FAIL", format_number(r.observed), format_number(r.limit), r.detail});
  }
  return t;
}

}  // namespace disteval
