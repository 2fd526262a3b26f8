#include "disteval/concentration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace disteval {

void MartingaleSpec::validate() const {
  if (!(b > 0.0)) throw std::invalid_argument("martingale spec " + name + ": b must be positive");
  if (n < 1) throw std::invalid_argument("martingale spec " + name + ": n must be at least 1");
  if (dimension < 1) throw std::invalid_argument("martingale spec " + name + ": dimension must be at least 1");
  if (embedding == Embedding::Cramer && !(grid_gamma > 0.0 && grid_gamma < 1.0)) {
    throw std::invalid_argument("martingale spec " + name + ": grid gamma must lie in (0, 1)");
  }
  if (kind == GeneratorKind::VarianceBurst &&
      (burst_begin < 0 || burst_end < burst_begin || !(quiet_prob >= 0.0 && quiet_prob <= 1.0))) {
    throw std::invalid_argument("martingale spec " + name + ": invalid burst profile");
  }
}

namespace {

double fire_probability(const MartingaleSpec& spec, int k) {
  const int i = k - 1;
  return i >= spec.burst_begin && i < spec.burst_end ? 1.0 : spec.quiet_prob;
}

}  // namespace

double MartingaleSpec::step_variance(int k, double prev_norm) const {
  switch (kind) {
    case GeneratorKind::Zero:
      return 0.0;
    case GeneratorKind::IidBounded:
      return b * b;
    case GeneratorKind::StateDependent: {
      const double c = b / (1.0 + prev_norm);
      return c * c;
    }
    case GeneratorKind::VarianceBurst:
      return fire_probability(*this, k) * b * b;
  }
  return 0.0;
}

double MartingaleSpec::variance_cap() const {
  switch (kind) {
    case GeneratorKind::Zero:
      return 0.0;
    case GeneratorKind::IidBounded:
    case GeneratorKind::StateDependent:
      return n * b * b;
    case GeneratorKind::VarianceBurst: {
      double total = 0.0;
      for (int k = 1; k <= n; ++k) total += step_variance(k, 0.0);
      return total;
    }
  }
  return 0.0;
}

MartingalePath simulate(const MartingaleSpec& spec, Rng& rng) {
  spec.validate();
  const auto d = static_cast<std::size_t>(spec.dimension);
  // Coordinates of Y. In the Cramér embedding coordinate i is the value of
  // the CDF difference on [x_i, x_{i+1}), and the squared norm weighs each
  // coordinate by the grid gap.
  std::vector<double> y(d, 0.0);
  const double weight = spec.embedding == Embedding::Cramer ? 1.0 / (d * (1.0 - spec.grid_gamma)) : 1.0;
  const double rademacher_scale = 1.0 / std::sqrt(static_cast<double>(d));

  MartingalePath path;
  path.norm_y.assign(spec.n + 1, 0.0);
  path.w.assign(spec.n + 1, 0.0);
  double norm = 0.0;
  for (int k = 1; k <= spec.n; ++k) {
    const double variance = spec.step_variance(k, norm);
    path.w[k] = path.w[k - 1] + variance;
    double scale = 0.0;
    switch (spec.kind) {
      case GeneratorKind::Zero:
        break;
      case GeneratorKind::IidBounded:
        scale = spec.b;
        break;
      case GeneratorKind::StateDependent:
        scale = spec.b / (1.0 + norm);
        break;
      case GeneratorKind::VarianceBurst: {
        const double p = fire_probability(spec, k);
        // Always consume the draw so the stream layout does not depend on p.
        const double u = rng.uniform();
        scale = (p >= 1.0 || u < p) ? spec.b : 0.0;
        break;
      }
    }
    if (spec.embedding == Embedding::Euclidean) {
      for (auto& v : y) {
        const double sign = (rng.next() >> 63) ? 1.0 : -1.0;
        v += scale * sign * rademacher_scale;
      }
    } else {
      // Pair i < j of atoms among dimension + 1; the CDF moves on [x_i, x_j).
      const auto atoms = d + 1;
      auto i = static_cast<std::size_t>(rng.uniform() * atoms);
      auto j = static_cast<std::size_t>(rng.uniform() * (atoms - 1));
      if (j >= i) ++j;
      if (i > j) std::swap(i, j);
      const double sign = (rng.next() >> 63) ? 1.0 : -1.0;
      const double height = scale * sign / std::sqrt(static_cast<double>(j - i) * weight);
      for (std::size_t c = i; c < j; ++c) y[c] += height;
    }
    double sq = 0.0;
    for (double v : y) sq += v * v;
    norm = std::sqrt(sq * weight);
    path.norm_y[k] = norm;
  }
  return path;
}

void FreedmanParams::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("Freedman parameters: delta must lie in (0, 1)");
  if (H < 1) throw std::invalid_argument("Freedman parameters: H must be at least 1");
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("Freedman parameters: sigma2 must be nonnegative");
  if (!(b > 0.0)) throw std::invalid_argument("Freedman parameters: b must be positive");
}

double freedman_bound(double W_k, const FreedmanParams& params) {
  params.validate();
  if (!(W_k >= 0.0)) throw std::invalid_argument("freedman_bound: W_k must be nonnegative");
  const double log_term = std::log(2.0 * params.H / params.delta);
  const double floor = params.sigma2 / std::ldexp(1.0, params.H);
  return std::sqrt(8.0 * std::max(W_k, floor) * log_term) + 4.0 / 3.0 * params.b * log_term;
}

double freedman_tail(double eps, double sigma2, double b) {
  if (!(eps > 0.0) || !(sigma2 > 0.0)) throw std::invalid_argument("freedman_tail: eps and sigma2 must be positive");
  return 2.0 * std::exp(-(eps * eps / 2.0) / (sigma2 + b * eps / 3.0));
}

double azuma_bound(long n, double b, double delta) {
  return std::sqrt(2.0 * static_cast<double>(n) * b * b * std::log(2.0 / delta));
}

double bernstein_crude_bound(double sigma2, double delta) { return std::sqrt(4.0 * sigma2 * std::log(2.0 / delta)); }

int default_horizon_levels(double gamma) {
  return std::max(1, static_cast<int>(std::ceil(2.0 * std::log2(1.0 / (1.0 - gamma)))));
}

Interval wilson_interval(long successes, long trials, double z) {
  if (trials <= 0) throw std::invalid_argument("wilson_interval: no trials");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
  const double half = z / (1.0 + z2 / n) * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

bool violates(const MartingalePath& path, const FreedmanParams& params) {
  for (std::size_t k = 1; k < path.norm_y.size(); ++k) {
    if (path.norm_y[k] > freedman_bound(path.w[k], params)) return true;
  }
  return false;
}

std::vector<ViolationResult> violation_rates(const MartingaleSpec& spec, const std::vector<FreedmanParams>& params,
                                             long trials, std::uint64_t master_seed, int workers) {
  spec.validate();
  for (const auto& p : params) p.validate();
  if (trials < 1000) throw std::invalid_argument("violation_rate: at least 1000 trials are required");
  workers = std::max(1, workers);
  // hits[w][j]: violations of params[j] among the trials handled by worker w.
  std::vector<std::vector<long>> hits(workers, std::vector<long>(params.size(), 0));
  const auto work = [&](int w) {
    for (long t = w; t < trials; t += workers) {
      Rng rng(master_seed, static_cast<std::uint64_t>(t));
      const auto path = simulate(spec, rng);
      for (std::size_t j = 0; j < params.size(); ++j) hits[w][j] += violates(path, params[j]) ? 1 : 0;
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  std::vector<ViolationResult> out;
  for (std::size_t j = 0; j < params.size(); ++j) {
    long v = 0;
    for (const auto& h : hits) v += h[j];
    out.push_back({static_cast<double>(v) / trials, wilson_interval(v, trials), v, trials});
  }
  return out;
}

ViolationResult violation_rate(const MartingaleSpec& spec, const FreedmanParams& params, long trials,
                               std::uint64_t master_seed, int workers) {
  return violation_rates(spec, {params}, trials, master_seed, workers).front();
}

int variance_floor_levels(const MartingaleSpec& spec) {
  int H = 1;
  while (spec.variance_cap() / std::ldexp(1.0, H) > spec.b * spec.b) ++H;
  return H;
}

std::vector<MartingaleSpec> shipped_martingale_specs() {
  std::vector<MartingaleSpec> specs;
  for (int n : {100, 1000}) {
    for (auto embedding : {Embedding::Euclidean, Embedding::Cramer}) {
      const std::string tag = (embedding == Embedding::Euclidean ? "euclid" : "cramer") + std::string("-n") +
                              std::to_string(n);
      MartingaleSpec base;
      base.embedding = embedding;
      base.dimension = embedding == Embedding::Euclidean ? 8 : 32;
      base.grid_gamma = 0.5;
      base.b = 1.0;
      base.n = n;

      auto iid = base;
      iid.name = "iid-" + tag;
      iid.kind = GeneratorKind::IidBounded;
      specs.push_back(iid);

      auto state = base;
      state.name = "state-" + tag;
      state.kind = GeneratorKind::StateDependent;
      specs.push_back(state);

      auto burst = base;
      burst.name = "burst-" + tag;
      burst.kind = GeneratorKind::VarianceBurst;
      burst.burst_begin = n / 2;
      burst.burst_end = n / 2 + std::max(1, n / 50);
      burst.quiet_prob = 0.001;
      specs.push_back(burst);
    }
  }
  return specs;
}

}  // namespace disteval
