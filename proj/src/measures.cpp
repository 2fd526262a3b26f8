#include "disteval/measures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

namespace disteval {

namespace {

// Grid positions within this many index units of an integer are snapped to
// it, so grid-supported inputs project onto themselves exactly.
constexpr double kSnapTolerance = 1e-9;
// Slack for atoms produced by pushforwards that round just past an endpoint.
constexpr double kRangeSlack = 1e-9;

void check_mass(double total, const char* what) {
  if (!(std::abs(total - 1.0) <= kMassTolerance)) {
    throw MeasureError(std::string(what) + ": total mass " + std::to_string(total) +
                       " differs from 1");
  }
}

// Integral of f(F_a - F_b) over the real line, where both CDFs are step
// functions with jumps at the atoms.
template <class F>
double integrate_cdf_gap(std::span<const Atom> a, std::span<const Atom> b, F f) {
  std::size_t i = 0;
  std::size_t j = 0;
  double ca = 0.0;
  double cb = 0.0;
  double total = 0.0;
  double prev = 0.0;
  bool started = false;
  while (i < a.size() || j < b.size()) {
    double x = std::numeric_limits<double>::infinity();
    if (i < a.size()) x = a[i].x;
    if (j < b.size()) x = std::min(x, b[j].x);
    if (started) total += (x - prev) * f(ca - cb);
    while (i < a.size() && a[i].x == x) ca += a[i++].w;
    while (j < b.size() && b[j].x == x) cb += b[j++].w;
    prev = x;
    started = true;
  }
  return total;
}

template <class F>
double integrate_categorical_gap(const CategoricalDist& a, const CategoricalDist& b, F f) {
  auto pa = a.probs();
  auto pb = b.probs();
  double ca = 0.0;
  double cb = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < pa.size(); ++k) {
    ca += pa[k];
    cb += pb[k];
    total += f(ca - cb);
  }
  return total * a.grid().gap();
}

const CategoricalDist* same_grid_pair(const Distribution& a, const Distribution& b) {
  auto* ca = std::get_if<CategoricalDist>(&a);
  auto* cb = std::get_if<CategoricalDist>(&b);
  if (ca && cb && ca->grid() == cb->grid()) return ca;
  return nullptr;
}

}  // namespace

// ---------------------------------------------------------------------------

SupportGrid::SupportGrid(int K, double gamma) : K_(K), gamma_(gamma) {
  if (K < 1) throw MeasureError("SupportGrid: K must be at least 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw MeasureError("SupportGrid: gamma must lie in (0, 1)");
  gap_ = 1.0 / (K * (1.0 - gamma));
}

CategoricalDist::CategoricalDist(SupportGrid grid, std::vector<double> probs)
    : grid_(grid), probs_(std::move(probs)) {
  if (probs_.size() != grid_.size()) {
    throw MeasureError("CategoricalDist: expected " + std::to_string(grid_.size()) +
                       " probabilities, got " + std::to_string(probs_.size()));
  }
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw MeasureError("CategoricalDist: negative or non-finite probability");
    total += p;
  }
  check_mass(total, "CategoricalDist");
}

CategoricalDist CategoricalDist::dirac(SupportGrid grid, int k) {
  if (k < 0 || k > grid.K()) throw MeasureError("CategoricalDist::dirac: index out of range");
  std::vector<double> probs(grid.size(), 0.0);
  probs[static_cast<std::size_t>(k)] = 1.0;
  return CategoricalDist(grid, std::move(probs));
}

CategoricalDist CategoricalDist::uniform(SupportGrid grid) {
  std::vector<double> probs(grid.size(), 1.0 / static_cast<double>(grid.size()));
  return CategoricalDist(grid, std::move(probs));
}

double total_weight(std::span<const Atom> atoms) {
  // Neumaier's variant of Kahan summation.
  double sum = 0.0;
  double carry = 0.0;
  for (const auto& a : atoms) {
    const double t = sum + a.w;
    carry += std::abs(sum) >= std::abs(a.w) ? (sum - t) + a.w : (a.w - t) + sum;
    sum = t;
  }
  return sum + carry;
}

ParticleDist::ParticleDist(std::vector<Atom> atoms) {
  for (const auto& a : atoms) {
    if (!std::isfinite(a.x)) throw MeasureError("ParticleDist: non-finite location");
    if (!(a.w >= 0.0) || !std::isfinite(a.w)) throw MeasureError("ParticleDist: negative or non-finite weight");
  }
  auto by_x = [](const Atom& l, const Atom& r) { return l.x < r.x; };
  if (!std::is_sorted(atoms.begin(), atoms.end(), by_x)) {
    std::stable_sort(atoms.begin(), atoms.end(), by_x);
  }
  atoms_.reserve(atoms.size());
  const double total = total_weight(atoms);
  for (const auto& a : atoms) {
    if (a.w == 0.0) continue;
    if (!atoms_.empty() && a.x - atoms_.back().x <= kDedupThreshold) {
      atoms_.back().w += a.w;
    } else {
      atoms_.push_back(a);
    }
  }
  if (atoms_.empty()) throw MeasureError("ParticleDist: no atoms with positive weight");
  check_mass(total, "ParticleDist");
}

ParticleDist ParticleDist::dirac(double x) { return ParticleDist({{x, 1.0}}); }

// ---------------------------------------------------------------------------

std::vector<Atom> atoms_of(const Distribution& dist) {
  if (auto* c = std::get_if<CategoricalDist>(&dist)) {
    std::vector<Atom> out;
    auto p = c->probs();
    out.reserve(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (p[k] > 0.0) out.push_back({c->grid().atom(static_cast<int>(k)), p[k]});
    }
    return out;
  }
  auto a = std::get<ParticleDist>(dist).atoms();
  return {a.begin(), a.end()};
}

double cdf(const Distribution& dist, double x) {
  if (auto* c = std::get_if<CategoricalDist>(&dist)) {
    double total = 0.0;
    auto p = c->probs();
    for (std::size_t k = 0; k < p.size() && c->grid().atom(static_cast<int>(k)) < x; ++k) total += p[k];
    return total;
  }
  double total = 0.0;
  for (const auto& a : std::get<ParticleDist>(dist).atoms()) {
    if (a.x >= x) break;
    total += a.w;
  }
  return total;
}

double mean(const Distribution& dist) {
  if (auto* c = std::get_if<CategoricalDist>(&dist)) {
    double total = 0.0;
    auto p = c->probs();
    for (std::size_t k = 0; k < p.size(); ++k) total += p[k] * c->grid().atom(static_cast<int>(k));
    return total;
  }
  double total = 0.0;
  for (const auto& a : std::get<ParticleDist>(dist).atoms()) total += a.w * a.x;
  return total;
}

double w1(const Distribution& a, const Distribution& b) {
  auto absf = [](double d) { return std::abs(d); };
  if (auto* ca = same_grid_pair(a, b)) {
    return integrate_categorical_gap(*ca, std::get<CategoricalDist>(b), absf);
  }
  return integrate_cdf_gap(atoms_of(a), atoms_of(b), absf);
}

double cramer(const Distribution& a, const Distribution& b) {
  auto sq = [](double d) { return d * d; };
  double total;
  if (auto* ca = same_grid_pair(a, b)) {
    total = integrate_categorical_gap(*ca, std::get<CategoricalDist>(b), sq);
  } else {
    total = integrate_cdf_gap(atoms_of(a), atoms_of(b), sq);
  }
  return std::sqrt(std::max(total, 0.0));
}

double kolmogorov(const Distribution& a, const Distribution& b) {
  const auto qa = atoms_of(a);
  const auto qb = atoms_of(b);
  std::size_t i = 0;
  std::size_t j = 0;
  double fa = 0.0;
  double fb = 0.0;
  double worst = 0.0;
  while (i < qa.size() || j < qb.size()) {
    const double x = std::min(i < qa.size() ? qa[i].x : HUGE_VAL, j < qb.size() ? qb[j].x : HUGE_VAL);
    while (i < qa.size() && qa[i].x == x) fa += qa[i++].w;
    while (j < qb.size() && qb[j].x == x) fb += qb[j++].w;
    worst = std::max(worst, std::abs(fa - fb));
  }
  return worst;
}

double wp(const Distribution& a, const Distribution& b, double p) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw MeasureError("wp: p must be a finite value >= 1");
  const auto qa = atoms_of(a);
  const auto qb = atoms_of(b);
  std::size_t i = 0;
  std::size_t j = 0;
  double ua = qa[0].w;
  double ub = qb[0].w;
  double prev = 0.0;
  double total = 0.0;
  while (i < qa.size() && j < qb.size()) {
    const double u = std::min(ua, ub);
    const double gap = std::abs(qa[i].x - qb[j].x);
    if (u > prev) total += (u - prev) * (p == 1.0 ? gap : std::pow(gap, p));
    prev = std::max(prev, u);
    const bool step_a = ua <= u;
    const bool step_b = ub <= u;
    if (step_a && ++i < qa.size()) ua += qa[i].w;
    if (step_b && ++j < qb.size()) ub += qb[j].w;
  }
  return std::pow(total, 1.0 / p);
}

ParticleDist pushforward(const Distribution& dist, double r, double gamma) {
  auto atoms = atoms_of(dist);
  for (auto& a : atoms) a.x = r + gamma * a.x;
  return ParticleDist(std::move(atoms));
}

Distribution mix(std::span<const std::pair<double, Distribution>> components) {
  if (components.empty()) throw MeasureError("mix: no components");
  double wsum = 0.0;
  for (const auto& [w, d] : components) {
    if (!(w >= 0.0)) throw MeasureError("mix: negative weight");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw MeasureError("mix: weights sum to " + std::to_string(wsum));

  const auto* first = std::get_if<CategoricalDist>(&components.front().second);
  bool all_same_grid = first != nullptr;
  for (const auto& [w, d] : components) {
    auto* c = std::get_if<CategoricalDist>(&d);
    if (!c || !(c->grid() == first->grid())) {
      all_same_grid = false;
      break;
    }
  }

  if (all_same_grid) {
    std::vector<double> probs(first->grid().size(), 0.0);
    for (const auto& [w, d] : components) {
      auto p = std::get<CategoricalDist>(d).probs();
      for (std::size_t k = 0; k < probs.size(); ++k) probs[k] += w * p[k];
    }
    double total = 0.0;
    for (double p : probs) total += p;
    for (double& p : probs) p /= total;
    return CategoricalDist(first->grid(), std::move(probs));
  }

  std::vector<Atom> atoms;
  for (const auto& [w, d] : components) {
    if (w == 0.0) continue;
    for (const auto& a : atoms_of(d)) atoms.push_back({a.x, w * a.w});
  }
  double total = 0.0;
  for (const auto& a : atoms) total += a.w;
  for (auto& a : atoms) a.w /= total;
  return ParticleDist(std::move(atoms));
}

namespace {

struct GridSlot {
  std::size_t k;
  double frac;
};

GridSlot locate_on_grid(double x, const SupportGrid& grid) {
  const double upper = grid.upper();
  if (x < -kRangeSlack || x > upper * (1.0 + kRangeSlack)) {
    throw MeasureError("project_categorical: atom at " + std::to_string(x) + " outside [0, " +
                       std::to_string(upper) + "]");
  }
  const double scale = grid.K() * (1.0 - grid.gamma());
  double pos = std::clamp(x * scale, 0.0, static_cast<double>(grid.K()));
  const double nearest = std::round(pos);
  if (std::abs(pos - nearest) <= kSnapTolerance) pos = nearest;
  auto k = static_cast<std::size_t>(std::floor(pos));
  return {k, pos - static_cast<double>(k)};
}

}  // namespace

CategoricalDist project_categorical(const Distribution& dist, const SupportGrid& grid) {
  if (auto* c = std::get_if<CategoricalDist>(&dist); c && c->grid() == grid) return *c;
  std::vector<double> probs(grid.size(), 0.0);
  for (const auto& a : atoms_of(dist)) {
    const auto [k, frac] = locate_on_grid(a.x, grid);
    if (frac == 0.0) {
      probs[k] += a.w;
    } else {
      probs[k] += a.w * (1.0 - frac);
      probs[k + 1] += a.w * frac;
    }
  }
  return CategoricalDist(grid, std::move(probs));
}

GridShift::GridShift(const SupportGrid& grid, double r) : r_(r) {
  lower_.reserve(grid.size());
  upper_share_.reserve(grid.size());
  for (int j = 0; j <= grid.K(); ++j) {
    const auto [k, frac] = locate_on_grid(r + grid.gamma() * grid.atom(j), grid);
    lower_.push_back(k);
    upper_share_.push_back(frac);
  }
}

void GridShift::accumulate(std::span<const double> src, double weight, std::span<double> dst) const {
  for (std::size_t j = 0; j < src.size(); ++j) {
    const double m = weight * src[j];
    if (m == 0.0) continue;
    const double f = upper_share_[j];
    if (f == 0.0) {
      dst[lower_[j]] += m;
    } else {
      dst[lower_[j]] += m * (1.0 - f);
      dst[lower_[j] + 1] += m * f;
    }
  }
}

Compressed compress(const ParticleDist& dist, std::size_t n_max) {
  if (n_max < 2) throw MeasureError("compress: n_max must be at least 2");
  const auto src = dist.atoms();
  if (src.size() <= n_max) return {dist, 0.0};

  const auto n = static_cast<int>(src.size());
  std::vector<double> x(src.size());
  std::vector<double> w(src.size());
  std::vector<int> prev(src.size());
  std::vector<int> next(src.size());
  std::vector<unsigned> version(src.size(), 0);
  std::vector<char> alive(src.size(), 1);
  for (int i = 0; i < n; ++i) {
    x[i] = src[i].x;
    w[i] = src[i].w;
    prev[i] = i - 1;
    next[i] = i + 1 < n ? i + 1 : -1;
  }

  struct Candidate {
    double cost;
    int left;
    int right;
    unsigned vl;
    unsigned vr;
    bool operator>(const Candidate& o) const {
      return cost != o.cost ? cost > o.cost : left > o.left;
    }
  };
  auto merge_cost = [&](int l, int r) { return 2.0 * w[l] * w[r] * (x[r] - x[l]) / (w[l] + w[r]); };
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap;
  auto push = [&](int l) {
    const int r = l >= 0 ? next[l] : -1;
    if (l < 0 || r < 0) return;
    heap.push({merge_cost(l, r), l, r, version[l], version[r]});
  };
  for (int i = 0; i + 1 < n; ++i) push(i);

  std::size_t count = src.size();
  double bound = 0.0;
  while (count > n_max) {
    const Candidate c = heap.top();
    heap.pop();
    if (!alive[c.left] || !alive[c.right] || next[c.left] != c.right || version[c.left] != c.vl ||
        version[c.right] != c.vr) {
      continue;
    }
    const int l = c.left;
    const int r = c.right;
    bound += c.cost;
    const double wt = w[l] + w[r];
    x[l] = (w[l] * x[l] + w[r] * x[r]) / wt;
    w[l] = wt;
    alive[r] = 0;
    next[l] = next[r];
    if (next[r] >= 0) prev[next[r]] = l;
    ++version[l];
    --count;
    push(prev[l]);
    push(l);
  }

  std::vector<Atom> out;
  out.reserve(count);
  double total = 0.0;
  for (int i = 0; i >= 0 && i < n; i = next[i]) {
    out.push_back({x[i], w[i]});
    total += w[i];
  }
  for (auto& a : out) a.w /= total;
  return {ParticleDist(std::move(out)), bound};
}

// ---------------------------------------------------------------------------

double distance(const Distribution& a, const Distribution& b, MetricSpec metric) {
  switch (metric.kind) {
    case MetricKind::W1:
      return w1(a, b);
    case MetricKind::Cramer:
      return cramer(a, b);
    case MetricKind::Wp:
      return wp(a, b, metric.p);
  }
  throw MeasureError("distance: unknown metric");
}

ReturnModel::ReturnModel(std::vector<Distribution> dists) : dists_(std::move(dists)) {
  if (dists_.empty()) throw MeasureError("ReturnModel: needs at least one state");
  const auto kind = dists_.front().index();
  for (const auto& d : dists_) {
    if (d.index() != kind) throw MeasureError("ReturnModel: mixed representations");
  }
  if (auto* c = std::get_if<CategoricalDist>(&dists_.front())) {
    for (const auto& d : dists_) {
      if (!(std::get<CategoricalDist>(d).grid() == c->grid())) {
        throw MeasureError("ReturnModel: categorical entries on different grids");
      }
    }
  }
}

ReturnModel ReturnModel::constant(std::size_t n_states, const Distribution& dist) {
  return ReturnModel(std::vector<Distribution>(n_states, dist));
}

bool ReturnModel::is_categorical() const {
  return std::holds_alternative<CategoricalDist>(dists_.front());
}

const CategoricalDist& ReturnModel::categorical(std::size_t s) const {
  auto* c = std::get_if<CategoricalDist>(&dists_.at(s));
  if (!c) throw MeasureError("ReturnModel: state is not categorical");
  return *c;
}

MetricReport sup_metric(const ReturnModel& a, const ReturnModel& b, MetricSpec metric) {
  if (a.n_states() != b.n_states()) {
    throw MeasureError("sup_metric: state counts differ (" + std::to_string(a.n_states()) + " vs " +
                       std::to_string(b.n_states()) + ")");
  }
  MetricReport report;
  report.per_state.reserve(a.n_states());
  for (std::size_t s = 0; s < a.n_states(); ++s) {
    report.per_state.push_back(distance(a[s], b[s], metric));
    report.sup = std::max(report.sup, report.per_state.back());
  }
  return report;
}

}  // namespace disteval
