#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

namespace disteval {

class MeasureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Probability vectors and particle weights must sum to one within this.
inline constexpr double kMassTolerance = 1e-12;
// Particle locations closer than this are merged.
inline constexpr double kDedupThreshold = 1e-12;

/// Equally spaced atoms x_k = k * gap, k = 0..K, spanning [0, 1/(1-gamma)].
class SupportGrid {
 public:
  SupportGrid(int K, double gamma);

  int K() const { return K_; }
  double gamma() const { return gamma_; }
  double gap() const { return gap_; }
  double upper() const { return 1.0 / (1.0 - gamma_); }
  std::size_t size() const { return static_cast<std::size_t>(K_) + 1; }
  double atom(int k) const { return k * gap_; }

  bool operator==(const SupportGrid& other) const {
    return K_ == other.K_ && gamma_ == other.gamma_;
  }

 private:
  int K_;
  double gamma_;
  double gap_;
};

struct Atom {
  double x;
  double w;
};

/// Compensated sum of the weights; large empirical mixtures otherwise drift
/// past the mass tolerance.
double total_weight(std::span<const Atom> atoms);

/// Probability vector over the atoms of a SupportGrid.
class CategoricalDist {
 public:
  CategoricalDist(SupportGrid grid, std::vector<double> probs);

  static CategoricalDist dirac(SupportGrid grid, int k);
  static CategoricalDist uniform(SupportGrid grid);

  const SupportGrid& grid() const { return grid_; }
  std::span<const double> probs() const { return probs_; }

 private:
  SupportGrid grid_;
  std::vector<double> probs_;
};

/// Finite weighted mixture of point masses. Locations are kept sorted and
/// deduplicated; zero-weight atoms are dropped.
class ParticleDist {
 public:
  explicit ParticleDist(std::vector<Atom> atoms);

  static ParticleDist dirac(double x);

  std::span<const Atom> atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }

 private:
  std::vector<Atom> atoms_;
};

using Distribution = std::variant<CategoricalDist, ParticleDist>;

/// Sorted (location, weight) view of any distribution. Categorical entries
/// with zero probability are skipped.
std::vector<Atom> atoms_of(const Distribution& dist);

// Left-continuous convention: cdf(d, x) = d[0, x).
double cdf(const Distribution& dist, double x);
double mean(const Distribution& dist);

double w1(const Distribution& a, const Distribution& b);
double cramer(const Distribution& a, const Distribution& b);
/// sup_x |F_a(x) - F_b(x)|.
double kolmogorov(const Distribution& a, const Distribution& b);
/// p-Wasserstein distance through the quantile representation. Throws for p < 1.
double wp(const Distribution& a, const Distribution& b, double p);

/// Image of dist under x -> r + gamma * x.
ParticleDist pushforward(const Distribution& dist, double r, double gamma);

/// Convex combination. Returns a CategoricalDist when every component is
/// categorical on one grid, otherwise a ParticleDist.
Distribution mix(std::span<const std::pair<double, Distribution>> components);

/// Cramér projection onto the grid, p_k = E[(1 - |X - x_k| / gap)_+].
CategoricalDist project_categorical(const Distribution& dist, const SupportGrid& grid);

/// Pushforward by x -> r + gamma * x followed by projection, precomputed for
/// every atom of one grid. Accumulating through a GridShift matches
/// project_categorical(pushforward(d, r, gamma), grid) up to summation order.
class GridShift {
 public:
  GridShift(const SupportGrid& grid, double r);

  double reward() const { return r_; }
  /// Grid atom j lands between atoms lower(j) and lower(j) + 1, with
  /// upper_share(j) of its mass on the upper one.
  std::size_t lower(std::size_t j) const { return lower_[j]; }
  double upper_share(std::size_t j) const { return upper_share_[j]; }
  /// dst += weight * Proj(shift(src)); both spans have grid.size() entries.
  void accumulate(std::span<const double> src, double weight, std::span<double> dst) const;

 private:
  double r_;
  std::vector<std::size_t> lower_;
  std::vector<double> upper_share_;
};

struct Compressed {
  ParticleDist dist;
  double w1_bound;
};

/// Greedy adjacent-pair merging down to at most n_max atoms. Each merge of
/// (w1, x1), (w2, x2) into their weighted mean moves exactly
/// 2 w1 w2 |x1 - x2| / (w1 + w2) of W1; the returned bound is the sum.
Compressed compress(const ParticleDist& dist, std::size_t n_max);

// ---------------------------------------------------------------------------
// Per-state collections

enum class MetricKind { W1, Cramer, Wp };

struct MetricSpec {
  MetricKind kind = MetricKind::W1;
  double p = 1.0;

  static MetricSpec w1() { return {MetricKind::W1, 1.0}; }
  static MetricSpec cramer() { return {MetricKind::Cramer, 2.0}; }
  static MetricSpec wasserstein(double p) { return {MetricKind::Wp, p}; }
};

double distance(const Distribution& a, const Distribution& b, MetricSpec metric);

/// One distribution per state, all in the same representation.
class ReturnModel {
 public:
  explicit ReturnModel(std::vector<Distribution> dists);

  static ReturnModel constant(std::size_t n_states, const Distribution& dist);

  std::size_t n_states() const { return dists_.size(); }
  bool is_categorical() const;
  const Distribution& operator[](std::size_t s) const { return dists_[s]; }
  const std::vector<Distribution>& dists() const { return dists_; }

  /// Categorical view of state s. Throws for particle models.
  const CategoricalDist& categorical(std::size_t s) const;

 private:
  std::vector<Distribution> dists_;
};

struct MetricReport {
  std::vector<double> per_state;
  double sup = 0.0;
};

MetricReport sup_metric(const ReturnModel& a, const ReturnModel& b, MetricSpec metric);

}  // namespace disteval
