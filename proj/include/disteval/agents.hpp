#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "disteval/bellman.hpp"
#include "disteval/mdp.hpp"
#include "disteval/measures.hpp"

namespace disteval {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ScheduleKind { Theorem42, Constant, Custom };

/// Step sizes alpha_t for t = 1, 2, ...
class StepSchedule {
 public:
  /// alpha_t = 1 / (1 + c * mu_min * (1 - sqrt(gamma)) * t / log(max(t, 2))).
  static StepSchedule theorem42(double c, double mu_min, double gamma);
  /// alpha_t = alpha for every t. alpha may be 0 or 1 for degenerate runs.
  static StepSchedule constant(double alpha);
  /// Explicit table; the last entry repeats past the end.
  static StepSchedule custom(std::vector<double> table);

  double operator()(long t) const;

  ScheduleKind kind() const { return kind_; }
  double c() const { return c_; }
  double mu_min() const { return mu_min_; }
  double gamma() const { return gamma_; }
  double alpha() const { return alpha_; }
  const std::vector<double>& table() const { return table_; }

 private:
  ScheduleKind kind_ = ScheduleKind::Constant;
  double c_ = 0.0;
  double mu_min_ = 0.0;
  double gamma_ = 0.0;
  double alpha_ = 0.0;
  std::vector<double> table_;
};

struct GenerativeSampling {
  GenerativeConfig config;
};
struct MarkovSampling {
  /// Law of the first state of the trajectory.
  std::vector<double> initial;
};
using Sampling = std::variant<GenerativeSampling, MarkovSampling>;

struct CategoricalRep {
  int K = 64;
};
struct ParticleRep {
  std::size_t budget = 256;
};
using Representation = std::variant<CategoricalRep, ParticleRep>;

enum class Averaging { LastIterate, Polyak };

struct RunConfig {
  TabularMDP mdp;
  Policy policy;
  Sampling sampling;
  Representation representation;
  StepSchedule schedule;
  long T = 1;
  std::uint64_t seed = 0;
  /// Markov data-drop: skip the first `burn_in` transitions, then update on
  /// every `interval`-th one.
  long burn_in = 0;
  long interval = 1;
  Averaging averaging = Averaging::LastIterate;
  long polyak_start = 0;
  /// Defaults to delta_0 at every state.
  std::optional<ReturnModel> init;
  /// Validate every iterate instead of only at checkpoints.
  bool validate_each_step = false;
};

struct VRConfig {
  TabularMDP mdp;
  Policy policy;
  MarkovSampling sampling;
  Representation representation;
  int epochs = 1;
  long recentering = 1;
  long epoch_length = 1;
  double alpha = 0.1;
  std::uint64_t seed = 0;
  std::optional<ReturnModel> init;
};

struct TraceOptions {
  ReturnModel reference;
  MetricSpec metric = MetricSpec::w1();
  /// Update counts at which the error is recorded. For VR runs the error is
  /// recorded after every epoch and this list is ignored.
  std::vector<long> checkpoints;
};

struct TracePoint {
  long t = 0;
  long samples = 0;
  std::vector<double> per_state;
  double sup = 0.0;
};

struct RunResult {
  ReturnModel estimate;
  std::vector<TracePoint> trace;
  long updates = 0;
  long samples = 0;
  /// Particle mode: sum of W1 bounds of every compression.
  double compression_error = 0.0;
  /// VR categorical mode: total negative mass clipped from recentered targets.
  double clipped_mass = 0.0;
  /// VR particle mode: total W1 cost of CDF rectification.
  double rectification_w1 = 0.0;
  std::uint64_t seed = 0;
};

/// Called after every update with the update count, the transition used and
/// the new iterate. Slows a run down considerably; intended for tests.
using UpdateObserver = std::function<void(long, const Transition&, const ReturnModel&)>;

/// NTD or CTD. Generative sampling draws one transition per update; Markov
/// sampling walks a single trajectory and applies the data-drop rule given by
/// burn_in and interval.
RunResult run_td(const RunConfig& config, const std::optional<TraceOptions>& trace = std::nullopt,
                 const UpdateObserver& observer = nullptr);

/// Markov-only entry point; throws for generative sampling.
RunResult run_td_datadrop(const RunConfig& config, const std::optional<TraceOptions>& trace = std::nullopt);

/// Closed-form sample count of a run_td configuration.
long expected_samples(const RunConfig& config);

struct ReferenceOperator {
  /// Equal-weight mixture of pushforwards per visited state. Entries for
  /// unvisited states are delta_0 placeholders.
  std::vector<ParticleDist> per_state;
  std::vector<long> counts;
};

ReferenceOperator build_reference_operator(std::span<const Transition> samples, const ReturnModel& model,
                                           double gamma);

/// VR-NTD or VR-CTD. Throws ConfigError naming the state when an epoch's
/// recentering batch misses a state.
RunResult run_vr(const VRConfig& config, const std::optional<TraceOptions>& trace = std::nullopt);

ReturnModel polyak_average(std::span<const ReturnModel> history, std::size_t start,
                           std::size_t particle_budget = 1024);

// ---------------------------------------------------------------------------
// Parameter formulas of the sample-complexity results. The unnamed universal
// constants default to 1.

struct UniversalConstants {
  double C1 = 1.0;
  double C2 = 1.0;
  double C3 = 1.0;
  double c = 1.0;
  double c4 = 1.0;
};

/// Smallest integer K with K > 4 / (eps^2 (1 - gamma)^3).
int categorical_atoms_for(double eps, double gamma);

struct GenerativeParameters {
  int K;
  long T;
  StepSchedule schedule;
};

/// T is the smallest integer beyond e^4 with
/// T >= C1 log^3 T / (eps^2 mu_min (1-gamma)^3) * log(|S| T / delta).
GenerativeParameters generative_parameters(double eps, double delta, double gamma, double mu_min, int n_states,
                                           const UniversalConstants& constants = {});

long burn_in_for(int t_mix, double delta);
long interval_for(int t_mix, long T_star, double delta);

struct DataDropParameters {
  int K;
  long T0;
  long q;
  long T_star;
  StepSchedule schedule;
};

/// When T_star is given it overrides the sample-size inequality.
DataDropParameters datadrop_parameters(double eps, double delta, double gamma, double mu_min, int t_mix,
                                       int n_states, std::optional<long> T_star = std::nullopt,
                                       const UniversalConstants& constants = {});

double vr_step_size(double c4, int n_states, long epoch_length, double delta, double gamma, int t_mix);

struct VRParameters {
  int K;
  int E;
  long N;
  long t_epoch;
  double alpha;
};

VRParameters vr_parameters(double eps, double delta, double gamma, double mu_min, int t_mix, int n_states,
                           const UniversalConstants& constants = {});

}  // namespace disteval
