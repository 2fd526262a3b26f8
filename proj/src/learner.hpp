#pragma once

// Mutable per-state estimates shared by the TD and VR drivers. Categorical
// estimates are raw probability vectors updated in place; they are turned
// into validated ReturnModels only at checkpoints.

#include <map>
#include <vector>

#include "disteval/agents.hpp"

namespace disteval::detail {

class CategoricalLearner {
 public:
  CategoricalLearner(const SupportGrid& grid, const ReturnModel& init, const std::vector<double>& rewards);

  const SupportGrid& grid() const { return grid_; }
  const GridShift& shift(double r) const;

  /// probs[s] <- (1 - alpha) probs[s] + alpha Proj(shift_r(probs[s'])).
  void td_update(const Transition& t, double alpha);
  /// probs[s] <- (1 - alpha) probs[s] + alpha target; target must sum to 1.
  void blend(int s, std::span<const double> target, double alpha);

  ReturnModel model() const;

  std::vector<std::vector<double>> probs;

 private:
  SupportGrid grid_;
  std::map<double, GridShift> shifts_;
  std::vector<double> scratch_;
};

class ParticleLearner {
 public:
  ParticleLearner(const ReturnModel& init, std::size_t budget, double gamma);

  void td_update(const Transition& t, double alpha);
  void blend(int s, const ParticleDist& target, double alpha);

  ReturnModel model() const;

  std::vector<ParticleDist> dists;
  std::size_t budget;
  double gamma;
  double compression_error = 0.0;
};

/// Running uniform average of iterates.
class RunningAverage {
 public:
  void add(const ReturnModel& model, std::size_t particle_budget);
  bool empty() const { return count_ == 0; }
  ReturnModel value() const;
  double compression_error() const { return compression_error_; }

 private:
  long count_ = 0;
  std::optional<ReturnModel> current_;
  double compression_error_ = 0.0;
};

/// delta_0 everywhere in the requested representation, or `init` checked
/// against it.
ReturnModel initial_model(const std::optional<ReturnModel>& init, const Representation& rep, int n_states,
                          double gamma);

std::vector<double> reward_values(const TabularMDP& mdp);

TracePoint measure(const ReturnModel& estimate, const TraceOptions& trace, long t, long samples);

/// Draws s_0 from a (possibly non-strictly-positive) initial law.
int draw_initial(Rng& rng, std::span<const double> initial, int n_states);

}  // namespace disteval::detail
