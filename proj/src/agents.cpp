#include "disteval/agents.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "learner.hpp"

namespace disteval {

namespace detail {

CategoricalLearner::CategoricalLearner(const SupportGrid& grid, const ReturnModel& init,
                                       const std::vector<double>& rewards)
    : grid_(grid), scratch_(grid.size()) {
  for (std::size_t s = 0; s < init.n_states(); ++s) {
    const auto projected = project_categorical(init[s], grid);
    probs.emplace_back(projected.probs().begin(), projected.probs().end());
  }
  for (double r : rewards) shifts_.emplace(r, GridShift(grid, r));
}

const GridShift& CategoricalLearner::shift(double r) const {
  auto it = shifts_.find(r);
  if (it == shifts_.end()) throw ConfigError("reward value " + std::to_string(r) + " is not in the model");
  return it->second;
}

void CategoricalLearner::td_update(const Transition& t, double alpha) {
  std::fill(scratch_.begin(), scratch_.end(), 0.0);
  shift(t.r).accumulate(probs[t.s_next], 1.0, scratch_);
  blend(t.s, scratch_, alpha);
}

void CategoricalLearner::blend(int s, std::span<const double> target, double alpha) {
  auto& p = probs[s];
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = (1.0 - alpha) * p[k] + alpha * target[k];
    total += p[k];
  }
  for (double& v : p) v /= total;
}

ReturnModel CategoricalLearner::model() const {
  std::vector<Distribution> out;
  out.reserve(probs.size());
  for (const auto& p : probs) out.emplace_back(CategoricalDist(grid_, p));
  return ReturnModel(std::move(out));
}

ParticleLearner::ParticleLearner(const ReturnModel& init, std::size_t budget_in, double gamma_in)
    : budget(budget_in), gamma(gamma_in) {
  for (const auto& d : init.dists()) dists.emplace_back(atoms_of(d));
}

void ParticleLearner::td_update(const Transition& t, double alpha) {
  blend(t.s, pushforward(dists[t.s_next], t.r, gamma), alpha);
}

void ParticleLearner::blend(int s, const ParticleDist& target, double alpha) {
  std::vector<Atom> atoms;
  atoms.reserve(dists[s].size() + target.size());
  if (alpha < 1.0) {
    for (const auto& a : dists[s].atoms()) atoms.push_back({a.x, (1.0 - alpha) * a.w});
  }
  if (alpha > 0.0) {
    for (const auto& a : target.atoms()) atoms.push_back({a.x, alpha * a.w});
  }
  double total = 0.0;
  for (const auto& a : atoms) total += a.w;
  for (auto& a : atoms) a.w /= total;
  auto c = compress(ParticleDist(std::move(atoms)), budget);
  compression_error += c.w1_bound;
  dists[s] = std::move(c.dist);
}

ReturnModel ParticleLearner::model() const {
  return ReturnModel(std::vector<Distribution>(dists.begin(), dists.end()));
}

void RunningAverage::add(const ReturnModel& model, std::size_t particle_budget) {
  ++count_;
  if (!current_) {
    current_ = model;
    return;
  }
  const double w = 1.0 / static_cast<double>(count_);
  std::vector<Distribution> out;
  for (std::size_t s = 0; s < model.n_states(); ++s) {
    const std::pair<double, Distribution> parts[] = {{1.0 - w, (*current_)[s]}, {w, model[s]}};
    Distribution mixed = mix(parts);
    if (auto* p = std::get_if<ParticleDist>(&mixed)) {
      auto c = compress(*p, particle_budget);
      compression_error_ += c.w1_bound;
      mixed = std::move(c.dist);
    }
    out.push_back(std::move(mixed));
  }
  current_ = ReturnModel(std::move(out));
}

ReturnModel RunningAverage::value() const {
  if (!current_) throw ConfigError("running average is empty");
  return *current_;
}

ReturnModel initial_model(const std::optional<ReturnModel>& init, const Representation& rep, int n_states,
                          double gamma) {
  if (init) {
    if (init->n_states() != static_cast<std::size_t>(n_states)) {
      throw ConfigError("initial model has " + std::to_string(init->n_states()) + " states, expected " +
                        std::to_string(n_states));
    }
    return *init;
  }
  if (auto* c = std::get_if<CategoricalRep>(&rep)) {
    return ReturnModel::constant(n_states, CategoricalDist::dirac(SupportGrid(c->K, gamma), 0));
  }
  return ReturnModel::constant(n_states, ParticleDist::dirac(0.0));
}

std::vector<double> reward_values(const TabularMDP& mdp) {
  std::set<double> values;
  for (int s = 0; s < mdp.n_states(); ++s) {
    for (int a = 0; a < mdp.n_actions(); ++a) {
      for (const auto& o : mdp.rewards(s, a)) values.insert(o.value);
    }
  }
  return {values.begin(), values.end()};
}

TracePoint measure(const ReturnModel& estimate, const TraceOptions& trace, long t, long samples) {
  auto report = sup_metric(estimate, trace.reference, trace.metric);
  return {t, samples, std::move(report.per_state), report.sup};
}

int draw_initial(Rng& rng, std::span<const double> initial, int n_states) {
  if (initial.size() != static_cast<std::size_t>(n_states)) {
    throw ConfigError("initial state law has " + std::to_string(initial.size()) + " entries, expected " +
                      std::to_string(n_states));
  }
  double total = 0.0;
  for (double p : initial) {
    if (!(p >= 0.0)) throw ConfigError("initial state law has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("initial state law does not sum to 1");
  return rng.categorical(initial);
}

}  // namespace detail

namespace {

void validate(const RunConfig& c) {
  if (c.T < 1) throw ConfigError("T must be at least 1");
  if (c.burn_in < 0) throw ConfigError("burn-in must be nonnegative");
  if (c.interval < 1) throw ConfigError("interval must be at least 1");
  if (auto* k = std::get_if<CategoricalRep>(&c.representation); k && k->K < 1) throw ConfigError("K must be at least 1");
  if (auto* b = std::get_if<ParticleRep>(&c.representation); b && b->budget < 2) {
    throw ConfigError("particle budget must be at least 2");
  }
  if (std::holds_alternative<GenerativeSampling>(c.sampling) && (c.burn_in != 0 || c.interval != 1)) {
    throw ConfigError("burn-in and interval apply to Markov sampling only");
  }
  if (c.averaging == Averaging::Polyak && (c.polyak_start < 0 || c.polyak_start >= c.T)) {
    throw ConfigError("Polyak start must lie in [0, T)");
  }
}

template <class Learner>
RunResult drive(const RunConfig& config, Learner& learner, const std::optional<TraceOptions>& trace,
                const UpdateObserver& observer, std::size_t particle_budget) {
  Rng rng(config.seed);
  const TransitionSampler sampler(config.mdp, config.policy);
  RunResult result{learner.model(), {}, 0, 0, 0.0, 0.0, 0.0, config.seed};

  std::vector<long> checkpoints;
  if (trace) {
    checkpoints = trace->checkpoints;
    std::sort(checkpoints.begin(), checkpoints.end());
    checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
  }
  auto next_checkpoint = checkpoints.begin();
  detail::RunningAverage average;
  const bool polyak = config.averaging == Averaging::Polyak;

  const auto estimate = [&]() { return polyak && !average.empty() ? average.value() : learner.model(); };
  const auto after_update = [&](long m, const Transition& tr) {
    const bool at_checkpoint = next_checkpoint != checkpoints.end() && *next_checkpoint == m;
    if (polyak && m > config.polyak_start) average.add(learner.model(), particle_budget);
    if (config.validate_each_step || observer) {
      auto current = learner.model();
      if (observer) observer(m, tr, current);
    }
    if (at_checkpoint) {
      result.trace.push_back(detail::measure(estimate(), *trace, m, result.samples));
      ++next_checkpoint;
    }
  };

  if (next_checkpoint != checkpoints.end() && *next_checkpoint == 0) {
    result.trace.push_back(detail::measure(estimate(), *trace, 0, 0));
    ++next_checkpoint;
  }

  if (auto* gen = std::get_if<GenerativeSampling>(&config.sampling)) {
    for (long t = 1; t <= config.T; ++t) {
      const Transition tr = sampler.generative(rng, gen->config);
      ++result.samples;
      learner.td_update(tr, config.schedule(t));
      ++result.updates;
      after_update(t, tr);
    }
  } else {
    const auto& markov = std::get<MarkovSampling>(config.sampling);
    int s = detail::draw_initial(rng, markov.initial, config.mdp.n_states());
    long m = 0;
    while (m < config.T) {
      const Transition tr = sampler.step(rng, s);
      s = tr.s_next;
      ++result.samples;
      const long since = result.samples - config.burn_in;
      if (since <= 0 || since % config.interval != 0) continue;
      ++m;
      learner.td_update(tr, config.schedule(m));
      ++result.updates;
      after_update(m, tr);
    }
  }
  result.estimate = estimate();
  result.compression_error = average.compression_error();
  return result;
}

}  // namespace

long expected_samples(const RunConfig& config) {
  if (std::holds_alternative<GenerativeSampling>(config.sampling)) return config.T;
  return config.burn_in + config.interval * config.T;
}

RunResult run_td(const RunConfig& config, const std::optional<TraceOptions>& trace,
                 const UpdateObserver& observer) {
  validate(config);
  const int n_states = config.mdp.n_states();
  const double gamma = config.mdp.gamma();
  const ReturnModel init = detail::initial_model(config.init, config.representation, n_states, gamma);
  if (auto* cat = std::get_if<CategoricalRep>(&config.representation)) {
    detail::CategoricalLearner learner(SupportGrid(cat->K, gamma), init, detail::reward_values(config.mdp));
    return drive(config, learner, trace, observer, 0);
  }
  const auto budget = std::get<ParticleRep>(config.representation).budget;
  detail::ParticleLearner learner(init, budget, gamma);
  auto result = drive(config, learner, trace, observer, budget);
  result.compression_error += learner.compression_error;
  return result;
}

RunResult run_td_datadrop(const RunConfig& config, const std::optional<TraceOptions>& trace) {
  if (!std::holds_alternative<MarkovSampling>(config.sampling)) {
    throw ConfigError("data-drop runs need Markov sampling");
  }
  check_ergodic(induced_kernel(config.mdp, config.policy));
  return run_td(config, trace);
}

ReturnModel polyak_average(std::span<const ReturnModel> history, std::size_t start, std::size_t particle_budget) {
  if (start >= history.size()) throw ConfigError("polyak_average: empty tail");
  const auto& first = history[start];
  const double w = 1.0 / static_cast<double>(history.size() - start);
  std::vector<Distribution> out;
  for (std::size_t s = 0; s < first.n_states(); ++s) {
    std::vector<std::pair<double, Distribution>> parts;
    for (std::size_t i = start; i < history.size(); ++i) parts.emplace_back(w, history[i][s]);
    Distribution mixed = mix(parts);
    if (auto* p = std::get_if<ParticleDist>(&mixed)) mixed = compress(*p, particle_budget).dist;
    out.push_back(std::move(mixed));
  }
  return ReturnModel(std::move(out));
}

}  // namespace disteval
