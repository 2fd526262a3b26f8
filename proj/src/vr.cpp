#include <algorithm>
#include <cmath>
#include <string>

#include "disteval/agents.hpp"
#include "learner.hpp"

namespace disteval {

ReferenceOperator build_reference_operator(std::span<const Transition> samples, const ReturnModel& model,
                                           double gamma) {
  if (samples.empty()) throw ConfigError("build_reference_operator: no samples");
  const auto n_states = model.n_states();
  ReferenceOperator out{std::vector<ParticleDist>(n_states, ParticleDist::dirac(0.0)),
                        std::vector<long>(n_states, 0)};
  for (const auto& t : samples) ++out.counts.at(t.s);
  std::vector<std::vector<Atom>> atoms(n_states);
  for (const auto& t : samples) {
    const double w = 1.0 / static_cast<double>(out.counts[t.s]);
    for (const auto& a : atoms_of(model[t.s_next])) atoms[t.s].push_back({t.r + gamma * a.x, w * a.w});
  }
  for (std::size_t s = 0; s < n_states; ++s) {
    if (out.counts[s] == 0) continue;
    const double total = total_weight(atoms[s]);
    for (auto& a : atoms[s]) a.w /= total;
    out.per_state[s] = ParticleDist(std::move(atoms[s]));
  }
  return out;
}

namespace {

void validate(const VRConfig& c) {
  if (c.epochs < 1) throw ConfigError("VR: epochs must be at least 1");
  if (c.recentering < 1) throw ConfigError("VR: recentering length must be at least 1");
  if (c.epoch_length < 0) throw ConfigError("VR: epoch length must be nonnegative");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("VR: alpha must lie in (0, 1)");
  if (auto* k = std::get_if<CategoricalRep>(&c.representation); k && k->K < 1) throw ConfigError("K must be at least 1");
  if (auto* b = std::get_if<ParticleRep>(&c.representation); b && b->budget < 2) {
    throw ConfigError("particle budget must be at least 2");
  }
}

void require_visited(const std::vector<long>& counts, int epoch) {
  for (std::size_t s = 0; s < counts.size(); ++s) {
    if (counts[s] == 0) {
      throw ConfigError("VR epoch " + std::to_string(epoch) + ": state " + std::to_string(s) +
                        " was not visited by the recentering batch; increase N");
    }
  }
}

// Sign-free version of cur' - ref' + tilde: the CDF of the signed combination
// is replaced by its running maximum clamped to [0, 1]. Returns the W1 cost.
double rectify(const ParticleDist& plus_a, const ParticleDist& minus, const ParticleDist& plus_b,
               std::vector<Atom>& out) {
  std::vector<Atom> signed_atoms;
  for (const auto& a : plus_a.atoms()) signed_atoms.push_back(a);
  for (const auto& a : plus_b.atoms()) signed_atoms.push_back(a);
  for (const auto& a : minus.atoms()) signed_atoms.push_back({a.x, -a.w});
  std::sort(signed_atoms.begin(), signed_atoms.end(), [](const Atom& l, const Atom& r) { return l.x < r.x; });

  out.clear();
  double raw = 0.0;
  double level = 0.0;
  double cost = 0.0;
  for (std::size_t i = 0; i < signed_atoms.size();) {
    const double x = signed_atoms[i].x;
    while (i < signed_atoms.size() && signed_atoms[i].x == x) raw += signed_atoms[i++].w;
    const bool last = i == signed_atoms.size();
    const double target = last ? 1.0 : std::clamp(std::max(level, raw), 0.0, 1.0);
    if (target > level) out.push_back({x, target - level});
    level = target;
    if (!last) cost += std::abs(raw - level) * (signed_atoms[i].x - x);
  }
  return cost;
}

template <class Learner, class Epoch>
RunResult drive_vr(const VRConfig& config, Learner& learner, const std::optional<TraceOptions>& trace,
                   Epoch&& run_epoch) {
  Rng rng(config.seed);
  const TransitionSampler sampler(config.mdp, config.policy);
  RunResult result{learner.model(), {}, 0, 0, 0.0, 0.0, 0.0, config.seed};
  if (trace) result.trace.push_back(detail::measure(result.estimate, *trace, 0, 0));

  int s = detail::draw_initial(rng, config.sampling.initial, config.mdp.n_states());
  std::vector<Transition> batch(static_cast<std::size_t>(config.recentering));
  for (int e = 1; e <= config.epochs; ++e) {
    for (auto& t : batch) {
      t = sampler.step(rng, s);
      s = t.s_next;
    }
    result.samples += config.recentering;
    run_epoch(e, batch, [&]() {
      const Transition t = sampler.step(rng, s);
      s = t.s_next;
      ++result.samples;
      ++result.updates;
      return t;
    });
    if (trace) result.trace.push_back(detail::measure(learner.model(), *trace, e, result.samples));
  }
  result.estimate = learner.model();
  return result;
}

}  // namespace

RunResult run_vr(const VRConfig& config, const std::optional<TraceOptions>& trace) {
  validate(config);
  const int n_states = config.mdp.n_states();
  const double gamma = config.mdp.gamma();
  const ReturnModel init = detail::initial_model(config.init, config.representation, n_states, gamma);

  if (auto* cat = std::get_if<CategoricalRep>(&config.representation)) {
    const SupportGrid grid(cat->K, gamma);
    detail::CategoricalLearner learner(grid, init, detail::reward_values(config.mdp));
    double clipped = 0.0;
    auto result = drive_vr(config, learner, trace, [&](int e, const std::vector<Transition>& batch, auto draw) {
      const auto reference = learner.probs;
      // Projected reference operator at the reference point.
      std::vector<long> counts(n_states, 0);
      for (const auto& t : batch) ++counts[t.s];
      require_visited(counts, e);
      std::vector<std::vector<double>> tilde(n_states, std::vector<double>(grid.size(), 0.0));
      for (const auto& t : batch) {
        learner.shift(t.r).accumulate(reference[t.s_next], 1.0 / static_cast<double>(counts[t.s]), tilde[t.s]);
      }
      std::vector<double> target(grid.size());
      for (long i = 0; i < config.epoch_length; ++i) {
        const Transition t = draw();
        target = tilde[t.s];
        const auto& shift = learner.shift(t.r);
        shift.accumulate(learner.probs[t.s_next], 1.0, target);
        shift.accumulate(reference[t.s_next], -1.0, target);
        double total = 0.0;
        for (double& v : target) {
          if (v < 0.0) {
            clipped -= v;
            v = 0.0;
          }
          total += v;
        }
        for (double& v : target) v /= total;
        learner.blend(t.s, target, config.alpha);
      }
    });
    result.clipped_mass = clipped;
    return result;
  }

  const auto budget = std::get<ParticleRep>(config.representation).budget;
  detail::ParticleLearner learner(init, budget, gamma);
  double rectification = 0.0;
  auto result = drive_vr(config, learner, trace, [&](int e, const std::vector<Transition>& batch, auto draw) {
    const auto reference = learner.dists;
    auto ref_op = build_reference_operator(batch, learner.model(), gamma);
    require_visited(ref_op.counts, e);
    std::vector<ParticleDist> tilde;
    for (auto& d : ref_op.per_state) {
      auto c = compress(d, budget);
      learner.compression_error += c.w1_bound;
      tilde.push_back(std::move(c.dist));
    }
    std::vector<Atom> atoms;
    for (long i = 0; i < config.epoch_length; ++i) {
      const Transition t = draw();
      rectification += rectify(pushforward(learner.dists[t.s_next], t.r, gamma),
                               pushforward(reference[t.s_next], t.r, gamma), tilde[t.s], atoms);
      learner.blend(t.s, ParticleDist(atoms), config.alpha);
    }
  });
  result.rectification_w1 = rectification;
  result.compression_error = learner.compression_error;
  return result;
}

}  // namespace disteval
