#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "disteval/agents.hpp"

namespace disteval {

StepSchedule StepSchedule::theorem42(double c, double mu_min, double gamma) {
  if (!(c > 0.0)) throw ConfigError("step schedule: c must be positive");
  if (!(mu_min > 0.0 && mu_min <= 1.0)) throw ConfigError("step schedule: mu_min must lie in (0, 1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("step schedule: gamma must lie in (0, 1)");
  StepSchedule s;
  s.kind_ = ScheduleKind::Theorem42;
  s.c_ = c;
  s.mu_min_ = mu_min;
  s.gamma_ = gamma;
  return s;
}

StepSchedule StepSchedule::constant(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("step schedule: constant alpha must lie in [0, 1]");
  StepSchedule s;
  s.kind_ = ScheduleKind::Constant;
  s.alpha_ = alpha;
  return s;
}

StepSchedule StepSchedule::custom(std::vector<double> table) {
  if (table.empty()) throw ConfigError("step schedule: custom table is empty");
  for (double a : table) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("step schedule: custom entries must lie in [0, 1]");
  }
  StepSchedule s;
  s.kind_ = ScheduleKind::Custom;
  s.table_ = std::move(table);
  return s;
}

double StepSchedule::operator()(long t) const {
  switch (kind_) {
    case ScheduleKind::Theorem42: {
      const double td = static_cast<double>(std::max(t, 1L));
      const double rate = c_ * mu_min_ * (1.0 - std::sqrt(gamma_)) * td / std::log(std::max(td, 2.0));
      return 1.0 / (1.0 + rate);
    }
    case ScheduleKind::Constant:
      return alpha_;
    case ScheduleKind::Custom:
      return table_[std::min<std::size_t>(static_cast<std::size_t>(std::max(t, 1L) - 1), table_.size() - 1)];
  }
  return 0.0;
}

namespace {

void check_unit(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0)) throw ConfigError(std::string(name) + " must lie in (0, 1)");
}

// Smallest n >= lo with holds(n), given that holds is monotone on [lo, inf).
long smallest_satisfying(long lo, const std::function<bool(long)>& holds) {
  long hi = lo;
  while (!holds(hi)) {
    if (hi > (1L << 60)) throw ConfigError("parameter search diverged");
    hi *= 2;
  }
  while (lo < hi) {
    const long mid = lo + (hi - lo) / 2;
    if (holds(mid)) hi = mid; else lo = mid + 1;
  }
  return lo;
}

// First integer above e^4; past it log^3(T) log(c T) / T is decreasing.
constexpr long kMonotoneFrom = 55;

}  // namespace

int categorical_atoms_for(double eps, double gamma) {
  check_unit(eps, "eps");
  check_unit(gamma, "gamma");
  const double bound = 4.0 / (eps * eps * std::pow(1.0 - gamma, 3));
  // The nudge keeps an exact integer bound from rounding just below itself.
  return static_cast<int>(std::floor(bound * (1.0 + 1e-12))) + 1;
}

GenerativeParameters generative_parameters(double eps, double delta, double gamma, double mu_min, int n_states,
                                           const UniversalConstants& constants) {
  check_unit(eps, "eps");
  check_unit(delta, "delta");
  const double scale = constants.C1 / (eps * eps * mu_min * std::pow(1.0 - gamma, 3));
  const long T = smallest_satisfying(kMonotoneFrom, [&](long t) {
    const double lt = std::log(static_cast<double>(t));
    return static_cast<double>(t) >= scale * lt * lt * lt * std::log(n_states * static_cast<double>(t) / delta);
  });
  return {categorical_atoms_for(eps, gamma), T, StepSchedule::theorem42(constants.c, mu_min, gamma)};
}

long burn_in_for(int t_mix, double delta) {
  check_unit(delta, "delta");
  return static_cast<long>(std::ceil(t_mix * std::log(12.0 / delta)));
}

long interval_for(int t_mix, long T_star, double delta) {
  check_unit(delta, "delta");
  return static_cast<long>(std::ceil(t_mix * std::log(3.0 * static_cast<double>(T_star) / delta)));
}

DataDropParameters datadrop_parameters(double eps, double delta, double gamma, double mu_min, int t_mix,
                                       int n_states, std::optional<long> T_star,
                                       const UniversalConstants& constants) {
  const long updates = T_star ? *T_star : generative_parameters(eps, delta, gamma, mu_min, n_states, constants).T;
  if (updates < 1) throw ConfigError("T_star must be at least 1");
  return {categorical_atoms_for(eps, gamma), burn_in_for(t_mix, delta), interval_for(t_mix, updates, delta), updates,
          StepSchedule::theorem42(constants.c, mu_min, gamma)};
}

double vr_step_size(double c4, int n_states, long epoch_length, double delta, double gamma, int t_mix) {
  check_unit(delta, "delta");
  const double root = 1.0 - std::sqrt(gamma);
  const double cap = std::min(root * root, 1.0 / t_mix);
  return c4 / std::log(n_states * static_cast<double>(epoch_length) / delta) * cap;
}

VRParameters vr_parameters(double eps, double delta, double gamma, double mu_min, int t_mix, int n_states,
                           const UniversalConstants& constants) {
  check_unit(eps, "eps");
  check_unit(delta, "delta");
  const double horizon3 = 1.0 / std::pow(1.0 - gamma, 3);
  const double log_eps = std::log(1.0 / (eps * (1.0 - gamma) * (1.0 - gamma)));
  const int E = std::max(1, static_cast<int>(std::ceil(constants.C1 * log_eps)));
  const double n_scale = constants.C2 / mu_min * (horizon3 / (eps * eps) + t_mix);
  const long N = smallest_satisfying(3, [&](long n) {
    return static_cast<double>(n) >= n_scale * std::log(n_states * static_cast<double>(n) / delta);
  });
  const double e_scale = constants.C3 / mu_min * (horizon3 + t_mix) * std::max(log_eps, 1e-300);
  const long t_epoch = smallest_satisfying(3, [&](long n) {
    return static_cast<double>(n) >= e_scale * std::log(n_states * static_cast<double>(n) / delta);
  });
  return {categorical_atoms_for(eps, gamma), E, N, t_epoch,
          vr_step_size(constants.c4, n_states, t_epoch, delta, gamma, t_mix)};
}

}  // namespace disteval
