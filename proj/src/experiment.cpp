#include "disteval/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "disteval/agents.hpp"
#include "disteval/bellman.hpp"
#include "disteval/concentration.hpp"
#include "disteval/report.hpp"

namespace disteval {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const auto number = [&](const std::string& part) -> std::uint64_t {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      throw SpecError("seed list: '" + part + "' is not a nonnegative integer");
    }
    try {
      return std::stoull(part);
    } catch (const std::exception&) {
      throw SpecError("seed list: '" + part + "' is out of range");
    }
  };
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (const auto dash = item.find('-'); dash != std::string::npos) {
      const auto lo = number(item.substr(0, dash));
      const auto hi = number(item.substr(dash + 1));
      if (hi < lo) throw SpecError("seed list: empty range '" + item + "'");
      if (hi - lo >= 1'000'000) throw SpecError("seed list: range '" + item + "' is too long");
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
      seeds.push_back(number(item));
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  std::set<std::uint64_t> seen;
  for (auto s : seeds) {
    if (!seen.insert(s).second) throw SpecError("seed list: seed " + std::to_string(s) + " appears twice");
  }
  return seeds;
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& job) {
  const auto n_threads = static_cast<std::size_t>(std::clamp<long>(workers, 1, static_cast<long>(std::max<std::size_t>(count, 1))));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  const auto work = [&]() {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

// ---------------------------------------------------------------------------
// Field access with schema diagnostics.

const Json& field(const Json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw SpecError(where + ": missing key '" + key + "'");
  return j.at(key);
}

double number_of(const Json& v, const std::string& what) {
  if (!v.is_number()) throw SpecError(what + " must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw SpecError(what + " must be finite");
  return x;
}

long integer_of(const Json& v, const std::string& what) {
  if (v.is_number_integer()) return v.get<long>();
  if (v.is_number_float()) {
    const double x = v.get<double>();
    if (std::isfinite(x) && x == std::floor(x) && std::abs(x) < 9e15) return static_cast<long>(x);
  }
  throw SpecError(what + " must be an integer");
}

std::string string_of(const Json& v, const std::string& what) {
  if (!v.is_string()) throw SpecError(what + " must be a string");
  return v.get<std::string>();
}

std::vector<double> numbers_of(const Json& v, const std::string& what) {
  if (!v.is_array()) throw SpecError(what + " must be an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number_of(v[i], what + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<long> integers_of(const Json& v, const std::string& what) {
  if (!v.is_array()) throw SpecError(what + " must be an array of integers");
  std::vector<long> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(integer_of(v[i], what + "[" + std::to_string(i) + "]"));
  return out;
}

long positive_integer(const Json& j, const std::string& key, const std::string& where, long fallback) {
  const long v = j.contains(key) ? integer_of(j.at(key), where + "." + key) : fallback;
  if (v < 1) throw SpecError(where + "." + key + " must be at least 1");
  return v;
}

double unit_open(const Json& j, const std::string& key, const std::string& where, double fallback) {
  const double v = j.contains(key) ? number_of(j.at(key), where + "." + key) : fallback;
  if (!(v > 0.0 && v < 1.0)) throw SpecError(where + "." + key + " must lie in (0, 1)");
  return v;
}

double positive_number(const Json& j, const std::string& key, const std::string& where, double fallback) {
  const double v = j.contains(key) ? number_of(j.at(key), where + "." + key) : fallback;
  if (!(v > 0.0)) throw SpecError(where + "." + key + " must be positive");
  return v;
}

// ---------------------------------------------------------------------------
// Shared pieces of the schema.

MDPFile load_mdp_value(const Json& v) {
  if (v.is_string()) return load_gallery(v.get<std::string>());
  if (v.is_object() && v.contains("file")) {
    reject_unknown_keys(v, {"file"}, "mdp");
    return load_mdp_file(string_of(v.at("file"), "mdp.file"));
  }
  if (v.is_object()) return mdp_from_json(v, "mdp");
  throw SpecError("mdp must be a gallery name, {\"file\": path} or an inline MDP object");
}

Json metric_to_json(MetricSpec m) {
  switch (m.kind) {
    case MetricKind::W1: return "w1";
    case MetricKind::Cramer: return "cramer";
    case MetricKind::Wp: break;
  }
  Json j;
  j["kind"] = "wp";
  j["p"] = m.p;
  return j;
}

MetricSpec metric_from_json(const Json& v, const std::string& where) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "w1") return MetricSpec::w1();
    if (s == "cramer") return MetricSpec::cramer();
    throw SpecError(where + ": unknown metric '" + s + "'");
  }
  reject_unknown_keys(v, {"kind", "p"}, where);
  if (string_of(field(v, "kind", where), where + ".kind") != "wp") throw SpecError(where + ": unknown metric kind");
  const double p = number_of(field(v, "p", where), where + ".p");
  if (!(p >= 1.0)) throw SpecError(where + ".p must be at least 1");
  return p == 1.0 ? MetricSpec::w1() : MetricSpec::wasserstein(p);
}

std::vector<double> law_of(const Json& v, int n_states, const std::string& what) {
  auto law = numbers_of(v, what);
  if (static_cast<int>(law.size()) != n_states) throw SpecError(what + " must have one entry per state");
  double total = 0.0;
  for (double p : law) {
    if (p < 0.0) throw SpecError(what + " has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw SpecError(what + " must sum to 1");
  return law;
}

std::vector<double> uniform_law(int n) { return std::vector<double>(n, 1.0 / n); }

Json resolve_schedule(const Json* raw, double default_mu_min, double gamma, const std::string& where) {
  Json out;
  if (!raw) {
    out["kind"] = "theorem42";
    out["c"] = 1.0;
    out["mu_min"] = default_mu_min;
    return out;
  }
  const auto kind = raw->is_string() ? raw->get<std::string>() : string_of(field(*raw, "kind", where), where + ".kind");
  const Json obj = raw->is_string() ? Json::object() : *raw;
  if (kind == "theorem42") {
    reject_unknown_keys(obj.empty() ? Json::object() : obj, {"kind", "c", "mu_min"}, where);
    out["kind"] = kind;
    out["c"] = positive_number(obj, "c", where, 1.0);
    out["mu_min"] = obj.contains("mu_min") ? number_of(obj.at("mu_min"), where + ".mu_min") : default_mu_min;
  } else if (kind == "constant") {
    reject_unknown_keys(obj, {"kind", "alpha"}, where);
    out["kind"] = kind;
    out["alpha"] = number_of(field(obj, "alpha", where), where + ".alpha");
  } else if (kind == "custom") {
    reject_unknown_keys(obj, {"kind", "table"}, where);
    out["kind"] = kind;
    out["table"] = numbers_of(field(obj, "table", where), where + ".table");
  } else {
    throw SpecError(where + ": unknown schedule kind '" + kind + "'");
  }
  try {
    (void)[&] {
      if (kind == "theorem42") return StepSchedule::theorem42(out["c"].get<double>(), out["mu_min"].get<double>(), gamma);
      if (kind == "constant") return StepSchedule::constant(out["alpha"].get<double>());
      return StepSchedule::custom(out["table"].get<std::vector<double>>());
    }();
  } catch (const ConfigError& e) {
    throw SpecError(where + ": " + e.what());
  }
  return out;
}

StepSchedule schedule_from(const Json& j, double gamma) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "theorem42") return StepSchedule::theorem42(j.at("c").get<double>(), j.at("mu_min").get<double>(), gamma);
  if (kind == "constant") return StepSchedule::constant(j.at("alpha").get<double>());
  return StepSchedule::custom(j.at("table").get<std::vector<double>>());
}

Json resolve_reference(const Json* raw, int default_K, const std::string& where) {
  Json out;
  const std::string kind = raw ? string_of(field(*raw, "kind", where), where + ".kind") : "dcfp";
  if (kind == "dcfp") {
    if (raw) reject_unknown_keys(*raw, {"kind", "K"}, where);
    out["kind"] = kind;
    out["K"] = raw ? positive_integer(*raw, "K", where, default_K) : default_K;
  } else if (kind == "dp") {
    reject_unknown_keys(*raw, {"kind", "tol", "particle_budget", "max_iter"}, where);
    out["kind"] = kind;
    out["tol"] = positive_number(*raw, "tol", where, 1e-6);
    out["particle_budget"] = positive_integer(*raw, "particle_budget", where, 2048);
    out["max_iter"] = positive_integer(*raw, "max_iter", where, 100000);
  } else {
    throw SpecError(where + ": unknown reference kind '" + kind + "'");
  }
  return out;
}

ReturnModel reference_model(const Json& ref, const MDPFile& file) {
  if (ref.at("kind") == "dcfp") {
    return dcfp_solve(file.mdp, file.policy, SupportGrid(ref.at("K").get<int>(), file.mdp.gamma())).model;
  }
  DPOptions options;
  options.tol = ref.at("tol").get<double>();
  options.particle_budget = ref.at("particle_budget").get<std::size_t>();
  options.max_iter = ref.at("max_iter").get<int>();
  return distributional_dp(file.mdp, file.policy, dp_default_init(file.mdp.n_states(), options), options).model;
}

std::vector<long> default_checkpoints(long T) {
  std::set<long> points = {0, T};
  for (int i = 1; i < 24; ++i) points.insert(std::lround(std::pow(static_cast<double>(T), i / 24.0)));
  return {points.begin(), points.end()};
}

Json resolve_checkpoints(const Json& raw, long T, const std::string& where) {
  std::vector<long> points = raw.contains("checkpoints") ? integers_of(raw.at("checkpoints"), where + ".checkpoints")
                                                          : default_checkpoints(T);
  for (long p : points) {
    if (p < 0 || p > T) throw SpecError(where + ": checkpoint " + std::to_string(p) + " lies outside [0, T]");
  }
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.empty() || points.back() != T) points.push_back(T);
  return points;
}

std::optional<ChainInfo> try_chain(const MDPFile& file) {
  try {
    return ChainInfo::analyze(file.mdp, file.policy);
  } catch (const ChainError&) {
    return std::nullopt;
  }
}

ChainInfo require_chain(const MDPFile& file, const std::string& where) {
  auto info = try_chain(file);
  if (!info) check_ergodic(induced_kernel(file.mdp, file.policy));  // rethrows with the precise reason
  if (!info) throw ChainError(where + ": induced chain is not ergodic");
  return *info;
}

Json resolve_seeds(const Json& raw, const std::optional<std::vector<std::uint64_t>>& override_seeds,
                   const std::string& where) {
  if (override_seeds) {
    if (override_seeds->empty()) throw SpecError("seed list is empty");
    return *override_seeds;
  }
  if (!raw.contains("seeds")) return std::vector<std::uint64_t>{0};
  const auto& v = raw.at("seeds");
  std::vector<std::uint64_t> seeds;
  if (v.is_string()) {
    seeds = parse_seed_list(v.get<std::string>());
  } else if (v.is_array()) {
    for (const auto& s : v) {
      if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long>() >= 0)) {
        throw SpecError(where + ".seeds entries must be nonnegative integers");
      }
      seeds.push_back(s.get<std::uint64_t>());
    }
  } else {
    throw SpecError(where + ".seeds must be an array or a range string");
  }
  if (seeds.empty()) throw SpecError(where + ".seeds is empty");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw SpecError(where + ".seeds has duplicates");
  return seeds;
}

// ---------------------------------------------------------------------------
// Per-kind resolution.

Json resolve_dp(const Json& raw, const MDPFile& file) {
  const std::string where = "dp";
  reject_unknown_keys(raw, {"kind", "mdp", "representation", "metric", "tol", "max_iter"}, where);
  Json out;
  out["kind"] = "dp";
  out["mdp"] = to_json(file);
  Json rep;
  if (raw.contains("representation")) {
    const auto& r = raw.at("representation");
    const auto kind = string_of(field(r, "kind", where + ".representation"), where + ".representation.kind");
    if (kind == "categorical") {
      reject_unknown_keys(r, {"kind", "K"}, where + ".representation");
      rep["kind"] = kind;
      rep["K"] = positive_integer(r, "K", where + ".representation", 64);
    } else if (kind == "particle") {
      reject_unknown_keys(r, {"kind", "budget"}, where + ".representation");
      rep["kind"] = kind;
      rep["budget"] = positive_integer(r, "budget", where + ".representation", 1024);
      if (rep["budget"].get<long>() < 2) throw SpecError(where + ".representation.budget must be at least 2");
    } else {
      throw SpecError(where + ".representation: unknown kind '" + kind + "'");
    }
  } else {
    rep["kind"] = "particle";
    rep["budget"] = 1024;
  }
  out["representation"] = rep;
  const auto metric = raw.contains("metric") ? metric_from_json(raw.at("metric"), where + ".metric") : MetricSpec::w1();
  if (rep["kind"] == "categorical" && metric.kind == MetricKind::Wp) {
    throw SpecError(where + ": projected iteration supports the w1 and cramer metrics only");
  }
  out["metric"] = metric_to_json(metric);
  out["tol"] = positive_number(raw, "tol", where, 1e-8);
  out["max_iter"] = positive_integer(raw, "max_iter", where, 100000);
  return out;
}

Json resolve_dcfp(const Json& raw, const MDPFile& file) {
  const std::string where = "dcfp";
  reject_unknown_keys(raw, {"kind", "mdp", "K", "max_dimension"}, where);
  Json out;
  out["kind"] = "dcfp";
  out["mdp"] = to_json(file);
  out["K"] = positive_integer(raw, "K", where, 64);
  out["max_dimension"] = positive_integer(raw, "max_dimension", where, 200000);
  return out;
}

Json resolve_td(const Json& raw, const MDPFile& file, const std::string& kind,
                const std::optional<std::vector<std::uint64_t>>& seeds) {
  const std::string where = kind;
  const bool categorical = kind == "ctd";
  reject_unknown_keys(raw,
                      {"kind", "mdp", categorical ? "K" : "particle_budget", "sampling", "T", "schedule",
                       "averaging", "checkpoints", "metric", "reference", "seeds", "validate_each_step"},
                      where);
  const int S = file.mdp.n_states();
  Json out;
  out["kind"] = kind;
  out["mdp"] = to_json(file);
  if (categorical) {
    out["K"] = positive_integer(raw, "K", where, 64);
  } else {
    out["particle_budget"] = positive_integer(raw, "particle_budget", where, 256);
    if (out["particle_budget"].get<long>() < 2) throw SpecError(where + ".particle_budget must be at least 2");
  }

  Json sampling;
  double mu_min = 0.0;
  const Json* sraw = raw.contains("sampling") ? &raw.at("sampling") : nullptr;
  const std::string skind = !sraw ? "generative"
                            : sraw->is_string() ? sraw->get<std::string>()
                                                : string_of(field(*sraw, "kind", where + ".sampling"), where + ".sampling.kind");
  if (skind == "generative") {
    if (sraw && sraw->is_object()) reject_unknown_keys(*sraw, {"kind", "mu"}, where + ".sampling");
    std::vector<double> mu = sraw && sraw->is_object() && sraw->contains("mu")
                                 ? law_of(sraw->at("mu"), S, where + ".sampling.mu")
                                 : (file.mu ? *file.mu : uniform_law(S));
    try {
      mu_min = GenerativeConfig(mu).mu_min;
    } catch (const std::exception& e) {
      throw SpecError(where + ".sampling.mu: " + e.what());
    }
    sampling["kind"] = skind;
    sampling["mu"] = mu;
  } else if (skind == "markov") {
    if (sraw && sraw->is_object()) reject_unknown_keys(*sraw, {"kind", "initial"}, where + ".sampling");
    sampling["kind"] = skind;
    sampling["initial"] = sraw && sraw->is_object() && sraw->contains("initial")
                              ? law_of(sraw->at("initial"), S, where + ".sampling.initial")
                              : uniform_law(S);
    mu_min = require_chain(file, where).mu_min;
  } else {
    throw SpecError(where + ".sampling: unknown kind '" + skind + "'");
  }
  out["sampling"] = sampling;

  const long T = positive_integer(raw, "T", where, 10000);
  out["T"] = T;
  out["schedule"] = resolve_schedule(raw.contains("schedule") ? &raw.at("schedule") : nullptr, mu_min,
                                     file.mdp.gamma(), where + ".schedule");
  Json averaging;
  if (!raw.contains("averaging") || raw.at("averaging") == "last") {
    averaging = "last";
  } else {
    const auto& a = raw.at("averaging");
    reject_unknown_keys(a, {"kind", "start"}, where + ".averaging");
    if (string_of(field(a, "kind", where + ".averaging"), where + ".averaging.kind") != "polyak") {
      throw SpecError(where + ".averaging: kind must be 'polyak'");
    }
    const long start = a.contains("start") ? integer_of(a.at("start"), where + ".averaging.start") : T / 2;
    if (start < 0 || start >= T) throw SpecError(where + ".averaging.start must lie in [0, T)");
    averaging["kind"] = "polyak";
    averaging["start"] = start;
  }
  out["averaging"] = averaging;
  out["checkpoints"] = resolve_checkpoints(raw, T, where);
  out["metric"] = metric_to_json(raw.contains("metric") ? metric_from_json(raw.at("metric"), where + ".metric")
                                                         : MetricSpec::w1());
  out["reference"] = resolve_reference(raw.contains("reference") ? &raw.at("reference") : nullptr,
                                       categorical ? out["K"].get<int>() : 4096, where + ".reference");
  out["validate_each_step"] = raw.contains("validate_each_step") ? raw.at("validate_each_step").get<bool>() : false;
  out["seeds"] = resolve_seeds(raw, seeds, where);
  return out;
}

Json constants_to_json(const UniversalConstants& c) {
  Json j;
  j["C1"] = c.C1;
  j["C2"] = c.C2;
  j["C3"] = c.C3;
  j["c"] = c.c;
  j["c4"] = c.c4;
  return j;
}

UniversalConstants constants_from(const Json& raw, const std::string& where) {
  UniversalConstants c;
  if (!raw.contains("constants")) return c;
  const auto& j = raw.at("constants");
  const std::string w = where + ".constants";
  reject_unknown_keys(j, {"C1", "C2", "C3", "c", "c4"}, w);
  c.C1 = positive_number(j, "C1", w, c.C1);
  c.C2 = positive_number(j, "C2", w, c.C2);
  c.C3 = positive_number(j, "C3", w, c.C3);
  c.c = positive_number(j, "c", w, c.c);
  c.c4 = positive_number(j, "c4", w, c.c4);
  return c;
}

Json resolve_datadrop(const Json& raw, const MDPFile& file, const std::optional<std::vector<std::uint64_t>>& seeds) {
  const std::string where = "datadrop";
  reject_unknown_keys(raw,
                      {"kind", "mdp", "K", "initial", "T_star", "eps", "delta", "T0", "q", "schedule", "checkpoints",
                       "metric", "reference", "constants", "seeds"},
                      where);
  const int S = file.mdp.n_states();
  const auto chain = require_chain(file, where);
  const auto constants = constants_from(raw, where);
  Json out;
  out["kind"] = "datadrop";
  out["mdp"] = to_json(file);
  out["K"] = positive_integer(raw, "K", where, 64);
  out["initial"] = raw.contains("initial") ? law_of(raw.at("initial"), S, where + ".initial") : uniform_law(S);
  const double delta = unit_open(raw, "delta", where, 0.1);
  std::optional<long> T_star;
  if (raw.contains("T_star")) T_star = positive_integer(raw, "T_star", where, 1);
  std::optional<double> eps;
  if (raw.contains("eps")) eps = unit_open(raw, "eps", where, 0.1);
  if (!T_star && !eps) throw SpecError(where + ": give T_star or eps");
  DataDropParameters params = [&] {
    try {
      return datadrop_parameters(eps.value_or(0.5), delta, file.mdp.gamma(), chain.mu_min, chain.t_mix, S, T_star,
                                 constants);
    } catch (const ConfigError& e) {
      throw SpecError(where + ": " + e.what());
    }
  }();
  out["T_star"] = params.T_star;
  if (eps) out["eps"] = *eps;
  out["delta"] = delta;
  out["T0"] = raw.contains("T0") ? integer_of(raw.at("T0"), where + ".T0") : params.T0;
  out["q"] = positive_integer(raw, "q", where, params.q);
  if (out["T0"].get<long>() < 0) throw SpecError(where + ".T0 must be nonnegative");
  Json default_schedule;
  const Json* sraw = raw.contains("schedule") ? &raw.at("schedule") : nullptr;
  if (!sraw) {
    default_schedule["kind"] = "theorem42";
    default_schedule["c"] = constants.c;
    sraw = &default_schedule;
  }
  out["schedule"] = resolve_schedule(sraw, chain.mu_min, file.mdp.gamma(), where + ".schedule");
  out["checkpoints"] = resolve_checkpoints(raw, params.T_star, where);
  out["metric"] = metric_to_json(raw.contains("metric") ? metric_from_json(raw.at("metric"), where + ".metric")
                                                         : MetricSpec::w1());
  out["reference"] = resolve_reference(raw.contains("reference") ? &raw.at("reference") : nullptr,
                                       out["K"].get<int>(), where + ".reference");
  out["constants"] = constants_to_json(constants);
  out["seeds"] = resolve_seeds(raw, seeds, where);
  return out;
}

Json resolve_vr(const Json& raw, const MDPFile& file, const std::optional<std::vector<std::uint64_t>>& seeds) {
  const std::string where = "vr";
  reject_unknown_keys(raw,
                      {"kind", "mdp", "representation", "initial", "epochs", "N", "t_epoch", "alpha", "eps", "delta",
                       "metric", "reference", "constants", "seeds"},
                      where);
  const int S = file.mdp.n_states();
  const auto chain = require_chain(file, where);
  const auto constants = constants_from(raw, where);
  Json out;
  out["kind"] = "vr";
  out["mdp"] = to_json(file);
  Json rep;
  if (raw.contains("representation")) {
    const auto& r = raw.at("representation");
    const auto kind = string_of(field(r, "kind", where + ".representation"), where + ".representation.kind");
    rep["kind"] = kind;
    if (kind == "categorical") {
      reject_unknown_keys(r, {"kind", "K"}, where + ".representation");
      rep["K"] = positive_integer(r, "K", where + ".representation", 64);
    } else if (kind == "particle") {
      reject_unknown_keys(r, {"kind", "budget"}, where + ".representation");
      rep["budget"] = positive_integer(r, "budget", where + ".representation", 256);
      if (rep["budget"].get<long>() < 2) throw SpecError(where + ".representation.budget must be at least 2");
    } else {
      throw SpecError(where + ".representation: unknown kind '" + kind + "'");
    }
  } else {
    rep["kind"] = "categorical";
    rep["K"] = 64;
  }
  out["representation"] = rep;
  out["initial"] = raw.contains("initial") ? law_of(raw.at("initial"), S, where + ".initial") : uniform_law(S);
  const double delta = unit_open(raw, "delta", where, 0.1);
  std::optional<VRParameters> theorem;
  if (raw.contains("eps")) {
    try {
      theorem = vr_parameters(unit_open(raw, "eps", where, 0.1), delta, file.mdp.gamma(), chain.mu_min, chain.t_mix,
                              S, constants);
    } catch (const ConfigError& e) {
      throw SpecError(where + ": " + e.what());
    }
    out["eps"] = raw.at("eps");
  }
  const auto need = [&](const char* key, long from_theorem) {
    if (raw.contains(key)) return integer_of(raw.at(key), where + "." + key);
    if (!theorem) throw SpecError(where + ": give '" + key + "' or eps");
    return from_theorem;
  };
  out["epochs"] = need("epochs", theorem ? theorem->E : 0);
  out["N"] = need("N", theorem ? theorem->N : 0);
  out["t_epoch"] = need("t_epoch", theorem ? theorem->t_epoch : 0);
  if (out["epochs"].get<long>() < 1) throw SpecError(where + ".epochs must be at least 1");
  if (out["N"].get<long>() < 1) throw SpecError(where + ".N must be at least 1");
  if (out["t_epoch"].get<long>() < 0) throw SpecError(where + ".t_epoch must be nonnegative");
  out["delta"] = delta;
  double alpha = 0.0;
  if (raw.contains("alpha")) {
    alpha = number_of(raw.at("alpha"), where + ".alpha");
  } else {
    alpha = vr_step_size(constants.c4, S, std::max(out["t_epoch"].get<long>(), 1L), delta, file.mdp.gamma(),
                         chain.t_mix);
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw SpecError(where + ".alpha must lie in [0, 1]");
  out["alpha"] = alpha;
  out["metric"] = metric_to_json(raw.contains("metric") ? metric_from_json(raw.at("metric"), where + ".metric")
                                                         : MetricSpec::cramer());
  out["reference"] = resolve_reference(raw.contains("reference") ? &raw.at("reference") : nullptr,
                                       rep["kind"] == "categorical" ? rep["K"].get<int>() : 4096,
                                       where + ".reference");
  out["constants"] = constants_to_json(constants);
  out["seeds"] = resolve_seeds(raw, seeds, where);
  return out;
}

const char* embedding_name(Embedding e) { return e == Embedding::Euclidean ? "euclidean" : "cramer"; }

const char* generator_name(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::Zero: return "zero";
    case GeneratorKind::IidBounded: return "iid";
    case GeneratorKind::StateDependent: return "state";
    case GeneratorKind::VarianceBurst: return "burst";
  }
  return "";
}

Json martingale_to_json(const MartingaleSpec& s, int H, double sigma2) {
  Json j;
  j["name"] = s.name;
  j["embedding"] = embedding_name(s.embedding);
  j["dimension"] = s.dimension;
  j["grid_gamma"] = s.grid_gamma;
  j["generator"] = generator_name(s.kind);
  j["b"] = s.b;
  j["n"] = s.n;
  j["burst_begin"] = s.burst_begin;
  j["burst_end"] = s.burst_end;
  j["quiet_prob"] = s.quiet_prob;
  j["H"] = H;
  j["sigma2"] = sigma2;
  return j;
}

MartingaleSpec martingale_from_json(const Json& j, const std::string& where) {
  reject_unknown_keys(j,
                      {"name", "embedding", "dimension", "grid_gamma", "generator", "b", "n", "burst_begin",
                       "burst_end", "quiet_prob", "H", "sigma2"},
                      where);
  MartingaleSpec s;
  s.name = j.contains("name") ? string_of(j.at("name"), where + ".name") : where;
  const auto embedding = j.contains("embedding") ? string_of(j.at("embedding"), where + ".embedding") : "euclidean";
  if (embedding == "euclidean") {
    s.embedding = Embedding::Euclidean;
  } else if (embedding == "cramer") {
    s.embedding = Embedding::Cramer;
  } else {
    throw SpecError(where + ".embedding: unknown value '" + embedding + "'");
  }
  s.dimension = static_cast<int>(positive_integer(j, "dimension", where, s.embedding == Embedding::Euclidean ? 8 : 32));
  s.grid_gamma = j.contains("grid_gamma") ? number_of(j.at("grid_gamma"), where + ".grid_gamma") : 0.5;
  const auto gen = j.contains("generator") ? string_of(j.at("generator"), where + ".generator") : "iid";
  if (gen == "zero") {
    s.kind = GeneratorKind::Zero;
  } else if (gen == "iid") {
    s.kind = GeneratorKind::IidBounded;
  } else if (gen == "state") {
    s.kind = GeneratorKind::StateDependent;
  } else if (gen == "burst") {
    s.kind = GeneratorKind::VarianceBurst;
  } else {
    throw SpecError(where + ".generator: unknown value '" + gen + "'");
  }
  s.b = positive_number(j, "b", where, 1.0);
  s.n = static_cast<int>(positive_integer(j, "n", where, 100));
  s.burst_begin = static_cast<int>(j.contains("burst_begin") ? integer_of(j.at("burst_begin"), where + ".burst_begin")
                                                             : s.n / 2);
  s.burst_end = static_cast<int>(j.contains("burst_end") ? integer_of(j.at("burst_end"), where + ".burst_end")
                                                         : s.burst_begin + std::max(1, s.n / 50));
  s.quiet_prob = j.contains("quiet_prob") ? number_of(j.at("quiet_prob"), where + ".quiet_prob") : s.quiet_prob;
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw SpecError(where + ": " + e.what());
  }
  return s;
}

Json resolve_freedman(const Json& raw, const std::optional<std::vector<std::uint64_t>>& seeds) {
  const std::string where = "freedman";
  reject_unknown_keys(raw, {"kind", "specs", "deltas", "trials", "dump_trials", "seeds"}, where);
  Json out;
  out["kind"] = "freedman";
  Json specs = Json::array();
  const auto add = [&](const MartingaleSpec& s, const Json& j, const std::string& w) {
    const int H = j.contains("H") ? static_cast<int>(positive_integer(j, "H", w, 1)) : variance_floor_levels(s);
    const double sigma2 = j.contains("sigma2") ? positive_number(j, "sigma2", w, 1.0) : s.variance_cap();
    if (sigma2 < s.variance_cap() * (1.0 - 1e-12)) {
      throw SpecError(w + ".sigma2 is below the almost-sure bound on W_n of this generator");
    }
    specs.push_back(martingale_to_json(s, H, sigma2));
  };
  if (!raw.contains("specs") || raw.at("specs") == "shipped") {
    for (const auto& s : shipped_martingale_specs()) add(s, Json::object(), where + ".specs");
  } else {
    const auto& list = raw.at("specs");
    if (!list.is_array() || list.empty()) throw SpecError(where + ".specs must be \"shipped\" or a nonempty array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string w = where + ".specs[" + std::to_string(i) + "]";
      add(martingale_from_json(list[i], w), list[i], w);
    }
  }
  out["specs"] = specs;
  const auto deltas = raw.contains("deltas") ? numbers_of(raw.at("deltas"), where + ".deltas")
                                             : std::vector<double>{0.2, 0.05};
  if (deltas.empty()) throw SpecError(where + ".deltas is empty");
  for (double d : deltas) {
    if (!(d > 0.0 && d < 1.0)) throw SpecError(where + ".deltas entries must lie in (0, 1)");
  }
  out["deltas"] = deltas;
  out["trials"] = positive_integer(raw, "trials", where, 10000);
  if (out["trials"].get<long>() < 1000) throw SpecError(where + ".trials must be at least 1000");
  out["dump_trials"] = raw.contains("dump_trials") ? integer_of(raw.at("dump_trials"), where + ".dump_trials") : 5;
  if (out["dump_trials"].get<long>() < 0 || out["dump_trials"].get<long>() > out["trials"].get<long>()) {
    throw SpecError(where + ".dump_trials must lie in [0, trials]");
  }
  out["seeds"] = resolve_seeds(raw, seeds, where);
  return out;
}

Json resolve_any(const Json& raw, const std::optional<std::vector<std::uint64_t>>& seeds);

Json resolve_sweep(const Json& raw, const std::optional<std::vector<std::uint64_t>>& seeds) {
  const std::string where = "sweep";
  reject_unknown_keys(raw, {"kind", "base", "param", "values", "seeds"}, where);
  const auto& base = field(raw, "base", where);
  if (!base.is_object()) throw SpecError(where + ".base must be an object");
  if (base.contains("seeds")) throw SpecError(where + ".base must not carry seeds; set them on the sweep");
  const auto base_kind = string_of(field(base, "kind", where + ".base"), where + ".base.kind");
  if (base_kind != "ctd" && base_kind != "ntd" && base_kind != "datadrop" && base_kind != "vr") {
    throw SpecError(where + ".base.kind must be ctd, ntd, datadrop or vr");
  }
  const auto param = string_of(field(raw, "param", where), where + ".param");
  const auto values = numbers_of(field(raw, "values", where), where + ".values");
  if (values.size() < 2) throw SpecError(where + ".values needs at least two entries");
  const Json seed_list = resolve_seeds(raw, seeds, where);
  const auto seed_vec = seed_list.get<std::vector<std::uint64_t>>();

  Json out;
  out["kind"] = "sweep";
  out["param"] = param;
  out["values"] = values;
  out["seeds"] = seed_list;
  Json runs = Json::array();
  // The base is resolved per value because derived quantities (data-drop
  // interval, VR step size, checkpoints) depend on the swept parameter.
  Json stored_base = base;
  for (double v : values) {
    Json sub = base;
    if (v == std::floor(v) && std::abs(v) < 9e15) {
      sub[param] = static_cast<long>(v);
    } else {
      sub[param] = v;
    }
    runs.push_back(resolve_any(sub, seed_vec));
  }
  if (stored_base.contains("mdp")) stored_base["mdp"] = runs[0]["mdp"];
  out["base"] = stored_base;
  out["runs"] = runs;
  return out;
}

Json resolve_any(const Json& raw, const std::optional<std::vector<std::uint64_t>>& seeds) {
  if (!raw.is_object()) throw SpecError("experiment spec must be a JSON object");
  const auto kind = string_of(field(raw, "kind", "spec"), "spec.kind");
  if (kind == "freedman") return resolve_freedman(raw, seeds);
  if (kind == "sweep") {
    Json clean = raw;
    clean.erase("runs");
    return resolve_sweep(clean, seeds);
  }
  const auto file = load_mdp_value(field(raw, "mdp", kind));
  if (kind == "dp") {
    if (seeds) throw SpecError("dp runs are deterministic and take no seeds");
    return resolve_dp(raw, file);
  }
  if (kind == "dcfp") {
    if (seeds) throw SpecError("dcfp runs are deterministic and take no seeds");
    return resolve_dcfp(raw, file);
  }
  if (kind == "ctd" || kind == "ntd") return resolve_td(raw, file, kind, seeds);
  if (kind == "datadrop") return resolve_datadrop(raw, file, seeds);
  if (kind == "vr") return resolve_vr(raw, file, seeds);
  throw SpecError("unknown experiment kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Running.

struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;  // relative path, content

  void add(std::string path, std::string content) { files.emplace_back(std::move(path), std::move(content)); }
  void add_json(std::string path, const Json& j) { add(std::move(path), j.dump(2) + "\n"); }
};

MDPFile mdp_of(const Json& spec) { return mdp_from_json(spec.at("mdp"), "mdp"); }

std::string seed_tag(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

Table trace_table(const RunResult& r, int n_states, const char* t_name) {
  Table t;
  t.header = {t_name, "samples"};
  for (int s = 0; s < n_states; ++s) t.header.push_back("state_" + std::to_string(s));
  t.header.push_back("sup");
  for (const auto& p : r.trace) {
    std::vector<std::string> row = {std::to_string(p.t), std::to_string(p.samples)};
    for (double d : p.per_state) row.push_back(format_number(d));
    row.push_back(format_number(p.sup));
    t.add_row(std::move(row));
  }
  return t;
}

Json result_json(const RunResult& r) {
  Json j;
  j["seed"] = r.seed;
  j["updates"] = r.updates;
  j["samples"] = r.samples;
  j["compression_error"] = r.compression_error;
  j["clipped_mass"] = r.clipped_mass;
  j["rectification_w1"] = r.rectification_w1;
  j["estimate"] = to_json(r.estimate);
  return j;
}

// Per-seed rows followed by quartile rows over final errors; per-checkpoint
// quartiles in a second table.
void summarize_runs(const std::vector<RunResult>& results, int n_states, const char* t_name, Artifacts& out,
                    std::vector<PlotSeries>* plot) {
  Table summary;
  summary.header = {"row", "seed", "updates", "samples", "final_error", "compression_error", "clipped_mass",
                    "rectification_w1"};
  std::vector<double> finals;
  for (const auto& r : results) {
    const double final_error = r.trace.empty() ? std::nan("") : r.trace.back().sup;
    finals.push_back(final_error);
    summary.add_row({"seed", std::to_string(r.seed), std::to_string(r.updates), std::to_string(r.samples),
                     format_number(final_error), format_number(r.compression_error), format_number(r.clipped_mass),
                     format_number(r.rectification_w1)});
    out.add("runs/" + seed_tag(r.seed) + ".csv", trace_table(r, n_states, t_name).to_csv());
    out.add_json("runs/" + seed_tag(r.seed) + ".json", result_json(r));
  }
  const auto q = quartiles(finals);
  summary.add_row({"q1", "", "", "", format_number(q.q1), "", "", ""});
  summary.add_row({"median", "", "", "", format_number(q.median), "", "", ""});
  summary.add_row({"q3", "", "", "", format_number(q.q3), "", "", ""});
  out.add("summary.csv", summary.to_csv());

  Table points;
  points.header = {t_name, "samples", "q1", "median", "q3"};
  PlotSeries lo{"q1", {}, {}}, mid{"median", {}, {}}, hi{"q3", {}, {}};
  const auto n_points = results.front().trace.size();
  for (std::size_t i = 0; i < n_points; ++i) {
    std::vector<double> errs;
    for (const auto& r : results) errs.push_back(r.trace[i].sup);
    const auto qi = quartiles(errs);
    const auto& p = results.front().trace[i];
    points.add_row({std::to_string(p.t), std::to_string(p.samples), format_number(qi.q1), format_number(qi.median),
                    format_number(qi.q3)});
    for (auto* s : {&lo, &mid, &hi}) s->x.push_back(static_cast<double>(p.samples));
    lo.y.push_back(qi.q1);
    mid.y.push_back(qi.median);
    hi.y.push_back(qi.q3);
  }
  out.add("checkpoints.csv", points.to_csv());
  if (plot) *plot = {mid, lo, hi};
}

double final_median(const std::vector<RunResult>& results) {
  std::vector<double> finals;
  for (const auto& r : results) finals.push_back(r.trace.back().sup);
  return median(finals);
}

std::vector<RunResult> run_td_kind(const Json& spec, int workers) {
  const auto file = mdp_of(spec);
  const auto kind = spec.at("kind").get<std::string>();
  const double gamma = file.mdp.gamma();
  const ReturnModel reference = reference_model(spec.at("reference"), file);
  const TraceOptions trace{reference, metric_from_json(spec.at("metric"), "metric"),
                           spec.at("checkpoints").get<std::vector<long>>()};
  const auto seeds = spec.at("seeds").get<std::vector<std::uint64_t>>();

  RunConfig base{file.mdp, file.policy, GenerativeSampling{GenerativeConfig::uniform(file.mdp.n_states())},
                 CategoricalRep{}, StepSchedule::constant(0.0), 1, 0, 0, 1, Averaging::LastIterate, 0,
                 std::nullopt, false};
  base.schedule = schedule_from(spec.at("schedule"), gamma);
  if (kind == "datadrop") {
    base.sampling = MarkovSampling{spec.at("initial").get<std::vector<double>>()};
    base.representation = CategoricalRep{spec.at("K").get<int>()};
    base.T = spec.at("T_star").get<long>();
    base.burn_in = spec.at("T0").get<long>();
    base.interval = spec.at("q").get<long>();
  } else {
    const auto& s = spec.at("sampling");
    if (s.at("kind") == "generative") {
      base.sampling = GenerativeSampling{GenerativeConfig(s.at("mu").get<std::vector<double>>())};
    } else {
      base.sampling = MarkovSampling{s.at("initial").get<std::vector<double>>()};
    }
    if (kind == "ctd") {
      base.representation = CategoricalRep{spec.at("K").get<int>()};
    } else {
      base.representation = ParticleRep{spec.at("particle_budget").get<std::size_t>()};
    }
    base.T = spec.at("T").get<long>();
    const auto& a = spec.at("averaging");
    if (a.is_object()) {
      base.averaging = Averaging::Polyak;
      base.polyak_start = a.at("start").get<long>();
    }
    base.validate_each_step = spec.at("validate_each_step").get<bool>();
  }

  std::vector<std::optional<RunResult>> slots(seeds.size());
  parallel_for(seeds.size(), workers, [&](std::size_t i) {
    RunConfig config = base;
    config.seed = seeds[i];
    slots[i] = kind == "datadrop" ? run_td_datadrop(config, trace) : run_td(config, trace);
  });
  std::vector<RunResult> results;
  for (auto& s : slots) results.push_back(std::move(*s));
  return results;
}

std::vector<RunResult> run_vr_kind(const Json& spec, int workers) {
  const auto file = mdp_of(spec);
  const ReturnModel reference = reference_model(spec.at("reference"), file);
  const TraceOptions trace{reference, metric_from_json(spec.at("metric"), "metric"), {}};
  const auto seeds = spec.at("seeds").get<std::vector<std::uint64_t>>();
  const auto& rep = spec.at("representation");
  VRConfig base{file.mdp, file.policy, MarkovSampling{spec.at("initial").get<std::vector<double>>()},
                rep.at("kind") == "categorical" ? Representation(CategoricalRep{rep.at("K").get<int>()})
                                                : Representation(ParticleRep{rep.at("budget").get<std::size_t>()}),
                1, 1, 1, 0.0, 0, std::nullopt};
  base.epochs = spec.at("epochs").get<int>();
  base.recentering = spec.at("N").get<long>();
  base.epoch_length = spec.at("t_epoch").get<long>();
  base.alpha = spec.at("alpha").get<double>();
  std::vector<std::optional<RunResult>> slots(seeds.size());
  parallel_for(seeds.size(), workers, [&](std::size_t i) {
    VRConfig config = base;
    config.seed = seeds[i];
    slots[i] = run_vr(config, trace);
  });
  std::vector<RunResult> results;
  for (auto& s : slots) results.push_back(std::move(*s));
  return results;
}

Json chain_json(const MDPFile& file) {
  const auto info = try_chain(file);
  if (!info) return nullptr;
  Json j;
  j["stationary"] = std::vector<double>(info->stationary.data(), info->stationary.data() + info->stationary.size());
  j["mu_min"] = info->mu_min;
  j["t_mix"] = info->t_mix;
  return j;
}

void run_into(const Json& spec, const RunnerOptions& options, Artifacts& out, Json& derived, const std::string& prefix,
              double* final_error_median, std::vector<double>* final_errors);

void run_dp(const Json& spec, Artifacts& out, Json& derived) {
  const auto file = mdp_of(spec);
  DPOptions options;
  options.metric = metric_from_json(spec.at("metric"), "metric");
  options.tol = spec.at("tol").get<double>();
  options.max_iter = spec.at("max_iter").get<int>();
  const auto& rep = spec.at("representation");
  if (rep.at("kind") == "categorical") {
    options.grid = SupportGrid(rep.at("K").get<int>(), file.mdp.gamma());
  } else {
    options.particle_budget = rep.at("budget").get<std::size_t>();
  }
  const auto result =
      distributional_dp(file.mdp, file.policy, dp_default_init(file.mdp.n_states(), options), options);
  out.add_json("model.json", to_json(result.model));
  Table t;
  t.header = {"iterations", "last_gap", "compression_error"};
  t.add_row({std::to_string(result.iterations), format_number(result.last_gap),
             format_number(result.compression_error)});
  out.add("summary.csv", t.to_csv());
  Table means;
  means.header = {"state", "mean_return", "value_function"};
  const Vector v = value_function(file.mdp, file.policy);
  for (int s = 0; s < file.mdp.n_states(); ++s) {
    means.add_row({std::to_string(s), format_number(mean(result.model[s])), format_number(v[s])});
  }
  out.add("means.csv", means.to_csv());
  derived["chain"] = chain_json(file);
}

void run_dcfp(const Json& spec, Artifacts& out, Json& derived) {
  const auto file = mdp_of(spec);
  const SupportGrid grid(spec.at("K").get<int>(), file.mdp.gamma());
  const auto result = dcfp_solve(file.mdp, file.policy, grid, spec.at("max_dimension").get<std::size_t>());
  out.add_json("model.json", to_json(result.model));
  Table t;
  t.header = {"dimension", "residual", "clipped_mass"};
  t.add_row({std::to_string(file.mdp.n_states() * grid.size()), format_number(result.residual),
             format_number(result.clipped_mass)});
  out.add("summary.csv", t.to_csv());
  derived["chain"] = chain_json(file);
}

void run_freedman(const Json& spec, const RunnerOptions& options, Artifacts& out, std::vector<PlotSeries>* plot) {
  const auto deltas = spec.at("deltas").get<std::vector<double>>();
  const long trials = spec.at("trials").get<long>();
  const long dump = spec.at("dump_trials").get<long>();
  Table rates;
  rates.header = {"seed", "spec", "embedding", "generator", "n", "b", "H", "sigma2", "delta", "trials",
                  "violations", "rate", "wilson_lo", "wilson_hi", "freedman_at_sigma2", "azuma"};
  Table paths;
  paths.header = {"seed", "spec", "delta", "trial", "k", "norm_Yk", "W_k", "bound", "violated"};
  for (auto seed : spec.at("seeds").get<std::vector<std::uint64_t>>()) {
    for (std::size_t i = 0; i < spec.at("specs").size(); ++i) {
      const auto& sj = spec.at("specs")[i];
      const auto ms = martingale_from_json(sj, "specs[" + std::to_string(i) + "]");
      const int H = sj.at("H").get<int>();
      const double sigma2 = sj.at("sigma2").get<double>();
      std::vector<FreedmanParams> params;
      for (double d : deltas) params.push_back({d, H, sigma2, ms.b});
      const auto results = violation_rates(ms, params, trials, seed, options.workers);
      for (std::size_t k = 0; k < deltas.size(); ++k) {
        const auto& r = results[k];
        rates.add_row({std::to_string(seed), ms.name, embedding_name(ms.embedding), generator_name(ms.kind),
                       std::to_string(ms.n), format_number(ms.b), std::to_string(H), format_number(sigma2),
                       format_number(deltas[k]), std::to_string(r.trials), std::to_string(r.violations),
                       format_number(r.rate), format_number(r.ci.lo), format_number(r.ci.hi),
                       format_number(freedman_bound(sigma2, params[k])),
                       format_number(azuma_bound(ms.n, ms.b, deltas[k]))});
      }
      for (long trial = 0; trial < dump; ++trial) {
        Rng rng(seed, static_cast<std::uint64_t>(trial));
        const auto path = simulate(ms, rng);
        for (std::size_t k = 0; k < deltas.size(); ++k) {
          PlotSeries norm{ms.name + " |Y_k|", {}, {}}, bound{ms.name + " bound", {}, {}};
          for (int step = 1; step <= ms.n; ++step) {
            const double b = freedman_bound(path.w[step], params[k]);
            paths.add_row({std::to_string(seed), ms.name, format_number(deltas[k]), std::to_string(trial),
                           std::to_string(step), format_number(path.norm_y[step]), format_number(path.w[step]),
                           format_number(b), path.norm_y[step] > b ? "1" : "0"});
            norm.x.push_back(step);
            norm.y.push_back(path.norm_y[step]);
            bound.x.push_back(step);
            bound.y.push_back(b);
          }
          if (plot && plot->empty()) *plot = {norm, bound};
        }
      }
    }
  }
  out.add("violations.csv", rates.to_csv());
  if (dump > 0) out.add("paths.csv", paths.to_csv());
}

void run_sweep(const Json& spec, const RunnerOptions& options, Artifacts& out, Json& derived,
               std::vector<PlotSeries>* plot) {
  const auto values = spec.at("values").get<std::vector<double>>();
  const auto param = spec.at("param").get<std::string>();
  Table table;
  table.header = {param, "q1", "median", "q3"};
  std::vector<double> medians;
  Json sub_derived = Json::array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::string prefix = param + "_" + format_number(values[i]) + "/";
    Json d = Json::object();
    std::vector<double> finals;
    double med = 0.0;
    run_into(spec.at("runs")[i], options, out, d, prefix, &med, &finals);
    const auto q = quartiles(finals);
    table.add_row({format_number(values[i]), format_number(q.q1), format_number(q.median), format_number(q.q3)});
    medians.push_back(q.median);
    sub_derived.push_back(d);
  }
  out.add("sweep.csv", table.to_csv());
  Table fit;
  fit.header = {"quantity", "value"};
  bool positive = true;
  for (std::size_t i = 0; i < values.size(); ++i) positive = positive && values[i] > 0.0 && medians[i] > 0.0;
  fit.add_row({"loglog_slope_median", positive ? format_number(loglog_slope(values, medians)) : "nan"});
  out.add("fit.csv", fit.to_csv());
  derived["runs"] = sub_derived;
  if (plot) *plot = {PlotSeries{"median final error", values, medians}};
}

void run_into(const Json& spec, const RunnerOptions& options, Artifacts& out, Json& derived, const std::string& prefix,
              double* final_error_median, std::vector<double>* final_errors) {
  const auto kind = spec.at("kind").get<std::string>();
  Artifacts local;
  std::vector<PlotSeries> plot;
  std::string x_label = "samples";
  std::string y_label = "error";
  if (kind == "dp") {
    run_dp(spec, local, derived);
  } else if (kind == "dcfp") {
    run_dcfp(spec, local, derived);
  } else if (kind == "ctd" || kind == "ntd" || kind == "datadrop" || kind == "vr") {
    const auto results = kind == "vr" ? run_vr_kind(spec, options.workers) : run_td_kind(spec, options.workers);
    summarize_runs(results, mdp_of(spec).mdp.n_states(), kind == "vr" ? "epoch" : "t", local, &plot);
    derived["chain"] = chain_json(mdp_of(spec));
    if (final_error_median) *final_error_median = final_median(results);
    if (final_errors) {
      for (const auto& r : results) final_errors->push_back(r.trace.back().sup);
    }
    y_label = std::string("sup ") + (spec.at("metric").is_string() ? spec.at("metric").get<std::string>() : "wp") +
              " error";
  } else if (kind == "freedman") {
    run_freedman(spec, options, local, &plot);
    x_label = "k";
    y_label = "norm";
  } else if (kind == "sweep") {
    run_sweep(spec, options, local, derived, &plot);
    x_label = spec.at("param").get<std::string>();
    y_label = "median final error";
  }
  if (options.plot && !plot.empty()) {
    local.add(kind == "sweep" ? "sweep.svg" : "error.svg", loglog_svg(kind, x_label, y_label, plot));
  }
  for (auto& [path, content] : local.files) out.add(prefix + path, std::move(content));
}

}  // namespace

Json resolve_spec(const Json& raw, const std::optional<std::string>& expected_kind,
                  const std::optional<std::vector<std::uint64_t>>& seeds) {
  Json spec = raw;
  // A manifest carries the resolved spec under "spec".
  if (spec.is_object() && spec.contains("format") && spec.contains("spec")) {
    reject_unknown_keys(spec, {"format", "spec", "derived", "artifacts"}, "manifest");
    spec = Json(raw.at("spec"));
  }
  if (!spec.is_object()) throw SpecError("experiment spec must be a JSON object");
  if (expected_kind) {
    if (!spec.contains("kind")) {
      spec["kind"] = *expected_kind;
    } else if (spec.at("kind") != *expected_kind) {
      throw SpecError("spec kind '" + string_of(spec.at("kind"), "spec.kind") + "' does not match subcommand '" +
                      *expected_kind + "'");
    }
  }
  try {
    return resolve_any(spec, seeds);
  } catch (const Json::exception& e) {
    throw SpecError(std::string("spec: ") + e.what());
  } catch (const ModelError& e) {
    if (dynamic_cast<const ChainError*>(&e)) throw;
    throw SpecError(std::string("spec: ") + e.what());
  } catch (const MeasureError& e) {
    throw SpecError(std::string("spec: ") + e.what());
  }
}

void run_experiment(const Json& resolved, const RunnerOptions& options) {
  Artifacts artifacts;
  Json derived = Json::object();
  run_into(resolved, options, artifacts, derived, "", nullptr, nullptr);

  std::vector<std::string> names;
  for (const auto& f : artifacts.files) names.push_back(f.first);
  std::sort(names.begin(), names.end());
  Json manifest;
  manifest["format"] = "disteval-manifest/1";
  manifest["spec"] = resolved;
  manifest["derived"] = derived;
  manifest["artifacts"] = names;

  std::filesystem::create_directories(options.out);
  for (const auto& [path, content] : artifacts.files) write_text_file(options.out / path, content);
  write_text_file(options.out / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace disteval
