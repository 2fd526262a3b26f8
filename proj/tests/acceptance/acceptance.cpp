// End-to-end acceptance run: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "disteval/agents.hpp"
#include "disteval/concentration.hpp"
#include "disteval/experiment.hpp"
#include "disteval/report.hpp"
#include "disteval/verify.hpp"

using namespace disteval;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

struct Outcome {
  bool pass;
  std::string summary;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o, double elapsed) {
  if (!o.pass) ++failures;
  std::printf("criterion %2d: %s  %s | %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", title.c_str(), o.summary.c_str(),
              elapsed);
  std::fflush(stdout);
}

void run(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(id, title, o, seconds_since(start));
}

std::string num(double x) {
  std::ostringstream os;
  os.precision(3);
  os << x;
  return os.str();
}

// Folds property results into one outcome naming the worst offender.
Outcome all_pass(const std::vector<CheckResult>& results) {
  long failed = 0;
  const CheckResult* worst = nullptr;
  for (const auto& r : results) {
    if (!r.pass) {
      ++failed;
      if (!worst) worst = &r;
    } else if (!worst || (worst->pass && r.observed - r.limit > worst->observed - worst->limit)) {
      worst = &r;
    }
  }
  std::string summary = std::to_string(results.size() - failed) + "/" + std::to_string(results.size()) + " checks";
  if (worst) summary += "; tightest: " + worst->name + " (" + num(worst->observed) + " vs " + num(worst->limit) + ")";
  return {failed == 0 && !results.empty(), summary};
}

double fitted_slope(const std::vector<long>& xs, const std::vector<double>& medians) {
  std::vector<double> x(xs.begin(), xs.end());
  return loglog_slope(x, medians);
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : ", ") + num(x);
  return out;
}

RunConfig td_config(const MDPFile& f, Sampling sampling, int K, StepSchedule schedule, long T, std::uint64_t seed) {
  return RunConfig{f.mdp, f.policy, std::move(sampling), CategoricalRep{K}, std::move(schedule), T, seed, 0, 1,
                   Averaging::LastIterate, 0, std::nullopt, false};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Byte comparison of every CSV under two run directories.
bool same_csvs(const fs::path& a, const fs::path& b, long& compared, std::string& mismatch) {
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (entry.path().extension() != ".csv") continue;
    const auto rel = fs::relative(entry.path(), a);
    ++compared;
    if (!fs::exists(b / rel) || slurp(entry.path()) != slurp(b / rel)) {
      mismatch = rel.string();
      return false;
    }
  }
  return true;
}

}  // namespace

int main() {
  const auto gallery = load_full_gallery();
  const std::uint64_t seed = 20240611;
  std::printf("gallery: %zu MDPs, %d worker thread(s)\n", gallery.size(), workers());

  run(1, "DCFP and categorical DP agree to 1e-10 (K = 64, 512), <= 30 s", [&] {
    const auto start = Clock::now();
    std::vector<CheckResult> results;
    for (const auto& g : gallery) {
      for (int K : {64, 512}) results.push_back(checks::dcfp_vs_dp(g, K, 1e-10));
    }
    const double elapsed = seconds_since(start);
    auto o = all_pass(results);
    o.pass = o.pass && elapsed <= 30.0;
    o.summary += "; " + num(elapsed) + " s";
    return o;
  });

  std::vector<checks::CertifiedReturns> truths;
  run(2, "categorical error <= 1/(sqrt(K)(1-gamma)), K = 8, 64, 512, non-vacuous within 100x", [&] {
    std::vector<CheckResult> results;
    double best_ratio = std::numeric_limits<double>::infinity();
    std::string best_name;
    for (const auto& g : gallery) {
      truths.push_back(checks::certified_returns(g));
      for (auto& r : checks::approximation_bound(g, truths.back(), {8, 64, 512})) results.push_back(std::move(r));
      const double ratio = checks::approximation_ratio(g, truths.back(), {8, 64, 512});
      if (ratio < best_ratio) best_ratio = ratio, best_name = g.name;
    }
    auto o = all_pass(results);
    o.pass = o.pass && best_ratio <= 100.0;
    o.summary += "; smallest bound/measured ratio " + num(best_ratio) + " on " + best_name;
    return o;
  });

  run(3, "contraction inequalities on 100 random pairs per MDP, slack 1e-9", [&] {
    std::vector<CheckResult> results;
    for (std::size_t i = 0; i < gallery.size(); ++i) {
      for (auto& r : checks::contraction(gallery[i], 100, 1e-9, seed + i)) results.push_back(std::move(r));
    }
    return all_pass(results);
  });

  run(4, "metric sandwich inequalities on 1000 random pairs, slack 1e-9",
      [&] { return all_pass(checks::metric_inequalities(1000, 1e-9, seed + 100)); });

  run(5, "CTD on chain3: log-log slope of median W1 error vs T in [-0.65, -0.35], <= 5 min", [&] {
    const auto start = Clock::now();
    const auto file = load_gallery("chain3");
    const int K = 64;
    const auto reference = dcfp_solve(file.mdp, file.policy, SupportGrid(K, file.mdp.gamma())).model;
    const auto sampling = GenerativeSampling{GenerativeConfig::uniform(file.mdp.n_states())};
    const auto schedule = StepSchedule::theorem42(1.0, sampling.config.mu_min, file.mdp.gamma());
    const std::vector<long> Ts = {2500, 10000, 40000, 160000};
    std::vector<std::vector<double>> errors(Ts.size(), std::vector<double>(32));
    parallel_for(32, workers(), [&](std::size_t s) {
      // The schedule does not depend on T, so one run traced at every T is
      // the same as separate runs of each length.
      const auto r = run_td(td_config(file, sampling, K, schedule, Ts.back(), s),
                            TraceOptions{reference, MetricSpec::w1(), Ts});
      for (std::size_t i = 0; i < Ts.size(); ++i) errors[i][s] = r.trace[i].sup;
    });
    std::vector<double> medians;
    for (const auto& e : errors) medians.push_back(median(e));
    const double slope = fitted_slope(Ts, medians);
    const double elapsed = seconds_since(start);
    return Outcome{slope >= -0.65 && slope <= -0.35 && elapsed <= 300.0,
                   "slope " + num(slope) + ", medians " + join(medians)};
  });

  run(6, "data-drop CTD on a Markov trajectory: slope vs T* in [-0.65, -0.35], <= 10 min", [&] {
    const auto start = Clock::now();
    const auto file = load_gallery("chain3");
    const auto chain = ChainInfo::analyze(file.mdp, file.policy);
    const int K = 64;
    const auto reference = dcfp_solve(file.mdp, file.policy, SupportGrid(K, file.mdp.gamma())).model;
    const std::vector<double> initial(file.mdp.n_states(), 1.0 / file.mdp.n_states());
    const std::vector<long> Ts = {2500, 10000, 40000, 160000};
    std::vector<double> medians;
    std::string params;
    for (long T : Ts) {
      const auto p =
          datadrop_parameters(0.1, 0.1, file.mdp.gamma(), chain.mu_min, chain.t_mix, file.mdp.n_states(), T);
      params += (params.empty() ? "" : ", ") + std::to_string(p.q);
      std::vector<double> errors(32);
      parallel_for(32, workers(), [&](std::size_t s) {
        auto cfg = td_config(file, MarkovSampling{initial}, K, p.schedule, T, s);
        cfg.burn_in = p.T0;
        cfg.interval = p.q;
        errors[s] = run_td_datadrop(cfg, TraceOptions{reference, MetricSpec::w1(), {T}}).trace.back().sup;
      });
      medians.push_back(median(errors));
    }
    const double slope = fitted_slope(Ts, medians);
    const double elapsed = seconds_since(start);
    return Outcome{slope >= -0.65 && slope <= -0.35 && elapsed <= 600.0,
                   "slope " + num(slope) + ", medians " + join(medians) + ", q = " + params};
  });

  run(7, "VR-CTD on chain3: per-epoch factor >= 1.7 (or within 2x of floor), beats CTD at equal samples", [&] {
    const auto file = load_gallery("chain3");
    const auto chain = ChainInfo::analyze(file.mdp, file.policy);
    const int K = 64, epochs = 6;
    const long N = 20000, t_epoch = 20000;
    const double gamma = file.mdp.gamma();
    const auto reference = dcfp_solve(file.mdp, file.policy, SupportGrid(K, gamma)).model;
    const std::vector<double> initial(file.mdp.n_states(), 1.0 / file.mdp.n_states());
    const double alpha = vr_step_size(1.0, file.mdp.n_states(), t_epoch, 0.1, gamma, chain.t_mix);
    std::vector<std::vector<double>> per_epoch(epochs + 1, std::vector<double>(32));
    std::vector<double> plain(32);
    parallel_for(32, workers(), [&](std::size_t s) {
      const VRConfig cfg{file.mdp, file.policy, MarkovSampling{initial}, CategoricalRep{K}, epochs, N, t_epoch,
                         alpha, s, std::nullopt};
      const auto r = run_vr(cfg, TraceOptions{reference, MetricSpec::cramer(), {}});
      for (int e = 0; e <= epochs; ++e) per_epoch[e][s] = r.trace[e].sup;
      const auto ctd = run_td(td_config(file, MarkovSampling{initial}, K,
                                        StepSchedule::theorem42(1.0, chain.mu_min, gamma), r.samples, s),
                              TraceOptions{reference, MetricSpec::cramer(), {r.samples}});
      plain[s] = ctd.trace.back().sup;
    });
    std::vector<double> medians;
    for (const auto& e : per_epoch) medians.push_back(median(e));
    const double floor = *std::min_element(medians.begin(), medians.end());
    bool contracting = true;
    std::vector<double> factors;
    for (int e = 1; e <= 3; ++e) {
      factors.push_back(medians[e - 1] / medians[e]);
      if (factors.back() < 1.7 && medians[e - 1] > 2.0 * floor) contracting = false;
    }
    const double vr_final = medians.back();
    const double ctd_final = median(plain);
    return Outcome{contracting && vr_final <= ctd_final,
                   "alpha " + num(alpha) + ", factors " + join(factors) + ", final VR " + num(vr_final) +
                       " vs CTD " + num(ctd_final)};
  });

  run(8, "Freedman: rate <= delta, Wilson upper <= 1.5 delta (1e4 trials); burst bound <= 0.5 Azuma",
      [&] { return all_pass(checks::freedman(10000, seed + 200, workers())); });

  run(9, "second-order Sigma matches Neumann series to 1e-9, max entry <= 1/(1-gamma)", [&] {
    std::vector<CheckResult> results;
    for (std::size_t i = 0; i < gallery.size(); ++i) {
      const auto& returns = i < truths.size() ? truths[i].model : checks::certified_returns(gallery[i]).model;
      for (auto& r : checks::second_order(gallery[i], returns, 1e-9)) results.push_back(std::move(r));
    }
    return all_pass(results);
  });

  run(10, "empirical operator within the DKW band at level 0.01 over 1e5 samples", [&] {
    std::vector<CheckResult> results;
    for (std::size_t i = 0; i < gallery.size(); ++i) {
      results.push_back(checks::unbiasedness(gallery[i], 100000, 0.01, seed + 300 + i));
    }
    return all_pass(results);
  });

  run(11, "verify and manifest reruns reproduce every CSV bit-exactly", [&] {
    const auto root = fs::temp_directory_path() / "disteval_acceptance";
    fs::remove_all(root);
    const std::vector<std::string> specs = {
        R"({"kind": "dp", "mdp": "chain3", "representation": {"kind": "categorical", "K": 64}, "tol": 1e-10})",
        R"({"kind": "dcfp", "mdp": "ring5", "K": 128})",
        R"({"kind": "ctd", "mdp": "grid6", "K": 32, "T": 4000, "seeds": "0-3"})",
        R"({"kind": "ntd", "mdp": "chain3", "particle_budget": 32, "T": 2000, "averaging": {"kind": "polyak"},
            "reference": {"kind": "dcfp", "K": 512}, "seeds": "0-2"})",
        R"({"kind": "datadrop", "mdp": "chain3", "K": 32, "T_star": 2000, "seeds": "0-3"})",
        R"({"kind": "vr", "mdp": "chain3", "epochs": 2, "N": 2000, "t_epoch": 2000, "seeds": "0-3"})",
        R"({"kind": "vr", "mdp": "chain3", "representation": {"kind": "particle", "budget": 32}, "epochs": 2,
            "N": 500, "t_epoch": 500, "reference": {"kind": "dcfp", "K": 512}, "seeds": "0-1"})",
        R"({"kind": "freedman", "specs": "shipped", "trials": 1000, "dump_trials": 2})",
        R"({"kind": "sweep", "param": "T", "values": [500, 2000], "seeds": "0-3",
            "base": {"kind": "ctd", "mdp": "chain3", "K": 32}})"};
    long compared = 0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto first = root / ("run" + std::to_string(i));
      const auto second = root / ("rerun" + std::to_string(i));
      run_experiment(resolve_spec(Json::parse(specs[i])), {first, workers(), true});
      const auto manifest = read_json_file(first / "manifest.json");
      run_experiment(resolve_spec(manifest), {second, 1, false});
      std::string mismatch;
      if (!same_csvs(first, second, compared, mismatch)) {
        return Outcome{false, "experiment " + std::to_string(i) + " differs in " + mismatch};
      }
    }
    const auto a = verify_table(run_verify({})).to_csv();
    const auto b = verify_table(run_verify({1.0, workers(), 12345})).to_csv();
    fs::remove_all(root);
    return Outcome{a == b, std::to_string(compared) + " experiment CSVs identical across manifest reruns; verify table " +
                               (a == b ? "identical" : "differs") + " across two runs"};
  });

  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
