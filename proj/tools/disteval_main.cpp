// Command-line front end: one subcommand per experiment kind plus `verify`.
//
// Exit codes: 0 success, 1 runtime failure or failed property, 2 invalid
// spec or command line.

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "disteval/experiment.hpp"
#include "disteval/report.hpp"
#include "disteval/verify.hpp"

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kInvalidSpec = 2;

struct ExperimentArgs {
  std::string spec;
  std::string out;
  std::string seeds;
  int workers = 1;
  bool plot = false;
};

struct VerifyArgs {
  std::string out;
  double tolerance_scale = 1.0;
  int workers = 1;
  std::uint64_t seed = 12345;
};

void print_table(const std::vector<disteval::CheckResult>& results) {
  std::size_t width = 5;
  for (const auto& r : results) width = std::max(width, r.name.size());
  std::printf("%-*s  %-6s %-14s %-14s %s\n", static_cast<int>(width), "check", "result", "observed", "limit",
              "detail");
  for (const auto& r : results) {
    std::printf("%-*s  %-6s %-14s %-14s %s\n", static_cast<int>(width), r.name.c_str(), r.pass ? "pass" : "FAIL",
                disteval::format_number(r.observed).c_str(), disteval::format_number(r.limit).c_str(),
                r.detail.c_str());
  }
}

int run_experiment_command(const std::string& kind, const ExperimentArgs& args) {
  using namespace disteval;
  if (args.workers < 1) throw SpecError("--workers must be at least 1");
  std::optional<std::vector<std::uint64_t>> seeds;
  if (!args.seeds.empty()) seeds = parse_seed_list(args.seeds);
  const Json resolved = resolve_spec(read_json_file(args.spec), kind, seeds);
  run_experiment(resolved, {args.out, args.workers, args.plot});
  std::cout << kind << ": artifacts written to " << args.out << '\n';
  return 0;
}

int run_verify_command(const VerifyArgs& args) {
  using namespace disteval;
  if (args.workers < 1) throw SpecError("--workers must be at least 1");
  const auto results = run_verify({args.tolerance_scale, args.workers, args.seed});
  print_table(results);
  if (!args.out.empty()) write_text_file(std::filesystem::path(args.out) / "verify.csv", verify_table(results).to_csv());
  long failed = 0;
  for (const auto& r : results) {
    if (r.pass) continue;
    if (failed++ == 0) std::cerr << "failed properties:\n";
    std::cerr << "  " << r.name << " (observed " << format_number(r.observed) << ", limit "
              << format_number(r.limit) << ")\n";
  }
  std::cout << results.size() - failed << " of " << results.size() << " properties pass\n";
  return failed == 0 ? 0 : kRuntimeFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributional policy evaluation experiments and property checks"};
  app.require_subcommand(1);

  std::vector<std::pair<std::string, ExperimentArgs>> experiments;
  experiments.reserve(disteval::experiment_kinds().size());
  for (const auto& kind : disteval::experiment_kinds()) {
    auto& [name, args] = experiments.emplace_back(kind, ExperimentArgs{});
    auto* sub = app.add_subcommand(name, "Run a " + name + " experiment from a JSON spec");
    sub->add_option("--spec", args.spec, "Experiment spec or a manifest.json to rerun")->required();
    sub->add_option("--out", args.out, "Output directory")->required();
    sub->add_option("--seeds", args.seeds, "Seed list such as 0-31 or 1,4,9; overrides the spec");
    sub->add_option("--workers", args.workers, "Worker threads");
    sub->add_flag("--plot", args.plot, "Also write SVG plots");
  }

  VerifyArgs verify_args;
  auto* verify = app.add_subcommand("verify", "Run the property suite and print a pass/fail table");
  verify->add_option("--out", verify_args.out, "Directory for verify.csv");
  verify->add_option("--tolerance-scale", verify_args.tolerance_scale, "Multiply every slack; below 1 is stricter");
  verify->add_option("--workers", verify_args.workers, "Worker threads");
  verify->add_option("--seed", verify_args.seed, "Master seed of the randomized checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInvalidSpec;
  }

  try {
    if (verify->parsed()) return run_verify_command(verify_args);
    for (const auto& [kind, args] : experiments) {
      if (app.got_subcommand(kind)) return run_experiment_command(kind, args);
    }
  } catch (const disteval::SpecError& e) {
    std::cerr << "invalid spec: " << e.what() << '\n';
    return kInvalidSpec;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kRuntimeFailure;
}
