#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "disteval/serialization.hpp"

namespace disteval {

/// Experiment kinds understood by the runner.
inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {"dp", "dcfp", "ctd", "ntd", "datadrop", "vr", "freedman", "sweep"};
  return kinds;
}

/// Parses "0-31", "3,5,9" or mixtures such as "0-3,7".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

/// Fills every default of a spec so that the result runs without consulting
/// anything but itself: gallery MDPs are inlined, theorem-derived parameters
/// and reference settings are written out. Resolving a resolved spec returns
/// it unchanged. Throws SpecError on schema violations.
///
/// `expected_kind` is checked against (or supplies) the "kind" key.
Json resolve_spec(const Json& raw, const std::optional<std::string>& expected_kind = std::nullopt,
                  const std::optional<std::vector<std::uint64_t>>& seeds = std::nullopt);

struct RunnerOptions {
  std::filesystem::path out;
  int workers = 1;
  bool plot = false;
};

/// Runs a resolved spec and writes manifest.json plus the kind's CSV, JSON
/// and optional SVG artifacts under options.out. Files are written only after
/// every run has finished.
void run_experiment(const Json& resolved, const RunnerOptions& options);

/// Runs job(i) for i in [0, count) on up to `workers` threads. The first
/// exception by index is rethrown after all jobs stop.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& job);

}  // namespace disteval
