#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "disteval/mdp.hpp"
#include "disteval/measures.hpp"

namespace disteval {

using Json = nlohmann::ordered_json;

/// Malformed or schema-violating input file.
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// {"kind":"categorical","K":..,"gamma":..,"probs":[...]}
// {"kind":"particle","atoms":[[x,w],...]}
Json to_json(const Distribution& dist);
Distribution distribution_from_json(const Json& j);

// {"states":[<distribution>, ...]}
Json to_json(const ReturnModel& model);
ReturnModel model_from_json(const Json& j);

/// An MDP file: the model, an evaluation policy and an optional generative
/// sampling law.
///
/// {"name": str, "gamma": num, "n_states": int, "n_actions": int,
///  "transitions": [s][a][s'], "rewards": [s][a] -> [[value, prob], ...],
///  "policy": [s][a], "mu": [s] (optional)}
struct MDPFile {
  std::string name;
  TabularMDP mdp;
  Policy policy;
  std::optional<std::vector<double>> mu;
};

Json to_json(const MDPFile& file);
MDPFile mdp_from_json(const Json& j, const std::string& source);
MDPFile load_mdp_file(const std::filesystem::path& path);

/// DISTEVAL_GALLERY when set, otherwise the gallery shipped with the sources.
std::filesystem::path gallery_dir();
std::vector<std::string> gallery_names();
MDPFile load_gallery(const std::string& name);

Json read_json_file(const std::filesystem::path& path);
/// Throws SpecError naming the first key of `j` outside `allowed`.
void reject_unknown_keys(const Json& j, const std::vector<std::string>& allowed, const std::string& where);

}  // namespace disteval
