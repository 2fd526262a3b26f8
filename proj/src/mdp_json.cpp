#include <algorithm>
#include <cstdlib>

#include "disteval/serialization.hpp"

namespace disteval {

Json to_json(const MDPFile& file) {
  const auto& m = file.mdp;
  Json transitions = Json::array();
  Json rewards = Json::array();
  Json policy = Json::array();
  for (int s = 0; s < m.n_states(); ++s) {
    Json t_row = Json::array();
    Json r_row = Json::array();
    for (int a = 0; a < m.n_actions(); ++a) {
      auto row = m.transition_row(s, a);
      t_row.push_back(std::vector<double>(row.begin(), row.end()));
      Json law = Json::array();
      for (const auto& o : m.rewards(s, a)) law.push_back({o.value, o.prob});
      r_row.push_back(std::move(law));
    }
    transitions.push_back(std::move(t_row));
    rewards.push_back(std::move(r_row));
    auto p = file.policy.row(s);
    policy.push_back(std::vector<double>(p.begin(), p.end()));
  }
  Json j;
  j["name"] = file.name;
  j["gamma"] = m.gamma();
  j["n_states"] = m.n_states();
  j["n_actions"] = m.n_actions();
  j["transitions"] = std::move(transitions);
  j["rewards"] = std::move(rewards);
  j["policy"] = std::move(policy);
  if (file.mu) j["mu"] = *file.mu;
  return j;
}

MDPFile mdp_from_json(const Json& j, const std::string& source) {
  reject_unknown_keys(j, {"name", "gamma", "n_states", "n_actions", "transitions", "rewards", "policy", "mu"}, source);
  try {
    const int n_states = j.at("n_states").get<int>();
    const int n_actions = j.at("n_actions").get<int>();
    const auto& tj = j.at("transitions");
    const auto& rj = j.at("rewards");
    const auto& pj = j.at("policy");
    const auto expect_size = [&](const Json& arr, int n, const std::string& what) {
      if (!arr.is_array() || static_cast<int>(arr.size()) != n) {
        throw SpecError(source + ": " + what + " must have " + std::to_string(n) + " entries");
      }
    };
    expect_size(tj, n_states, "transitions");
    expect_size(rj, n_states, "rewards");
    expect_size(pj, n_states, "policy");
    std::vector<double> transition;
    std::vector<std::vector<RewardOutcome>> rewards;
    std::vector<double> policy;
    for (int s = 0; s < n_states; ++s) {
      expect_size(tj[s], n_actions, "transitions[" + std::to_string(s) + "]");
      expect_size(rj[s], n_actions, "rewards[" + std::to_string(s) + "]");
      expect_size(pj[s], n_actions, "policy[" + std::to_string(s) + "]");
      for (int a = 0; a < n_actions; ++a) {
        expect_size(tj[s][a], n_states, "transitions[" + std::to_string(s) + "][" + std::to_string(a) + "]");
        for (const auto& v : tj[s][a]) transition.push_back(v.get<double>());
        std::vector<RewardOutcome> law;
        for (const auto& o : rj[s][a]) {
          if (!o.is_array() || o.size() != 2) throw SpecError(source + ": reward outcome must be [value, prob]");
          law.push_back({o[0].get<double>(), o[1].get<double>()});
        }
        rewards.push_back(std::move(law));
        policy.push_back(pj[s][a].get<double>());
      }
    }
    MDPFile file{j.value("name", std::string()),
                 TabularMDP(n_states, n_actions, std::move(transition), std::move(rewards), j.at("gamma").get<double>()),
                 Policy(n_states, n_actions, std::move(policy)), std::nullopt};
    if (j.contains("mu")) {
      file.mu = j.at("mu").get<std::vector<double>>();
      GenerativeConfig check(*file.mu);
      if (static_cast<int>(file.mu->size()) != n_states) throw SpecError(source + ": mu has the wrong length");
    }
    return file;
  } catch (const Json::exception& e) {
    throw SpecError(source + ": " + e.what());
  } catch (const ModelError& e) {
    throw SpecError(source + ": " + e.what());
  }
}

MDPFile load_mdp_file(const std::filesystem::path& path) {
  return mdp_from_json(read_json_file(path), path.string());
}

std::filesystem::path gallery_dir() {
  if (const char* env = std::getenv("DISTEVAL_GALLERY"); env && *env) return env;
  return DISTEVAL_GALLERY_DIR;
}

std::vector<std::string> gallery_names() {
  std::vector<std::string> names;
  const auto dir = gallery_dir();
  if (!std::filesystem::is_directory(dir)) throw SpecError("gallery directory " + dir.string() + " not found");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") names.push_back(entry.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

MDPFile load_gallery(const std::string& name) {
  const auto path = gallery_dir() / (name + ".json");
  if (!std::filesystem::exists(path)) throw SpecError("gallery MDP '" + name + "' not found at " + path.string());
  return load_mdp_file(path);
}

}  // namespace disteval
