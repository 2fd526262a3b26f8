#include <algorithm>
#include <fstream>

#include "disteval/serialization.hpp"

namespace disteval {

Json to_json(const Distribution& dist) {
  if (auto* c = std::get_if<CategoricalDist>(&dist)) {
    Json j;
    j["kind"] = "categorical";
    j["K"] = c->grid().K();
    j["gamma"] = c->grid().gamma();
    j["probs"] = std::vector<double>(c->probs().begin(), c->probs().end());
    return j;
  }
  Json atoms = Json::array();
  for (const auto& a : std::get<ParticleDist>(dist).atoms()) atoms.push_back({a.x, a.w});
  Json j;
  j["kind"] = "particle";
  j["atoms"] = std::move(atoms);
  return j;
}

Distribution distribution_from_json(const Json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "categorical") {
      reject_unknown_keys(j, {"kind", "K", "gamma", "probs"}, "categorical distribution");
      return CategoricalDist(SupportGrid(j.at("K").get<int>(), j.at("gamma").get<double>()),
                             j.at("probs").get<std::vector<double>>());
    }
    if (kind == "particle") {
      reject_unknown_keys(j, {"kind", "atoms"}, "particle distribution");
      std::vector<Atom> atoms;
      for (const auto& a : j.at("atoms")) {
        if (!a.is_array() || a.size() != 2) throw SpecError("particle atom must be [x, w]");
        atoms.push_back({a[0].get<double>(), a[1].get<double>()});
      }
      return ParticleDist(std::move(atoms));
    }
    throw SpecError("unknown distribution kind '" + kind + "'");
  } catch (const Json::exception& e) {
    throw SpecError(std::string("distribution: ") + e.what());
  } catch (const MeasureError& e) {
    throw SpecError(std::string("distribution: ") + e.what());
  }
}

Json to_json(const ReturnModel& model) {
  Json states = Json::array();
  for (const auto& d : model.dists()) states.push_back(to_json(d));
  Json j;
  j["states"] = std::move(states);
  return j;
}

ReturnModel model_from_json(const Json& j) {
  reject_unknown_keys(j, {"states"}, "return model");
  std::vector<Distribution> dists;
  try {
    for (const auto& d : j.at("states")) dists.push_back(distribution_from_json(d));
    return ReturnModel(std::move(dists));
  } catch (const Json::exception& e) {
    throw SpecError(std::string("return model: ") + e.what());
  } catch (const MeasureError& e) {
    throw SpecError(std::string("return model: ") + e.what());
  }
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw SpecError(path.string() + ": " + e.what());
  }
}

void reject_unknown_keys(const Json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw SpecError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw SpecError(where + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace disteval
