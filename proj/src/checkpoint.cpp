#include "metastack/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace metastack {

using nlohmann::json;

namespace {

json policy_json(const PolicyParams& p) {
  p.validate();
  json j;
  j["version"] = 1;
  j["player"] = p.player;
  j["arch"] = {{"obs_dim", p.arch.obs_dim},
               {"hidden", p.arch.hidden},
               {"act_dim", p.arch.act_dim}};
  j["flat"] = p.flat;
  return j;
}

PolicyParams policy_from(const json& j) {
  PolicyParams p;
  p.player = j.at("player").get<std::string>();
  p.arch.obs_dim = j.at("arch").at("obs_dim").get<int>();
  p.arch.hidden = j.at("arch").at("hidden").get<int>();
  p.arch.act_dim = j.at("arch").at("act_dim").get<int>();
  p.flat = j.at("flat").get<std::vector<double>>();
  p.validate();
  return p;
}

}  // namespace

std::string policy_to_json(const PolicyParams& p) { return policy_json(p).dump(2); }

PolicyParams policy_from_json(const std::string& text) {
  return policy_from(json::parse(text));
}

void save_checkpoint(const MetaCheckpoint& ckpt, const std::string& path) {
  json j;
  j["version"] = ckpt.version;
  j["algo"] = ckpt.algo;
  j["iteration"] = ckpt.iteration;
  j["theta"] = policy_json(ckpt.theta);
  json phis = json::object();
  for (const auto& [id, p] : ckpt.phis) phis[std::to_string(id)] = policy_json(p);
  j["phis"] = phis;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump(2) << "\n";
}

MetaCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  json j;
  in >> j;
  MetaCheckpoint ckpt;
  ckpt.version = j.value("version", 1);
  ckpt.algo = j.value("algo", std::string());
  ckpt.iteration = j.value("iteration", 0);
  ckpt.theta = policy_from(j.at("theta"));
  if (j.contains("phis"))
    for (auto it = j["phis"].begin(); it != j["phis"].end(); ++it)
      ckpt.phis[std::stoi(it.key())] = policy_from(it.value());
  return ckpt;
}

MetaCheckpoint make_checkpoint(const MetaState& state, const MlpArch& defender_arch,
                               const MlpArch& attacker_arch, const std::string& algo) {
  MetaCheckpoint ckpt;
  ckpt.algo = algo;
  ckpt.iteration = state.iteration;
  ckpt.theta.player = "defender";
  ckpt.theta.arch = defender_arch;
  ckpt.theta.flat = state.theta;
  for (const auto& [id, phi] : state.phis) {
    PolicyParams p;
    p.player = "attacker";
    p.arch = attacker_arch;
    p.flat = phi;
    ckpt.phis[id] = std::move(p);
  }
  return ckpt;
}

}  // namespace metastack
