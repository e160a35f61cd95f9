#pragma once

#include <map>
#include <string>

#include "metastack/meta_learn.hpp"
#include "metastack/policy.hpp"

namespace metastack {

// On-disk policy format: {version, player, arch{obs_dim,hidden,act_dim}, flat:[...]}.
std::string policy_to_json(const PolicyParams& p);
PolicyParams policy_from_json(const std::string& text);

struct MetaCheckpoint {
  int version = 1;
  std::string algo;
  int iteration = 0;
  PolicyParams theta;
  std::map<int, PolicyParams> phis;
};

void save_checkpoint(const MetaCheckpoint& ckpt, const std::string& path);
MetaCheckpoint load_checkpoint(const std::string& path);

MetaCheckpoint make_checkpoint(const MetaState& state, const MlpArch& defender_arch,
                               const MlpArch& attacker_arch, const std::string& algo);

}  // namespace metastack
