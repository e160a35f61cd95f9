#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metastack/attack_types.hpp"
#include "metastack/attacks.hpp"
#include "metastack/dataset.hpp"
#include "metastack/defenses.hpp"
#include "metastack/model.hpp"
#include "metastack/rng.hpp"

namespace metastack {

enum class RewardSignMode { consistent, literal };

struct AttackKnobs {
  double ipm_eps = 5.0;
  double lmp_lambda0 = 10.0;
  int lmp_max_halvings = 20;
  double eb_boost = 10.0;
  double bfl_boost = 3.0;
  double poison_fraction = 0.5;
  double boost_cap = 10.0;
  double noise_cap = 1.0;
  bool see_benign_mean = true;  // adaptive attacker is granted the benign mean
};

struct EnvConfig {
  int n_clients = 20;
  int subsample = 10;
  double local_lr = 0.05;
  int local_steps = 1;
  int horizon = 25;
  double discount = 0.95;
  SyntheticSpec data;
  int eval_per_class = 50;  // held-out server split for r_D
  int root_samples = 100;   // FLTrust root split
  std::string aggregator = "tmean";
  int krum_f = 1;
  RewardSignMode reward_sign_mode = RewardSignMode::consistent;
  DefenseBox defense_box;
  std::optional<DefenseAction> fixed_defense;  // bypasses the defender policy
  AttackKnobs attack;
  // Optional IDX ingestion instead of the synthetic generator.
  std::string idx_images;
  std::string idx_labels;
  int idx_max_samples = 2000;

  bool uses_idx() const { return !idx_images.empty(); }
  void validate() const;
};

struct UpdateStats {
  double cos_mean = 0.0, cos_min = 0.0, cos_max = 0.0;
  double norm_mean = 0.0, norm_max = 0.0;
};

// BSMG state s^t: global model, sampled subset and its identity vector,
// round index, plus cached summaries that feed the observations.
struct EnvState {
  GlobalModel model;
  std::vector<int> subset;    // sorted client indices of S^t
  std::vector<int> identity;  // I^t, aligned with subset
  int round = 0;
  int horizon = 0;
  UpdateStats prev_stats;  // stats of the previous round's received updates
  double server_loss = 0.0;

  int malicious_sampled() const;
  std::uint64_t digest() const;
  void validate() const;
};

// The concrete BSMG environment: one FL round per step. Immutable after
// construction; all episode state lives in Episode, so distinct rollouts can
// run in parallel against one shared env.
class FlEnv {
 public:
  FlEnv(EnvConfig cfg, std::uint64_t data_seed);

  const EnvConfig& config() const { return cfg_; }
  const Dataset& server_eval() const { return server_eval_; }
  const Dataset& client_shard(int i) const { return clients_[i]; }
  int obs_dim_defender() const { return 8; }
  int obs_dim_attacker() const { return 10; }

  struct Episode {
    EnvState state;
    const AttackTypeSpec* type = nullptr;          // null: all-benign episode
    std::vector<Dataset> poisoned_shards;          // index < m1, else empty
    std::optional<Dataset> backdoor_eval;          // triggered server split
  };

  Episode begin_episode(const AttackTypeSpec* type, RngStream& rng) const;

  struct StepOutcome {
    double r_defender = 0.0;
    double r_attacker = 0.0;
  };

  // One FL round: benign local SGD, malicious updates via the attack rules or
  // the supplied adaptive action, defense pipeline, post-processing, rewards.
  StepOutcome step(Episode& ep, const DefenseAction& defense,
                   const AttackAction* adaptive_action, RngStream& rng) const;

  std::vector<double> observe_defender(const EnvState& s) const;
  std::vector<double> observe_attacker(const EnvState& s, const AttackTypeSpec& type) const;

  // (r_D, r_A) for a freshly aggregated model. malicious_sampled applies the
  // all-benign zero clause.
  std::pair<double, double> rewards(const GlobalModel& after, const AttackTypeSpec* type,
                                    const Dataset* backdoor_eval,
                                    int malicious_sampled) const;

  double clean_loss(const GlobalModel& m) const { return eval_loss(m, server_eval_); }
  double clean_accuracy(const GlobalModel& m) const { return eval_accuracy(m, server_eval_); }
  Dataset make_backdoor_eval(const AttackTypeSpec& type, RngStream& rng) const;

 private:
  std::vector<int> sample_subset(RngStream& rng) const;
  std::vector<double> malicious_update(const Episode& ep,
                                       const std::vector<std::vector<double>>& benign,
                                       const std::vector<int>& sampled_malicious,
                                       const AttackAction* adaptive_action,
                                       RngStream& rng) const;

  EnvConfig cfg_;
  std::vector<Dataset> clients_;
  Dataset server_eval_;
  Dataset root_;
};

}  // namespace metastack
