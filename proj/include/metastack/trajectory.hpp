#pragma once

#include <cstdint>
#include <vector>

namespace metastack {

enum class Player { defender, attacker };

struct TrajectoryStep {
  std::uint64_t state_digest = 0;
  std::vector<double> defender_obs;
  std::vector<double> attacker_obs;
  std::vector<double> defender_action;  // pre-squash values as sampled
  std::vector<double> attacker_action;  // empty for rule-based attackers
  double reward_defender = 0.0;
  double reward_attacker = 0.0;
  double logp_defender = 0.0;
  double logp_attacker = 0.0;  // 0 for rule-based attackers
  bool logp_cached = true;
  int malicious_sampled = 0;  // 1 . I^t
};

// One length-H rollout of the game. Log-probabilities are cached at rollout
// time so gradient estimators never need the transition kernel.
struct Trajectory {
  std::vector<TrajectoryStep> steps;
  int horizon = 0;
  double discount = 0.0;
  int type_id = 0;
  std::uint64_t policy_hash_defender = 0;
  std::uint64_t policy_hash_attacker = 0;

  void validate() const;  // throws std::invalid_argument
};

// Sum_{t=1..H} gamma^t * r_t (exponent starts at t=1).
double discounted_return(const Trajectory& tau, Player who);

// Sum of the cached per-step log pi for the chosen player. The transition
// factors are excluded; they cancel in score-function gradients.
double trajectory_log_prob(const Trajectory& tau, Player which);

double step_reward(const TrajectoryStep& s, Player who);

}  // namespace metastack
