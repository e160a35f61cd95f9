#include "metastack/trajectory.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace metastack {

void Trajectory::validate() const {
  if (static_cast<int>(steps.size()) != horizon)
    throw std::invalid_argument("trajectory has " + std::to_string(steps.size()) +
                                " steps, expected horizon " + std::to_string(horizon));
  if (!(discount > 0.0 && discount < 1.0))
    throw std::invalid_argument("discount must lie in (0,1)");
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const auto& s = steps[t];
    if (s.reward_defender > 0.0)
      throw std::invalid_argument("defender reward must be <= 0 at step " + std::to_string(t));
    if (s.logp_cached && (!std::isfinite(s.logp_defender) || !std::isfinite(s.logp_attacker)))
      throw std::invalid_argument("non-finite cached log-probability at step " + std::to_string(t));
    if (s.malicious_sampled == 0 && s.reward_attacker != 0.0)
      throw std::invalid_argument("attacker reward must be 0 when no malicious client sampled");
  }
}

double step_reward(const TrajectoryStep& s, Player who) {
  return who == Player::defender ? s.reward_defender : s.reward_attacker;
}

double discounted_return(const Trajectory& tau, Player who) {
  double total = 0.0;
  double g = 1.0;
  for (const auto& s : tau.steps) {
    g *= tau.discount;  // gamma^t with t starting at 1
    total += g * step_reward(s, who);
  }
  return total;
}

double trajectory_log_prob(const Trajectory& tau, Player which) {
  double total = 0.0;
  for (const auto& s : tau.steps) {
    if (!s.logp_cached)
      throw std::runtime_error(
          "trajectory log-probabilities were not cached; re-run the rollout with caching enabled");
    double lp = which == Player::defender ? s.logp_defender : s.logp_attacker;
    if (!std::isfinite(lp))
      throw std::runtime_error(
          "trajectory log-probabilities were not cached; re-run the rollout with caching enabled");
    total += lp;
  }
  return total;
}

}  // namespace metastack
