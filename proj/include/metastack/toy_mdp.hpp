#pragma once

#include <span>
#include <vector>

#include "metastack/policy.hpp"
#include "metastack/trajectory.hpp"

namespace metastack {

// Canonical 2-state / 2-action / H=2 tabular MDP. Small enough to enumerate
// every trajectory, so value, gradient and adapted objective have exact
// closed forms against which the Monte-Carlo estimators are checked.
struct ToyMdp {
  int n_states = 2;
  int n_actions = 2;
  int horizon = 2;
  double gamma = 0.9;
  int s0 = 0;
  // transition[s][a][s'], reward[s][a] (<= 0 so trajectories satisfy the
  // defender-reward sign invariant).
  double transition[2][2][2];
  double reward[2][2];

  static ToyMdp canonical();

  Trajectory rollout(const TabularSoftmaxPolicy& policy, std::span<const double> params,
                     RngStream& rng) const;

  struct PathInfo {
    std::vector<int> states;   // s^1..s^H
    std::vector<int> actions;  // a^1..a^H
    double policy_prob = 0.0;  // product of pi factors
    double env_prob = 0.0;     // product of transition factors
    double ret = 0.0;          // sum gamma^t r_t
  };
  std::vector<PathInfo> enumerate(const TabularSoftmaxPolicy& policy,
                                  std::span<const double> params) const;

  double exact_value(const TabularSoftmaxPolicy& policy,
                     std::span<const double> params) const;
  std::vector<double> exact_gradient(const TabularSoftmaxPolicy& policy,
                                     std::span<const double> params) const;
  // Central finite differences of the exact gradient.
  Matrix exact_hessian_fd(const TabularSoftmaxPolicy& policy, std::span<const double> params,
                          double step) const;
  // E_tau J(theta + eta * g(tau)): the one-trajectory adapted objective,
  // computed by enumeration over trajectories.
  double exact_adapted_value(const TabularSoftmaxPolicy& policy,
                             std::span<const double> params, double eta) const;
  std::vector<double> exact_adapted_gradient_fd(const TabularSoftmaxPolicy& policy,
                                                std::span<const double> params, double eta,
                                                double step) const;

  Trajectory make_trajectory(const TabularSoftmaxPolicy& policy,
                             std::span<const double> params, const PathInfo& path) const;
};

}  // namespace metastack
