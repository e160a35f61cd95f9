#pragma once

#include <functional>
#include <span>
#include <vector>

#include "metastack/policy.hpp"
#include "metastack/trajectory.hpp"

namespace metastack {

enum class Baseline { none, mean_return };
enum class MetaMode { reptile, full };

struct GradEstimate {
  std::vector<double> vector;
  std::size_t batch_size = 0;
  std::vector<double> variance;  // empirical per-coordinate variance of contributions

  std::vector<double> standard_error() const;
  double norm() const;
};

struct HessianEstimate {
  Matrix mean;
  std::size_t batch_size = 0;
  Matrix variance;  // per-entry variance of contributions
};

// Hard cap for dense Hessian storage.
inline constexpr int kHessianDimCap = 2048;

// Per-trajectory score sum: sum_t d log pi / d params, recomputed analytically
// from the stored (obs, action) pairs.
std::vector<double> score_sum(const StochasticPolicy& policy, std::span<const double> params,
                              const Trajectory& tau, Player who);

// Monte-Carlo policy gradient: (1/N) sum_i [sum_t score_t] * (R_i - b).
GradEstimate pg_estimate(const StochasticPolicy& policy, std::span<const double> params,
                         const std::vector<Trajectory>& batch, Player who,
                         Baseline baseline);

// Cross-player variant: scores of `score_player`, returns of `reward_player`
// (e.g. grad_phi of the defender's value goes through the attacker's scores).
GradEstimate pg_estimate_cross(const StochasticPolicy& policy,
                               std::span<const double> params,
                               const std::vector<Trajectory>& batch, Player score_player,
                               Player reward_player, Baseline baseline);

// Policy-Hessian estimator: per sample R * (S S^T + sum_t d^2 log pi).
HessianEstimate hessian_estimate(const StochasticPolicy& policy,
                                 std::span<const double> params,
                                 const std::vector<Trajectory>& batch, Player who);

// One adaptation step: theta' = theta + eta * pg_estimate(batch).
std::vector<double> adapt(const StochasticPolicy& policy, std::span<const double> theta,
                          const std::vector<Trajectory>& batch, double eta,
                          Baseline baseline = Baseline::none,
                          Player who = Player::defender);

using SamplerFn = std::function<Trajectory(std::span<const double> defender_params,
                                           RngStream& rng)>;

// Meta-gradient of the one-step-adapted defender objective. Each replication
// pairs a round-1 trajectory (adaptation + curvature) with a round-2
// trajectory under the adapted parameters. Reptile mode keeps only the
// round-2 policy gradient; full mode applies the chain rule.
GradEstimate meta_gradient(const StochasticPolicy& policy, std::span<const double> theta,
                           double eta, MetaMode mode, const SamplerFn& sampler,
                           int replications, Baseline baseline, RngStream& rng,
                           Player who = Player::defender);

}  // namespace metastack
