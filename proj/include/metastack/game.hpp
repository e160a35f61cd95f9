#pragma once

#include <memory>
#include <span>
#include <vector>

#include "metastack/attack_types.hpp"
#include "metastack/estimators.hpp"
#include "metastack/fl_env.hpp"
#include "metastack/policy.hpp"
#include "metastack/trajectory.hpp"

namespace metastack {

// A two-player episodic game the training loops and diagnostics can sample
// from. Implementations must be immutable so rollouts parallelize.
class Game {
 public:
  virtual ~Game() = default;

  virtual const StochasticPolicy& defender_policy() const = 0;
  // Null when the game has no adaptive-attacker support.
  virtual const StochasticPolicy* attacker_policy() const = 0;

  // One episode under the given parameters. phi may be null for rule-based or
  // absent attackers; type may be null for an all-benign episode.
  virtual Trajectory rollout(std::span<const double> theta, const std::vector<double>* phi,
                             const AttackTypeSpec* type, RngStream& rng) const = 0;
};

// n trajectories with per-index substreams; results are identical for any
// worker count.
std::vector<Trajectory> rollout_batch(const Game& game, std::span<const double> theta,
                                      const std::vector<double>* phi,
                                      const AttackTypeSpec* type, int n,
                                      const RngStream& base, int workers = 1);

// Sampler closure for meta_gradient: defender parameters vary, everything
// else is fixed.
SamplerFn make_sampler(const Game& game, const std::vector<double>* phi,
                       const AttackTypeSpec* type);

// The desk-scale federated-learning game.
class FlGame : public Game {
 public:
  FlGame(EnvConfig cfg, std::uint64_t data_seed, int policy_hidden = 32,
         double log_std_init = -0.5);

  const FlEnv& env() const { return env_; }
  const GaussianMlpPolicy& defender() const { return defender_; }
  const GaussianMlpPolicy& attacker() const { return attacker_; }

  const StochasticPolicy& defender_policy() const override { return defender_; }
  const StochasticPolicy* attacker_policy() const override { return &attacker_; }

  Trajectory rollout(std::span<const double> theta, const std::vector<double>* phi,
                     const AttackTypeSpec* type, RngStream& rng) const override;

  // Deterministic-page evaluation helpers used by the harness.
  struct EpisodeEval {
    double defender_return = 0.0;
    double attacker_return = 0.0;
    double final_clean_loss = 0.0;
    double final_clean_accuracy = 0.0;
    double final_backdoor_accuracy = 0.0;
    bool has_backdoor = false;
  };
  EpisodeEval evaluate_episode(std::span<const double> theta, const std::vector<double>* phi,
                               const AttackTypeSpec* type, RngStream& rng) const;

 private:
  Trajectory rollout_impl(std::span<const double> theta, const std::vector<double>* phi,
                          const AttackTypeSpec* type, RngStream& rng,
                          FlEnv::Episode* final_episode) const;

  FlEnv env_;
  GaussianMlpPolicy defender_;
  GaussianMlpPolicy attacker_;
};

}  // namespace metastack
