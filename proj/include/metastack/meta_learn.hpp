#pragma once

#include <functional>
#include <map>
#include <vector>

#include "metastack/attack_types.hpp"
#include "metastack/diagnostics_types.hpp"
#include "metastack/estimators.hpp"
#include "metastack/game.hpp"

namespace metastack {

struct MetaConfig {
  int types_per_iter = 4;   // K (clamped to |Xi| by the caller-facing helpers)
  int adapt_steps = 1;      // l, inner defender steps in reptile meta-RL
  int n_outer = 100;        // N_D
  int n_inner = 10;         // N_A
  int n_batch = 16;         // N_b
  double eta = 0.01;        // adaptation step of Psi
  double kappa = 0.001;     // inner step size of reptile meta-RL
  double kappa_attacker = 0.001;
  double kappa_defender = 0.001;
  MetaMode mode = MetaMode::reptile;
  Baseline baseline = Baseline::mean_return;
  std::uint64_t seed = 0;
  int workers = 1;
  int checkpoint_interval = 0;  // 0: only final

  void validate() const;
};

struct MetaState {
  std::vector<double> theta;
  std::map<int, std::vector<double>> phis;  // adaptive type id -> policy params
  int iteration = 0;
  std::vector<DiagnosticRecord> residual_history;
};

struct IterationStats {
  int iteration = 0;
  std::vector<int> sampled_type_ids;
  // theta_bar_xi - theta^t per sampled slot, for the outer-update identity.
  std::vector<std::vector<double>> slot_deltas;
  double r_defender_mean = std::numeric_limits<double>::quiet_NaN();
  double r_attacker_mean = std::numeric_limits<double>::quiet_NaN();
};

using IterationCallback = std::function<void(const MetaState&, const IterationStats&)>;
// Fills the residual fields of a DiagnosticRecord for the given state.
using DiagnosticsHook = std::function<DiagnosticRecord(const MetaState&, int iteration)>;

// Algorithm: Reptile meta-RL with l-step adaptation over rule-based attacks.
std::vector<double> reptile_meta_rl(const MetaConfig& cfg, const TypePrior& prior,
                                    const Game& game,
                                    const IterationCallback& cb = {});

// Inner best-response loop: n_inner ascent steps of the attacker's policy
// gradient with the defender frozen at theta_adapted; returns the last
// iterate. Optionally records the per-step mean attacker return.
std::vector<double> best_response(std::span<const double> theta_adapted,
                                  const AttackTypeSpec& type, const MetaConfig& cfg,
                                  const Game& game, std::span<const double> phi0,
                                  RngStream& rng,
                                  std::vector<double>* return_trace = nullptr);

// Algorithm: (Reptile) meta-Stackelberg learning with one-step adaptation.
MetaState meta_sl(const MetaConfig& cfg, const TypePrior& prior, const Game& game,
                  const IterationCallback& cb = {}, const DiagnosticsHook& diag = {});

// The ex-ante Bayesian Stackelberg baseline: meta_sl with eta forced to 0.
MetaState bse_baseline(const MetaConfig& cfg, const TypePrior& prior, const Game& game,
                       const IterationCallback& cb = {}, const DiagnosticsHook& diag = {});

struct OnlineStepStats {
  int step = 0;
  double r_defender_mean = 0.0;
  double r_attacker_mean = 0.0;
};
using OnlineStepCallback = std::function<void(const OnlineStepStats&)>;

// Online adaptation: repeated one-step adaptation against freshly collected
// trajectories from the live environment.
std::vector<double> online_adapt(std::span<const double> theta, const Game& game,
                                 const AttackTypeSpec* live_type,
                                 const std::vector<double>* phi, int steps, double eta,
                                 const MetaConfig& cfg,
                                 const OnlineStepCallback& cb = {});

// Mean per-step rewards of a batch, used for metrics.
std::pair<double, double> batch_reward_means(const std::vector<Trajectory>& batch);

}  // namespace metastack
