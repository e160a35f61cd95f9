#pragma once

#include <span>
#include <string>
#include <vector>

#include "metastack/dataset.hpp"
#include "metastack/rng.hpp"

namespace metastack {

// Low-dimensional parameterization of the adaptive attacker's per-round move.
struct AttackAction {
  double boost = 1.0;          // >= 0, capped
  double direction_mix = 0.0;  // in [-1, 1]; -1 anti-parallel to benign mean
  double noise_scale = 0.0;    // >= 0

  static AttackAction validated(double boost, double direction_mix, double noise_scale,
                                double boost_cap);
  static AttackAction from_policy(std::span<const double> raw, double boost_cap,
                                  double noise_cap);
  void validate(double boost_cap) const;
};

// Inner product manipulation: every malicious client submits -eps * mean(benign).
std::vector<double> ipm_update(const std::vector<std::vector<double>>& benign_updates,
                               double eps);

struct LmpSearchConfig {
  double lambda0 = 10.0;
  int max_halvings = 20;
  int n_malicious = 1;   // copies of the crafted update inserted for the check
  double trim_frac = 0.2;
  int krum_f = 1;
};

// Directed-deviation attack with a halving line search on the magnitude:
// crafted(lambda) = -lambda * mean(benign); lambda starts at lambda0 and is
// halved until the crafted update passes the aggregator acceptance predicate.
std::vector<double> lmp_update(const std::vector<std::vector<double>>& benign_updates,
                               const std::string& aggregator, const LmpSearchConfig& cfg);

// The acceptance predicate used by the line search, exposed for testing.
bool lmp_accepts(const std::vector<double>& crafted,
                 const std::vector<std::vector<double>>& benign_updates,
                 const std::string& aggregator, const LmpSearchConfig& cfg);

// Explicit boosting.
std::vector<double> eb_update(const std::vector<double>& local_malicious_grad, double boost);

// Adds the trigger to ceil(fraction*|data|) rng-selected samples and relabels
// them to the target class. Triggered features are clamped to the
// per-coordinate range of the original data.
Dataset backdoor_poison(const Dataset& data, const std::vector<double>& trigger, int target,
                        double fraction, RngStream& rng);

// Maps an adaptive policy action to a concrete model update.
std::vector<double> apply_attack_action(const AttackAction& action,
                                        const std::vector<double>& benign_mean,
                                        const std::vector<double>& own_grad,
                                        RngStream& rng);

}  // namespace metastack
