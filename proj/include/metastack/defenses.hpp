#pragma once

#include <span>
#include <string>
#include <vector>

#include "metastack/rng.hpp"

namespace metastack {

using UpdateList = std::vector<std::vector<double>>;

// Box the defender's 4-dim hyperparameter action lives in. Raw policy outputs
// are squashed into it coordinate-wise.
struct DefenseBox {
  double trim_lo = 0.0, trim_hi = 0.45;
  double norm_lo = 0.05, norm_hi = 10.0;
  double noise_lo = 0.0, noise_hi = 0.05;
  double clip_lo = 0.1, clip_hi = 10.0;
};

struct DefenseAction {
  double trim_frac = 0.0;   // beta in [0, 0.5)
  double norm_bound = 1.0;  // alpha > 0
  double noise_std = 0.0;   // delta >= 0
  double post_clip = 1.0;   // eps_clip > 0

  static DefenseAction validated(double trim_frac, double norm_bound, double noise_std,
                                 double post_clip);
  // Affine sigmoid squash of a raw 4-dim policy action into the box.
  static DefenseAction from_policy(std::span<const double> raw, const DefenseBox& box);
  void validate() const;
};

std::vector<double> aggregate_mean(const UpdateList& updates);
std::vector<double> aggregate_trimmed_mean(const UpdateList& updates, double beta);
std::vector<double> aggregate_median(const UpdateList& updates);

// Selects the update minimizing the sum of squared distances to its n-f-2
// nearest neighbors; requires n >= 2f+3. Ties broken by lowest index.
std::vector<double> krum(const UpdateList& updates, int f);

UpdateList norm_clip(const UpdateList& updates, double alpha);
std::vector<double> norm_clip_one(std::vector<double> u, double alpha);

// Trust-weighted aggregation against the server's own update on its root
// split: trust = relu(cosine), every update rescaled to the server norm.
std::vector<double> fltrust(const UpdateList& updates,
                            const std::vector<double>& server_update);

// Post-training defense h: coordinate clamp of model parameters.
std::vector<double> post_process(std::vector<double> params, double eps_clip);

// Aggregation pipeline: norm_clip(alpha) -> add gaussian noise delta ->
// aggregator -> (model update) -> post_process(eps_clip) applied by the env.
struct DefensePipeline {
  std::string aggregator = "tmean";  // mean|tmean|median|krum|fltrust
  int krum_f = 1;
  DefenseAction action;

  std::vector<double> aggregate(UpdateList updates,
                                const std::vector<double>* server_update,
                                RngStream& rng) const;
};

bool is_known_aggregator(const std::string& id);
DefensePipeline build_pipeline(const DefenseAction& action, const std::string& aggregator_id,
                               int krum_f);

}  // namespace metastack
