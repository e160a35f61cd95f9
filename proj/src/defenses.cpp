#include "metastack/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "metastack/vecmath.hpp"

namespace metastack {

namespace {

void check_nonempty_equal_dims(const UpdateList& updates, const char* who) {
  if (updates.empty()) throw std::invalid_argument(std::string(who) + ": no updates");
  std::size_t d = updates[0].size();
  for (const auto& u : updates)
    if (u.size() != d)
      throw std::invalid_argument(std::string(who) + ": updates differ in dimension");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

DefenseAction DefenseAction::validated(double trim_frac, double norm_bound,
                                       double noise_std, double post_clip) {
  DefenseAction a{trim_frac, norm_bound, noise_std, post_clip};
  a.validate();
  return a;
}

void DefenseAction::validate() const {
  if (!(trim_frac >= 0.0 && trim_frac < 0.5))
    throw std::invalid_argument("defense action: trim fraction must lie in [0, 0.5)");
  if (!(norm_bound > 0.0)) throw std::invalid_argument("defense action: norm bound must be > 0");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("defense action: noise std must be >= 0");
  if (!(post_clip > 0.0)) throw std::invalid_argument("defense action: post clip must be > 0");
}

DefenseAction DefenseAction::from_policy(std::span<const double> raw, const DefenseBox& box) {
  if (raw.size() != 4) throw std::invalid_argument("defense action is 4-dimensional");
  DefenseAction a;
  a.trim_frac = box.trim_lo + (box.trim_hi - box.trim_lo) * sigmoid(raw[0]);
  a.norm_bound = box.norm_lo + (box.norm_hi - box.norm_lo) * sigmoid(raw[1]);
  a.noise_std = box.noise_lo + (box.noise_hi - box.noise_lo) * sigmoid(raw[2]);
  a.post_clip = box.clip_lo + (box.clip_hi - box.clip_lo) * sigmoid(raw[3]);
  a.validate();
  return a;
}

std::vector<double> aggregate_mean(const UpdateList& updates) {
  check_nonempty_equal_dims(updates, "aggregate_mean");
  std::size_t d = updates[0].size();
  std::vector<double> out(d, 0.0);
  pairwise_sum_rows(updates, out);
  scale(out, 1.0 / static_cast<double>(updates.size()));
  return out;
}

std::vector<double> aggregate_trimmed_mean(const UpdateList& updates, double beta) {
  check_nonempty_equal_dims(updates, "aggregate_trimmed_mean");
  if (!(beta >= 0.0 && beta < 0.5))
    throw std::invalid_argument("trimmed mean: beta must lie in [0, 0.5)");
  std::size_t n = updates.size();
  std::size_t k = static_cast<std::size_t>(std::floor(beta * static_cast<double>(n)));
  if (n < 2 * k + 1) throw std::invalid_argument("trimmed mean: nothing survives trimming");
  std::size_t d = updates[0].size();
  std::vector<double> out(d, 0.0);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = updates[i][j];
    std::sort(col.begin(), col.end());
    double s = 0.0;
    for (std::size_t i = k; i < n - k; ++i) s += col[i];
    out[j] = s / static_cast<double>(n - 2 * k);
  }
  return out;
}

std::vector<double> aggregate_median(const UpdateList& updates) {
  check_nonempty_equal_dims(updates, "aggregate_median");
  std::size_t n = updates.size();
  std::size_t d = updates[0].size();
  std::vector<double> out(d, 0.0);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = updates[i][j];
    std::sort(col.begin(), col.end());
    out[j] = n % 2 == 1 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
  }
  return out;
}

std::vector<double> krum(const UpdateList& updates, int f) {
  check_nonempty_equal_dims(updates, "krum");
  int n = static_cast<int>(updates.size());
  if (f < 0) throw std::invalid_argument("krum: f must be >= 0");
  if (n < 2 * f + 3)
    throw std::invalid_argument("krum requires n >= 2f+3 (n=" + std::to_string(n) +
                                ", f=" + std::to_string(f) + ")");
  int neighbors = n - f - 2;
  std::vector<std::vector<double>> dist2(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < updates[i].size(); ++k) {
        double diff = updates[i][k] - updates[j][k];
        s += diff * diff;
      }
      dist2[i][j] = dist2[j][i] = s;
    }
  }
  int best = 0;
  double best_score = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> others;
    others.reserve(n - 1);
    for (int j = 0; j < n; ++j)
      if (j != i) others.push_back(dist2[i][j]);
    std::sort(others.begin(), others.end());
    double score = 0.0;
    for (int k = 0; k < neighbors; ++k) score += others[k];
    if (i == 0 || score < best_score) {
      best = i;
      best_score = score;
    }
  }
  return updates[best];
}

std::vector<double> norm_clip_one(std::vector<double> u, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("norm_clip: alpha must be > 0");
  double nrm = norm2(u);
  if (nrm > alpha) scale(u, alpha / nrm);
  return u;
}

UpdateList norm_clip(const UpdateList& updates, double alpha) {
  UpdateList out;
  out.reserve(updates.size());
  for (const auto& u : updates) out.push_back(norm_clip_one(u, alpha));
  return out;
}

std::vector<double> fltrust(const UpdateList& updates,
                            const std::vector<double>& server_update) {
  check_nonempty_equal_dims(updates, "fltrust");
  double server_norm = norm2(server_update);
  if (server_norm == 0.0) throw std::invalid_argument("fltrust: zero server update");
  if (updates[0].size() != server_update.size())
    throw std::invalid_argument("fltrust: dimension mismatch with server update");

  std::vector<double> out(server_update.size(), 0.0);
  double total_trust = 0.0;
  for (const auto& u : updates) {
    double nrm = norm2(u);
    if (nrm == 0.0) continue;  // zero trust, nothing to add
    double trust = std::max(0.0, dot(u, server_update) / (nrm * server_norm));
    if (trust == 0.0) continue;
    double rescale = server_norm / nrm;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += trust * rescale * u[j];
    total_trust += trust;
  }
  if (total_trust == 0.0) return server_update;  // fall back to the root update
  scale(out, 1.0 / total_trust);
  return out;
}

std::vector<double> post_process(std::vector<double> params, double eps_clip) {
  if (!(eps_clip > 0.0)) throw std::invalid_argument("post_process: eps_clip must be > 0");
  for (double& p : params) p = std::clamp(p, -eps_clip, eps_clip);
  return params;
}

bool is_known_aggregator(const std::string& id) {
  return id == "mean" || id == "tmean" || id == "median" || id == "krum" || id == "fltrust";
}

DefensePipeline build_pipeline(const DefenseAction& action, const std::string& aggregator_id,
                               int krum_f) {
  action.validate();
  if (!is_known_aggregator(aggregator_id))
    throw std::invalid_argument("unknown aggregator id: " + aggregator_id);
  DefensePipeline p;
  p.aggregator = aggregator_id;
  p.krum_f = krum_f;
  p.action = action;
  return p;
}

std::vector<double> DefensePipeline::aggregate(UpdateList updates,
                                               const std::vector<double>* server_update,
                                               RngStream& rng) const {
  action.validate();
  updates = norm_clip(updates, action.norm_bound);
  if (action.noise_std > 0.0) {
    for (auto& u : updates)
      for (double& v : u) v += action.noise_std * rng.gaussian();
  }
  if (aggregator == "mean") return aggregate_mean(updates);
  if (aggregator == "tmean") return aggregate_trimmed_mean(updates, action.trim_frac);
  if (aggregator == "median") return aggregate_median(updates);
  if (aggregator == "krum") return krum(updates, krum_f);
  if (aggregator == "fltrust") {
    if (server_update == nullptr)
      throw std::invalid_argument("fltrust pipeline needs a server update");
    return fltrust(updates, *server_update);
  }
  throw std::invalid_argument("unknown aggregator id: " + aggregator);
}

}  // namespace metastack
