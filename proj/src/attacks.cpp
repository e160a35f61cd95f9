#include "metastack/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "metastack/defenses.hpp"
#include "metastack/vecmath.hpp"

namespace metastack {

AttackAction AttackAction::validated(double boost, double direction_mix, double noise_scale,
                                     double boost_cap) {
  AttackAction a{boost, direction_mix, noise_scale};
  a.validate(boost_cap);
  return a;
}

void AttackAction::validate(double boost_cap) const {
  if (!std::isfinite(boost) || !std::isfinite(direction_mix) || !std::isfinite(noise_scale))
    throw std::invalid_argument("attack action must be finite");
  if (!(boost >= 0.0 && boost <= boost_cap))
    throw std::invalid_argument("attack action: boost out of [0, cap]");
  if (!(direction_mix >= -1.0 && direction_mix <= 1.0))
    throw std::invalid_argument("attack action: direction_mix out of [-1, 1]");
  if (!(noise_scale >= 0.0))
    throw std::invalid_argument("attack action: noise_scale must be >= 0");
}

AttackAction AttackAction::from_policy(std::span<const double> raw, double boost_cap,
                                       double noise_cap) {
  if (raw.size() != 3) throw std::invalid_argument("attack action is 3-dimensional");
  AttackAction a;
  a.boost = boost_cap / (1.0 + std::exp(-raw[0]));
  a.direction_mix = std::tanh(raw[1]);
  a.noise_scale = noise_cap / (1.0 + std::exp(-raw[2]));
  a.validate(boost_cap);
  return a;
}

std::vector<double> ipm_update(const std::vector<std::vector<double>>& benign_updates,
                               double eps) {
  if (benign_updates.empty()) throw std::invalid_argument("ipm_update: no benign updates");
  if (!(eps >= 0.0)) throw std::invalid_argument("ipm_update: eps must be >= 0");
  std::vector<double> m = aggregate_mean(benign_updates);
  scale(m, -eps);
  return m;
}

namespace {

std::vector<double> lmp_crafted(const std::vector<double>& benign_mean, double lambda) {
  std::vector<double> u = benign_mean;
  scale(u, -lambda);
  return u;
}

}  // namespace

bool lmp_accepts(const std::vector<double>& crafted,
                 const std::vector<std::vector<double>>& benign_updates,
                 const std::string& aggregator, const LmpSearchConfig& cfg) {
  std::vector<std::vector<double>> combined;
  combined.reserve(benign_updates.size() + cfg.n_malicious);
  for (int i = 0; i < cfg.n_malicious; ++i) combined.push_back(crafted);
  for (const auto& u : benign_updates) combined.push_back(u);
  std::size_t n = combined.size();

  if (aggregator == "mean") return true;

  if (aggregator == "krum") {
    // Accepted iff krum selects one of the crafted copies.
    std::vector<double> pick = krum(combined, cfg.krum_f);
    return pick == crafted;
  }

  if (aggregator == "tmean") {
    // Accepted iff the crafted value is not trimmed away on any coordinate.
    std::size_t k = static_cast<std::size_t>(
        std::floor(cfg.trim_frac * static_cast<double>(n)));
    std::vector<double> col(n);
    for (std::size_t j = 0; j < crafted.size(); ++j) {
      for (std::size_t i = 0; i < n; ++i) col[i] = combined[i][j];
      std::sort(col.begin(), col.end());
      if (crafted[j] < col[k] || crafted[j] > col[n - 1 - k]) return false;
    }
    return true;
  }

  if (aggregator == "median") {
    // The median's shift saturates in lambda; any deviation that moves the
    // aggregate counts as accepted.
    std::vector<std::vector<double>> benign_only = benign_updates;
    std::vector<double> with_attack = aggregate_median(combined);
    std::vector<double> without = aggregate_median(benign_only);
    return with_attack != without;
  }

  throw std::invalid_argument("lmp_update: unsupported aggregator '" + aggregator + "'");
}

std::vector<double> lmp_update(const std::vector<std::vector<double>>& benign_updates,
                               const std::string& aggregator, const LmpSearchConfig& cfg) {
  if (benign_updates.empty()) throw std::invalid_argument("lmp_update: no benign updates");
  if (!(aggregator == "mean" || aggregator == "krum" || aggregator == "tmean" ||
        aggregator == "median"))
    throw std::invalid_argument("lmp_update: unsupported aggregator '" + aggregator + "'");

  std::vector<double> benign_mean = aggregate_mean(benign_updates);
  if (norm2(benign_mean) == 0.0)
    return std::vector<double>(benign_mean.size(), 0.0);

  double lambda = cfg.lambda0;
  for (int h = 0; h < cfg.max_halvings; ++h) {
    std::vector<double> crafted = lmp_crafted(benign_mean, lambda);
    if (lmp_accepts(crafted, benign_updates, aggregator, cfg)) return crafted;
    lambda *= 0.5;
  }
  return lmp_crafted(benign_mean, lambda);
}

std::vector<double> eb_update(const std::vector<double>& local_malicious_grad, double boost) {
  if (!(boost >= 0.0)) throw std::invalid_argument("eb_update: boost must be >= 0");
  std::vector<double> out = local_malicious_grad;
  scale(out, boost);
  return out;
}

Dataset backdoor_poison(const Dataset& data, const std::vector<double>& trigger, int target,
                        double fraction, RngStream& rng) {
  data.validate();
  if (static_cast<int>(trigger.size()) != data.d)
    throw std::invalid_argument("backdoor_poison: trigger dimension mismatch");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("backdoor_poison: fraction must lie in (0, 1]");
  if (target < 0 || target >= data.classes)
    throw std::invalid_argument("backdoor_poison: target class out of range");

  std::size_t n = data.size();
  std::size_t n_poison = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(n)));

  // Per-coordinate data range for the clamp.
  std::vector<double> lo(data.d), hi(data.d);
  for (int j = 0; j < data.d; ++j) {
    lo[j] = hi[j] = data.x[0][j];
    for (std::size_t i = 1; i < n; ++i) {
      lo[j] = std::min(lo[j], data.x[i][j]);
      hi[j] = std::max(hi[j], data.x[i][j]);
    }
  }

  // rng-seeded selection: partial Fisher-Yates over sample indices.
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < n_poison; ++i) {
    std::size_t j = i + rng.uniform_index(n - i);
    std::swap(idx[i], idx[j]);
  }

  Dataset out = data;
  for (std::size_t k = 0; k < n_poison; ++k) {
    std::size_t i = idx[k];
    for (int j = 0; j < data.d; ++j)
      out.x[i][j] = std::clamp(data.x[i][j] + trigger[j], lo[j], hi[j]);
    out.y[i] = target;
  }
  return out;
}

std::vector<double> apply_attack_action(const AttackAction& action,
                                        const std::vector<double>& benign_mean,
                                        const std::vector<double>& own_grad,
                                        RngStream& rng) {
  if (benign_mean.size() != own_grad.size())
    throw std::invalid_argument("apply_attack_action: dimension mismatch");
  std::size_t d = benign_mean.size();
  double mean_norm = norm2(benign_mean);
  double own_norm = norm2(own_grad);

  std::vector<double> update(d, 0.0);
  if (mean_norm > 0.0) {
    double w_mean = action.direction_mix / mean_norm;
    double w_own = own_norm > 0.0 ? (1.0 - std::abs(action.direction_mix)) / own_norm : 0.0;
    for (std::size_t j = 0; j < d; ++j)
      update[j] = action.boost * mean_norm * (w_mean * benign_mean[j] + w_own * own_grad[j]);
  } else if (own_norm > 0.0) {
    // No benign mean to align against: fall back to the own-gradient direction.
    for (std::size_t j = 0; j < d; ++j)
      update[j] = action.boost * own_grad[j];
  }
  if (action.noise_scale > 0.0) {
    for (std::size_t j = 0; j < d; ++j) update[j] += action.noise_scale * rng.gaussian();
  }
  return update;
}

}  // namespace metastack
