#include "metastack/fl_env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "metastack/vecmath.hpp"

namespace metastack {

void EnvConfig::validate() const {
  if (n_clients < 1) throw std::invalid_argument("env: need at least one client");
  if (subsample < 1 || subsample > n_clients)
    throw std::invalid_argument("env: subsample_count must lie in [1, n_clients]");
  if (horizon < 1) throw std::invalid_argument("env: horizon must be >= 1");
  if (!(discount > 0.0 && discount < 1.0))
    throw std::invalid_argument("env: discount must lie in (0,1)");
  if (!(local_lr >= 0.0)) throw std::invalid_argument("env: local_lr must be >= 0");
  if (local_steps < 0) throw std::invalid_argument("env: local_steps must be >= 0");
  if (!is_known_aggregator(aggregator))
    throw std::invalid_argument("env: unknown aggregator '" + aggregator + "'");
  if (!uses_idx()) data.validate();
  if (fixed_defense) fixed_defense->validate();
}

int EnvState::malicious_sampled() const {
  int c = 0;
  for (int v : identity) c += v;
  return c;
}

std::uint64_t EnvState::digest() const {
  std::uint64_t h = fnv1a64(&round, sizeof(round));
  h ^= fnv1a64(model.params.data(), model.params.size() * sizeof(double));
  if (!identity.empty()) h ^= fnv1a64(identity.data(), identity.size() * sizeof(int));
  return h;
}

void EnvState::validate() const {
  if (subset.size() != identity.size())
    throw std::invalid_argument("state: identity length must match subset size");
  for (int v : identity)
    if (v != 0 && v != 1) throw std::invalid_argument("state: identity entries must be 0/1");
  if (round < 0 || round > horizon)
    throw std::invalid_argument("state: round out of [0, H]");
  model.validate();
}

FlEnv::FlEnv(EnvConfig cfg, std::uint64_t data_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  RngStream data_rng = root_stream(data_seed, "env/data");
  if (cfg_.uses_idx()) {
    Dataset pool = load_idx_dataset(cfg_.idx_images, cfg_.idx_labels, cfg_.data.d,
                                    cfg_.idx_max_samples);
    // Carve the server splits off the pool, then shard the rest round-robin
    // through the same heterogeneity machinery as the synthetic task.
    int eval_n = std::min<int>(cfg_.eval_per_class * pool.classes,
                               static_cast<int>(pool.size()) / 4);
    int root_n = std::min<int>(cfg_.root_samples, static_cast<int>(pool.size()) / 8);
    server_eval_.d = root_.d = pool.d;
    server_eval_.classes = root_.classes = pool.classes;
    clients_.assign(cfg_.n_clients, Dataset{{}, {}, pool.d, pool.classes});
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (static_cast<int>(i) < eval_n) {
        server_eval_.x.push_back(pool.x[i]);
        server_eval_.y.push_back(pool.y[i]);
      } else if (static_cast<int>(i) < eval_n + root_n) {
        root_.x.push_back(pool.x[i]);
        root_.y.push_back(pool.y[i]);
      } else {
        int c = static_cast<int>(data_rng.uniform_index(cfg_.n_clients));
        clients_[c].x.push_back(pool.x[i]);
        clients_[c].y.push_back(pool.y[i]);
      }
    }
  } else {
    RngStream client_rng = data_rng.substream("clients");
    clients_ = make_synthetic_dataset(cfg_.data, cfg_.n_clients, client_rng);
    RngStream eval_rng = data_rng.substream("server");
    server_eval_ = sample_iid_dataset(cfg_.data, cfg_.eval_per_class, eval_rng);
    RngStream root_rng = data_rng.substream("root");
    int root_per_class = std::max(1, cfg_.root_samples / cfg_.data.classes);
    root_ = sample_iid_dataset(cfg_.data, root_per_class, root_rng);
  }
  for (const auto& c : clients_)
    if (c.x.empty())
      throw std::runtime_error("a client received an empty shard; increase per_class");
}

std::vector<int> FlEnv::sample_subset(RngStream& rng) const {
  std::vector<int> all(cfg_.n_clients);
  for (int i = 0; i < cfg_.n_clients; ++i) all[i] = i;
  for (int i = 0; i < cfg_.subsample; ++i) {
    int j = i + static_cast<int>(rng.uniform_index(cfg_.n_clients - i));
    std::swap(all[i], all[j]);
  }
  std::vector<int> subset(all.begin(), all.begin() + cfg_.subsample);
  std::sort(subset.begin(), subset.end());
  return subset;
}

Dataset FlEnv::make_backdoor_eval(const AttackTypeSpec& type, RngStream& rng) const {
  if (!type.trigger || !type.target_label)
    throw std::invalid_argument("type " + std::to_string(type.id) +
                                " has no trigger spec for backdoor evaluation");
  return backdoor_poison(server_eval_, *type.trigger, *type.target_label, 1.0, rng);
}

FlEnv::Episode FlEnv::begin_episode(const AttackTypeSpec* type, RngStream& rng) const {
  if (type) type->validate();
  Episode ep;
  ep.type = type;
  ep.state.model = GlobalModel::zeros(server_eval_.d, server_eval_.classes);
  ep.state.horizon = cfg_.horizon;
  ep.state.round = 0;
  ep.state.server_loss = eval_loss(ep.state.model, server_eval_);

  int n_malicious = type ? type->malicious_count() : 0;
  if (n_malicious > cfg_.n_clients)
    throw std::invalid_argument("type controls more clients than exist");

  if (type && type->m1 > 0) {
    RngStream poison_rng = rng.substream("poison");
    ep.poisoned_shards.resize(type->m1);
    for (int i = 0; i < type->m1; ++i) {
      RngStream shard_rng = poison_rng.substream(static_cast<std::uint64_t>(i));
      ep.poisoned_shards[i] = backdoor_poison(clients_[i], *type->trigger,
                                              *type->target_label,
                                              cfg_.attack.poison_fraction, shard_rng);
    }
    RngStream eval_rng = rng.substream("backdoor_eval");
    ep.backdoor_eval = make_backdoor_eval(*type, eval_rng);
  }

  ep.state.subset = sample_subset(rng);
  ep.state.identity.assign(ep.state.subset.size(), 0);
  for (std::size_t i = 0; i < ep.state.subset.size(); ++i)
    if (ep.state.subset[i] < n_malicious) ep.state.identity[i] = 1;
  return ep;
}

std::vector<double> FlEnv::observe_defender(const EnvState& s) const {
  return {norm2(s.model.params),
          s.server_loss,
          s.prev_stats.cos_mean,
          s.prev_stats.cos_min,
          s.prev_stats.cos_max,
          s.prev_stats.norm_mean,
          s.prev_stats.norm_max,
          static_cast<double>(s.round) / static_cast<double>(s.horizon)};
}

std::vector<double> FlEnv::observe_attacker(const EnvState& s,
                                            const AttackTypeSpec& type) const {
  (void)type;  // the identity vector already encodes which clients are malicious
  std::vector<double> obs = observe_defender(s);
  obs.push_back(static_cast<double>(s.malicious_sampled()));
  obs.push_back(static_cast<double>(s.round) / static_cast<double>(s.horizon));
  return obs;
}

std::pair<double, double> FlEnv::rewards(const GlobalModel& after,
                                         const AttackTypeSpec* type,
                                         const Dataset* backdoor_eval,
                                         int malicious_sampled) const {
  double F = eval_loss(after, server_eval_);
  double r_d = -F;
  double r_a = 0.0;
  if (type && malicious_sampled > 0) {
    double rho = type->rho();
    double f_prime = F;
    if (type->m1 > 0) {
      if (backdoor_eval == nullptr)
        throw std::invalid_argument("backdoor evaluation set missing for backdoor type");
      double f_bd = eval_loss(after, *backdoor_eval);
      f_prime = type->lambda_mix * F + (1.0 - type->lambda_mix) * f_bd;
    }
    if (cfg_.reward_sign_mode == RewardSignMode::consistent)
      r_a = -rho * f_prime + (1.0 - rho) * F;
    else
      r_a = rho * f_prime - (1.0 - rho) * F;
  }
  return {r_d, r_a};
}

std::vector<double> FlEnv::malicious_update(const Episode& ep,
                                            const std::vector<std::vector<double>>& benign,
                                            const std::vector<int>& sampled_malicious,
                                            const AttackAction* adaptive_action,
                                            RngStream& rng) const {
  const AttackTypeSpec& type = *ep.type;
  const GlobalModel& model = ep.state.model;
  std::size_t dim = model.params.size();

  // Pooled shard of the sampled malicious clients; backdoor clients
  // contribute their poisoned copies.
  Dataset pooled;
  pooled.d = model.d;
  pooled.classes = model.classes;
  for (int c : sampled_malicious) {
    const Dataset& src = c < type.m1 ? ep.poisoned_shards[c] : clients_[c];
    pooled.x.insert(pooled.x.end(), src.x.begin(), src.x.end());
    pooled.y.insert(pooled.y.end(), src.y.begin(), src.y.end());
  }
  std::vector<double> own_update =
      pooled.x.empty() ? std::vector<double>(dim, 0.0)
                       : local_sgd_update(model, pooled, cfg_.local_lr, cfg_.local_steps);

  if (type.is_adaptive()) {
    std::vector<double> benign_mean(dim, 0.0);
    if (cfg_.attack.see_benign_mean && !benign.empty())
      benign_mean = aggregate_mean(benign);
    RngStream noise = rng.substream("attack_noise");
    return apply_attack_action(*adaptive_action, benign_mean, own_update, noise);
  }

  if (type.rule_id == kRuleBflStatic)
    return eb_update(own_update, cfg_.attack.bfl_boost);

  // Untargeted rules need benign updates to manipulate; with none sampled the
  // round is a no-op for them.
  if (benign.empty() && (type.rule_id == kRuleIpm || type.rule_id == kRuleLmp))
    return std::vector<double>(dim, 0.0);

  if (type.rule_id == kRuleIpm) return ipm_update(benign, cfg_.attack.ipm_eps);
  if (type.rule_id == kRuleLmp) {
    LmpSearchConfig lcfg;
    lcfg.lambda0 = cfg_.attack.lmp_lambda0;
    lcfg.max_halvings = cfg_.attack.lmp_max_halvings;
    lcfg.n_malicious = static_cast<int>(sampled_malicious.size());
    lcfg.krum_f = cfg_.krum_f;
    // LMP's line search supports mean/krum/tmean/median; against fltrust we
    // search against tmean as a surrogate.
    std::string agg = cfg_.aggregator == "fltrust" ? "tmean" : cfg_.aggregator;
    return lmp_update(benign, agg, lcfg);
  }
  if (type.rule_id == kRuleEb) {
    // Ascent on the loss: boost the negated descent update.
    std::vector<double> ascent = own_update;
    scale(ascent, -1.0);
    return eb_update(ascent, cfg_.attack.eb_boost);
  }
  throw std::invalid_argument("unknown attack rule '" + type.rule_id + "'");
}

FlEnv::StepOutcome FlEnv::step(Episode& ep, const DefenseAction& defense,
                               const AttackAction* adaptive_action, RngStream& rng) const {
  EnvState& s = ep.state;
  if (s.round >= cfg_.horizon)
    throw std::invalid_argument("step: episode already at horizon");
  defense.validate();
  if (ep.type && ep.type->is_adaptive() && adaptive_action == nullptr)
    throw std::invalid_argument("adaptive type needs an attack action");

  // (1) Next round's subset; identities are independent of actions.
  std::vector<int> next_subset = sample_subset(rng);

  int n_malicious = ep.type ? ep.type->malicious_count() : 0;
  std::vector<int> sampled_malicious;
  std::vector<int> sampled_benign;
  for (int c : s.subset)
    (c < n_malicious ? sampled_malicious : sampled_benign).push_back(c);

  // (2) Benign local training.
  std::vector<std::vector<double>> benign_updates;
  benign_updates.reserve(sampled_benign.size());
  for (int c : sampled_benign)
    benign_updates.push_back(
        local_sgd_update(s.model, clients_[c], cfg_.local_lr, cfg_.local_steps));

  // (3) Malicious updates; the mastermind submits one identical vector per
  // controlled client.
  std::vector<double> mal;
  if (!sampled_malicious.empty())
    mal = malicious_update(ep, benign_updates, sampled_malicious, adaptive_action, rng);

  std::vector<std::vector<double>> received;
  received.reserve(s.subset.size());
  {
    std::size_t bi = 0;
    for (std::size_t i = 0; i < s.subset.size(); ++i) {
      if (s.identity[i] == 1)
        received.push_back(mal);
      else
        received.push_back(benign_updates[bi++]);
    }
  }
  for (std::size_t i = 0; i < received.size(); ++i) {
    if (received[i].size() != s.model.params.size())
      throw std::runtime_error("client " + std::to_string(s.subset[i]) +
                               " produced an update of wrong dimension");
    if (!all_finite(received[i]))
      throw std::runtime_error("client " + std::to_string(s.subset[i]) +
                               " produced a non-finite update");
  }

  // (4) Defense pipeline and model update.
  DefensePipeline pipeline = build_pipeline(defense, cfg_.aggregator, cfg_.krum_f);
  std::vector<double> server_update;
  const std::vector<double>* server_ptr = nullptr;
  if (cfg_.aggregator == "fltrust") {
    server_update = local_sgd_update(s.model, root_, cfg_.local_lr, cfg_.local_steps);
    server_ptr = &server_update;
  }
  RngStream defense_rng = rng.substream("defense_noise");
  std::vector<double> agg = pipeline.aggregate(received, server_ptr, defense_rng);

  GlobalModel next_model = s.model;
  for (std::size_t i = 0; i < next_model.params.size(); ++i) next_model.params[i] -= agg[i];
  next_model.params = post_process(std::move(next_model.params), defense.post_clip);

  // (5) Rewards on the post-processed model.
  auto [r_d, r_a] = rewards(next_model, ep.type,
                            ep.backdoor_eval ? &*ep.backdoor_eval : nullptr,
                            s.malicious_sampled());

  // Summaries of the received (raw) updates feed the next observation.
  UpdateStats stats;
  if (!received.empty()) {
    double nsum = 0.0, nmax = 0.0;
    for (const auto& u : received) {
      double nu = norm2(u);
      nsum += nu;
      nmax = std::max(nmax, nu);
    }
    stats.norm_mean = nsum / static_cast<double>(received.size());
    stats.norm_max = nmax;
    if (received.size() >= 2) {
      double csum = 0.0, cmin = 1.0, cmax = -1.0;
      int pairs = 0;
      for (std::size_t i = 0; i < received.size(); ++i)
        for (std::size_t j = i + 1; j < received.size(); ++j) {
          double c = cosine_similarity(received[i], received[j]);
          csum += c;
          cmin = std::min(cmin, c);
          cmax = std::max(cmax, c);
          pairs++;
        }
      stats.cos_mean = csum / pairs;
      stats.cos_min = cmin;
      stats.cos_max = cmax;
    }
  }

  s.model = std::move(next_model);
  s.subset = std::move(next_subset);
  s.identity.assign(s.subset.size(), 0);
  for (std::size_t i = 0; i < s.subset.size(); ++i)
    if (s.subset[i] < n_malicious) s.identity[i] = 1;
  s.round += 1;
  s.prev_stats = stats;
  s.server_loss = -r_d;

  return {r_d, r_a};
}

}  // namespace metastack
