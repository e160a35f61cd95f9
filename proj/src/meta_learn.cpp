#include "metastack/meta_learn.hpp"

#include <cmath>
#include <stdexcept>

namespace metastack {

void MetaConfig::validate() const {
  if (types_per_iter < 1) throw std::invalid_argument("meta: K must be >= 1");
  if (adapt_steps < 0) throw std::invalid_argument("meta: l must be >= 0");
  if (n_outer < 1) throw std::invalid_argument("meta: N_D must be >= 1");
  if (n_inner < 0) throw std::invalid_argument("meta: N_A must be >= 0");
  if (n_batch < 1) throw std::invalid_argument("meta: N_b must be >= 1");
  if (eta < 0.0) throw std::invalid_argument("meta: eta must be >= 0");
  if (kappa < 0.0 || kappa_attacker < 0.0 || kappa_defender < 0.0)
    throw std::invalid_argument("meta: step sizes must be >= 0");
  if (workers < 1) throw std::invalid_argument("meta: workers must be >= 1");
}

std::pair<double, double> batch_reward_means(const std::vector<Trajectory>& batch) {
  double rd = 0.0, ra = 0.0;
  std::size_t n = 0;
  for (const auto& tau : batch)
    for (const auto& s : tau.steps) {
      rd += s.reward_defender;
      ra += s.reward_attacker;
      n++;
    }
  if (n == 0) return {0.0, 0.0};
  return {rd / static_cast<double>(n), ra / static_cast<double>(n)};
}

namespace {

struct RewardAccum {
  double rd = 0.0, ra = 0.0;
  std::size_t steps = 0;

  void add(const std::vector<Trajectory>& batch) {
    for (const auto& tau : batch)
      for (const auto& s : tau.steps) {
        rd += s.reward_defender;
        ra += s.reward_attacker;
        steps++;
      }
  }
  void fill(IterationStats& st) const {
    if (steps == 0) return;
    st.r_defender_mean = rd / static_cast<double>(steps);
    st.r_attacker_mean = ra / static_cast<double>(steps);
  }
};

std::vector<double> init_defender(const MetaConfig& cfg, const Game& game) {
  RngStream rng = root_stream(cfg.seed, "init/defender");
  return game.defender_policy().init_params(rng);
}

std::map<int, std::vector<double>> init_attackers(const MetaConfig& cfg,
                                                  const TypePrior& prior,
                                                  const Game& game) {
  std::map<int, std::vector<double>> phis;
  const StochasticPolicy* pol = game.attacker_policy();
  for (const auto& [type, p] : prior.entries) {
    if (!type.is_adaptive()) continue;
    if (pol == nullptr)
      throw std::invalid_argument("game has no attacker policy for adaptive types");
    RngStream rng =
        root_stream(cfg.seed, "init/attacker").substream(static_cast<std::uint64_t>(type.id));
    phis[type.id] = pol->init_params(rng);
  }
  return phis;
}

MetaState meta_sl_impl(const MetaConfig& cfg_in, const TypePrior& prior, const Game& game,
                       const IterationCallback& cb, const DiagnosticsHook& diag,
                       bool force_eta_zero) {
  MetaConfig cfg = cfg_in;
  cfg.validate();
  prior.validate();
  if (force_eta_zero) cfg.eta = 0.0;
  const StochasticPolicy& dpol = game.defender_policy();
  const int K = cfg.types_per_iter;

  MetaState state;
  state.theta = init_defender(cfg, game);
  state.phis = init_attackers(cfg, prior, game);

  RngStream meta_rng = root_stream(cfg.seed, "meta");

  for (int t = 1; t <= cfg.n_outer; ++t) {
    RngStream iter_rng = meta_rng.substream(static_cast<std::uint64_t>(t));
    RngStream types_rng = iter_rng.substream("types");

    IterationStats stats;
    stats.iteration = t;
    RewardAccum rewards;
    std::vector<double> delta_sum(state.theta.size(), 0.0);

    for (int slot = 0; slot < K; ++slot) {
      AttackTypeSpec type = sample_type(prior, types_rng);
      stats.sampled_type_ids.push_back(type.id);
      RngStream slot_rng = iter_rng.substream(static_cast<std::uint64_t>(slot));

      // One-step adaptation of the defender against the current attacker.
      std::vector<double>* phi = nullptr;
      auto it = state.phis.find(type.id);
      if (it != state.phis.end()) phi = &it->second;

      std::vector<double> theta_ad = state.theta;
      if (cfg.eta > 0.0) {
        auto batch = rollout_batch(game, state.theta, phi, &type, cfg.n_batch,
                                   slot_rng.substream("adapt"), cfg.workers);
        rewards.add(batch);
        theta_ad = adapt(dpol, state.theta, batch, cfg.eta, cfg.baseline);
      }

      // Inner attacker loop; rule-based types keep their fixed rule.
      if (type.is_adaptive()) {
        std::vector<double> phi_cur = *phi;
        const StochasticPolicy& apol = *game.attacker_policy();
        for (int k = 0; k < cfg.n_inner; ++k) {
          auto batch = rollout_batch(game, theta_ad, &phi_cur, &type, cfg.n_batch,
                                     slot_rng.substream("br").substream(k), cfg.workers);
          rewards.add(batch);
          GradEstimate ga = pg_estimate(apol, phi_cur, batch, Player::attacker, cfg.baseline);
          axpy(cfg.kappa_attacker, ga.vector, phi_cur);
        }
        *phi = std::move(phi_cur);
      }

      // Defender gradient at the stabilized attacker.
      GradEstimate gd;
      if (cfg.mode == MetaMode::reptile) {
        auto batch = rollout_batch(game, theta_ad, phi, &type, cfg.n_batch,
                                   slot_rng.substream("g").substream(0), cfg.workers);
        rewards.add(batch);
        gd = pg_estimate(dpol, theta_ad, batch, Player::defender, cfg.baseline);
      } else {
        SamplerFn sampler = make_sampler(game, phi, &type);
        RngStream mg_rng = slot_rng.substream("mg");
        gd = meta_gradient(dpol, state.theta, cfg.eta, MetaMode::full, sampler, cfg.n_batch,
                           cfg.baseline, mg_rng);
      }

      std::vector<double> delta(state.theta.size(), 0.0);
      axpy(cfg.kappa_defender, gd.vector, delta);
      stats.slot_deltas.push_back(delta);
      axpy(1.0, delta, delta_sum);
    }

    axpy(1.0 / static_cast<double>(K), delta_sum, state.theta);
    state.iteration = t;
    rewards.fill(stats);

    DiagnosticRecord rec;
    rec.iteration = t;
    if (diag) rec = diag(state, t);
    rec.iteration = t;
    state.residual_history.push_back(std::move(rec));
    if (cb) cb(state, stats);
  }
  return state;
}

}  // namespace

std::vector<double> reptile_meta_rl(const MetaConfig& cfg, const TypePrior& prior,
                                    const Game& game, const IterationCallback& cb) {
  cfg.validate();
  prior.validate();
  if (prior.has_adaptive())
    throw std::invalid_argument(
        "reptile_meta_rl only handles rule-based types; use meta_sl for adaptive types");
  const StochasticPolicy& dpol = game.defender_policy();
  const int K = cfg.types_per_iter;

  MetaState state;
  state.theta = init_defender(cfg, game);
  RngStream meta_rng = root_stream(cfg.seed, "meta");

  for (int t = 1; t <= cfg.n_outer; ++t) {
    RngStream iter_rng = meta_rng.substream(static_cast<std::uint64_t>(t));
    RngStream types_rng = iter_rng.substream("types");

    IterationStats stats;
    stats.iteration = t;
    RewardAccum rewards;
    std::vector<double> delta_sum(state.theta.size(), 0.0);

    for (int slot = 0; slot < K; ++slot) {
      AttackTypeSpec type = sample_type(prior, types_rng);
      stats.sampled_type_ids.push_back(type.id);
      RngStream slot_rng = iter_rng.substream(static_cast<std::uint64_t>(slot));

      std::vector<double> theta_k = state.theta;
      for (int j = 0; j < cfg.adapt_steps; ++j) {
        auto batch = rollout_batch(game, theta_k, nullptr, &type, cfg.n_batch,
                                   slot_rng.substream("g").substream(j), cfg.workers);
        rewards.add(batch);
        GradEstimate g = pg_estimate(dpol, theta_k, batch, Player::defender, cfg.baseline);
        axpy(cfg.kappa, g.vector, theta_k);
      }

      std::vector<double> delta(state.theta.size());
      for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = theta_k[i] - state.theta[i];
      stats.slot_deltas.push_back(delta);
      axpy(1.0, delta, delta_sum);
    }

    axpy(1.0 / static_cast<double>(K), delta_sum, state.theta);
    state.iteration = t;
    rewards.fill(stats);
    if (cb) cb(state, stats);
  }
  return state.theta;
}

std::vector<double> best_response(std::span<const double> theta_adapted,
                                  const AttackTypeSpec& type, const MetaConfig& cfg,
                                  const Game& game, std::span<const double> phi0,
                                  RngStream& rng, std::vector<double>* return_trace) {
  if (!type.is_adaptive())
    throw std::invalid_argument("best_response needs an adaptive type");
  const StochasticPolicy& apol = *game.attacker_policy();
  std::vector<double> phi(phi0.begin(), phi0.end());
  std::vector<double> theta(theta_adapted.begin(), theta_adapted.end());
  for (int k = 0; k < cfg.n_inner; ++k) {
    auto batch = rollout_batch(game, theta, &phi, &type, cfg.n_batch,
                               rng.substream(static_cast<std::uint64_t>(k)), cfg.workers);
    if (return_trace) {
      double sum = 0.0;
      for (const auto& tau : batch) sum += discounted_return(tau, Player::attacker);
      return_trace->push_back(sum / static_cast<double>(batch.size()));
    }
    GradEstimate ga = pg_estimate(apol, phi, batch, Player::attacker, cfg.baseline);
    axpy(cfg.kappa_attacker, ga.vector, phi);
  }
  return phi;
}

MetaState meta_sl(const MetaConfig& cfg, const TypePrior& prior, const Game& game,
                  const IterationCallback& cb, const DiagnosticsHook& diag) {
  return meta_sl_impl(cfg, prior, game, cb, diag, false);
}

MetaState bse_baseline(const MetaConfig& cfg, const TypePrior& prior, const Game& game,
                       const IterationCallback& cb, const DiagnosticsHook& diag) {
  return meta_sl_impl(cfg, prior, game, cb, diag, true);
}

std::vector<double> online_adapt(std::span<const double> theta, const Game& game,
                                 const AttackTypeSpec* live_type,
                                 const std::vector<double>* phi, int steps, double eta,
                                 const MetaConfig& cfg, const OnlineStepCallback& cb) {
  if (steps < 0) throw std::invalid_argument("online_adapt: steps must be >= 0");
  const StochasticPolicy& dpol = game.defender_policy();
  std::vector<double> th(theta.begin(), theta.end());
  RngStream rng = root_stream(cfg.seed, "online");
  for (int s = 0; s < steps; ++s) {
    auto batch = rollout_batch(game, th, phi, live_type, cfg.n_batch,
                               rng.substream(static_cast<std::uint64_t>(s)), cfg.workers);
    th = adapt(dpol, th, batch, eta, cfg.baseline);
    if (cb) {
      auto [rd, ra] = batch_reward_means(batch);
      cb({s, rd, ra});
    }
  }
  return th;
}

}  // namespace metastack
