#include "metastack/game.hpp"

#include <thread>

namespace metastack {

std::vector<Trajectory> rollout_batch(const Game& game, std::span<const double> theta,
                                      const std::vector<double>* phi,
                                      const AttackTypeSpec* type, int n,
                                      const RngStream& base, int workers) {
  std::vector<Trajectory> out(n);
  auto run_range = [&](int begin, int stride) {
    for (int i = begin; i < n; i += stride) {
      RngStream rng = base.substream(static_cast<std::uint64_t>(i));
      out[i] = game.rollout(theta, phi, type, rng);
    }
  };
  if (workers <= 1 || n <= 1) {
    run_range(0, 1);
  } else {
    int k = std::min(workers, n);
    std::vector<std::thread> pool;
    pool.reserve(k);
    for (int w = 0; w < k; ++w) pool.emplace_back(run_range, w, k);
    for (auto& t : pool) t.join();
  }
  return out;
}

SamplerFn make_sampler(const Game& game, const std::vector<double>* phi,
                       const AttackTypeSpec* type) {
  return [&game, phi, type](std::span<const double> theta, RngStream& rng) {
    return game.rollout(theta, phi, type, rng);
  };
}

FlGame::FlGame(EnvConfig cfg, std::uint64_t data_seed, int policy_hidden,
               double log_std_init)
    : env_(std::move(cfg), data_seed),
      defender_(env_.obs_dim_defender(), policy_hidden, 4, log_std_init),
      attacker_(env_.obs_dim_attacker(), policy_hidden, 3, log_std_init) {}

Trajectory FlGame::rollout(std::span<const double> theta, const std::vector<double>* phi,
                           const AttackTypeSpec* type, RngStream& rng) const {
  return rollout_impl(theta, phi, type, rng, nullptr);
}

Trajectory FlGame::rollout_impl(std::span<const double> theta, const std::vector<double>* phi,
                                const AttackTypeSpec* type, RngStream& rng,
                                FlEnv::Episode* final_episode) const {
  const EnvConfig& cfg = env_.config();
  bool adaptive = type && type->is_adaptive();
  if (adaptive && phi == nullptr)
    throw std::invalid_argument("adaptive attacker type needs policy parameters");

  Trajectory tau;
  tau.horizon = cfg.horizon;
  tau.discount = cfg.discount;
  tau.type_id = type ? type->id : -1;
  tau.policy_hash_defender = params_hash(theta);
  tau.policy_hash_attacker = phi ? params_hash(*phi) : 0;

  RngStream env_rng = rng.substream("env");
  FlEnv::Episode ep = env_.begin_episode(type, env_rng);
  RngStream act_rng = rng.substream("act");

  for (int t = 0; t < cfg.horizon; ++t) {
    TrajectoryStep step;
    step.state_digest = ep.state.digest();
    step.malicious_sampled = ep.state.malicious_sampled();
    step.defender_obs = env_.observe_defender(ep.state);

    DefenseAction defense;
    if (cfg.fixed_defense) {
      defense = *cfg.fixed_defense;
      step.logp_defender = 0.0;
    } else {
      step.defender_action.resize(defender_.act_dim());
      defender_.act(theta, step.defender_obs, act_rng, step.defender_action,
                    step.logp_defender);
      defense = DefenseAction::from_policy(step.defender_action, cfg.defense_box);
    }

    AttackAction attack;
    const AttackAction* attack_ptr = nullptr;
    if (adaptive) {
      step.attacker_obs = env_.observe_attacker(ep.state, *type);
      step.attacker_action.resize(attacker_.act_dim());
      attacker_.act(*phi, step.attacker_obs, act_rng, step.attacker_action,
                    step.logp_attacker);
      attack = AttackAction::from_policy(step.attacker_action, cfg.attack.boost_cap,
                                         cfg.attack.noise_cap);
      attack_ptr = &attack;
    }

    RngStream step_rng = env_rng.substream(static_cast<std::uint64_t>(t + 1));
    FlEnv::StepOutcome out = env_.step(ep, defense, attack_ptr, step_rng);
    step.reward_defender = out.r_defender;
    step.reward_attacker = out.r_attacker;
    tau.steps.push_back(std::move(step));
  }
  if (final_episode) *final_episode = std::move(ep);
  return tau;
}

FlGame::EpisodeEval FlGame::evaluate_episode(std::span<const double> theta,
                                             const std::vector<double>* phi,
                                             const AttackTypeSpec* type,
                                             RngStream& rng) const {
  FlEnv::Episode final_ep;
  Trajectory tau = rollout_impl(theta, phi, type, rng, &final_ep);
  EpisodeEval ev;
  ev.defender_return = discounted_return(tau, Player::defender);
  ev.attacker_return = discounted_return(tau, Player::attacker);
  ev.final_clean_loss = env_.clean_loss(final_ep.state.model);
  ev.final_clean_accuracy = env_.clean_accuracy(final_ep.state.model);
  if (final_ep.backdoor_eval) {
    ev.has_backdoor = true;
    ev.final_backdoor_accuracy =
        eval_backdoor_metrics(final_ep.state.model, *final_ep.backdoor_eval).accuracy;
  }
  return ev;
}

}  // namespace metastack
