#include "metastack/runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "metastack/metrics.hpp"

namespace metastack {

namespace fs = std::filesystem;
using nlohmann::json;

std::unique_ptr<FlGame> build_game(const RunConfig& cfg) {
  return std::make_unique<FlGame>(cfg.env, cfg.seed, cfg.policy.hidden,
                                  cfg.policy.log_std_init);
}

namespace {

void ensure_out_dir(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("no output directory given (--out)");
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory: " + cfg.out_dir);
}

void echo_resolved_config(const RunConfig& cfg) {
  std::string resolved = cfg.resolved_toml();
  std::cout << "# resolved configuration\n" << resolved << std::flush;
  std::ofstream out(fs::path(cfg.out_dir) / "run_config_resolved.toml");
  out << resolved;
}

void check_finite_theta(const MetaState& state, int iteration) {
  if (!all_finite(state.theta))
    throw NumericalError("non-finite defender parameters at iteration " +
                         std::to_string(iteration));
  for (const auto& [id, phi] : state.phis)
    if (!all_finite(phi))
      throw NumericalError("non-finite attacker parameters (type " + std::to_string(id) +
                           ") at iteration " + std::to_string(iteration));
}

std::vector<double> default_trigger(int d) {
  std::vector<double> trig(d, 0.0);
  for (int i = 0; i < std::min(2, d); ++i) trig[i] = 0.5;
  return trig;
}

struct PretrainEval {
  double clean_loss = 0.0;
  double clean_acc = 0.0;
  double backdoor_acc = std::numeric_limits<double>::quiet_NaN();
};

PretrainEval eval_against_prior(const FlGame& game, const RunConfig& cfg,
                                const MetaState& state, int iteration) {
  PretrainEval ev;
  double bd_weight = 0.0, bd_acc = 0.0;
  RngStream rng = root_stream(cfg.seed, "metrics_eval")
                      .substream(static_cast<std::uint64_t>(iteration));
  for (const auto& [type, prob] : cfg.prior.entries) {
    const std::vector<double>* phi = nullptr;
    auto it = state.phis.find(type.id);
    if (it != state.phis.end()) phi = &it->second;
    RngStream trng = rng.substream(static_cast<std::uint64_t>(type.id));
    FlGame::EpisodeEval e = game.evaluate_episode(state.theta, phi, &type, trng);
    ev.clean_loss += prob * e.final_clean_loss;
    ev.clean_acc += prob * e.final_clean_accuracy;
    if (e.has_backdoor) {
      bd_weight += prob;
      bd_acc += prob * e.final_backdoor_accuracy;
    }
  }
  if (bd_weight > 0) ev.backdoor_acc = bd_acc / bd_weight;
  return ev;
}

}  // namespace

std::optional<AttackTypeSpec> resolve_attack(const RunConfig& cfg, const std::string& id) {
  std::ostringstream known;
  known << "none, ipm, lmp, eb, bfl_static";
  for (const auto& [type, p] : cfg.prior.entries) known << ", type:" << type.id;

  if (id == "none") return std::nullopt;
  if (id.rfind("type:", 0) == 0) {
    int tid = 0;
    try {
      tid = std::stoi(id.substr(5));
    } catch (const std::exception&) {
      throw ConfigError("bad attack id '" + id + "'; known ids: " + known.str());
    }
    for (const auto& [type, p] : cfg.prior.entries)
      if (type.id == tid) return type;
    throw ConfigError("unknown attack id '" + id + "'; known ids: " + known.str());
  }

  AttackTypeSpec t;
  t.id = 1000;  // synthesized live-attack id, outside the prior's range
  t.behavior = AttackBehavior::rule;
  t.rule_id = id;
  if (id == kRuleIpm || id == kRuleLmp || id == kRuleEb) {
    t.category = AttackCategory::untargeted;
    t.m1 = 0;
    t.m2 = std::max(1, cfg.env.n_clients / 5);
  } else if (id == kRuleBflStatic) {
    t.category = AttackCategory::backdoor;
    t.m1 = std::max(1, cfg.env.n_clients / 10);
    t.m2 = 0;
    t.trigger = default_trigger(cfg.env.data.d);
    t.target_label = 0;
    t.lambda_mix = 0.5;
  } else {
    throw ConfigError("unknown attack id '" + id + "'; known ids: " + known.str());
  }
  t.validate();
  return t;
}

void run_pretrain(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  echo_resolved_config(cfg);
  std::unique_ptr<FlGame> game = build_game(cfg);

  MetricsWriter metrics((fs::path(cfg.out_dir) / "metrics.csv").string());

  bool want_fose = false;
  for (const auto& c : cfg.diag.checks)
    if (c == "fose") want_fose = true;
  DiagnosticsHook hook;
  if (want_fose && cfg.diag.cadence > 0 && cfg.algo != "meta-rl") {
    DiagConfig dcfg;
    dcfg.eta = cfg.diag.eta;
    dcfg.replications = cfg.diag.batch;
    dcfg.baseline = cfg.meta.baseline;
    dcfg.workers = cfg.workers;
    hook = make_fose_hook(*game, cfg.prior, dcfg, cfg.diag.cadence, cfg.seed);
  }

  auto write_iteration = [&](const MetaState& state, const IterationStats& stats) {
    check_finite_theta(state, stats.iteration);
    MetricsRow row;
    row.iter = stats.iteration;
    if (std::isfinite(stats.r_defender_mean)) row.rD_mean = stats.r_defender_mean;
    if (std::isfinite(stats.r_attacker_mean)) row.rA_mean = stats.r_attacker_mean;
    bool diag_due = cfg.diag.cadence > 0 &&
                    (stats.iteration == 1 || stats.iteration % cfg.diag.cadence == 0);
    if (diag_due) {
      PretrainEval ev = eval_against_prior(*game, cfg, state, stats.iteration);
      row.clean_loss = ev.clean_loss;
      row.clean_acc = ev.clean_acc;
      if (std::isfinite(ev.backdoor_acc)) row.backdoor_acc = ev.backdoor_acc;
    }
    if (!state.residual_history.empty()) {
      const DiagnosticRecord& rec = state.residual_history.back();
      if (std::isfinite(rec.defender_residual)) row.residual_D = rec.defender_residual;
      double ram = rec.attacker_residual_max();
      if (std::isfinite(ram)) row.residual_A_max = ram;
    }
    metrics.write(row);

    if (cfg.meta.checkpoint_interval > 0 &&
        stats.iteration % cfg.meta.checkpoint_interval == 0) {
      MetaCheckpoint ckpt = make_checkpoint(state, game->defender().arch(),
                                            game->attacker().arch(), cfg.algo);
      save_checkpoint(ckpt, (fs::path(cfg.out_dir) /
                             ("checkpoint_" + std::to_string(stats.iteration) + ".json"))
                                .string());
    }
  };

  MetaState final_state;
  if (cfg.algo == "meta-rl") {
    if (cfg.prior.has_adaptive())
      throw ConfigError(
          "--algo meta-rl only supports rule-based priors; use meta-sl for adaptive types");
    final_state.theta = reptile_meta_rl(cfg.meta, cfg.prior, *game, write_iteration);
    final_state.iteration = cfg.meta.n_outer;
  } else if (cfg.algo == "meta-sl") {
    final_state = meta_sl(cfg.meta, cfg.prior, *game, write_iteration, hook);
  } else if (cfg.algo == "bse") {
    final_state = bse_baseline(cfg.meta, cfg.prior, *game, write_iteration, hook);
  } else {
    throw ConfigError("unknown --algo '" + cfg.algo + "' (meta-sl | meta-rl | bse)");
  }

  MetaCheckpoint ckpt = make_checkpoint(final_state, game->defender().arch(),
                                        game->attacker().arch(), cfg.algo);
  save_checkpoint(ckpt, (fs::path(cfg.out_dir) / "checkpoint_final.json").string());
  metrics.flush();
  std::cout << "pretrain done: " << cfg.algo << ", " << cfg.meta.n_outer
            << " iterations\n";
}

void run_adapt(const RunConfig& cfg, const std::string& checkpoint_path,
               const std::string& attack_id, int steps) {
  ensure_out_dir(cfg);
  if (!fs::exists(checkpoint_path))
    throw ConfigError("checkpoint does not exist: " + checkpoint_path);
  echo_resolved_config(cfg);
  if (steps < 0) throw ConfigError("--steps must be >= 0");

  fs::path out_ckpt = fs::path(cfg.out_dir) / "adapted_checkpoint.json";
  if (steps == 0) {
    // Verbatim copy.
    std::ifstream in(checkpoint_path, std::ios::binary);
    std::ofstream out(out_ckpt, std::ios::binary);
    out << in.rdbuf();
    MetricsWriter metrics((fs::path(cfg.out_dir) / "metrics.csv").string());
    metrics.flush();
    std::cout << "adapt: 0 steps, checkpoint copied verbatim\n";
    return;
  }

  MetaCheckpoint ckpt = load_checkpoint(checkpoint_path);
  std::optional<AttackTypeSpec> attack = resolve_attack(cfg, attack_id);
  std::unique_ptr<FlGame> game = build_game(cfg);
  if (ckpt.theta.arch.param_dim() != game->defender().param_dim())
    throw ConfigError("checkpoint architecture does not match the configured policy");

  const std::vector<double>* phi = nullptr;
  std::vector<double> phi_store;
  if (attack && attack->is_adaptive()) {
    auto it = ckpt.phis.find(attack->id);
    if (it != ckpt.phis.end()) {
      phi_store = it->second.flat;
    } else {
      RngStream rng = root_stream(cfg.seed, "init/attacker")
                          .substream(static_cast<std::uint64_t>(attack->id));
      phi_store = game->attacker().init_params(rng);
    }
    phi = &phi_store;
  }

  MetricsWriter metrics((fs::path(cfg.out_dir) / "metrics.csv").string());
  auto cb = [&](const OnlineStepStats& st) {
    MetricsRow row;
    row.iter = st.step;
    row.rD_mean = st.r_defender_mean;
    row.rA_mean = st.r_attacker_mean;
    metrics.write(row);
  };
  std::vector<double> adapted =
      online_adapt(ckpt.theta.flat, *game, attack ? &*attack : nullptr, phi, steps,
                   cfg.meta.eta, cfg.meta, cb);
  if (!all_finite(adapted)) throw NumericalError("non-finite parameters after adaptation");

  ckpt.theta.flat = std::move(adapted);
  ckpt.algo += "+adapt";
  save_checkpoint(ckpt, out_ckpt.string());
  metrics.flush();
  std::cout << "adapt done: " << steps << " steps against '" << attack_id << "'\n";
}

EvalSummary run_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                     const std::string& attack_id, int episodes) {
  ensure_out_dir(cfg);
  if (episodes < 1) throw ConfigError("eval needs --steps >= 1 episodes");
  if (!fs::exists(checkpoint_path))
    throw ConfigError("checkpoint does not exist: " + checkpoint_path);
  echo_resolved_config(cfg);

  MetaCheckpoint ckpt = load_checkpoint(checkpoint_path);
  std::optional<AttackTypeSpec> attack = resolve_attack(cfg, attack_id);
  std::unique_ptr<FlGame> game = build_game(cfg);

  const std::vector<double>* phi = nullptr;
  std::vector<double> phi_store;
  if (attack && attack->is_adaptive()) {
    auto it = ckpt.phis.find(attack->id);
    if (it != ckpt.phis.end()) {
      phi_store = it->second.flat;
    } else {
      RngStream rng = root_stream(cfg.seed, "init/attacker")
                          .substream(static_cast<std::uint64_t>(attack->id));
      phi_store = game->attacker().init_params(rng);
    }
    phi = &phi_store;
  }

  EvalSummary sum;
  sum.episodes = episodes;
  std::vector<double> returns(episodes);
  RngStream rng = root_stream(cfg.seed, "eval");
  for (int i = 0; i < episodes; ++i) {
    RngStream er = rng.substream(static_cast<std::uint64_t>(i));
    FlGame::EpisodeEval ev = game->evaluate_episode(
        ckpt.theta.flat, phi, attack ? &*attack : nullptr, er);
    returns[i] = ev.defender_return;
    sum.return_mean += ev.defender_return;
    sum.clean_loss_mean += ev.final_clean_loss;
    sum.clean_acc_mean += ev.final_clean_accuracy;
    if (ev.has_backdoor) {
      sum.has_backdoor = true;
      sum.backdoor_acc_mean += ev.final_backdoor_accuracy;
    }
  }
  sum.return_mean /= episodes;
  sum.clean_loss_mean /= episodes;
  sum.clean_acc_mean /= episodes;
  if (sum.has_backdoor) sum.backdoor_acc_mean /= episodes;
  if (episodes > 1) {
    double var = 0.0;
    for (double r : returns) var += (r - sum.return_mean) * (r - sum.return_mean);
    sum.return_se = std::sqrt(var / (episodes - 1) / episodes);
  }

  json j;
  j["episodes"] = episodes;
  j["attack"] = attack_id;
  j["defender_return_mean"] = sum.return_mean;
  j["defender_return_se"] = sum.return_se;
  j["clean_loss"] = sum.clean_loss_mean;
  j["clean_accuracy"] = sum.clean_acc_mean;
  if (sum.has_backdoor) j["backdoor_accuracy"] = sum.backdoor_acc_mean;
  std::ofstream out(fs::path(cfg.out_dir) / "eval.json");
  out << j.dump(2) << "\n";

  std::cout << "eval: return " << sum.return_mean << " +/- " << sum.return_se
            << ", clean accuracy " << sum.clean_acc_mean;
  if (sum.has_backdoor) std::cout << ", backdoor accuracy " << sum.backdoor_acc_mean;
  std::cout << "\n";
  return sum;
}

int run_diagnose(const RunConfig& cfg, const std::string& check,
                 const std::string& checkpoint_path) {
  ensure_out_dir(cfg);
  echo_resolved_config(cfg);
  if (!(check == "fose" || check == "sc" || check == "pl" || check == "lipschitz" ||
        check == "gradcheck" || check == "all"))
    throw ConfigError("unknown --check '" + check +
                      "' (fose | sc | pl | lipschitz | gradcheck | all)");

  std::unique_ptr<FlGame> game = build_game(cfg);
  int hard_failures = 0;
  json report;

  // Policies: from the checkpoint when one exists, fresh otherwise.
  MetaState state;
  if (!checkpoint_path.empty() && fs::exists(checkpoint_path)) {
    MetaCheckpoint ckpt = load_checkpoint(checkpoint_path);
    state.theta = ckpt.theta.flat;
    for (const auto& [id, p] : ckpt.phis) state.phis[id] = p.flat;
    std::cout << "diagnose: using checkpoint " << checkpoint_path << "\n";
  } else {
    RngStream rng = root_stream(cfg.seed, "init/defender");
    state.theta = game->defender().init_params(rng);
    for (const auto& [type, p] : cfg.prior.entries) {
      if (!type.is_adaptive()) continue;
      RngStream ar = root_stream(cfg.seed, "init/attacker")
                         .substream(static_cast<std::uint64_t>(type.id));
      state.phis[type.id] = game->attacker().init_params(ar);
    }
    std::cout << "diagnose: using freshly initialized policies\n";
  }

  DiagConfig dcfg;
  dcfg.eta = cfg.diag.eta;
  dcfg.replications = cfg.diag.batch;
  dcfg.baseline = cfg.meta.baseline;
  dcfg.workers = cfg.workers;
  GameGradientSource source(*game, cfg.prior, dcfg);

  if (check == "gradcheck" || check == "all") {
    GradCheckReport rep = grad_check_suite(cfg.seed);
    std::cout << "gradcheck:\n";
    for (const auto& e : rep.entries)
      std::cout << "  " << (e.pass ? "[ok]  " : "[FAIL]") << " " << e.name
                << "  stat=" << e.stat << " rel_err=" << e.rel_err << "\n";
    if (!rep.all_pass()) hard_failures++;
    report["gradcheck"] = json::parse(rep.to_json());
  }

  if (check == "sc" || check == "all") {
    json sc_report = json::array();
    for (const auto& [type, p] : cfg.prior.entries) {
      RngStream rng = root_stream(cfg.seed, "diag/sc")
                          .substream(static_cast<std::uint64_t>(type.id));
      ScFit fit = sc_check(*game, type, 1000, rng);
      bool untargeted = type.category == AttackCategory::untargeted;
      bool consistent = cfg.env.reward_sign_mode == RewardSignMode::consistent;
      bool hard = untargeted && consistent;
      bool ok = std::abs(fit.c + 1.0) <= 1e-6 && std::abs(fit.d) <= 1e-6 &&
                fit.max_abs_residual <= 1e-10;
      std::cout << "sc type " << type.id << ": c=" << fit.c << " d=" << fit.d
                << " max|res|=" << fit.max_abs_residual;
      if (!fit.c_negative) std::cout << "  [warning: SC assertion c<0 FAILS]";
      if (hard && !ok) {
        std::cout << "  [FAIL: untargeted zero-sum fit]";
        hard_failures++;
      }
      std::cout << "\n";
      sc_report.push_back({{"type", type.id},
                           {"c", fit.c},
                           {"d", fit.d},
                           {"max_abs_residual", fit.max_abs_residual},
                           {"c_negative", fit.c_negative}});
    }
    report["sc"] = sc_report;
  }

  if (check == "fose" || check == "all") {
    RngStream rng = root_stream(cfg.seed, "diag/fose").substream(0);
    FoseResult res = fose_residual(source, state.theta, state.phis, cfg.prior, rng);
    std::cout << "fose: defender residual " << res.defender_residual << " +/- "
              << res.defender_se << "\n";
    json atk = json::object();
    for (const auto& [id, r] : res.attacker_residuals) {
      std::cout << "      attacker residual (type " << id << ") " << r << " +/- "
                << res.attacker_se.at(id) << "\n";
      atk[std::to_string(id)] = r;
    }
    report["fose"] = {{"defender_residual", res.defender_residual},
                      {"defender_se", res.defender_se},
                      {"attacker_residuals", atk}};
  }

  if (check == "pl" || check == "all") {
    json pl_report = json::array();
    for (const auto& [type, p] : cfg.prior.entries) {
      if (!type.is_adaptive()) continue;
      RngStream rng = root_stream(cfg.seed, "diag/pl")
                          .substream(static_cast<std::uint64_t>(type.id));
      MetaConfig br_cfg = cfg.meta;
      br_cfg.n_inner = std::max(cfg.meta.n_inner * 5, 50);
      RngStream br_rng = rng.substream("br");
      std::vector<double> phi_star =
          best_response(state.theta, type, br_cfg, *game, state.phis.at(type.id), br_rng);
      PlResult res = pl_probe(source, state.theta, phi_star, type.id, cfg.diag.probes,
                              cfg.diag.radius, rng);
      std::cout << "pl type " << type.id << ": ";
      if (res.verified)
        std::cout << "mu >= " << res.mu << " over " << res.probes_used << " probes\n";
      else
        std::cout << "PL unverified (" << res.invalidations << " invalidating probes, "
                  << res.probes_used << " used)\n";
      pl_report.push_back({{"type", type.id},
                           {"mu", res.mu},
                           {"verified", res.verified},
                           {"invalidations", res.invalidations}});
    }
    report["pl"] = pl_report;
  }

  if (check == "lipschitz" || check == "all") {
    json lip_report = json::object();
    for (const std::string name : {"L11", "L12", "L21", "L22", "L_V"}) {
      // Probe against the first adaptive type if any, else defender-only ids.
      const AttackTypeSpec* type = nullptr;
      for (const auto& [t, p] : cfg.prior.entries)
        if (t.is_adaptive()) {
          type = &t;
          break;
        }
      bool needs_phi = name == "L12" || name == "L21" || name == "L22";
      if (needs_phi && type == nullptr) continue;
      if (type == nullptr) type = &cfg.prior.entries.front().first;
      std::vector<double> phi = state.phis.count(type->id)
                                    ? state.phis.at(type->id)
                                    : std::vector<double>();
      if (phi.empty() && needs_phi) continue;
      if (phi.empty()) phi.assign(std::max(1, source.phi_dim()), 0.0);
      RngStream rng = root_stream(cfg.seed, "diag/lip").substream(fnv1a64(name));
      double bound = lipschitz_probe(source, lip_id_from_string(name), state.theta, phi,
                                     type->id, 10, cfg.diag.radius, rng);
      std::cout << "lipschitz " << name << " >= " << bound << " (type " << type->id
                << ")\n";
      lip_report[name] = bound;
    }
    report["lipschitz"] = lip_report;
  }

  std::ofstream out(fs::path(cfg.out_dir) / ("diagnose_" + check + ".json"));
  out << report.dump(2) << "\n";
  return hard_failures;
}

}  // namespace metastack
