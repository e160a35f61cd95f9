#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metastack/fl_env.hpp"
#include "metastack/game.hpp"
#include "metastack/vecmath.hpp"

using namespace metastack;

namespace {

EnvConfig small_env() {
  EnvConfig cfg;
  cfg.n_clients = 6;
  cfg.subsample = 4;
  cfg.horizon = 5;
  cfg.discount = 0.9;
  cfg.data.d = 4;
  cfg.data.classes = 3;
  cfg.data.per_class = 60;
  cfg.eval_per_class = 20;
  cfg.aggregator = "tmean";
  return cfg;
}

AttackTypeSpec ipm_type(int m2 = 2) {
  AttackTypeSpec t;
  t.id = 0;
  t.category = AttackCategory::untargeted;
  t.m2 = m2;
  t.rule_id = kRuleIpm;
  return t;
}

AttackTypeSpec adaptive_type(int m2 = 2) {
  AttackTypeSpec t;
  t.id = 1;
  t.category = AttackCategory::untargeted;
  t.m2 = m2;
  t.behavior = AttackBehavior::adaptive;
  return t;
}

AttackTypeSpec backdoor_rule_type(int m1, int d) {
  AttackTypeSpec t;
  t.id = 2;
  t.category = AttackCategory::backdoor;
  t.m1 = m1;
  t.rule_id = kRuleBflStatic;
  t.trigger = std::vector<double>(d, 0.4);
  t.target_label = 0;
  t.lambda_mix = 0.5;
  return t;
}

DefenseAction neutral_defense() { return DefenseAction::validated(0.0, 1e9, 0.0, 1e9); }

}  // namespace

TEST_CASE("step: zero updates leave the model unchanged (aggregation fixed point)") {
  EnvConfig cfg = small_env();
  cfg.local_lr = 0.0;  // every client returns the zero update
  cfg.aggregator = "mean";
  FlEnv env(cfg, 1);
  RngStream rng = root_stream(2, "ep");
  FlEnv::Episode ep = env.begin_episode(nullptr, rng);
  std::vector<double> before = ep.state.model.params;
  double loss_before = env.clean_loss(ep.state.model);
  RngStream srng = rng.substream("step");
  FlEnv::StepOutcome out = env.step(ep, neutral_defense(), nullptr, srng);
  CHECK(ep.state.model.params == before);
  CHECK(out.r_defender == doctest::Approx(-loss_before).epsilon(1e-12));
  CHECK(out.r_attacker == 0.0);
}

TEST_CASE("step: r_A is exactly zero on rounds with no malicious client sampled") {
  EnvConfig cfg = small_env();
  cfg.n_clients = 8;
  cfg.subsample = 3;
  cfg.horizon = 30;
  FlEnv env(cfg, 3);
  AttackTypeSpec type = ipm_type(1);
  RngStream rng = root_stream(5, "za");
  FlEnv::Episode ep = env.begin_episode(&type, rng);
  int zero_rounds = 0, hit_rounds = 0;
  for (int t = 0; t < cfg.horizon; ++t) {
    int malicious = ep.state.malicious_sampled();
    RngStream srng = rng.substream("step").substream(t);
    FlEnv::StepOutcome out = env.step(ep, neutral_defense(), nullptr, srng);
    if (malicious == 0) {
      CHECK(out.r_attacker == 0.0);
      zero_rounds++;
    } else {
      hit_rounds++;
    }
  }
  // With 1 malicious of 8 and subsample 3, both cases occur over 30 rounds.
  CHECK(zero_rounds > 0);
  CHECK(hit_rounds > 0);
}

TEST_CASE("step: identical seeds give bit-identical next states") {
  EnvConfig cfg = small_env();
  FlEnv env(cfg, 7);
  AttackTypeSpec type = ipm_type();

  for (int variant = 0; variant < 2; ++variant) {
    RngStream r1 = root_stream(9, "det");
    RngStream r2 = root_stream(9, "det");
    FlEnv::Episode e1 = env.begin_episode(&type, r1);
    FlEnv::Episode e2 = env.begin_episode(&type, r2);
    RngStream s1 = r1.substream("s");
    RngStream s2 = r2.substream("s");
    env.step(e1, neutral_defense(), nullptr, s1);
    env.step(e2, neutral_defense(), nullptr, s2);
    CHECK(e1.state.model.params == e2.state.model.params);
    CHECK(e1.state.subset == e2.state.subset);
    CHECK(e1.state.identity == e2.state.identity);
    CHECK(e1.state.digest() == e2.state.digest());
  }
}

TEST_CASE("rewards: zero-sum for untargeted types in consistent mode") {
  EnvConfig cfg = small_env();
  FlEnv env(cfg, 11);
  AttackTypeSpec type = ipm_type();
  GlobalModel m = GlobalModel::zeros(cfg.data.d, cfg.data.classes);
  m.params[0] = 0.5;
  auto [rd, ra] = env.rewards(m, &type, nullptr, 2);
  CHECK(rd <= 0.0);
  CHECK(rd + ra == doctest::Approx(0.0).epsilon(1e-15));

  // Literal mode keeps the printed formula: r_A = -F for rho=0.
  EnvConfig lit = cfg;
  lit.reward_sign_mode = RewardSignMode::literal;
  FlEnv env_lit(lit, 11);
  auto [rd2, ra2] = env_lit.rewards(m, &type, nullptr, 2);
  CHECK(ra2 == doctest::Approx(rd2).epsilon(1e-15));
}

TEST_CASE("rewards: backdoor-only type with lambda=1 collapses to r_A = r_D") {
  EnvConfig cfg = small_env();
  FlEnv env(cfg, 13);
  AttackTypeSpec type = backdoor_rule_type(2, cfg.data.d);
  type.lambda_mix = 1.0;
  RngStream rng = root_stream(1, "bd");
  Dataset bd_eval = env.make_backdoor_eval(type, rng);
  GlobalModel m = GlobalModel::zeros(cfg.data.d, cfg.data.classes);
  m.params[1] = -0.3;
  auto [rd, ra] = env.rewards(m, &type, &bd_eval, 1);
  CHECK(ra == doctest::Approx(rd).epsilon(1e-15));
}

TEST_CASE("rewards: rho mixes clean and backdoor losses") {
  EnvConfig cfg = small_env();
  FlEnv env(cfg, 17);
  AttackTypeSpec type;
  type.id = 3;
  type.category = AttackCategory::mixed;
  type.m1 = 1;
  type.m2 = 3;
  type.rule_id = kRuleIpm;
  type.trigger = std::vector<double>(cfg.data.d, 0.4);
  type.target_label = 1;
  type.lambda_mix = 0.25;
  type.validate();
  CHECK(type.rho() == doctest::Approx(0.25));

  RngStream rng = root_stream(2, "mx");
  Dataset bd_eval = env.make_backdoor_eval(type, rng);
  GlobalModel m = GlobalModel::zeros(cfg.data.d, cfg.data.classes);
  m.params[2] = 0.7;
  double F = env.clean_loss(m);
  double Fbd = eval_loss(m, bd_eval);
  double Fprime = 0.25 * F + 0.75 * Fbd;
  auto [rd, ra] = env.rewards(m, &type, &bd_eval, 2);
  CHECK(rd == doctest::Approx(-F).epsilon(1e-12));
  CHECK(ra == doctest::Approx(-0.25 * Fprime + 0.75 * F).epsilon(1e-12));
}

TEST_CASE("observations: shapes, zero-model norm, malicious count") {
  EnvConfig cfg = small_env();
  FlEnv env(cfg, 19);
  AttackTypeSpec type = ipm_type();
  RngStream rng = root_stream(3, "obs");
  FlEnv::Episode ep = env.begin_episode(&type, rng);

  std::vector<double> od = env.observe_defender(ep.state);
  REQUIRE(static_cast<int>(od.size()) == env.obs_dim_defender());
  CHECK(od[0] == 0.0);  // zero model norm at reset
  CHECK(od[7] == 0.0);  // round fraction

  std::vector<double> oa = env.observe_attacker(ep.state, type);
  REQUIRE(static_cast<int>(oa.size()) == env.obs_dim_attacker());
  CHECK(oa[8] == static_cast<double>(ep.state.malicious_sampled()));

  // A state whose subset holds no malicious client reports count 0.
  EnvState s = ep.state;
  s.subset = {4, 5};
  s.identity = {0, 0};
  CHECK(env.observe_attacker(s, type)[8] == 0.0);

  // Feature length stays constant across rounds.
  for (int t = 0; t < 3; ++t) {
    RngStream srng = rng.substream("step").substream(t);
    env.step(ep, neutral_defense(), nullptr, srng);
    CHECK(env.observe_defender(ep.state).size() == od.size());
    CHECK(env.observe_attacker(ep.state, type).size() == oa.size());
  }
}

TEST_CASE("monotone sanity: benign FedAvg learns on the synthetic task") {
  EnvConfig cfg = small_env();
  cfg.n_clients = 10;
  cfg.subsample = 5;
  cfg.horizon = 50;
  cfg.aggregator = "mean";
  cfg.data.per_class = 100;
  FlEnv env(cfg, 23);
  RngStream rng = root_stream(4, "mono");
  FlEnv::Episode ep = env.begin_episode(nullptr, rng);
  double initial = env.clean_loss(ep.state.model);
  for (int t = 0; t < cfg.horizon; ++t) {
    RngStream srng = rng.substream("step").substream(t);
    env.step(ep, neutral_defense(), nullptr, srng);
  }
  CHECK(env.clean_loss(ep.state.model) < initial);
  CHECK(env.clean_accuracy(ep.state.model) > 0.6);
}

TEST_CASE("game rollout: determinism, trajectory validity, zero-sum per step") {
  EnvConfig cfg = small_env();
  cfg.reward_sign_mode = RewardSignMode::consistent;
  FlGame game(cfg, 31, 8);
  AttackTypeSpec type = adaptive_type();

  RngStream init = root_stream(6, "init");
  std::vector<double> theta = game.defender().init_params(init);
  RngStream ainit = root_stream(6, "ainit");
  std::vector<double> phi = game.attacker().init_params(ainit);

  RngStream r1 = root_stream(7, "roll");
  RngStream r2 = root_stream(7, "roll");
  Trajectory t1 = game.rollout(theta, &phi, &type, r1);
  Trajectory t2 = game.rollout(theta, &phi, &type, r2);
  REQUIRE(t1.steps.size() == t2.steps.size());
  for (std::size_t i = 0; i < t1.steps.size(); ++i) {
    CHECK(t1.steps[i].reward_defender == t2.steps[i].reward_defender);
    CHECK(t1.steps[i].defender_action == t2.steps[i].defender_action);
    CHECK(t1.steps[i].attacker_action == t2.steps[i].attacker_action);
  }
  CHECK_NOTHROW(t1.validate());

  for (const auto& s : t1.steps) {
    CHECK(s.reward_defender <= 0.0);
    if (s.malicious_sampled > 0)
      CHECK(s.reward_defender + s.reward_attacker == doctest::Approx(0.0).epsilon(1e-12));
    else
      CHECK(s.reward_attacker == 0.0);
  }
}

TEST_CASE("rollout replay: the r_A zero rule holds at exactly the all-benign steps") {
  EnvConfig cfg = small_env();
  cfg.n_clients = 8;
  cfg.subsample = 3;
  cfg.horizon = 20;
  FlGame game(cfg, 37, 8);
  AttackTypeSpec type = ipm_type(1);
  RngStream init = root_stream(8, "init");
  std::vector<double> theta = game.defender().init_params(init);
  RngStream rng = root_stream(9, "replay");
  Trajectory tau = game.rollout(theta, nullptr, &type, rng);
  for (const auto& s : tau.steps) {
    if (s.malicious_sampled == 0)
      CHECK(s.reward_attacker == 0.0);
    else
      CHECK(s.reward_attacker != 0.0);
  }
}

TEST_CASE("rollout_batch is independent of the worker count") {
  EnvConfig cfg = small_env();
  FlGame game(cfg, 41, 8);
  AttackTypeSpec type = ipm_type();
  RngStream init = root_stream(10, "init");
  std::vector<double> theta = game.defender().init_params(init);

  RngStream base = root_stream(11, "batch");
  auto seq = rollout_batch(game, theta, nullptr, &type, 8, base, 1);
  auto par = rollout_batch(game, theta, nullptr, &type, 8, base, 4);
  REQUIRE(seq.size() == par.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    REQUIRE(seq[i].steps.size() == par[i].steps.size());
    for (std::size_t t = 0; t < seq[i].steps.size(); ++t) {
      CHECK(seq[i].steps[t].reward_defender == par[i].steps[t].reward_defender);
      CHECK(seq[i].steps[t].defender_action == par[i].steps[t].defender_action);
    }
  }
}

TEST_CASE("fltrust pipeline runs end to end") {
  EnvConfig cfg = small_env();
  cfg.aggregator = "fltrust";
  FlGame game(cfg, 43, 8);
  AttackTypeSpec type = ipm_type();
  RngStream init = root_stream(12, "init");
  std::vector<double> theta = game.defender().init_params(init);
  RngStream rng = root_stream(13, "ft");
  Trajectory tau = game.rollout(theta, nullptr, &type, rng);
  CHECK_NOTHROW(tau.validate());
}

TEST_CASE("env config validation") {
  EnvConfig cfg = small_env();
  cfg.subsample = 99;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_env();
  cfg.discount = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_env();
  cfg.aggregator = "bogus";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
