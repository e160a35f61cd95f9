#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "metastack/attack_types.hpp"
#include "metastack/policy.hpp"
#include "metastack/trajectory.hpp"

using namespace metastack;

namespace {

AttackTypeSpec untargeted_type(int id, int m2, const std::string& rule = "ipm") {
  AttackTypeSpec t;
  t.id = id;
  t.category = AttackCategory::untargeted;
  t.m2 = m2;
  t.rule_id = rule;
  return t;
}

AttackTypeSpec backdoor_type(int id, int m1, int d = 4) {
  AttackTypeSpec t;
  t.id = id;
  t.category = AttackCategory::backdoor;
  t.m1 = m1;
  t.rule_id = kRuleBflStatic;
  t.trigger = std::vector<double>(d, 0.5);
  t.target_label = 0;
  return t;
}

Trajectory make_traj(std::vector<double> rewards, double gamma,
                     std::vector<double> logps = {}) {
  Trajectory tau;
  tau.horizon = static_cast<int>(rewards.size());
  tau.discount = gamma;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    TrajectoryStep s;
    s.reward_defender = rewards[i];
    s.reward_attacker = 0.0;
    s.logp_defender = logps.empty() ? -1.0 : logps[i];
    s.logp_attacker = 0.0;
    s.malicious_sampled = 0;
    tau.steps.push_back(s);
  }
  return tau;
}

}  // namespace

TEST_CASE("sample_type: degenerate prior always returns its only type") {
  TypePrior prior;
  prior.entries.emplace_back(untargeted_type(0, 4), 1.0);
  RngStream rng = root_stream(1, "t");
  for (int i = 0; i < 50; ++i) CHECK(sample_type(prior, rng).id == 0);
}

TEST_CASE("sample_type: empirical frequency converges (fixed seed)") {
  TypePrior prior;
  prior.entries.emplace_back(untargeted_type(0, 4), 0.5);
  prior.entries.emplace_back(untargeted_type(1, 2), 0.5);
  RngStream rng = root_stream(2024, "freq");
  int n = 100000, hits = 0;
  for (int i = 0; i < n; ++i)
    if (sample_type(prior, rng).id == 0) hits++;
  double freq = static_cast<double>(hits) / n;
  CHECK(freq >= 0.49);
  CHECK(freq <= 0.51);
}

TEST_CASE("sample_type: three-sigma law-of-large-numbers property") {
  TypePrior prior;
  prior.entries.emplace_back(untargeted_type(0, 4), 0.2);
  prior.entries.emplace_back(untargeted_type(1, 2), 0.5);
  prior.entries.emplace_back(backdoor_type(2, 1), 0.3);
  prior.validate();
  RngStream rng = root_stream(7, "lln");
  int n = 100000;
  std::map<int, int> counts;
  for (int i = 0; i < n; ++i) counts[sample_type(prior, rng).id]++;
  for (const auto& [type, p] : prior.entries) {
    double freq = static_cast<double>(counts[type.id]) / n;
    double tol = 3.0 * std::sqrt(p * (1.0 - p) / n);
    CHECK(std::abs(freq - p) <= tol);
  }
}

TEST_CASE("malformed prior names the offending sum") {
  TypePrior prior;
  prior.entries.emplace_back(untargeted_type(0, 4), 0.6);
  prior.entries.emplace_back(untargeted_type(1, 2), 0.3);
  RngStream rng = root_stream(0, "x");
  CHECK_THROWS_WITH_AS(sample_type(prior, rng), "probabilities sum to 0.9",
                       std::invalid_argument);
}

TEST_CASE("type invariants") {
  AttackTypeSpec t = untargeted_type(0, 0);
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);  // m1+m2 == 0
  t.m2 = 2;
  CHECK_NOTHROW(t.validate());
  t.lambda_mix = 1.5;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t.lambda_mix = 0.5;
  t.trigger = std::vector<double>{1.0};  // trigger on an untargeted type
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);

  AttackTypeSpec b = backdoor_type(1, 2);
  CHECK_NOTHROW(b.validate());
  CHECK(b.rho() == 1.0);
  b.trigger.reset();
  CHECK_THROWS_AS(b.validate(), std::invalid_argument);
}

TEST_CASE("discounted_return: zeros, two-term arithmetic, dual-order oracle") {
  CHECK(discounted_return(make_traj({0, 0, 0}, 0.9), Player::defender) == 0.0);

  // H=2, r=(-1,-1), gamma=0.5 -> 0.5*(-1) + 0.25*(-1) = -0.75
  CHECK(discounted_return(make_traj({-1, -1}, 0.5), Player::defender) ==
        doctest::Approx(-0.75).epsilon(1e-15));

  RngStream rng = root_stream(5, "ret");
  std::vector<double> rewards(17);
  for (auto& r : rewards) r = -std::abs(rng.gaussian());
  Trajectory tau = make_traj(rewards, 0.93);
  double fwd = discounted_return(tau, Player::defender);
  // Independent oracle: walk the steps in reverse order.
  double rev = 0.0;
  for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t)
    rev += std::pow(0.93, t + 1) * rewards[t];
  CHECK(fwd == doctest::Approx(rev).epsilon(1e-12));
}

TEST_CASE("discounted_return is linear in reward scaling") {
  RngStream rng = root_stream(6, "lin");
  std::vector<double> rewards(9);
  for (auto& r : rewards) r = -std::abs(rng.gaussian());
  Trajectory tau = make_traj(rewards, 0.8);
  double base = discounted_return(tau, Player::defender);
  double k = 3.7;
  for (auto& s : tau.steps) s.reward_defender *= k;
  CHECK(discounted_return(tau, Player::defender) ==
        doctest::Approx(k * base).epsilon(1e-12));
}

TEST_CASE("trajectory_log_prob: cache passthrough and sums") {
  Trajectory one = make_traj({-0.5}, 0.9, {-0.919});
  CHECK(trajectory_log_prob(one, Player::defender) == doctest::Approx(-0.919));

  Trajectory three = make_traj({-1, -1, -1}, 0.9, {-1, -2, -3});
  CHECK(trajectory_log_prob(three, Player::defender) == doctest::Approx(-6.0));

  Trajectory missing = make_traj({-1}, 0.9);
  missing.steps[0].logp_cached = false;
  CHECK_THROWS_WITH_AS(trajectory_log_prob(missing, Player::defender),
                       doctest::Contains("re-run the rollout"), std::runtime_error);
}

TEST_CASE("trajectory_log_prob matches enumeration on a tabular policy") {
  TabularSoftmaxPolicy pol(2, 2);
  RngStream init = root_stream(3, "init");
  std::vector<double> params = pol.init_params(init);

  RngStream act_rng = root_stream(4, "act");
  Trajectory tau;
  tau.horizon = 3;
  tau.discount = 0.9;
  double direct_product = 1.0;
  for (int t = 0; t < 3; ++t) {
    TrajectoryStep s;
    int state = t % 2;
    s.defender_obs = {static_cast<double>(state)};
    s.defender_action.resize(1);
    pol.act(params, s.defender_obs, act_rng, s.defender_action, s.logp_defender);
    s.reward_defender = -1.0;
    // Enumeration oracle: the probability of the action from the full table.
    auto probs = pol.action_probs(params, state);
    direct_product *= probs[static_cast<int>(s.defender_action[0])];
    tau.steps.push_back(s);
  }
  CHECK(trajectory_log_prob(tau, Player::defender) ==
        doctest::Approx(std::log(direct_product)).epsilon(1e-12));
}

TEST_CASE("trajectory invariants reject bad data") {
  Trajectory tau = make_traj({-1, -1}, 0.9);
  tau.horizon = 3;  // wrong length
  CHECK_THROWS_AS(tau.validate(), std::invalid_argument);
  tau.horizon = 2;
  CHECK_NOTHROW(tau.validate());
  tau.steps[0].reward_defender = 0.5;  // positive defender reward
  CHECK_THROWS_AS(tau.validate(), std::invalid_argument);
  tau.steps[0].reward_defender = -0.5;
  tau.steps[0].reward_attacker = 0.25;  // nonzero r_A with no malicious client
  CHECK_THROWS_AS(tau.validate(), std::invalid_argument);
  tau.steps[0].malicious_sampled = 1;
  CHECK_NOTHROW(tau.validate());
}

TEST_CASE("prior JSON round trip") {
  TypePrior prior;
  prior.entries.emplace_back(untargeted_type(0, 4), 0.5);
  AttackTypeSpec adaptive = untargeted_type(1, 2);
  adaptive.behavior = AttackBehavior::adaptive;
  adaptive.rule_id.clear();
  prior.entries.emplace_back(adaptive, 0.2);
  prior.entries.emplace_back(backdoor_type(2, 1), 0.3);
  prior.validate();

  std::string text = prior_to_json_string(prior);
  TypePrior back = prior_from_json_string(text);
  REQUIRE(back.entries.size() == prior.entries.size());
  for (std::size_t i = 0; i < prior.entries.size(); ++i) {
    CHECK(back.entries[i].first.id == prior.entries[i].first.id);
    CHECK(back.entries[i].first.category == prior.entries[i].first.category);
    CHECK(back.entries[i].first.m1 == prior.entries[i].first.m1);
    CHECK(back.entries[i].first.m2 == prior.entries[i].first.m2);
    CHECK(back.entries[i].second == prior.entries[i].second);
  }
  CHECK(back.entries[2].first.trigger.has_value());
  CHECK(back.by_id(1).is_adaptive());
}
