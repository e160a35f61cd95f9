#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metastack/policy.hpp"
#include "metastack/vecmath.hpp"

using namespace metastack;

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;

GaussianMlpPolicy small_policy() { return GaussianMlpPolicy(3, 4, 2, -0.5); }

std::vector<double> random_obs(int d, RngStream& rng) {
  std::vector<double> o(d);
  for (auto& x : o) x = rng.gaussian();
  return o;
}

}  // namespace

TEST_CASE("act: floored log-std makes the action nearly deterministic") {
  GaussianMlpPolicy pol = small_policy();
  RngStream init = root_stream(1, "i");
  std::vector<double> params = pol.init_params(init);
  // Push log-std far below the floor.
  for (int j = 0; j < pol.act_dim(); ++j)
    params[pol.param_dim() - pol.act_dim() + j] = -40.0;

  RngStream rng = root_stream(2, "a");
  std::vector<double> obs = {0.3, -0.2, 0.5};
  std::vector<double> mean(pol.act_dim());
  pol.mean_action(params, obs, mean);
  std::vector<double> action(pol.act_dim());
  double logp;
  pol.act(params, obs, rng, action, logp);
  for (int j = 0; j < pol.act_dim(); ++j)
    CHECK(std::abs(action[j] - mean[j]) < 1e-2 * 1.0);  // sigma = e^-5 ~ 6.7e-3
}

TEST_CASE("act: log-density of the mean action is the Gaussian mode density") {
  GaussianMlpPolicy pol = small_policy();
  RngStream init = root_stream(3, "i");
  std::vector<double> params = pol.init_params(init);
  std::vector<double> obs = {0.1, 0.2, -0.4};
  std::vector<double> mean(pol.act_dim());
  pol.mean_action(params, obs, mean);
  double expected = 0.0;
  for (int j = 0; j < pol.act_dim(); ++j) {
    double ls = params[pol.param_dim() - pol.act_dim() + j];
    expected += -(ls + kHalfLog2Pi);
  }
  CHECK(pol.log_prob(params, obs, mean) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("act: identical rng states give identical actions; NaN params rejected") {
  GaussianMlpPolicy pol = small_policy();
  RngStream init = root_stream(4, "i");
  std::vector<double> params = pol.init_params(init);
  std::vector<double> obs = {1.0, -1.0, 0.0};
  RngStream r1 = root_stream(5, "r");
  RngStream r2 = root_stream(5, "r");
  std::vector<double> a1(pol.act_dim()), a2(pol.act_dim());
  double l1, l2;
  pol.act(params, obs, r1, a1, l1);
  pol.act(params, obs, r2, a2, l2);
  CHECK(a1 == a2);
  CHECK(l1 == l2);

  params[3] = std::nan("");
  CHECK_THROWS_AS(pol.act(params, obs, r1, a1, l1), std::invalid_argument);
}

TEST_CASE("score at the mean action: zero mean-path gradient, -1 per log-std") {
  GaussianMlpPolicy pol = small_policy();
  RngStream init = root_stream(6, "i");
  std::vector<double> params = pol.init_params(init);
  std::vector<double> obs = {0.5, 0.1, -0.3};
  std::vector<double> mean(pol.act_dim());
  pol.mean_action(params, obs, mean);

  std::vector<double> grad(pol.param_dim());
  pol.score(params, obs, mean, grad);
  int ls_off = pol.param_dim() - pol.act_dim();
  for (int i = 0; i < ls_off; ++i) CHECK(grad[i] == doctest::Approx(0.0));
  for (int j = 0; j < pol.act_dim(); ++j)
    CHECK(grad[ls_off + j] == doctest::Approx(-1.0));
}

TEST_CASE("score matches central finite differences of log_prob") {
  GaussianMlpPolicy pol = small_policy();
  RngStream rng = root_stream(7, "fd");
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<double> params = pol.init_params(rng);
    std::vector<double> obs = random_obs(3, rng);
    std::vector<double> action(pol.act_dim());
    double lp;
    pol.act(params, obs, rng, action, lp);

    std::vector<double> grad(pol.param_dim());
    pol.score(params, obs, action, grad);

    double h = 1e-5;
    for (int i = 0; i < pol.param_dim(); ++i) {
      std::vector<double> p = params;
      p[i] += h;
      double up = pol.log_prob(p, obs, action);
      p[i] -= 2 * h;
      double dn = pol.log_prob(p, obs, action);
      double fd = (up - dn) / (2 * h);
      double ref = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
      CHECK(std::abs(grad[i] - fd) / ref < 1e-4);
    }
  }
}

TEST_CASE("score: mean-head block is linear in (action - mean)") {
  GaussianMlpPolicy pol = small_policy();
  RngStream rng = root_stream(8, "lin");
  std::vector<double> params = pol.init_params(rng);
  std::vector<double> obs = random_obs(3, rng);
  std::vector<double> mean(pol.act_dim());
  pol.mean_action(params, obs, mean);

  std::vector<double> offset = {0.3, -0.7};
  std::vector<double> a1(pol.act_dim()), a2(pol.act_dim());
  for (int j = 0; j < pol.act_dim(); ++j) {
    a1[j] = mean[j] + offset[j];
    a2[j] = mean[j] + 2.0 * offset[j];
  }
  std::vector<double> g1(pol.param_dim()), g2(pol.param_dim());
  pol.score(params, obs, a1, g1);
  pol.score(params, obs, a2, g2);
  int ls_off = pol.param_dim() - pol.act_dim();
  for (int i = 0; i < ls_off; ++i)
    CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-9));
}

TEST_CASE("log_prob Hessian matches finite differences of the score") {
  GaussianMlpPolicy pol = small_policy();
  RngStream rng = root_stream(9, "hfd");
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<double> params = pol.init_params(rng);
    std::vector<double> obs = random_obs(3, rng);
    std::vector<double> action(pol.act_dim());
    double lp;
    pol.act(params, obs, rng, action, lp);

    int D = pol.param_dim();
    Matrix H(D, D);
    pol.add_log_prob_hessian(params, obs, action, H);

    double h = 1e-5;
    std::vector<double> gp(D), gm(D);
    for (int j = 0; j < D; ++j) {
      std::vector<double> p = params;
      p[j] += h;
      pol.score(p, obs, action, gp);
      p[j] -= 2 * h;
      pol.score(p, obs, action, gm);
      for (int i = 0; i < D; ++i) {
        double fd = (gp[i] - gm[i]) / (2 * h);
        double ref = std::max({std::abs(fd), std::abs(H(i, j)), 1e-5});
        CHECK(std::abs(H(i, j) - fd) / ref < 2e-3);
      }
    }
    // Symmetry is built in.
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j)
        CHECK(H(i, j) == doctest::Approx(H(j, i)).epsilon(1e-10));
  }
}

TEST_CASE("tabular softmax: probabilities, score, and Hessian identities") {
  TabularSoftmaxPolicy pol(2, 3);
  std::vector<double> params = {0.5, -0.2, 0.1, 1.0, 0.0, -1.0};

  auto p0 = pol.action_probs(params, 0);
  double sum = p0[0] + p0[1] + p0[2];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> obs = {0.0};
  std::vector<double> act = {1.0};
  std::vector<double> grad(pol.param_dim());
  pol.score(params, obs, act, grad);
  CHECK(grad[0] == doctest::Approx(-p0[0]));
  CHECK(grad[1] == doctest::Approx(1.0 - p0[1]));
  CHECK(grad[2] == doctest::Approx(-p0[2]));
  for (int i = 3; i < 6; ++i) CHECK(grad[i] == 0.0);

  // FD check of score and Hessian.
  double h = 1e-6;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> p = params;
    p[i] += h;
    double up = pol.log_prob(p, obs, act);
    p[i] -= 2 * h;
    double dn = pol.log_prob(p, obs, act);
    CHECK(grad[i] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-4));
  }
  Matrix H(6, 6);
  pol.add_log_prob_hessian(params, obs, act, H);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double expect = p0[i] * p0[j] - (i == j ? p0[i] : 0.0);
      CHECK(H(i, j) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("policy params: hash and validation") {
  GaussianMlpPolicy pol = small_policy();
  RngStream rng = root_stream(10, "h");
  std::vector<double> p1 = pol.init_params(rng);
  std::vector<double> p2 = p1;
  CHECK(params_hash(p1) == params_hash(p2));
  p2[0] += 1e-12;
  CHECK(params_hash(p1) != params_hash(p2));

  PolicyParams pp;
  pp.player = "defender";
  pp.arch = pol.arch();
  pp.flat = p1;
  CHECK_NOTHROW(pp.validate());
  pp.flat.pop_back();
  CHECK_THROWS_AS(pp.validate(), std::invalid_argument);
}
