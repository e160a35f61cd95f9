#include "metastack/toy_mdp.hpp"

#include <cmath>
#include <stdexcept>

#include "metastack/estimators.hpp"

namespace metastack {

ToyMdp ToyMdp::canonical() {
  ToyMdp m;
  m.transition[0][0][1] = 0.2;
  m.transition[0][1][1] = 0.8;
  m.transition[1][0][1] = 0.4;
  m.transition[1][1][1] = 0.6;
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) m.transition[s][a][0] = 1.0 - m.transition[s][a][1];
  m.reward[0][0] = -1.0;
  m.reward[0][1] = -0.3;
  m.reward[1][0] = -0.5;
  m.reward[1][1] = -0.1;
  return m;
}

Trajectory ToyMdp::rollout(const TabularSoftmaxPolicy& policy, std::span<const double> params,
                           RngStream& rng) const {
  Trajectory tau;
  tau.horizon = horizon;
  tau.discount = gamma;
  tau.type_id = 0;
  tau.policy_hash_defender = params_hash(params);
  tau.policy_hash_attacker = 0;

  int s = s0;
  for (int t = 0; t < horizon; ++t) {
    TrajectoryStep step;
    step.defender_obs = {static_cast<double>(s)};
    step.defender_action.resize(1);
    policy.act(params, step.defender_obs, rng, step.defender_action, step.logp_defender);
    int a = static_cast<int>(step.defender_action[0]);
    step.reward_defender = reward[s][a];
    step.reward_attacker = 0.0;
    step.logp_attacker = 0.0;
    step.malicious_sampled = 0;
    step.state_digest = static_cast<std::uint64_t>(s);
    tau.steps.push_back(std::move(step));
    double u = rng.uniform();
    s = u <= transition[s][a][0] ? 0 : 1;
  }
  return tau;
}

std::vector<ToyMdp::PathInfo> ToyMdp::enumerate(const TabularSoftmaxPolicy& policy,
                                                std::span<const double> params) const {
  std::vector<PathInfo> paths;
  // Depth-first over (action, next state) choices. The final state after the
  // last action is irrelevant to the return and sums out, so recursion stops
  // after H actions.
  struct Frame {
    std::vector<int> states, actions;
    double policy_prob, env_prob, ret, discount_pow;
  };
  std::vector<Frame> stack;
  stack.push_back({{s0}, {}, 1.0, 1.0, 0.0, 1.0});
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    int t = static_cast<int>(f.actions.size());
    if (t == horizon) {
      PathInfo p;
      p.states = std::move(f.states);
      p.actions = std::move(f.actions);
      p.policy_prob = f.policy_prob;
      p.env_prob = f.env_prob;
      p.ret = f.ret;
      paths.push_back(std::move(p));
      continue;
    }
    int s = f.states.back();
    std::vector<double> probs = policy.action_probs(params, s);
    for (int a = 0; a < n_actions; ++a) {
      double g = f.discount_pow * gamma;
      if (t == horizon - 1) {
        Frame nf = f;
        nf.actions.push_back(a);
        nf.policy_prob *= probs[a];
        nf.ret += g * reward[s][a];
        nf.discount_pow = g;
        stack.push_back(std::move(nf));
      } else {
        for (int sn = 0; sn < n_states; ++sn) {
          Frame nf = f;
          nf.actions.push_back(a);
          nf.states.push_back(sn);
          nf.policy_prob *= probs[a];
          nf.env_prob *= transition[s][a][sn];
          nf.ret += g * reward[s][a];
          nf.discount_pow = g;
          stack.push_back(std::move(nf));
        }
      }
    }
  }
  return paths;
}

Trajectory ToyMdp::make_trajectory(const TabularSoftmaxPolicy& policy,
                                   std::span<const double> params,
                                   const PathInfo& path) const {
  Trajectory tau;
  tau.horizon = horizon;
  tau.discount = gamma;
  tau.type_id = 0;
  tau.policy_hash_defender = params_hash(params);
  for (int t = 0; t < horizon; ++t) {
    TrajectoryStep step;
    int s = path.states[t];
    int a = path.actions[t];
    step.defender_obs = {static_cast<double>(s)};
    step.defender_action = {static_cast<double>(a)};
    step.logp_defender =
        policy.log_prob(params, step.defender_obs, step.defender_action);
    step.reward_defender = reward[s][a];
    step.state_digest = static_cast<std::uint64_t>(s);
    tau.steps.push_back(std::move(step));
  }
  return tau;
}

double ToyMdp::exact_value(const TabularSoftmaxPolicy& policy,
                           std::span<const double> params) const {
  double v = 0.0;
  for (const auto& p : enumerate(policy, params)) v += p.policy_prob * p.env_prob * p.ret;
  return v;
}

std::vector<double> ToyMdp::exact_gradient(const TabularSoftmaxPolicy& policy,
                                           std::span<const double> params) const {
  // sum_tau q(tau) * grad log q(tau) * R(tau); transition factors drop out of
  // the gradient of log q.
  std::vector<double> grad(policy.param_dim(), 0.0);
  std::vector<double> step_score(policy.param_dim());
  for (const auto& p : enumerate(policy, params)) {
    std::vector<double> score(policy.param_dim(), 0.0);
    for (int t = 0; t < horizon; ++t) {
      std::vector<double> obs = {static_cast<double>(p.states[t])};
      std::vector<double> act = {static_cast<double>(p.actions[t])};
      policy.score(params, obs, act, step_score);
      axpy(1.0, step_score, score);
    }
    axpy(p.policy_prob * p.env_prob * p.ret, score, grad);
  }
  return grad;
}

Matrix ToyMdp::exact_hessian_fd(const TabularSoftmaxPolicy& policy,
                                std::span<const double> params, double step) const {
  int d = policy.param_dim();
  Matrix H(d, d);
  std::vector<double> p(params.begin(), params.end());
  for (int j = 0; j < d; ++j) {
    p[j] += step;
    std::vector<double> gp = exact_gradient(policy, p);
    p[j] -= 2.0 * step;
    std::vector<double> gm = exact_gradient(policy, p);
    p[j] += step;
    for (int i = 0; i < d; ++i) H(i, j) = (gp[i] - gm[i]) / (2.0 * step);
  }
  return H;
}

double ToyMdp::exact_adapted_value(const TabularSoftmaxPolicy& policy,
                                   std::span<const double> params, double eta) const {
  double v = 0.0;
  std::vector<double> step_score(policy.param_dim());
  for (const auto& p : enumerate(policy, params)) {
    std::vector<double> g(policy.param_dim(), 0.0);
    for (int t = 0; t < horizon; ++t) {
      std::vector<double> obs = {static_cast<double>(p.states[t])};
      std::vector<double> act = {static_cast<double>(p.actions[t])};
      policy.score(params, obs, act, step_score);
      axpy(1.0, step_score, g);
    }
    scale(g, p.ret);  // g(tau; theta) = score sum * R
    std::vector<double> adapted(params.begin(), params.end());
    axpy(eta, g, adapted);
    v += p.policy_prob * p.env_prob * exact_value(policy, adapted);
  }
  return v;
}

std::vector<double> ToyMdp::exact_adapted_gradient_fd(const TabularSoftmaxPolicy& policy,
                                                      std::span<const double> params,
                                                      double eta, double step) const {
  int d = policy.param_dim();
  std::vector<double> grad(d);
  std::vector<double> p(params.begin(), params.end());
  for (int j = 0; j < d; ++j) {
    p[j] += step;
    double vp = exact_adapted_value(policy, p, eta);
    p[j] -= 2.0 * step;
    double vm = exact_adapted_value(policy, p, eta);
    p[j] += step;
    grad[j] = (vp - vm) / (2.0 * step);
  }
  return grad;
}

}  // namespace metastack
