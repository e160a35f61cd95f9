#include "metastack/estimators.hpp"

#include <cmath>
#include <stdexcept>

namespace metastack {

std::vector<double> GradEstimate::standard_error() const {
  std::vector<double> se(variance.size());
  for (std::size_t i = 0; i < se.size(); ++i)
    se[i] = std::sqrt(variance[i] / static_cast<double>(batch_size));
  return se;
}

double GradEstimate::norm() const { return norm2(vector); }

namespace {

void check_on_policy(std::span<const double> params, const Trajectory& tau, Player who) {
  std::uint64_t h = params_hash(params);
  std::uint64_t stored =
      who == Player::defender ? tau.policy_hash_defender : tau.policy_hash_attacker;
  if (stored != h)
    throw std::invalid_argument(
        "off-policy batch: trajectory parameter hash does not match the supplied "
        "parameters; re-sample under the current policy");
}

struct MeanVar {
  std::vector<double> mean;
  std::vector<double> variance;
};

// Fixed-order pairwise mean, then a second pairwise pass for the variance.
MeanVar mean_and_variance(const std::vector<std::vector<double>>& rows) {
  std::size_t n = rows.size();
  std::size_t d = rows[0].size();
  MeanVar out;
  out.mean.assign(d, 0.0);
  pairwise_sum_rows(rows, out.mean);
  for (double& v : out.mean) v /= static_cast<double>(n);
  out.variance.assign(d, 0.0);
  if (n > 1) {
    std::vector<std::vector<double>> sq(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double dev = rows[i][j] - out.mean[j];
        sq[i][j] = dev * dev;
      }
    pairwise_sum_rows(sq, out.variance);
    for (double& v : out.variance) v /= static_cast<double>(n - 1);
  }
  return out;
}

}  // namespace

std::vector<double> score_sum(const StochasticPolicy& policy, std::span<const double> params,
                              const Trajectory& tau, Player who) {
  std::vector<double> total(policy.param_dim(), 0.0);
  std::vector<double> step_grad(policy.param_dim());
  for (const auto& s : tau.steps) {
    const auto& obs = who == Player::defender ? s.defender_obs : s.attacker_obs;
    const auto& act = who == Player::defender ? s.defender_action : s.attacker_action;
    if (act.empty())
      throw std::invalid_argument("trajectory has no stored action for this player");
    policy.score(params, obs, act, step_grad);
    axpy(1.0, step_grad, total);
  }
  return total;
}

GradEstimate pg_estimate_cross(const StochasticPolicy& policy,
                               std::span<const double> params,
                               const std::vector<Trajectory>& batch, Player score_player,
                               Player reward_player, Baseline baseline) {
  if (batch.empty()) throw std::invalid_argument("pg_estimate: empty batch");
  for (const auto& tau : batch) check_on_policy(params, tau, score_player);

  std::vector<double> returns(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    returns[i] = discounted_return(batch[i], reward_player);
  double b = 0.0;
  if (baseline == Baseline::mean_return)
    b = pairwise_sum(returns) / static_cast<double>(returns.size());

  std::vector<std::vector<double>> contributions(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    contributions[i] = score_sum(policy, params, batch[i], score_player);
    scale(contributions[i], returns[i] - b);
  }
  MeanVar mv = mean_and_variance(contributions);
  GradEstimate est;
  est.vector = std::move(mv.mean);
  est.variance = std::move(mv.variance);
  est.batch_size = batch.size();
  return est;
}

GradEstimate pg_estimate(const StochasticPolicy& policy, std::span<const double> params,
                         const std::vector<Trajectory>& batch, Player who,
                         Baseline baseline) {
  return pg_estimate_cross(policy, params, batch, who, who, baseline);
}

HessianEstimate hessian_estimate(const StochasticPolicy& policy,
                                 std::span<const double> params,
                                 const std::vector<Trajectory>& batch, Player who) {
  if (batch.empty()) throw std::invalid_argument("hessian_estimate: empty batch");
  int D = policy.param_dim();
  if (D > kHessianDimCap)
    throw std::invalid_argument(
        "policy dimension exceeds the dense Hessian cap (" +
        std::to_string(kHessianDimCap) + "); a Hessian-vector mode is not provided");
  for (const auto& tau : batch) check_on_policy(params, tau, who);

  HessianEstimate est;
  est.mean = Matrix(D, D);
  est.variance = Matrix(D, D);
  est.batch_size = batch.size();
  double n = static_cast<double>(batch.size());

  // Streaming two-term accumulation (Welford) keeps memory at O(D^2).
  Matrix m2(D, D);
  Matrix contrib(D, D);
  std::size_t count = 0;
  for (const auto& tau : batch) {
    double ret = discounted_return(tau, who);
    std::fill(contrib.data.begin(), contrib.data.end(), 0.0);
    std::vector<double> s = score_sum(policy, params, tau, who);
    for (const auto& step : tau.steps) {
      const auto& obs = who == Player::defender ? step.defender_obs : step.attacker_obs;
      const auto& act =
          who == Player::defender ? step.defender_action : step.attacker_action;
      policy.add_log_prob_hessian(params, obs, act, contrib);
    }
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j)
        contrib(i, j) = ret * (s[i] * s[j] + contrib(i, j));

    count++;
    double inv = 1.0 / static_cast<double>(count);
    for (std::size_t k = 0; k < contrib.data.size(); ++k) {
      double delta = contrib.data[k] - est.mean.data[k];
      est.mean.data[k] += delta * inv;
      m2.data[k] += delta * (contrib.data[k] - est.mean.data[k]);
    }
  }
  if (batch.size() > 1)
    for (std::size_t k = 0; k < m2.data.size(); ++k)
      est.variance.data[k] = m2.data[k] / (n - 1.0);
  return est;
}

std::vector<double> adapt(const StochasticPolicy& policy, std::span<const double> theta,
                          const std::vector<Trajectory>& batch, double eta,
                          Baseline baseline, Player who) {
  if (eta < 0.0) throw std::invalid_argument("adapt: eta must be >= 0");
  std::vector<double> out(theta.begin(), theta.end());
  if (eta == 0.0) return out;
  GradEstimate g = pg_estimate(policy, theta, batch, who, baseline);
  axpy(eta, g.vector, out);
  return out;
}

GradEstimate meta_gradient(const StochasticPolicy& policy, std::span<const double> theta,
                           double eta, MetaMode mode, const SamplerFn& sampler,
                           int replications, Baseline baseline, RngStream& rng,
                           Player who) {
  if (replications < 1) throw std::invalid_argument("meta_gradient: need >= 1 replication");
  if (eta < 0.0) throw std::invalid_argument("meta_gradient: eta must be >= 0");
  const int D = policy.param_dim();

  RngStream round1 = rng.substream("mg1");
  RngStream round2 = rng.substream("mg2");

  // With eta = 0 the adaptation map is the identity and both modes collapse
  // to the plain policy gradient at theta.
  if (eta == 0.0) {
    std::vector<Trajectory> batch;
    batch.reserve(replications);
    for (int r = 0; r < replications; ++r) {
      RngStream s = round2.substream(static_cast<std::uint64_t>(r));
      batch.push_back(sampler(theta, s));
    }
    return pg_estimate(policy, theta, batch, who, baseline);
  }

  if (mode == MetaMode::full && D > kHessianDimCap)
    throw std::invalid_argument(
        "full-mode meta gradient needs a dense Hessian; policy dimension exceeds the cap");

  std::vector<Trajectory> taus;
  taus.reserve(replications);
  std::vector<double> ret1(replications);
  for (int r = 0; r < replications; ++r) {
    RngStream s = round1.substream(static_cast<std::uint64_t>(r));
    taus.push_back(sampler(theta, s));
    ret1[r] = discounted_return(taus.back(), who);
  }
  double b1 = 0.0;
  if (baseline == Baseline::mean_return)
    b1 = pairwise_sum(ret1) / static_cast<double>(replications);

  std::vector<std::vector<double>> adapted(replications);
  std::vector<std::vector<double>> s1(replications);
  std::vector<Trajectory> taus2;
  taus2.reserve(replications);
  std::vector<double> ret2(replications);
  for (int r = 0; r < replications; ++r) {
    s1[r] = score_sum(policy, theta, taus[r], who);
    adapted[r].assign(theta.begin(), theta.end());
    axpy(eta * (ret1[r] - b1), s1[r], adapted[r]);
    RngStream s = round2.substream(static_cast<std::uint64_t>(r));
    taus2.push_back(sampler(adapted[r], s));
    ret2[r] = discounted_return(taus2.back(), who);
  }
  double b2 = 0.0;
  if (baseline == Baseline::mean_return)
    b2 = pairwise_sum(ret2) / static_cast<double>(replications);

  std::vector<std::vector<double>> contributions(replications);
  Matrix hlog(0, 0);
  if (mode == MetaMode::full) hlog = Matrix(D, D);
  for (int r = 0; r < replications; ++r) {
    std::vector<double> g2 = score_sum(policy, adapted[r], taus2[r], who);
    scale(g2, ret2[r] - b2);
    if (mode == MetaMode::reptile) {
      contributions[r] = std::move(g2);
      continue;
    }
    // Chain rule: (I + eta * d g(tau)/d theta)^T g2 + J(theta') * score(tau),
    // where d g(tau)/d theta = (R1 - b1) * sum_t d^2 log pi.
    std::fill(hlog.data.begin(), hlog.data.end(), 0.0);
    for (const auto& step : taus[r].steps) {
      const auto& obs = who == Player::defender ? step.defender_obs : step.attacker_obs;
      const auto& act =
          who == Player::defender ? step.defender_action : step.attacker_action;
      policy.add_log_prob_hessian(theta, obs, act, hlog);
    }
    std::vector<double> contrib = g2;
    double a1 = eta * (ret1[r] - b1);
    // hlog is symmetric, so H^T g2 = H g2.
    for (int i = 0; i < D; ++i) {
      const double* row = hlog.data.data() + static_cast<std::size_t>(i) * D;
      double s = 0.0;
      for (int j = 0; j < D; ++j) s += row[j] * g2[j];
      contrib[i] += a1 * s;
    }
    axpy(ret2[r] - b2, s1[r], contrib);
    contributions[r] = std::move(contrib);
  }

  MeanVar mv = mean_and_variance(contributions);
  GradEstimate est;
  est.vector = std::move(mv.mean);
  est.variance = std::move(mv.variance);
  est.batch_size = static_cast<std::size_t>(replications);
  return est;
}

}  // namespace metastack
