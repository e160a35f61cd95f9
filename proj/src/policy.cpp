#include "metastack/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metastack {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*log(2*pi)
}

std::uint64_t params_hash(std::span<const double> params) {
  return fnv1a64(params.data(), params.size() * sizeof(double));
}

void PolicyParams::validate() const {
  if (static_cast<int>(flat.size()) != arch.param_dim())
    throw std::invalid_argument("policy parameter length does not match architecture");
  if (!all_finite(flat)) throw std::invalid_argument("policy parameters must be finite");
}

GaussianMlpPolicy::GaussianMlpPolicy(int obs_dim, int hidden, int act_dim,
                                     double log_std_init)
    : arch_{obs_dim, hidden, act_dim}, log_std_init_(log_std_init) {
  if (obs_dim < 1 || hidden < 1 || act_dim < 1)
    throw std::invalid_argument("policy dimensions must be >= 1");
}

std::vector<double> GaussianMlpPolicy::init_params(RngStream& rng) const {
  std::vector<double> p(param_dim(), 0.0);
  double s1 = 1.0 / std::sqrt(static_cast<double>(arch_.obs_dim));
  for (int i = w1_off(); i < b1_off(); ++i) p[i] = s1 * rng.gaussian();
  double s2 = 1.0 / std::sqrt(static_cast<double>(arch_.hidden));
  for (int i = w2_off(); i < b2_off(); ++i) p[i] = s2 * rng.gaussian();
  for (int j = 0; j < arch_.act_dim; ++j) p[ls_off() + j] = log_std_init_;
  return p;
}

void GaussianMlpPolicy::forward(std::span<const double> params, std::span<const double> obs,
                                std::span<double> tanh_out, std::span<double> mean_out) const {
  const int O = arch_.obs_dim, H = arch_.hidden, A = arch_.act_dim;
  for (int k = 0; k < H; ++k) {
    double u = params[b1_off() + k];
    const double* w = params.data() + w1_off() + k * O;
    for (int i = 0; i < O; ++i) u += w[i] * obs[i];
    tanh_out[k] = std::tanh(u);
  }
  for (int j = 0; j < A; ++j) {
    double m = params[b2_off() + j];
    const double* w = params.data() + w2_off() + j * H;
    for (int k = 0; k < H; ++k) m += w[k] * tanh_out[k];
    mean_out[j] = m;
  }
}

void GaussianMlpPolicy::mean_action(std::span<const double> params, std::span<const double> obs,
                                    std::span<double> mean_out) const {
  std::vector<double> t(arch_.hidden);
  forward(params, obs, t, mean_out);
}

void GaussianMlpPolicy::act(std::span<const double> params, std::span<const double> obs,
                            RngStream& rng, std::span<double> action_out,
                            double& logp_out) const {
  if (static_cast<int>(params.size()) != param_dim())
    throw std::invalid_argument("policy parameter length mismatch");
  if (!all_finite(params)) throw std::invalid_argument("policy parameters contain NaN/Inf");
  const int A = arch_.act_dim;
  std::vector<double> t(arch_.hidden), m(A);
  forward(params, obs, t, m);
  logp_out = 0.0;
  for (int j = 0; j < A; ++j) {
    double ls = std::max(params[ls_off() + j], kLogStdFloor);
    double sigma = std::exp(ls);
    double z = rng.gaussian();
    action_out[j] = m[j] + sigma * z;
    logp_out += -ls - kHalfLog2Pi - 0.5 * z * z;
  }
}

double GaussianMlpPolicy::log_prob(std::span<const double> params, std::span<const double> obs,
                                   std::span<const double> action) const {
  const int A = arch_.act_dim;
  std::vector<double> t(arch_.hidden), m(A);
  forward(params, obs, t, m);
  double lp = 0.0;
  for (int j = 0; j < A; ++j) {
    double ls = std::max(params[ls_off() + j], kLogStdFloor);
    double sigma = std::exp(ls);
    double z = (action[j] - m[j]) / sigma;
    lp += -ls - kHalfLog2Pi - 0.5 * z * z;
  }
  return lp;
}

void GaussianMlpPolicy::score(std::span<const double> params, std::span<const double> obs,
                              std::span<const double> action,
                              std::span<double> grad_out) const {
  const int O = arch_.obs_dim, H = arch_.hidden, A = arch_.act_dim;
  std::vector<double> t(H), m(A);
  forward(params, obs, t, m);
  std::fill(grad_out.begin(), grad_out.end(), 0.0);

  std::vector<double> delta(A);  // d logp / d mean_j
  for (int j = 0; j < A; ++j) {
    double ls = params[ls_off() + j];
    bool clamped = ls < kLogStdFloor;
    double sigma = std::exp(std::max(ls, kLogStdFloor));
    double diff = action[j] - m[j];
    delta[j] = diff / (sigma * sigma);
    grad_out[ls_off() + j] = clamped ? 0.0 : -1.0 + (diff * diff) / (sigma * sigma);
  }
  // Output layer.
  for (int j = 0; j < A; ++j) {
    double* gw = grad_out.data() + w2_off() + j * H;
    for (int k = 0; k < H; ++k) gw[k] = delta[j] * t[k];
    grad_out[b2_off() + j] = delta[j];
  }
  // Hidden layer.
  for (int k = 0; k < H; ++k) {
    double dt = 0.0;
    for (int j = 0; j < A; ++j) dt += delta[j] * params[w2_off() + j * H + k];
    double du = dt * (1.0 - t[k] * t[k]);
    double* gw = grad_out.data() + w1_off() + k * O;
    for (int i = 0; i < O; ++i) gw[i] = du * obs[i];
    grad_out[b1_off() + k] = du;
  }
}

void GaussianMlpPolicy::add_log_prob_hessian(std::span<const double> params,
                                             std::span<const double> obs,
                                             std::span<const double> action,
                                             Matrix& H_out) const {
  const int O = arch_.obs_dim, H = arch_.hidden, A = arch_.act_dim;
  const int P = ls_off();  // mean-path parameter count
  const int D = param_dim();
  if (static_cast<int>(H_out.rows) != D || static_cast<int>(H_out.cols) != D)
    throw std::invalid_argument("hessian accumulator has wrong shape");

  std::vector<double> t(H), m(A);
  forward(params, obs, t, m);

  std::vector<double> delta(A), inv_var(A), z(A);
  std::vector<bool> clamped(A);
  for (int j = 0; j < A; ++j) {
    double ls = params[ls_off() + j];
    clamped[j] = ls < kLogStdFloor;
    double sigma = std::exp(std::max(ls, kLogStdFloor));
    inv_var[j] = 1.0 / (sigma * sigma);
    double diff = action[j] - m[j];
    delta[j] = diff * inv_var[j];
    z[j] = diff / sigma;
  }

  // Jacobian of the mean head w.r.t. the mean-path parameters, one dense row
  // per action dimension.
  Matrix Jm(A, P);
  for (int j = 0; j < A; ++j) {
    double* row = Jm.data.data() + j * P;
    for (int k = 0; k < H; ++k) {
      double c = params[w2_off() + j * H + k] * (1.0 - t[k] * t[k]);
      double* rw1 = row + w1_off() + k * O;
      for (int i = 0; i < O; ++i) rw1[i] = c * obs[i];
      row[b1_off() + k] = c;
      row[w2_off() + j * H + k] = t[k];
    }
    row[b2_off() + j] = 1.0;
  }

  // Gauss-Newton part: -sum_j inv_var_j * Jm_j Jm_j^T.
  for (int j = 0; j < A; ++j) {
    const double* row = Jm.data.data() + j * P;
    double w = inv_var[j];
    for (int p = 0; p < P; ++p) {
      double rp = row[p];
      if (rp == 0.0) continue;
      double* hrow = H_out.data.data() + static_cast<std::size_t>(p) * D;
      double c = -w * rp;
      for (int q = 0; q < P; ++q) hrow[q] += c * row[q];
    }
  }

  // Curvature of the network output: sum_j delta_j * d^2 m_j.
  for (int k = 0; k < H; ++k) {
    double e = 1.0 - t[k] * t[k];
    double g2 = -2.0 * t[k] * e;
    double dt = 0.0;
    for (int j = 0; j < A; ++j) dt += delta[j] * params[w2_off() + j * H + k];
    double coeff = dt * g2;
    // (W1 row k + b1_k) block, with xt = [obs, 1].
    for (int i = 0; i <= O; ++i) {
      double xi = i < O ? obs[i] : 1.0;
      int pi = i < O ? w1_off() + k * O + i : b1_off() + k;
      for (int i2 = 0; i2 <= O; ++i2) {
        double xi2 = i2 < O ? obs[i2] : 1.0;
        int qi = i2 < O ? w1_off() + k * O + i2 : b1_off() + k;
        H_out(pi, qi) += coeff * xi * xi2;
      }
      // Cross terms W2(j,k) x (W1 row k, b1_k).
      for (int j = 0; j < A; ++j) {
        double c2 = delta[j] * e * xi;
        int pj = w2_off() + j * H + k;
        H_out(pj, pi) += c2;
        H_out(pi, pj) += c2;
      }
    }
  }

  // log-std rows/columns.
  for (int j = 0; j < A; ++j) {
    if (clamped[j]) continue;
    int lj = ls_off() + j;
    H_out(lj, lj) += -2.0 * z[j] * z[j];
    const double* row = Jm.data.data() + j * P;
    double c = -2.0 * delta[j];
    for (int p = 0; p < P; ++p) {
      double v = c * row[p];
      if (v == 0.0) continue;
      H_out(lj, p) += v;
      H_out(p, lj) += v;
    }
  }
}

TabularSoftmaxPolicy::TabularSoftmaxPolicy(int n_states, int n_actions)
    : n_states_(n_states), n_actions_(n_actions) {
  if (n_states < 1 || n_actions < 2)
    throw std::invalid_argument("tabular policy needs >=1 state and >=2 actions");
}

std::vector<double> TabularSoftmaxPolicy::init_params(RngStream& rng) const {
  std::vector<double> p(param_dim());
  for (double& v : p) v = 0.1 * rng.gaussian();
  return p;
}

std::vector<double> TabularSoftmaxPolicy::action_probs(std::span<const double> params,
                                                       int state) const {
  if (state < 0 || state >= n_states_) throw std::invalid_argument("state out of range");
  const double* z = params.data() + state * n_actions_;
  double mx = z[0];
  for (int a = 1; a < n_actions_; ++a) mx = std::max(mx, z[a]);
  std::vector<double> p(n_actions_);
  double s = 0.0;
  for (int a = 0; a < n_actions_; ++a) {
    p[a] = std::exp(z[a] - mx);
    s += p[a];
  }
  for (double& v : p) v /= s;
  return p;
}

void TabularSoftmaxPolicy::act(std::span<const double> params, std::span<const double> obs,
                               RngStream& rng, std::span<double> action_out,
                               double& logp_out) const {
  if (!all_finite(params)) throw std::invalid_argument("policy parameters contain NaN/Inf");
  int s = static_cast<int>(obs[0]);
  std::vector<double> p = action_probs(params, s);
  double u = rng.uniform();
  double cum = 0.0;
  int a = n_actions_ - 1;
  for (int i = 0; i < n_actions_; ++i) {
    cum += p[i];
    if (u <= cum) {
      a = i;
      break;
    }
  }
  action_out[0] = static_cast<double>(a);
  logp_out = std::log(p[a]);
}

double TabularSoftmaxPolicy::log_prob(std::span<const double> params,
                                      std::span<const double> obs,
                                      std::span<const double> action) const {
  int s = static_cast<int>(obs[0]);
  int a = static_cast<int>(action[0]);
  std::vector<double> p = action_probs(params, s);
  return std::log(p[a]);
}

void TabularSoftmaxPolicy::score(std::span<const double> params, std::span<const double> obs,
                                 std::span<const double> action,
                                 std::span<double> grad_out) const {
  std::fill(grad_out.begin(), grad_out.end(), 0.0);
  int s = static_cast<int>(obs[0]);
  int a = static_cast<int>(action[0]);
  std::vector<double> p = action_probs(params, s);
  for (int i = 0; i < n_actions_; ++i)
    grad_out[s * n_actions_ + i] = (i == a ? 1.0 : 0.0) - p[i];
}

void TabularSoftmaxPolicy::add_log_prob_hessian(std::span<const double> params,
                                                std::span<const double> obs,
                                                std::span<const double> action,
                                                Matrix& H) const {
  (void)action;  // the Hessian of log softmax does not depend on the action
  int s = static_cast<int>(obs[0]);
  std::vector<double> p = action_probs(params, s);
  for (int i = 0; i < n_actions_; ++i)
    for (int j = 0; j < n_actions_; ++j) {
      double v = p[i] * p[j] - (i == j ? p[i] : 0.0);
      H(s * n_actions_ + i, s * n_actions_ + j) += v;
    }
}

}  // namespace metastack
