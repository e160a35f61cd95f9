#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metastack/rng.hpp"
#include "metastack/vecmath.hpp"

namespace metastack {

// Interface shared by the Gaussian MLP policies of the game and the tabular
// softmax variant used by the enumeration oracles. Parameters are passed
// explicitly so the same policy object can serve many parameter vectors.
class StochasticPolicy {
 public:
  virtual ~StochasticPolicy() = default;

  virtual int obs_dim() const = 0;
  virtual int act_dim() const = 0;
  virtual int param_dim() const = 0;

  virtual std::vector<double> init_params(RngStream& rng) const = 0;

  // Samples an action and caches its log-density. Actions are pre-squash:
  // whoever maps them into an action box keeps the Gaussian log-density.
  virtual void act(std::span<const double> params, std::span<const double> obs,
                   RngStream& rng, std::span<double> action_out, double& logp_out) const = 0;

  virtual double log_prob(std::span<const double> params, std::span<const double> obs,
                          std::span<const double> action) const = 0;

  // grad_out := d log pi / d params (overwritten).
  virtual void score(std::span<const double> params, std::span<const double> obs,
                     std::span<const double> action, std::span<double> grad_out) const = 0;

  // H += d^2 log pi / d params^2 (accumulated).
  virtual void add_log_prob_hessian(std::span<const double> params,
                                    std::span<const double> obs,
                                    std::span<const double> action, Matrix& H) const = 0;
};

struct MlpArch {
  int obs_dim = 1;
  int hidden = 32;
  int act_dim = 1;

  int param_dim() const {
    return (obs_dim + 1) * hidden + (hidden + 1) * act_dim + act_dim;
  }
};

// Gaussian policy: a one-hidden-layer tanh MLP produces the mean, a learned
// per-dimension log-std (floored at -5) sets the spread.
class GaussianMlpPolicy : public StochasticPolicy {
 public:
  static constexpr double kLogStdFloor = -5.0;

  GaussianMlpPolicy(int obs_dim, int hidden, int act_dim, double log_std_init = -0.5);

  int obs_dim() const override { return arch_.obs_dim; }
  int act_dim() const override { return arch_.act_dim; }
  int param_dim() const override { return arch_.param_dim(); }
  const MlpArch& arch() const { return arch_; }

  std::vector<double> init_params(RngStream& rng) const override;
  void act(std::span<const double> params, std::span<const double> obs, RngStream& rng,
           std::span<double> action_out, double& logp_out) const override;
  double log_prob(std::span<const double> params, std::span<const double> obs,
                  std::span<const double> action) const override;
  void score(std::span<const double> params, std::span<const double> obs,
             std::span<const double> action, std::span<double> grad_out) const override;
  void add_log_prob_hessian(std::span<const double> params, std::span<const double> obs,
                            std::span<const double> action, Matrix& H) const override;

  // Mean head evaluation (used by tests and deterministic evaluation).
  void mean_action(std::span<const double> params, std::span<const double> obs,
                   std::span<double> mean_out) const;

 private:
  // Flat layout: W1 (hidden x obs), b1 (hidden), W2 (act x hidden), b2 (act),
  // log_std (act).
  int w1_off() const { return 0; }
  int b1_off() const { return arch_.hidden * arch_.obs_dim; }
  int w2_off() const { return b1_off() + arch_.hidden; }
  int b2_off() const { return w2_off() + arch_.act_dim * arch_.hidden; }
  int ls_off() const { return b2_off() + arch_.act_dim; }

  void forward(std::span<const double> params, std::span<const double> obs,
               std::span<double> tanh_out, std::span<double> mean_out) const;

  MlpArch arch_;
  double log_std_init_;
};

// Softmax policy over a small discrete state space; exists so enumeration
// oracles have exact scores and Hessians. Observations carry the state index
// in their first entry, actions carry the action index.
class TabularSoftmaxPolicy : public StochasticPolicy {
 public:
  TabularSoftmaxPolicy(int n_states, int n_actions);

  int obs_dim() const override { return 1; }
  int act_dim() const override { return 1; }
  int param_dim() const override { return n_states_ * n_actions_; }
  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }

  std::vector<double> init_params(RngStream& rng) const override;
  void act(std::span<const double> params, std::span<const double> obs, RngStream& rng,
           std::span<double> action_out, double& logp_out) const override;
  double log_prob(std::span<const double> params, std::span<const double> obs,
                  std::span<const double> action) const override;
  void score(std::span<const double> params, std::span<const double> obs,
             std::span<const double> action, std::span<double> grad_out) const override;
  void add_log_prob_hessian(std::span<const double> params, std::span<const double> obs,
                            std::span<const double> action, Matrix& H) const override;

  std::vector<double> action_probs(std::span<const double> params, int state) const;

 private:
  int n_states_;
  int n_actions_;
};

// Flat parameter vector plus its architecture, as stored in checkpoints.
struct PolicyParams {
  std::string player;  // "defender" or "attacker"
  MlpArch arch;
  std::vector<double> flat;

  void validate() const;
};

std::uint64_t params_hash(std::span<const double> params);

}  // namespace metastack
