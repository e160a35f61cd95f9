#pragma once

#include <map>
#include <string>
#include <vector>

#include "metastack/diagnostics_types.hpp"
#include "metastack/game.hpp"
#include "metastack/meta_learn.hpp"

namespace metastack {

// Sampling parameters of the diagnostic estimators.
struct DiagConfig {
  double eta = 0.01;
  int replications = 32;  // meta-gradient replications / attacker batch size
  Baseline baseline = Baseline::mean_return;
  int workers = 1;
};

// What the probes need from a game: gradients and values of the adapted
// objectives. The quadratic stand-in injects closed forms through the same
// interface, bypassing the environment.
class GradientSource {
 public:
  virtual ~GradientSource() = default;

  virtual int theta_dim() const = 0;
  virtual int phi_dim() const = 0;

  // Full-mode gradient of L_D(theta, phi, xi) w.r.t. theta.
  virtual GradEstimate defender_meta_grad(std::span<const double> theta,
                                          const std::vector<double>* phi, int type_id,
                                          RngStream& rng) const = 0;
  // Gradient of L_A w.r.t. phi, defender frozen at the adapted parameters.
  virtual GradEstimate attacker_grad(std::span<const double> theta,
                                     std::span<const double> phi, int type_id,
                                     RngStream& rng) const = 0;
  // Gradient of L_D w.r.t. phi (through the attacker's scores).
  virtual GradEstimate defender_phi_grad(std::span<const double> theta,
                                         std::span<const double> phi, int type_id,
                                         RngStream& rng) const = 0;
  virtual double attacker_value(std::span<const double> theta, std::span<const double> phi,
                                int type_id, RngStream& rng) const = 0;
};

class GameGradientSource : public GradientSource {
 public:
  GameGradientSource(const Game& game, const TypePrior& prior, DiagConfig cfg);

  int theta_dim() const override;
  int phi_dim() const override;
  GradEstimate defender_meta_grad(std::span<const double> theta,
                                  const std::vector<double>* phi, int type_id,
                                  RngStream& rng) const override;
  GradEstimate attacker_grad(std::span<const double> theta, std::span<const double> phi,
                             int type_id, RngStream& rng) const override;
  GradEstimate defender_phi_grad(std::span<const double> theta, std::span<const double> phi,
                                 int type_id, RngStream& rng) const override;
  double attacker_value(std::span<const double> theta, std::span<const double> phi,
                        int type_id, RngStream& rng) const override;

 private:
  std::vector<double> adapt_one_draw(std::span<const double> theta,
                                     const std::vector<double>* phi,
                                     const AttackTypeSpec& type, RngStream& rng) const;

  const Game& game_;
  const TypePrior& prior_;
  DiagConfig cfg_;
};

// Closed-form test hook: L_D = -a||theta - theta*||^2 + coupling * <theta, phi>,
// L_A = -b||phi - phi*||^2. Exact gradients, zero variance.
class QuadraticStandinGame : public GradientSource {
 public:
  QuadraticStandinGame(std::vector<double> theta_star, std::vector<double> phi_star,
                       double a = 1.0, double b = 1.0, double coupling = 0.0);

  int theta_dim() const override { return static_cast<int>(theta_star_.size()); }
  int phi_dim() const override { return static_cast<int>(phi_star_.size()); }
  GradEstimate defender_meta_grad(std::span<const double> theta,
                                  const std::vector<double>* phi, int type_id,
                                  RngStream& rng) const override;
  GradEstimate attacker_grad(std::span<const double> theta, std::span<const double> phi,
                             int type_id, RngStream& rng) const override;
  GradEstimate defender_phi_grad(std::span<const double> theta, std::span<const double> phi,
                                 int type_id, RngStream& rng) const override;
  double attacker_value(std::span<const double> theta, std::span<const double> phi,
                        int type_id, RngStream& rng) const override;

 private:
  std::vector<double> theta_star_;
  std::vector<double> phi_star_;
  double a_, b_, coupling_;
};

struct FoseResult {
  double defender_residual = 0.0;
  double defender_se = 0.0;
  std::map<int, double> attacker_residuals;
  std::map<int, double> attacker_se;
};

// Def.-level first-order equilibrium residuals: defender residual is the norm
// of the prior-averaged full-mode meta gradient, attacker residuals are the
// per-type policy-gradient norms at the current iterates.
FoseResult fose_residual(const GradientSource& source, std::span<const double> theta,
                         const std::map<int, std::vector<double>>& phis,
                         const TypePrior& prior, RngStream& rng);

// Strict-competitiveness probe: least-squares affine fit r_D = c r_A + d over
// sampled steps. Only steps with at least one malicious client sampled enter
// the fit (the all-benign zero clause is the degenerate case).
ScFit sc_check(const Game& game, const AttackTypeSpec& type, int n_samples, RngStream& rng);

struct PlResult {
  double mu = 0.0;  // min probe ratio, the empirical lower envelope
  bool verified = false;
  int probes_used = 0;
  int probes_skipped = 0;
  int invalidations = 0;  // probes that beat the supposed maximizer
};

// Empirical Polyak-Lojasiewicz probe around an approximate maximizer phi_star.
PlResult pl_probe(const GradientSource& source, std::span<const double> theta,
                  std::span<const double> phi_star, int type_id, int n_probes,
                  double radius, RngStream& rng);

enum class LipId { L11, L12, L21, L22, LV };
LipId lip_id_from_string(const std::string& s);

// Empirical lower bound on the designated Lipschitz constant: max over
// sampled parameter pairs of ||grad difference|| / ||parameter difference||.
double lipschitz_probe(const GradientSource& source, LipId id,
                       std::span<const double> theta, std::span<const double> phi,
                       int type_id, int n_pairs, double radius, RngStream& rng);

struct GradCheckReport {
  struct Entry {
    std::string name;
    double stat = 0.0;       // max |z| against the oracle (or cosine for reptile)
    double threshold = 0.0;  // pass iff stat within threshold (or above, for cosine)
    bool pass = false;
    double rel_err = 0.0;
  };
  std::vector<Entry> entries;
  bool all_pass() const;
  std::string to_json() const;
};

// Enumeration-oracle comparisons of the Monte-Carlo estimators on the
// canonical toy MDP. Deterministic for a fixed seed.
GradCheckReport grad_check_suite(std::uint64_t seed, int batch = 20000);

// Hook for meta_sl: computes FOSE residuals every `cadence` iterations.
DiagnosticsHook make_fose_hook(const Game& game, const TypePrior& prior, DiagConfig cfg,
                               int cadence, std::uint64_t seed);

}  // namespace metastack
