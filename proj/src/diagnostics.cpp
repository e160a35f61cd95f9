#include "metastack/diagnostics.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "metastack/toy_mdp.hpp"

namespace metastack {

GameGradientSource::GameGradientSource(const Game& game, const TypePrior& prior,
                                       DiagConfig cfg)
    : game_(game), prior_(prior), cfg_(cfg) {}

int GameGradientSource::theta_dim() const { return game_.defender_policy().param_dim(); }

int GameGradientSource::phi_dim() const {
  const StochasticPolicy* p = game_.attacker_policy();
  return p ? p->param_dim() : 0;
}

GradEstimate GameGradientSource::defender_meta_grad(std::span<const double> theta,
                                                    const std::vector<double>* phi,
                                                    int type_id, RngStream& rng) const {
  const AttackTypeSpec& type = prior_.by_id(type_id);
  SamplerFn sampler = make_sampler(game_, phi, &type);
  RngStream mg = rng.substream("mg");
  return meta_gradient(game_.defender_policy(), theta, cfg_.eta, MetaMode::full, sampler,
                       cfg_.replications, cfg_.baseline, mg);
}

std::vector<double> GameGradientSource::adapt_one_draw(std::span<const double> theta,
                                                       const std::vector<double>* phi,
                                                       const AttackTypeSpec& type,
                                                       RngStream& rng) const {
  std::vector<double> adapted(theta.begin(), theta.end());
  if (cfg_.eta == 0.0) return adapted;
  RngStream ad = rng.substream("adapt_draw");
  Trajectory tau = game_.rollout(theta, phi, &type, ad);
  std::vector<double> s = score_sum(game_.defender_policy(), theta, tau, Player::defender);
  axpy(cfg_.eta * discounted_return(tau, Player::defender), s, adapted);
  return adapted;
}

GradEstimate GameGradientSource::attacker_grad(std::span<const double> theta,
                                               std::span<const double> phi, int type_id,
                                               RngStream& rng) const {
  const AttackTypeSpec& type = prior_.by_id(type_id);
  if (!type.is_adaptive())
    throw std::invalid_argument("attacker gradient undefined for rule-based type");
  std::vector<double> phi_v(phi.begin(), phi.end());
  std::vector<double> adapted = adapt_one_draw(theta, &phi_v, type, rng);
  auto batch = rollout_batch(game_, adapted, &phi_v, &type, cfg_.replications,
                             rng.substream("batch"), cfg_.workers);
  return pg_estimate(*game_.attacker_policy(), phi_v, batch, Player::attacker,
                     cfg_.baseline);
}

GradEstimate GameGradientSource::defender_phi_grad(std::span<const double> theta,
                                                   std::span<const double> phi, int type_id,
                                                   RngStream& rng) const {
  const AttackTypeSpec& type = prior_.by_id(type_id);
  if (!type.is_adaptive())
    throw std::invalid_argument("phi gradient undefined for rule-based type");
  std::vector<double> phi_v(phi.begin(), phi.end());
  std::vector<double> adapted = adapt_one_draw(theta, &phi_v, type, rng);
  auto batch = rollout_batch(game_, adapted, &phi_v, &type, cfg_.replications,
                             rng.substream("batch"), cfg_.workers);
  return pg_estimate_cross(*game_.attacker_policy(), phi_v, batch, Player::attacker,
                           Player::defender, cfg_.baseline);
}

double GameGradientSource::attacker_value(std::span<const double> theta,
                                          std::span<const double> phi, int type_id,
                                          RngStream& rng) const {
  const AttackTypeSpec& type = prior_.by_id(type_id);
  std::vector<double> phi_v(phi.begin(), phi.end());
  std::vector<double> adapted = adapt_one_draw(theta, &phi_v, type, rng);
  auto batch = rollout_batch(game_, adapted, &phi_v, &type, cfg_.replications,
                             rng.substream("batch"), cfg_.workers);
  double sum = 0.0;
  for (const auto& tau : batch) sum += discounted_return(tau, Player::attacker);
  return sum / static_cast<double>(batch.size());
}

QuadraticStandinGame::QuadraticStandinGame(std::vector<double> theta_star,
                                           std::vector<double> phi_star, double a, double b,
                                           double coupling)
    : theta_star_(std::move(theta_star)),
      phi_star_(std::move(phi_star)),
      a_(a),
      b_(b),
      coupling_(coupling) {}

namespace {

GradEstimate exact_estimate(std::vector<double> g) {
  GradEstimate est;
  est.variance.assign(g.size(), 0.0);
  est.vector = std::move(g);
  est.batch_size = 1;
  return est;
}

}  // namespace

GradEstimate QuadraticStandinGame::defender_meta_grad(std::span<const double> theta,
                                                      const std::vector<double>* phi,
                                                      int type_id, RngStream& rng) const {
  (void)type_id;
  (void)rng;
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    g[i] = -2.0 * a_ * (theta[i] - theta_star_[i]);
    if (phi && i < phi->size()) g[i] += coupling_ * (*phi)[i];
  }
  return exact_estimate(std::move(g));
}

GradEstimate QuadraticStandinGame::attacker_grad(std::span<const double> theta,
                                                 std::span<const double> phi, int type_id,
                                                 RngStream& rng) const {
  (void)theta;
  (void)type_id;
  (void)rng;
  std::vector<double> g(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) g[i] = -2.0 * b_ * (phi[i] - phi_star_[i]);
  return exact_estimate(std::move(g));
}

GradEstimate QuadraticStandinGame::defender_phi_grad(std::span<const double> theta,
                                                     std::span<const double> phi,
                                                     int type_id, RngStream& rng) const {
  (void)type_id;
  (void)rng;
  std::vector<double> g(phi.size(), 0.0);
  for (std::size_t i = 0; i < phi.size() && i < theta.size(); ++i)
    g[i] = coupling_ * theta[i];
  return exact_estimate(std::move(g));
}

double QuadraticStandinGame::attacker_value(std::span<const double> theta,
                                            std::span<const double> phi, int type_id,
                                            RngStream& rng) const {
  (void)theta;
  (void)type_id;
  (void)rng;
  double v = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    double d = phi[i] - phi_star_[i];
    v -= b_ * d * d;
  }
  return v;
}

FoseResult fose_residual(const GradientSource& source, std::span<const double> theta,
                         const std::map<int, std::vector<double>>& phis,
                         const TypePrior& prior, RngStream& rng) {
  prior.validate();
  FoseResult out;
  std::vector<double> mixed(theta.size(), 0.0);
  double var_scalar = 0.0;
  for (const auto& [type, prob] : prior.entries) {
    const std::vector<double>* phi = nullptr;
    auto it = phis.find(type.id);
    if (it != phis.end()) phi = &it->second;
    RngStream trng = rng.substream("type").substream(static_cast<std::uint64_t>(type.id));
    GradEstimate g = source.defender_meta_grad(theta, phi, type.id, trng);
    axpy(prob, g.vector, mixed);
    double v = 0.0;
    for (double x : g.variance) v += x;
    var_scalar += prob * prob * v / static_cast<double>(g.batch_size);

    if (type.is_adaptive() && phi) {
      RngStream arng =
          rng.substream("atk").substream(static_cast<std::uint64_t>(type.id));
      GradEstimate ga = source.attacker_grad(theta, *phi, type.id, arng);
      out.attacker_residuals[type.id] = ga.norm();
      double va = 0.0;
      for (double x : ga.variance) va += x;
      out.attacker_se[type.id] = std::sqrt(va / static_cast<double>(ga.batch_size));
    }
  }
  out.defender_residual = norm2(mixed);
  out.defender_se = std::sqrt(var_scalar);
  return out;
}

ScFit sc_check(const Game& game, const AttackTypeSpec& type, int n_samples, RngStream& rng) {
  if (n_samples < 10) throw std::invalid_argument("sc_check: need at least 10 samples");
  type.validate();
  std::vector<double> rd, ra;
  rd.reserve(n_samples);
  ra.reserve(n_samples);
  const StochasticPolicy& dpol = game.defender_policy();
  const StochasticPolicy* apol = game.attacker_policy();
  std::uint64_t episode = 0;
  while (static_cast<int>(rd.size()) < n_samples) {
    RngStream ep_rng = rng.substream("episode").substream(episode);
    RngStream init_rng = ep_rng.substream("init");
    std::vector<double> theta = dpol.init_params(init_rng);
    std::vector<double> phi;
    const std::vector<double>* phi_ptr = nullptr;
    if (type.is_adaptive()) {
      if (apol == nullptr)
        throw std::invalid_argument("sc_check: adaptive type but no attacker policy");
      RngStream ai = ep_rng.substream("init_attacker");
      phi = apol->init_params(ai);
      phi_ptr = &phi;
    }
    RngStream roll = ep_rng.substream("roll");
    Trajectory tau = game.rollout(theta, phi_ptr, &type, roll);
    for (const auto& s : tau.steps) {
      if (s.malicious_sampled == 0) continue;
      rd.push_back(s.reward_defender);
      ra.push_back(s.reward_attacker);
      if (static_cast<int>(rd.size()) >= n_samples) break;
    }
    episode++;
    if (episode > 10000)
      throw std::runtime_error("sc_check: could not collect enough malicious-present steps");
  }

  double n = static_cast<double>(rd.size());
  double mean_a = pairwise_sum(ra) / n;
  double mean_d = pairwise_sum(rd) / n;
  double cov = 0.0, var = 0.0;
  for (std::size_t i = 0; i < rd.size(); ++i) {
    cov += (ra[i] - mean_a) * (rd[i] - mean_d);
    var += (ra[i] - mean_a) * (ra[i] - mean_a);
  }
  if (var < 1e-20)
    throw std::runtime_error("sc_check: cannot identify c (all r_A samples equal)");
  ScFit fit;
  fit.c = cov / var;
  fit.d = mean_d - fit.c * mean_a;
  fit.n_samples = static_cast<int>(rd.size());
  for (std::size_t i = 0; i < rd.size(); ++i)
    fit.max_abs_residual =
        std::max(fit.max_abs_residual, std::abs(rd[i] - (fit.c * ra[i] + fit.d)));
  fit.c_negative = fit.c < 0.0;
  return fit;
}

PlResult pl_probe(const GradientSource& source, std::span<const double> theta,
                  std::span<const double> phi_star, int type_id, int n_probes,
                  double radius, RngStream& rng) {
  PlResult out;
  RngStream vrng = rng.substream("value_star");
  double l_star = source.attacker_value(theta, phi_star, type_id, vrng);
  double min_ratio = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_probes; ++i) {
    RngStream prng = rng.substream("probe").substream(static_cast<std::uint64_t>(i));
    std::vector<double> phi(phi_star.begin(), phi_star.end());
    double delta_norm2 = 0.0;
    for (double& v : phi) {
      double d = radius * prng.gaussian();
      v += d;
      delta_norm2 += d * d;
    }
    if (delta_norm2 == 0.0) {
      out.probes_skipped++;  // degenerate 0/0 probe
      continue;
    }
    double l = source.attacker_value(theta, phi, type_id, prng);
    GradEstimate g = source.attacker_grad(theta, phi, type_id, prng);
    double gap = l_star - l;
    if (gap <= 0.0) {
      out.invalidations++;  // this probe beats the supposed maximizer
      continue;
    }
    double ratio = g.norm() * g.norm() / (2.0 * gap);
    min_ratio = std::min(min_ratio, ratio);
    out.probes_used++;
  }
  out.mu = std::isfinite(min_ratio) ? min_ratio : 0.0;
  out.verified = out.invalidations == 0 && out.probes_used > 0 && out.mu > 0.0;
  return out;
}

LipId lip_id_from_string(const std::string& s) {
  if (s == "L11") return LipId::L11;
  if (s == "L12") return LipId::L12;
  if (s == "L21") return LipId::L21;
  if (s == "L22") return LipId::L22;
  if (s == "L_V" || s == "LV") return LipId::LV;
  throw std::invalid_argument("unknown Lipschitz probe id: " + s);
}

double lipschitz_probe(const GradientSource& source, LipId id,
                       std::span<const double> theta, std::span<const double> phi,
                       int type_id, int n_pairs, double radius, RngStream& rng) {
  if (n_pairs < 10) throw std::invalid_argument("lipschitz_probe: need at least 10 pairs");
  bool perturb_theta = id == LipId::L11 || id == LipId::LV;
  std::vector<double> phi_v(phi.begin(), phi.end());

  auto grad_at = [&](std::span<const double> th, const std::vector<double>& ph,
                     RngStream& r) -> std::vector<double> {
    switch (id) {
      case LipId::L11:
      case LipId::LV:
      case LipId::L12:
        return source.defender_meta_grad(th, &ph, type_id, r).vector;
      case LipId::L21:
        return source.attacker_grad(th, ph, type_id, r).vector;
      case LipId::L22:
        return source.defender_phi_grad(th, ph, type_id, r).vector;
    }
    return {};
  };

  double max_ratio = 0.0;
  for (int i = 0; i < n_pairs; ++i) {
    RngStream prng = rng.substream("pair").substream(static_cast<std::uint64_t>(i));
    std::vector<double> base = perturb_theta
                                   ? std::vector<double>(theta.begin(), theta.end())
                                   : phi_v;
    std::vector<double> p1 = base, p2 = base;
    double dn2 = 0.0;
    for (std::size_t j = 0; j < base.size(); ++j) {
      p1[j] += radius * prng.gaussian();
      p2[j] += radius * prng.gaussian();
      double diff = p1[j] - p2[j];
      dn2 += diff * diff;
    }
    if (dn2 == 0.0) continue;  // identical pair

    RngStream g1r = prng.substream("g1");
    RngStream g2r = prng.substream("g1");  // same stream: common random numbers
    std::vector<double> g1, g2;
    if (perturb_theta) {
      g1 = grad_at(p1, phi_v, g1r);
      g2 = grad_at(p2, phi_v, g2r);
    } else {
      std::vector<double> th(theta.begin(), theta.end());
      g1 = grad_at(th, p1, g1r);
      g2 = grad_at(th, p2, g2r);
    }
    double gd2 = 0.0;
    for (std::size_t j = 0; j < g1.size(); ++j) {
      double diff = g1[j] - g2[j];
      gd2 += diff * diff;
    }
    max_ratio = std::max(max_ratio, std::sqrt(gd2 / dn2));
  }
  return max_ratio;
}

bool GradCheckReport::all_pass() const {
  for (const auto& e : entries)
    if (!e.pass) return false;
  return true;
}

std::string GradCheckReport::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries) {
    j.push_back({{"name", e.name},
                 {"stat", e.stat},
                 {"threshold", e.threshold},
                 {"pass", e.pass},
                 {"rel_err", e.rel_err}});
  }
  return j.dump(2);
}

GradCheckReport grad_check_suite(std::uint64_t seed, int batch) {
  GradCheckReport report;
  ToyMdp toy = ToyMdp::canonical();
  TabularSoftmaxPolicy pol(toy.n_states, toy.n_actions);
  RngStream root = root_stream(seed, "gradcheck");
  RngStream init = root.substream("init");
  std::vector<double> params = pol.init_params(init);

  // Policy gradient vs enumeration.
  {
    std::vector<Trajectory> taus;
    taus.reserve(batch);
    RngStream r = root.substream("pg");
    for (int i = 0; i < batch; ++i) {
      RngStream s = r.substream(static_cast<std::uint64_t>(i));
      taus.push_back(toy.rollout(pol, params, s));
    }
    GradEstimate est = pg_estimate(pol, params, taus, Player::defender, Baseline::none);
    std::vector<double> exact = toy.exact_gradient(pol, params);
    std::vector<double> se = est.standard_error();
    double max_z = 0.0, max_rel = 0.0;
    for (std::size_t i = 0; i < exact.size(); ++i) {
      double z = se[i] > 0 ? std::abs(est.vector[i] - exact[i]) / se[i] : 0.0;
      max_z = std::max(max_z, z);
      if (std::abs(exact[i]) > 1e-12)
        max_rel = std::max(max_rel, std::abs(est.vector[i] - exact[i]) / std::abs(exact[i]));
    }
    report.entries.push_back({"pg_vs_enumeration", max_z, 3.0, max_z <= 3.0, max_rel});
  }

  // Hessian estimator vs finite differences of the exact gradient.
  {
    std::vector<Trajectory> taus;
    taus.reserve(batch);
    RngStream r = root.substream("hessian");
    for (int i = 0; i < batch; ++i) {
      RngStream s = r.substream(static_cast<std::uint64_t>(i));
      taus.push_back(toy.rollout(pol, params, s));
    }
    HessianEstimate est = hessian_estimate(pol, params, taus, Player::defender);
    Matrix exact = toy.exact_hessian_fd(pol, params, 1e-4);
    double max_z = 0.0, max_rel = 0.0, max_sym_z = 0.0;
    int d = pol.param_dim();
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        double se = std::sqrt(est.variance(i, j) / static_cast<double>(est.batch_size));
        double z = se > 0 ? std::abs(est.mean(i, j) - exact(i, j)) / se : 0.0;
        max_z = std::max(max_z, z);
        if (std::abs(exact(i, j)) > 1e-9)
          max_rel = std::max(max_rel,
                             std::abs(est.mean(i, j) - exact(i, j)) / std::abs(exact(i, j)));
        double se_sym = std::sqrt((est.variance(i, j) + est.variance(j, i)) /
                                  static_cast<double>(est.batch_size));
        double zs = se_sym > 0 ? std::abs(est.mean(i, j) - est.mean(j, i)) / se_sym : 0.0;
        max_sym_z = std::max(max_sym_z, zs);
      }
    report.entries.push_back({"hessian_vs_fd_of_exact", max_z, 3.0, max_z <= 3.0, max_rel});
    report.entries.push_back({"hessian_symmetry", max_sym_z, 3.0, max_sym_z <= 3.0, 0.0});
  }

  // Full meta-gradient vs finite differences of the enumerated adapted
  // objective; reptile keeps a positive cosine with it.
  {
    double eta = 0.1;
    SamplerFn sampler = [&](std::span<const double> p, RngStream& r) {
      return toy.rollout(pol, p, r);
    };
    RngStream rf = root.substream("meta_full");
    GradEstimate full = meta_gradient(pol, params, eta, MetaMode::full, sampler, batch,
                                      Baseline::none, rf);
    std::vector<double> exact = toy.exact_adapted_gradient_fd(pol, params, eta, 1e-4);
    std::vector<double> se = full.standard_error();
    double max_z = 0.0, max_rel = 0.0;
    for (std::size_t i = 0; i < exact.size(); ++i) {
      double z = se[i] > 0 ? std::abs(full.vector[i] - exact[i]) / se[i] : 0.0;
      max_z = std::max(max_z, z);
      if (std::abs(exact[i]) > 1e-12)
        max_rel = std::max(max_rel, std::abs(full.vector[i] - exact[i]) / std::abs(exact[i]));
    }
    report.entries.push_back({"meta_full_vs_fd_adapted", max_z, 3.0, max_z <= 3.0, max_rel});

    RngStream rr = root.substream("meta_reptile");
    GradEstimate rep = meta_gradient(pol, params, eta, MetaMode::reptile, sampler, batch,
                                     Baseline::none, rr);
    double cosv = cosine_similarity(rep.vector, exact);
    report.entries.push_back({"meta_reptile_ascent_cosine", cosv, 0.0, cosv > 0.0, 0.0});
  }

  return report;
}

DiagnosticsHook make_fose_hook(const Game& game, const TypePrior& prior, DiagConfig cfg,
                               int cadence, std::uint64_t seed) {
  auto prior_copy = std::make_shared<TypePrior>(prior);
  auto source = std::make_shared<GameGradientSource>(game, *prior_copy, cfg);
  return [source, prior_copy, cadence, seed](const MetaState& state,
                                             int iteration) -> DiagnosticRecord {
    DiagnosticRecord rec;
    rec.iteration = iteration;
    if (cadence <= 0) return rec;
    bool due = iteration == 1 || iteration % cadence == 0;
    if (!due) return rec;
    auto t0 = std::chrono::steady_clock::now();
    RngStream rng =
        root_stream(seed, "diag/fose").substream(static_cast<std::uint64_t>(iteration));
    FoseResult res = fose_residual(*source, state.theta, state.phis, *prior_copy, rng);
    rec.defender_residual = res.defender_residual;
    rec.defender_residual_se = res.defender_se;
    rec.attacker_residuals = res.attacker_residuals;
    rec.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
  };
}

}  // namespace metastack
