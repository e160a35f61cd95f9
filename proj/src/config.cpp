#include "metastack/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace metastack {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string strip_comment(const std::string& line) {
  bool in_quote = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_quote = !in_quote;
    if (line[i] == '#' && !in_quote) return line.substr(0, i);
  }
  return line;
}

}  // namespace

TomlTable TomlTable::parse_string(const std::string& text) {
  TomlTable t;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
    if (!section.empty()) key = section + "." + key;
    t.raw_[key] = value;
  }
  return t;
}

TomlTable TomlTable::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

bool TomlTable::has(const std::string& key) const { return raw_.count(key) > 0; }

std::int64_t TomlTable::get_int(const std::string& key, std::int64_t def) const {
  auto it = raw_.find(key);
  if (it == raw_.end()) return def;
  try {
    std::size_t pos = 0;
    std::int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected integer, got '" + it->second + "'");
  }
}

double TomlTable::get_double(const std::string& key, double def) const {
  auto it = raw_.find(key);
  if (it == raw_.end()) return def;
  try {
    std::size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected number, got '" + it->second + "'");
  }
}

bool TomlTable::get_bool(const std::string& key, bool def) const {
  auto it = raw_.find(key);
  if (it == raw_.end()) return def;
  if (it->second == "true") return true;
  if (it->second == "false") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + it->second + "'");
}

std::string TomlTable::get_string(const std::string& key, const std::string& def) const {
  auto it = raw_.find(key);
  if (it == raw_.end()) return def;
  std::string v = it->second;
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

namespace {

std::vector<std::string> split_array(const std::string& key, const std::string& raw) {
  std::string v = trim(raw);
  if (v.size() < 2 || v.front() != '[' || v.back() != ']')
    throw ConfigError("config key '" + key + "': expected an array [..]");
  v = v.substr(1, v.size() - 2);
  std::vector<std::string> parts;
  std::string cur;
  bool in_quote = false;
  for (char c : v) {
    if (c == '"') in_quote = !in_quote;
    if (c == ',' && !in_quote) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) parts.push_back(trim(cur));
  return parts;
}

}  // namespace

std::vector<double> TomlTable::get_double_array(const std::string& key) const {
  auto it = raw_.find(key);
  if (it == raw_.end()) return {};
  std::vector<double> out;
  for (const auto& p : split_array(key, it->second)) {
    try {
      out.push_back(std::stod(p));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': bad number '" + p + "'");
    }
  }
  return out;
}

std::vector<std::string> TomlTable::get_string_array(const std::string& key) const {
  auto it = raw_.find(key);
  if (it == raw_.end()) return {};
  std::vector<std::string> out;
  for (auto p : split_array(key, it->second)) {
    if (p.size() >= 2 && p.front() == '"' && p.back() == '"') p = p.substr(1, p.size() - 2);
    out.push_back(p);
  }
  return out;
}

int default_workers_from_env() {
  const char* v = std::getenv("METASTACK_WORKERS");
  if (!v) return 1;
  int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

RunConfig RunConfig::load(const std::string& config_path) {
  TomlTable t = TomlTable::parse_file(config_path);
  RunConfig c;
  c.workers = default_workers_from_env();

  c.seed = static_cast<std::uint64_t>(t.get_int("seed", 0));
  c.workers = static_cast<int>(t.get_int("workers", c.workers));
  c.algo = t.get_string("algo", c.algo);

  EnvConfig& e = c.env;
  e.n_clients = static_cast<int>(t.get_int("env.n_clients", e.n_clients));
  e.subsample = static_cast<int>(t.get_int("env.subsample", e.subsample));
  e.local_lr = t.get_double("env.local_lr", e.local_lr);
  e.local_steps = static_cast<int>(t.get_int("env.local_steps", e.local_steps));
  e.horizon = static_cast<int>(t.get_int("env.horizon", e.horizon));
  e.discount = t.get_double("env.discount", e.discount);
  e.aggregator = t.get_string("env.aggregator", e.aggregator);
  e.krum_f = static_cast<int>(t.get_int("env.krum_f", e.krum_f));
  e.eval_per_class = static_cast<int>(t.get_int("env.eval_per_class", e.eval_per_class));
  e.root_samples = static_cast<int>(t.get_int("env.root_samples", e.root_samples));
  std::string sign = t.get_string("env.reward_sign_mode", "consistent");
  if (sign == "consistent")
    e.reward_sign_mode = RewardSignMode::consistent;
  else if (sign == "literal")
    e.reward_sign_mode = RewardSignMode::literal;
  else
    throw ConfigError("env.reward_sign_mode must be 'consistent' or 'literal'");

  e.data.d = static_cast<int>(t.get_int("env.dataset.d", e.data.d));
  e.data.classes = static_cast<int>(t.get_int("env.dataset.classes", e.data.classes));
  e.data.per_class = static_cast<int>(t.get_int("env.dataset.per_class", e.data.per_class));
  e.data.cluster_spread = t.get_double("env.dataset.spread", e.data.cluster_spread);
  e.data.heterogeneity = t.get_double("env.dataset.heterogeneity", e.data.heterogeneity);
  e.idx_images = t.get_string("env.dataset.idx_images", "");
  e.idx_labels = t.get_string("env.dataset.idx_labels", "");
  e.idx_max_samples =
      static_cast<int>(t.get_int("env.dataset.idx_max", e.idx_max_samples));

  AttackKnobs& a = e.attack;
  a.ipm_eps = t.get_double("env.attack.ipm_eps", a.ipm_eps);
  a.lmp_lambda0 = t.get_double("env.attack.lmp_lambda0", a.lmp_lambda0);
  a.lmp_max_halvings =
      static_cast<int>(t.get_int("env.attack.lmp_halvings", a.lmp_max_halvings));
  a.eb_boost = t.get_double("env.attack.eb_boost", a.eb_boost);
  a.bfl_boost = t.get_double("env.attack.bfl_boost", a.bfl_boost);
  a.poison_fraction = t.get_double("env.attack.poison_fraction", a.poison_fraction);
  a.boost_cap = t.get_double("env.attack.boost_cap", a.boost_cap);
  a.noise_cap = t.get_double("env.attack.noise_cap", a.noise_cap);
  a.see_benign_mean = t.get_bool("env.attack.see_benign_mean", a.see_benign_mean);

  DefenseBox& b = e.defense_box;
  b.trim_lo = t.get_double("env.defense_box.trim_lo", b.trim_lo);
  b.trim_hi = t.get_double("env.defense_box.trim_hi", b.trim_hi);
  b.norm_lo = t.get_double("env.defense_box.norm_lo", b.norm_lo);
  b.norm_hi = t.get_double("env.defense_box.norm_hi", b.norm_hi);
  b.noise_lo = t.get_double("env.defense_box.noise_lo", b.noise_lo);
  b.noise_hi = t.get_double("env.defense_box.noise_hi", b.noise_hi);
  b.clip_lo = t.get_double("env.defense_box.clip_lo", b.clip_lo);
  b.clip_hi = t.get_double("env.defense_box.clip_hi", b.clip_hi);

  if (t.has("env.defense.fixed")) {
    std::vector<double> f = t.get_double_array("env.defense.fixed");
    if (f.size() != 4)
      throw ConfigError("env.defense.fixed must hold [trim, norm, noise, post_clip]");
    e.fixed_defense = DefenseAction::validated(f[0], f[1], f[2], f[3]);
  }

  c.policy.hidden = static_cast<int>(t.get_int("policy.hidden", c.policy.hidden));
  c.policy.log_std_init = t.get_double("policy.log_std_init", c.policy.log_std_init);

  MetaConfig& m = c.meta;
  m.types_per_iter = static_cast<int>(t.get_int("meta.K", m.types_per_iter));
  m.adapt_steps = static_cast<int>(t.get_int("meta.l", m.adapt_steps));
  m.n_outer = static_cast<int>(t.get_int("meta.n_outer", m.n_outer));
  m.n_inner = static_cast<int>(t.get_int("meta.n_inner", m.n_inner));
  m.n_batch = static_cast<int>(t.get_int("meta.n_batch", m.n_batch));
  m.eta = t.get_double("meta.eta", m.eta);
  m.kappa = t.get_double("meta.kappa", m.kappa);
  m.kappa_attacker = t.get_double("meta.kappa_attacker", m.kappa_attacker);
  m.kappa_defender = t.get_double("meta.kappa_defender", m.kappa_defender);
  m.checkpoint_interval =
      static_cast<int>(t.get_int("meta.checkpoint_interval", m.checkpoint_interval));
  std::string mode = t.get_string("meta.mode", "reptile");
  if (mode == "reptile")
    m.mode = MetaMode::reptile;
  else if (mode == "full")
    m.mode = MetaMode::full;
  else
    throw ConfigError("meta.mode must be 'reptile' or 'full'");
  std::string baseline = t.get_string("meta.baseline", "mean_return");
  if (baseline == "mean_return")
    m.baseline = Baseline::mean_return;
  else if (baseline == "none")
    m.baseline = Baseline::none;
  else
    throw ConfigError("meta.baseline must be 'none' or 'mean_return'");

  DiagnosticsConfig& d = c.diag;
  d.cadence = static_cast<int>(t.get_int("diagnostics.cadence", d.cadence));
  d.batch = static_cast<int>(t.get_int("diagnostics.batch", d.batch));
  d.eta = t.get_double("diagnostics.eta", d.eta);
  d.probes = static_cast<int>(t.get_int("diagnostics.probes", d.probes));
  d.radius = t.get_double("diagnostics.radius", d.radius);
  if (t.has("diagnostics.checks")) d.checks = t.get_string_array("diagnostics.checks");

  c.prior_file = t.get_string("prior.file", "");
  if (c.prior_file.empty()) throw ConfigError("config needs prior.file");
  std::filesystem::path pf(c.prior_file);
  if (pf.is_relative())
    pf = std::filesystem::path(config_path).parent_path() / pf;
  if (!std::filesystem::exists(pf))
    throw ConfigError("prior file does not exist: " + pf.string());
  c.prior_file = pf.string();
  try {
    c.prior = load_prior_json(c.prior_file);
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("bad prior file: ") + ex.what());
  }

  c.finalize();
  return c;
}

void RunConfig::finalize() {
  meta.seed = seed;
  meta.workers = workers;
  meta.types_per_iter =
      std::min<int>(meta.types_per_iter, static_cast<int>(prior.size()));
  if (meta.types_per_iter < 1) meta.types_per_iter = 1;
  try {
    env.validate();
    meta.validate();
    prior.validate();
  } catch (const std::exception& ex) {
    throw ConfigError(ex.what());
  }
  if (policy.hidden < 1) throw ConfigError("policy.hidden must be >= 1");
  // Types must fit into the client pool.
  for (const auto& [type, p] : prior.entries)
    if (type.malicious_count() > env.n_clients)
      throw ConfigError("type " + std::to_string(type.id) +
                        " controls more clients than env.n_clients");
}

std::string RunConfig::resolved_toml() const {
  std::ostringstream o;
  o.precision(17);
  o << "seed = " << seed << "\n";
  o << "workers = " << workers << "\n";
  o << "algo = \"" << algo << "\"\n\n";
  o << "[env]\n";
  o << "n_clients = " << env.n_clients << "\n";
  o << "subsample = " << env.subsample << "\n";
  o << "local_lr = " << env.local_lr << "\n";
  o << "local_steps = " << env.local_steps << "\n";
  o << "horizon = " << env.horizon << "\n";
  o << "discount = " << env.discount << "\n";
  o << "aggregator = \"" << env.aggregator << "\"\n";
  o << "krum_f = " << env.krum_f << "\n";
  o << "eval_per_class = " << env.eval_per_class << "\n";
  o << "root_samples = " << env.root_samples << "\n";
  o << "reward_sign_mode = \""
    << (env.reward_sign_mode == RewardSignMode::consistent ? "consistent" : "literal")
    << "\"\n\n";
  o << "[env.dataset]\n";
  if (env.uses_idx()) {
    o << "idx_images = \"" << env.idx_images << "\"\n";
    o << "idx_labels = \"" << env.idx_labels << "\"\n";
    o << "idx_max = " << env.idx_max_samples << "\n";
    o << "d = " << env.data.d << "\n\n";
  } else {
    o << "d = " << env.data.d << "\n";
    o << "classes = " << env.data.classes << "\n";
    o << "per_class = " << env.data.per_class << "\n";
    o << "spread = " << env.data.cluster_spread << "\n";
    o << "heterogeneity = " << env.data.q_effective() << "\n\n";
  }
  o << "[env.attack]\n";
  o << "ipm_eps = " << env.attack.ipm_eps << "\n";
  o << "lmp_lambda0 = " << env.attack.lmp_lambda0 << "\n";
  o << "lmp_halvings = " << env.attack.lmp_max_halvings << "\n";
  o << "eb_boost = " << env.attack.eb_boost << "\n";
  o << "bfl_boost = " << env.attack.bfl_boost << "\n";
  o << "poison_fraction = " << env.attack.poison_fraction << "\n";
  o << "boost_cap = " << env.attack.boost_cap << "\n";
  o << "noise_cap = " << env.attack.noise_cap << "\n";
  o << "see_benign_mean = " << (env.attack.see_benign_mean ? "true" : "false") << "\n\n";
  o << "[env.defense_box]\n";
  o << "trim_lo = " << env.defense_box.trim_lo << "\n";
  o << "trim_hi = " << env.defense_box.trim_hi << "\n";
  o << "norm_lo = " << env.defense_box.norm_lo << "\n";
  o << "norm_hi = " << env.defense_box.norm_hi << "\n";
  o << "noise_lo = " << env.defense_box.noise_lo << "\n";
  o << "noise_hi = " << env.defense_box.noise_hi << "\n";
  o << "clip_lo = " << env.defense_box.clip_lo << "\n";
  o << "clip_hi = " << env.defense_box.clip_hi << "\n";
  if (env.fixed_defense) {
    o << "\n[env.defense]\n";
    o << "fixed = [" << env.fixed_defense->trim_frac << ", " << env.fixed_defense->norm_bound
      << ", " << env.fixed_defense->noise_std << ", " << env.fixed_defense->post_clip
      << "]\n";
  }
  o << "\n[policy]\n";
  o << "hidden = " << policy.hidden << "\n";
  o << "log_std_init = " << policy.log_std_init << "\n\n";
  o << "[meta]\n";
  o << "K = " << meta.types_per_iter << "\n";
  o << "l = " << meta.adapt_steps << "\n";
  o << "n_outer = " << meta.n_outer << "\n";
  o << "n_inner = " << meta.n_inner << "\n";
  o << "n_batch = " << meta.n_batch << "\n";
  o << "eta = " << meta.eta << "\n";
  o << "kappa = " << meta.kappa << "\n";
  o << "kappa_attacker = " << meta.kappa_attacker << "\n";
  o << "kappa_defender = " << meta.kappa_defender << "\n";
  o << "mode = \"" << (meta.mode == MetaMode::reptile ? "reptile" : "full") << "\"\n";
  o << "baseline = \""
    << (meta.baseline == Baseline::mean_return ? "mean_return" : "none") << "\"\n";
  o << "checkpoint_interval = " << meta.checkpoint_interval << "\n\n";
  o << "[diagnostics]\n";
  o << "cadence = " << diag.cadence << "\n";
  o << "batch = " << diag.batch << "\n";
  o << "eta = " << diag.eta << "\n";
  o << "probes = " << diag.probes << "\n";
  o << "radius = " << diag.radius << "\n";
  o << "checks = [";
  for (std::size_t i = 0; i < diag.checks.size(); ++i)
    o << (i ? ", " : "") << "\"" << diag.checks[i] << "\"";
  o << "]\n\n";
  o << "[prior]\n";
  o << "file = \"" << prior_file << "\"\n";
  return o.str();
}

}  // namespace metastack
