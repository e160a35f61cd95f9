#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "metastack/attack_types.hpp"
#include "metastack/fl_env.hpp"
#include "metastack/meta_learn.hpp"

namespace metastack {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Minimal TOML-ish table: [section] headers, dotted keys, `key = value` with
// string/bool/int/float/array values and # comments. All keys are flattened
// to dotted form.
class TomlTable {
 public:
  static TomlTable parse_string(const std::string& text);
  static TomlTable parse_file(const std::string& path);

  bool has(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;
  std::string get_string(const std::string& key, const std::string& def) const;
  std::vector<double> get_double_array(const std::string& key) const;
  std::vector<std::string> get_string_array(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return raw_; }

 private:
  // raw token(s) per key; arrays keep their bracketed text
  std::map<std::string, std::string> raw_;
};

struct PolicyConfig {
  int hidden = 32;
  double log_std_init = -0.5;
};

struct DiagnosticsConfig {
  int cadence = 1;   // FOSE residual cadence during pretraining; 0 disables
  int batch = 16;    // diagnostic replications
  double eta = 0.01;
  int probes = 20;
  double radius = 0.1;
  std::vector<std::string> checks = {"fose"};
};

struct RunConfig {
  std::uint64_t seed = 0;
  int workers = 1;
  std::string algo = "meta-sl";  // meta-sl | meta-rl | bse
  EnvConfig env;
  MetaConfig meta;
  PolicyConfig policy;
  DiagnosticsConfig diag;
  std::string prior_file;
  TypePrior prior;
  std::string out_dir;

  // Loads defaults overlaid with the file; resolves prior.file relative to
  // the config location and loads it. Throws ConfigError on any problem.
  static RunConfig load(const std::string& config_path);

  // Fully-defaulted echo of the configuration (audit trail).
  std::string resolved_toml() const;

  void finalize();  // clamps K to |prior|, copies shared knobs, validates
};

int default_workers_from_env();

}  // namespace metastack
