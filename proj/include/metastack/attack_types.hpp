#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "metastack/rng.hpp"

namespace metastack {

enum class AttackCategory { untargeted, backdoor, mixed };
enum class AttackBehavior { rule, adaptive };

std::string to_string(AttackCategory c);
AttackCategory category_from_string(const std::string& s);

// Known rule ids for non-adaptive attacks.
inline constexpr const char* kRuleIpm = "ipm";
inline constexpr const char* kRuleLmp = "lmp";
inline constexpr const char* kRuleEb = "eb";
inline constexpr const char* kRuleBflStatic = "bfl_static";

// One hidden attacker type xi: how many clients it controls, whether it
// follows a fixed rule or an adaptive policy, and its backdoor parameters.
struct AttackTypeSpec {
  int id = 0;
  AttackCategory category = AttackCategory::untargeted;
  int m1 = 0;  // backdoor clients
  int m2 = 0;  // untargeted-poisoning clients
  AttackBehavior behavior = AttackBehavior::rule;
  std::string rule_id;  // set when behavior == rule
  std::optional<std::vector<double>> trigger;
  std::optional<int> target_label;
  double lambda_mix = 0.5;  // backdoor tradeoff lambda in [0,1]

  int malicious_count() const { return m1 + m2; }
  double rho() const;  // m1/(m1+m2); throws if m1+m2 == 0
  bool is_adaptive() const { return behavior == AttackBehavior::adaptive; }

  void validate() const;  // throws std::invalid_argument
};

// Q: the probability distribution over attacker types.
struct TypePrior {
  std::vector<std::pair<AttackTypeSpec, double>> entries;

  void validate() const;
  const AttackTypeSpec& by_id(int id) const;
  bool all_rule_based() const;
  bool has_adaptive() const;
  std::size_t size() const { return entries.size(); }
};

AttackTypeSpec sample_type(const TypePrior& prior, RngStream& rng);

// JSON serialization: {"types":[{"id":0,"category":"untargeted",...,"prob":0.5},...]}
TypePrior prior_from_json_string(const std::string& text);
std::string prior_to_json_string(const TypePrior& prior);
TypePrior load_prior_json(const std::string& path);
void save_prior_json(const TypePrior& prior, const std::string& path);

std::vector<double> load_trigger_json(const std::string& path);

}  // namespace metastack
