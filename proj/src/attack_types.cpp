#include "metastack/attack_types.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace metastack {

using nlohmann::json;

std::string to_string(AttackCategory c) {
  switch (c) {
    case AttackCategory::untargeted: return "untargeted";
    case AttackCategory::backdoor: return "backdoor";
    case AttackCategory::mixed: return "mixed";
  }
  return "untargeted";
}

AttackCategory category_from_string(const std::string& s) {
  if (s == "untargeted") return AttackCategory::untargeted;
  if (s == "backdoor") return AttackCategory::backdoor;
  if (s == "mixed") return AttackCategory::mixed;
  throw std::invalid_argument("unknown attack category: " + s);
}

double AttackTypeSpec::rho() const {
  if (m1 + m2 == 0)
    throw std::invalid_argument("rho undefined: m1+m2 = 0 for type " + std::to_string(id));
  return static_cast<double>(m1) / static_cast<double>(m1 + m2);
}

void AttackTypeSpec::validate() const {
  if (m1 < 0 || m2 < 0)
    throw std::invalid_argument("malicious counts must be >= 0");
  if (m1 + m2 < 1)
    throw std::invalid_argument("type " + std::to_string(id) + ": m1+m2 must be >= 1");
  if (!(lambda_mix >= 0.0 && lambda_mix <= 1.0))
    throw std::invalid_argument("lambda_mix must lie in [0,1]");
  bool wants_backdoor = category == AttackCategory::backdoor || category == AttackCategory::mixed;
  if (wants_backdoor != trigger.has_value() || wants_backdoor != target_label.has_value())
    throw std::invalid_argument(
        "trigger and target_label must be present iff category is backdoor or mixed");
  if (category == AttackCategory::untargeted && m1 != 0)
    throw std::invalid_argument("untargeted type must have m1 = 0");
  if (category == AttackCategory::backdoor && (m1 < 1 || m2 != 0))
    throw std::invalid_argument("backdoor type must have m1 >= 1 and m2 = 0");
  if (category == AttackCategory::mixed && (m1 < 1 || m2 < 1))
    throw std::invalid_argument("mixed type must have m1 >= 1 and m2 >= 1");
  if (behavior == AttackBehavior::rule) {
    bool untargeted_rule = rule_id == kRuleIpm || rule_id == kRuleLmp || rule_id == kRuleEb;
    if (category == AttackCategory::untargeted && !untargeted_rule)
      throw std::invalid_argument("untargeted rule type needs rule_id in {ipm,lmp,eb}, got '" +
                                  rule_id + "'");
    if (category == AttackCategory::backdoor && rule_id != kRuleBflStatic)
      throw std::invalid_argument("backdoor rule type needs rule_id 'bfl_static'");
    if (category == AttackCategory::mixed && !untargeted_rule)
      throw std::invalid_argument("mixed rule type needs rule_id in {ipm,lmp,eb}");
  }
  if (trigger) {
    for (double v : *trigger)
      if (!std::isfinite(v)) throw std::invalid_argument("trigger must be finite");
  }
  double r = rho();
  if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("rho out of [0,1]");
}

void TypePrior::validate() const {
  if (entries.empty()) throw std::invalid_argument("type prior is empty");
  double sum = 0.0;
  std::set<int> ids;
  for (const auto& [type, p] : entries) {
    type.validate();
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("type probability out of [0,1]");
    if (!ids.insert(type.id).second)
      throw std::invalid_argument("duplicate type id " + std::to_string(type.id));
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    std::ostringstream msg;
    msg << "probabilities sum to " << sum;
    throw std::invalid_argument(msg.str());
  }
}

const AttackTypeSpec& TypePrior::by_id(int id) const {
  for (const auto& [type, p] : entries)
    if (type.id == id) return type;
  throw std::invalid_argument("unknown type id " + std::to_string(id));
}

bool TypePrior::all_rule_based() const {
  for (const auto& [type, p] : entries)
    if (type.is_adaptive()) return false;
  return true;
}

bool TypePrior::has_adaptive() const { return !all_rule_based(); }

AttackTypeSpec sample_type(const TypePrior& prior, RngStream& rng) {
  prior.validate();
  double u = rng.uniform();
  double cum = 0.0;
  for (const auto& [type, p] : prior.entries) {
    cum += p;
    if (u <= cum) return type;
  }
  return prior.entries.back().first;  // u landed in the 1e-12 slack
}

namespace {

json type_to_json(const AttackTypeSpec& t, double prob) {
  json j;
  j["id"] = t.id;
  j["category"] = to_string(t.category);
  j["m1"] = t.m1;
  j["m2"] = t.m2;
  j["behavior"] = t.behavior == AttackBehavior::adaptive ? "adaptive" : "rule";
  if (t.behavior == AttackBehavior::rule) j["rule"] = t.rule_id;
  if (t.trigger) j["trigger"] = *t.trigger;
  if (t.target_label) j["target_label"] = *t.target_label;
  j["lambda"] = t.lambda_mix;
  j["prob"] = prob;
  return j;
}

AttackTypeSpec type_from_json(const json& j) {
  AttackTypeSpec t;
  t.id = j.at("id").get<int>();
  t.category = category_from_string(j.at("category").get<std::string>());
  t.m1 = j.value("m1", 0);
  t.m2 = j.value("m2", 0);
  std::string behavior = j.value("behavior", std::string("rule"));
  t.behavior = behavior == "adaptive" ? AttackBehavior::adaptive : AttackBehavior::rule;
  if (j.contains("rule")) t.rule_id = j.at("rule").get<std::string>();
  if (j.contains("trigger")) t.trigger = j.at("trigger").get<std::vector<double>>();
  if (j.contains("trigger_file"))
    t.trigger = load_trigger_json(j.at("trigger_file").get<std::string>());
  if (j.contains("target_label")) t.target_label = j.at("target_label").get<int>();
  t.lambda_mix = j.value("lambda", 0.5);
  return t;
}

}  // namespace

TypePrior prior_from_json_string(const std::string& text) {
  json j = json::parse(text);
  TypePrior prior;
  for (const auto& tj : j.at("types")) {
    AttackTypeSpec t = type_from_json(tj);
    double p = tj.at("prob").get<double>();
    prior.entries.emplace_back(std::move(t), p);
  }
  prior.validate();
  return prior;
}

std::string prior_to_json_string(const TypePrior& prior) {
  json j;
  j["types"] = json::array();
  for (const auto& [type, p] : prior.entries) j["types"].push_back(type_to_json(type, p));
  return j.dump(2);
}

TypePrior load_prior_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open prior file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return prior_from_json_string(buf.str());
}

void save_prior_json(const TypePrior& prior, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write prior file: " + path);
  out << prior_to_json_string(prior) << "\n";
}

std::vector<double> load_trigger_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open trigger file: " + path);
  json j;
  in >> j;
  if (j.is_array()) return j.get<std::vector<double>>();
  if (j.contains("trigger")) return j.at("trigger").get<std::vector<double>>();
  throw std::invalid_argument("trigger file must hold a JSON array");
}

}  // namespace metastack
