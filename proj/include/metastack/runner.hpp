#pragma once

#include <memory>
#include <string>

#include "metastack/checkpoint.hpp"
#include "metastack/config.hpp"
#include "metastack/diagnostics.hpp"
#include "metastack/game.hpp"

namespace metastack {

std::unique_ptr<FlGame> build_game(const RunConfig& cfg);

// Resolves --attack: "none", a rule id (ipm|lmp|eb|bfl_static), or "type:<id>"
// referencing the prior. Returns nullopt for "none"; throws ConfigError with
// the known ids for anything else.
std::optional<AttackTypeSpec> resolve_attack(const RunConfig& cfg, const std::string& id);

// Subcommand bodies. They throw ConfigError / NumericalError; the CLI maps
// those to exit codes 2 and 3.
void run_pretrain(const RunConfig& cfg);
void run_adapt(const RunConfig& cfg, const std::string& checkpoint_path,
               const std::string& attack_id, int steps);

struct EvalSummary {
  int episodes = 0;
  double return_mean = 0.0;
  double return_se = 0.0;
  double clean_loss_mean = 0.0;
  double clean_acc_mean = 0.0;
  double backdoor_acc_mean = 0.0;
  bool has_backdoor = false;
};
EvalSummary run_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                     const std::string& attack_id, int episodes);

// Returns the number of hard-assertion failures (gradcheck, untargeted-SC).
int run_diagnose(const RunConfig& cfg, const std::string& check,
                 const std::string& checkpoint_path);

}  // namespace metastack
