#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "metastack/runner.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::int64_t seed = -1;
  int workers = 0;
};

metastack::RunConfig load_run_config(const CommonArgs& args) {
  metastack::RunConfig cfg = metastack::RunConfig::load(args.config);
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  if (args.workers >= 1) cfg.workers = args.workers;
  cfg.out_dir = args.out;
  cfg.finalize();
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "run configuration file")->required();
  cmd->add_option("--out", args.out, "output directory")->required();
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--workers", args.workers,
                  "rollout worker threads (default: METASTACK_WORKERS or 1)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metastack: meta-Stackelberg defense trainer for adversarial FL"};
  app.require_subcommand(1);

  CommonArgs pretrain_args;
  std::string pretrain_algo;
  CLI::App* pretrain = app.add_subcommand("pretrain", "train a defense policy");
  add_common(pretrain, pretrain_args);
  pretrain->add_option("--algo", pretrain_algo, "meta-sl | meta-rl | bse");

  CommonArgs adapt_args;
  std::string adapt_checkpoint, adapt_attack = "none";
  int adapt_steps = 10;
  CLI::App* adapt = app.add_subcommand("adapt", "online adaptation from a checkpoint");
  add_common(adapt, adapt_args);
  adapt->add_option("--checkpoint", adapt_checkpoint, "checkpoint to adapt from");
  adapt->add_option("--attack", adapt_attack, "live attack id");
  adapt->add_option("--steps", adapt_steps, "adaptation steps");

  CommonArgs eval_args;
  std::string eval_checkpoint, eval_attack = "none";
  int eval_episodes = 10;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd, eval_args);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint to evaluate");
  eval_cmd->add_option("--attack", eval_attack, "attack id");
  eval_cmd->add_option("--steps", eval_episodes, "number of evaluation episodes");

  CommonArgs diag_args;
  std::string diag_check = "all", diag_checkpoint;
  CLI::App* diagnose = app.add_subcommand("diagnose", "equilibrium and estimator checks");
  add_common(diagnose, diag_args);
  diagnose->add_option("--check", diag_check, "fose | sc | pl | lipschitz | gradcheck | all");
  diagnose->add_option("--checkpoint", diag_checkpoint, "optional checkpoint to inspect");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (pretrain->parsed()) {
      metastack::RunConfig cfg = load_run_config(pretrain_args);
      if (!pretrain_algo.empty()) cfg.algo = pretrain_algo;
      metastack::run_pretrain(cfg);
      return 0;
    }
    if (adapt->parsed()) {
      metastack::RunConfig cfg = load_run_config(adapt_args);
      if (adapt_checkpoint.empty())
        adapt_checkpoint = adapt_args.out + "/checkpoint_final.json";
      metastack::run_adapt(cfg, adapt_checkpoint, adapt_attack, adapt_steps);
      return 0;
    }
    if (eval_cmd->parsed()) {
      metastack::RunConfig cfg = load_run_config(eval_args);
      if (eval_checkpoint.empty())
        eval_checkpoint = eval_args.out + "/checkpoint_final.json";
      metastack::run_eval(cfg, eval_checkpoint, eval_attack, eval_episodes);
      return 0;
    }
    if (diagnose->parsed()) {
      metastack::RunConfig cfg = load_run_config(diag_args);
      int failures = metastack::run_diagnose(cfg, diag_check, diag_checkpoint);
      return failures == 0 ? 0 : 1;
    }
  } catch (const metastack::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const metastack::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
