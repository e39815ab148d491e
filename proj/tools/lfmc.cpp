// lfmc: training, evaluation and analysis front end.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lfmc/app/commands.hpp"

using namespace lfmc;
using namespace lfmc::app;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> workers;
  bool force = false;
};

void add_common(CLI::App* sub, Common& c, bool seed = true) {
  sub->add_option("-c,--config", c.config, "config file (INI)")->check(CLI::ExistingFile);
  if (seed) sub->add_option("-s,--seed", c.seed, "root seed override");
  sub->add_option("-o,--out", c.out, "output directory (default: $LFMC_OUTPUT_ROOT/<subcommand>-s<seed>)");
  sub->add_option("-w,--workers", c.workers, "worker threads (1 = deterministic)")->check(CLI::PositiveNumber);
  sub->add_flag("--force", c.force, "overwrite an existing output directory");
}

Config load(const Common& c, bool seed_is_training) {
  Config cfg = c.config.empty() ? Config{} : load_config(c.config);
  if (c.seed) {
    if (seed_is_training) {
      cfg.train.seed = *c.seed;
    }
    cfg.eval.seed = *c.seed;
  }
  if (c.workers) cfg.train.workers = *c.workers;
  cfg.validate();
  return cfg;
}

RunContext context(const Common& c, const std::string& name, std::uint64_t seed, const std::string& cmdline) {
  RunContext ctx;
  ctx.out_dir = c.out.empty() ? output_root() / (name + "-s" + std::to_string(seed)) : fs::path(c.out);
  ctx.force = c.force;
  ctx.command_line = cmdline;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-control-frequency study: train, evaluate and analyse planar quadruped policies"};
  app.set_version_flag("--version", std::string(LFMC_VERSION));
  app.require_subcommand(1);

  std::string cmdline;
  for (int i = 0; i < argc; ++i) cmdline += (i ? " " : "") + std::string(argv[i]);

  Common common;
  std::string checkpoint;
  std::vector<std::string> checkpoints;
  std::vector<double> frequencies;
  std::string terrain_kind;
  std::uint64_t terrain_seed = 0;

  auto* train = app.add_subcommand("train", "train a policy with PPO");
  add_common(train, common);

  auto* ev = app.add_subcommand("eval", "success rate, latency limit and tracking report for a checkpoint");
  ev->add_option("-p,--policy", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  add_common(ev, common);

  auto* sweep = app.add_subcommand("sweep", "train and evaluate one policy per control frequency");
  sweep->add_option("-f,--frequencies", frequencies, "comma-separated control frequencies (Hz)")->delimiter(',');
  add_common(sweep, common);

  auto* gait = app.add_subcommand("gait", "stance/swing intervals of a fixed-command rollout");
  gait->add_option("-p,--policy", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  bool trajectory = false;
  gait->add_flag("--trajectory", trajectory, "also write the rollout to trajectory.csv");
  add_common(gait, common);

  auto* jac = app.add_subcommand("jacobian", "policy Jacobian saliency over a rollout");
  jac->add_option("-p,--policy", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  add_common(jac, common);

  auto* pd = app.add_subcommand("pd-study", "1-DoF PD setpoint study across gains and update rates");
  add_common(pd, common, false);

  auto* ablate = app.add_subcommand("ablate", "success-rate table over checkpoints and terrains");
  ablate->add_option("-p,--policy", checkpoints, "label=checkpoint (repeatable)");
  add_common(ablate, common);

  auto* terrain = app.add_subcommand("terrain", "export a generated heightfield as CSV");
  terrain->add_option("-k,--kind", terrain_kind, "flat, perlin (rough), stairs or bricks");
  terrain->add_option("--terrain-seed", terrain_seed, "terrain seed");
  add_common(terrain, common, false);

  auto* show = app.add_subcommand("config", "validate a config and print it with derived quantities");
  show->add_option("-c,--config", common.config, "config file (INI)")->check(CLI::ExistingFile);
  show->add_option("-s,--seed", common.seed, "root seed override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsageError;
  }

  try {
    if (show->parsed()) {
      const Config cfg = load(common, true);
      std::cout << derived_summary(cfg.train) << "\n" << config_text(cfg);
      return kOk;
    }
    if (train->parsed()) {
      const Config cfg = load(common, true);
      std::cerr << derived_summary(cfg.train);
      return cmd_train(cfg, context(common, "train", cfg.train.seed, cmdline));
    }
    if (ev->parsed()) {
      const Config cfg = load(common, false);
      return cmd_eval(checkpoint, cfg, context(common, "eval", cfg.eval.seed, cmdline));
    }
    if (sweep->parsed()) {
      Config cfg = load(common, true);
      if (!frequencies.empty()) cfg.sweep_frequencies = frequencies;
      return cmd_sweep(cfg, context(common, "sweep", cfg.train.seed, cmdline));
    }
    if (gait->parsed()) {
      const Config cfg = load(common, false);
      RunContext ctx = context(common, "gait", cfg.eval.seed, cmdline);
      ctx.trajectory = trajectory;
      return cmd_gait(checkpoint, cfg, ctx);
    }
    if (jac->parsed()) {
      const Config cfg = load(common, false);
      return cmd_jacobian(checkpoint, cfg, context(common, "jacobian", cfg.eval.seed, cmdline));
    }
    if (pd->parsed()) {
      const Config cfg = load(common, false);
      return cmd_pd_study(cfg, context(common, "pd-study", 0, cmdline));
    }
    if (ablate->parsed()) {
      const Config cfg = load(common, false);
      return cmd_ablate(checkpoints.empty() ? cfg.eval.checkpoints : checkpoints, cfg,
                        context(common, "ablate", cfg.eval.seed, cmdline));
    }
    if (terrain->parsed()) {
      Config cfg = load(common, false);
      if (!terrain_kind.empty()) cfg.train.env.terrain_kind = sim::terrain_kind_from_string(terrain_kind);
      return cmd_terrain(cfg, terrain_seed, context(common, "terrain", terrain_seed, cmdline));
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAnalysisFailed;
  }
  return kUsageError;
}
