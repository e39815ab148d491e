#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "lfmc/env/environment.hpp"
#include "lfmc/rl/policy.hpp"

namespace lfmc::eval {

/// Environment settings a checkpoint was trained for, layered over `base`.
inline env::EnvConfig env_config_for(const rl::Policy& p, env::EnvConfig base) {
  base.control_frequency = p.meta.control_frequency;
  base.observation.mode = p.meta.mode;
  base.observation.history = p.meta.history;
  if (base.observation.dim() != p.obs_dim()) {
    throw ConfigError("policy expects " + std::to_string(p.obs_dim()) + " observations, environment provides " +
                      std::to_string(base.observation.dim()));
  }
  return base;
}

struct RolloutOptions {
  std::uint64_t seed = 0;
  double horizon = 10.0;  // s
  std::optional<double> command;  // fixed heading velocity; sampled from the env range otherwise
  bool randomize_initial_state = true;
  std::optional<sim::RobotModel> model;
  std::optional<actuation::ActuationConfig> actuation;
  env::Push push;
  std::function<void(const env::SubstepRecord&)> recorder;
  std::function<void(const Eigen::VectorXd& obs)> on_observation;  // before each control step
  std::function<void(const sim::RobotState&)> on_reset;             // initial state
};

struct RolloutResult {
  bool failed = false;
  env::TerminationReason reason = env::TerminationReason::None;
  int steps = 0;
  double seconds = 0.0;
  double total_reward = 0.0;
  double tracking = 0.0;  // summed tracking term
  double command = 0.0;
};

/// Deterministic (mean-action) rollout of a policy.
inline RolloutResult rollout(const rl::Policy& policy, const env::EnvConfig& cfg, const RolloutOptions& opt) {
  env::EnvConfig c = cfg;
  c.episode_length = opt.horizon;
  env::Environment e(c);
  if (opt.model || opt.actuation) e.set_dynamics(opt.model.value_or(c.model), opt.actuation.value_or(c.actuation));
  e.set_push(opt.push);
  if (opt.recorder) e.set_recorder(opt.recorder);
  env::EpisodeOptions eo{.seed = opt.seed,
                         .fixed_command = opt.command.has_value(),
                         .command = opt.command.value_or(0.0),
                         .randomize_initial_state = opt.randomize_initial_state};
  Eigen::VectorXd obs = e.reset(eo);
  if (opt.on_reset) opt.on_reset(e.state());
  RolloutResult r;
  r.command = e.command();
  for (;;) {
    if (opt.on_observation) opt.on_observation(obs);
    const Eigen::VectorXd a = policy.act(obs);
    const env::StepResult s = e.step(e.desired_from_action(a));
    ++r.steps;
    r.total_reward += s.reward;
    r.tracking += s.terms.tracking;
    obs = s.observation;
    if (s.done) {
      r.failed = s.terminal;
      r.reason = s.reason;
      break;
    }
  }
  r.seconds = r.steps / c.control_frequency;
  return r;
}

}  // namespace lfmc::eval
