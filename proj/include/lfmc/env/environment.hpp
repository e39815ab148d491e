#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lfmc/actuation.hpp"
#include "lfmc/common.hpp"
#include "lfmc/env/observation.hpp"
#include "lfmc/env/randomization.hpp"
#include "lfmc/env/reward.hpp"
#include "lfmc/env/termination.hpp"
#include "lfmc/sim/dynamics.hpp"
#include "lfmc/sim/terrain.hpp"

namespace lfmc::env {

/// Uniform draw of the heading-velocity command.
inline double sample_command(Rng& rng, const Range& range) {
  if (range.hi < range.lo) throw ConfigError("command range upper bound below lower bound");
  return uniform(rng, range.lo, range.hi);
}

/// Per-substep reward context entries that depend on the current state.
inline void update_reward_context(RewardContext& ctx, const sim::RobotModel& m, const sim::Terrain& terrain,
                                  const sim::RobotState& s, double dt) {
  ctx.ground_height = terrain.height(s.q[sim::kX]);
  const sim::Kinematics k = sim::kinematics(m, s.q, s.v);
  ctx.foot_slip = 0.0;
  for (std::size_t i = 0; i < k.legs.size(); ++i) {
    const auto& leg = k.legs[i];
    const sim::Vec2& p = leg.foot.pos;
    ctx.touchdown_air[i] = 0.0;
    if (p.y() - terrain.height(p.x()) <= m.foot_radius) {
      const double vx = leg.foot.velocity(s.v).x();
      ctx.foot_slip += vx * vx;
      ctx.touchdown_air[i] = ctx.air[i];
      ctx.air[i] = 0.0;
    } else {
      ctx.air[i] += dt;
    }
  }
}

/// One simulation step of a recorded trajectory.
struct RecordedSubstep {
  sim::RobotState state;
  sim::Vec4 torques = sim::Vec4::Zero();
  double command = 0.0;
};

/// Re-score a recorded trajectory, booking rewards per control step of
/// `control_frequency`. Smoothness is left out since it depends on how the
/// actions were produced, not on the trajectory itself.
inline double score_trajectory(const std::vector<RecordedSubstep>& traj, RewardConfig cfg, const sim::RobotModel& m,
                               const sim::Terrain& terrain, double control_frequency, double sim_step) {
  const int per = exact_ticks(1.0 / control_frequency, sim_step, "control period");
  if (traj.size() % static_cast<std::size_t>(per) != 0) {
    throw ConfigError("trajectory length is not a whole number of control steps");
  }
  cfg.smoothness_override = 0.0;
  RewardContext ctx;
  ctx.control_frequency = control_frequency;
  ctx.nominal_joints = m.nominal_joints();
  const sim::Vec4 none = sim::Vec4::Zero();
  double total = 0.0;
  for (std::size_t k = 0; k < traj.size(); k += static_cast<std::size_t>(per)) {
    double step = 0.0;
    for (std::size_t i = k; i < k + static_cast<std::size_t>(per); ++i) {
      update_reward_context(ctx, m, terrain, traj[i].state, sim_step);
      step += reward_terms(cfg, ctx, traj[i].state, traj[i].torques, none, none, traj[i].command, sim_step).total();
    }
    total += step;
  }
  return total;
}

struct EnvConfig {
  double control_frequency = 10.0;  // f_m
  double episode_length = 1.0;      // s
  ObservationSpec observation;
  RewardConfig reward;
  TerminationConfig termination;
  sim::RobotModel model;
  actuation::ActuationConfig actuation;
  sim::TerrainKind terrain_kind = sim::TerrainKind::Flat;
  sim::TerrainParams terrain_params;
  Range command{-1.0, 1.5};
  double command_resample_interval = 0.0;  // s; 0 = once per episode
  double init_joint_noise = 0.1;
  double init_height_noise = 0.05;
  double action_scale = 0.5;  // q* = nominal + scale * a

  double sim_step() const { return actuation.step(); }
  int substeps() const { return exact_ticks(1.0 / control_frequency, sim_step(), "control period"); }
  int history_stride() const { return exact_ticks(1.0 / observation.history_frequency, sim_step(), "history period"); }
  int episode_steps() const { return static_cast<int>(std::lround(episode_length * control_frequency)); }

  void validate() const {
    model.validate();
    actuation.validate();
    actuation.validate_motion_frequency(control_frequency);
    observation.validate();
    reward.validate();
    if (!(episode_length > 0.0)) throw ConfigError("env: episode length must be positive");
    if (command.hi < command.lo) throw ConfigError("env: command range upper bound below lower bound");
    if (init_joint_noise < 0.0 || init_height_noise < 0.0) throw ConfigError("env: initial noise must be non-negative");
    if (command_resample_interval < 0.0) throw ConfigError("env: command resample interval must be non-negative");
    (void)substeps();
    (void)history_stride();
  }
};

/// Options for a single episode; everything else comes from EnvConfig.
struct EpisodeOptions {
  std::uint64_t seed = 0;
  bool fixed_command = false;
  double command = 0.0;
  bool randomize_initial_state = true;
};

/// Per-substep record for trajectory dumps and gait extraction.
struct SubstepRecord {
  double time;
  const sim::RobotState* state;
  sim::Vec4 torques;
  sim::Vec4 action;
  double reward;
  std::array<bool, 2> contacts;
  double command;
};

struct StepResult {
  Eigen::VectorXd observation;
  double reward = 0.0;
  bool done = false;       // episode over (failure or time limit)
  bool terminal = false;   // done due to an invalid state (no bootstrap)
  TerminationReason reason = TerminationReason::None;
  RewardTerms terms;
};

/// External base push applied over one simulation substep.
struct Push {
  double time = -1.0;
  double impulse_x = 0.0;  // N·s
  double impulse_z = 0.0;
};

class Environment {
 public:
  explicit Environment(EnvConfig cfg)
      : cfg_(std::move(cfg)),
        model_(cfg_.model),
        act_(cfg_.actuation),
        latency_(cfg_.model.nominal_joints(), cfg_.sim_step()),
        history_(cfg_.observation.history) {
    cfg_.validate();
  }

  const EnvConfig& config() const { return cfg_; }
  const sim::RobotModel& model() const { return model_; }
  const actuation::ActuationConfig& actuation() const { return act_; }
  const sim::RobotState& state() const { return state_; }
  const sim::Terrain& terrain() const { return terrain_; }
  double command() const { return command_; }
  int step_count() const { return steps_; }
  int obs_dim() const { return cfg_.observation.dim(); }
  const Eigen::VectorXd& observation() const { return obs_; }

  /// Override the physical/actuation parameters used from the next reset on.
  void set_dynamics(const sim::RobotModel& m, const actuation::ActuationConfig& a) {
    m.validate();
    a.validate();
    pending_model_ = m;
    pending_act_ = a;
    has_pending_ = true;
  }

  void set_terrain(sim::Terrain t) {
    fixed_terrain_ = std::move(t);
    has_fixed_terrain_ = true;
    flat_ready_ = false;
  }

  void set_push(const Push& p) { push_ = p; }
  void set_recorder(std::function<void(const SubstepRecord&)> rec) { recorder_ = std::move(rec); }

  /// Start a new episode; returns the initial observation.
  const Eigen::VectorXd& reset(const EpisodeOptions& opt) {
    if (has_pending_) {
      model_ = pending_model_;
      act_ = pending_act_;
    }
    rng_ = Rng(derive_seed(opt.seed, "env/episode"));
    if (has_fixed_terrain_) {
      terrain_ = fixed_terrain_;
    } else if (cfg_.terrain_kind == sim::TerrainKind::Flat) {
      if (!flat_ready_) {
        terrain_ = sim::generate_terrain(sim::TerrainKind::Flat, 0, cfg_.terrain_params);
        flat_ready_ = true;
      }
    } else {
      terrain_ = sim::generate_terrain(cfg_.terrain_kind, derive_seed(opt.seed, "env/terrain"), cfg_.terrain_params);
    }

    command_ = opt.fixed_command ? opt.command : sample_command(rng_, cfg_.command);
    fixed_command_ = opt.fixed_command;

    state_ = sim::RobotState{};
    const sim::Vec4 nominal = model_.nominal_joints();
    state_.q.tail<sim::kNumJoints>() = nominal;
    if (opt.randomize_initial_state) {
      for (int j = 0; j < sim::kNumJoints; ++j) state_.q[sim::kFrontHip + j] += uniform(rng_, -cfg_.init_joint_noise, cfg_.init_joint_noise);
    }
    // Place the lowest foot exactly at the contact threshold.
    state_.q[sim::kZ] = 0.0;
    const sim::Kinematics k = sim::kinematics(model_, state_.q, state_.v);
    double lift = -1e9;
    for (const auto& leg : k.legs) {
      lift = std::max(lift, terrain_.height(leg.foot.pos.x()) + model_.foot_radius - leg.foot.pos.y());
    }
    state_.q[sim::kZ] = lift + (opt.randomize_initial_state ? uniform(rng_, 0.0, cfg_.init_height_noise) : 0.0);

    latency_.reset(nominal);
    lag_state_.setZero();
    history_ = HistoryBuffer(cfg_.observation.history);
    sim_ticks_ = 0;
    steps_ = 0;
    action_ = nominal;
    prev_action_ = nominal;
    history_.push(state_.joint_pos(), state_.joint_vel());
    reward_ctx_ = RewardContext{};
    reward_ctx_.control_frequency = cfg_.control_frequency;
    reward_ctx_.nominal_joints = nominal;
    obs_ = observe(cfg_.observation, state_, history_, command_, action_, terrain_);
    return obs_;
  }

  /// Map a normalized policy action to desired joint positions.
  sim::Vec4 desired_from_action(const sim::Vec4& a) const { return model_.nominal_joints() + cfg_.action_scale * a; }

  /// Apply desired joint positions for one control period.
  StepResult step(const sim::Vec4& q_desired) {
    if (!q_desired.allFinite()) throw EnvironmentFault("env_step: non-finite action");
    prev_action_ = action_;
    action_ = q_desired;

    StepResult out;
    const int substeps = cfg_.substeps();
    const int hist_stride = cfg_.history_stride();
    const double dt = cfg_.sim_step();
    const int resample_ticks =
        cfg_.command_resample_interval > 0.0 ? std::max(1, static_cast<int>(std::lround(cfg_.command_resample_interval / dt))) : 0;

    for (int k = 0; k < substeps; ++k) {
      const double now = static_cast<double>(sim_ticks_) * dt;
      const sim::Vec4 applied = latency_.delayed_setpoint(action_, now, act_.latency);
      sim::Vec4 tau = actuation::pd_torque(act_, applied, state_.joint_pos(), state_.joint_vel());
      if (act_.lag > 0.0) tau = actuation::actuator_lag(tau, lag_state_, dt, act_.lag);

      sim::Vec7 external = sim::Vec7::Zero();
      if (push_.time >= 0.0 && std::llround(push_.time / dt) == sim_ticks_) {
        external[sim::kX] = push_.impulse_x / dt;
        external[sim::kZ] = push_.impulse_z / dt;
      }
      try {
        state_ = sim::dynamics_step(model_, state_, tau, terrain_, dt, external);
      } catch (const IntegrationError&) {
        out.done = out.terminal = true;
        out.reason = TerminationReason::Fault;
        break;
      }
      state_.time = static_cast<double>(sim_ticks_ + 1) * dt;
      ++sim_ticks_;

      update_reward_context(reward_ctx_, model_, terrain_, state_, dt);
      const RewardTerms r = reward_terms(cfg_.reward, reward_ctx_, state_, tau, action_, prev_action_, command_, dt);
      out.terms += r;
      out.reward += r.total();

      if (sim_ticks_ % hist_stride == 0) history_.push(state_.joint_pos(), state_.joint_vel());
      if (resample_ticks > 0 && !fixed_command_ && sim_ticks_ % resample_ticks == 0) command_ = sample_command(rng_, cfg_.command);

      if (recorder_) {
        recorder_(SubstepRecord{state_.time, &state_, tau, action_, r.total(), sim::contact_flags(model_, state_, terrain_), command_});
      }

      const auto [failed, why] = terminate(state_, model_, terrain_, cfg_.termination);
      if (failed) {
        out.done = out.terminal = true;
        out.reason = why;
        break;
      }
    }
    ++steps_;
    if (out.terminal) {
      out.reward += cfg_.reward.termination;
    } else if (steps_ >= episode_steps_limit()) {
      out.done = true;
      out.reason = TerminationReason::TimeLimit;
    }
    obs_ = observe(cfg_.observation, state_, history_, command_, action_, terrain_);
    out.observation = obs_;
    return out;
  }

  /// Episode horizon in control steps; overridable for evaluation rollouts.
  int episode_steps_limit() const { return horizon_override_ > 0 ? horizon_override_ : cfg_.episode_steps(); }
  void set_horizon(double seconds) { horizon_override_ = static_cast<int>(std::lround(seconds * cfg_.control_frequency)); }

 private:
  EnvConfig cfg_;
  sim::RobotModel model_;
  actuation::ActuationConfig act_;
  sim::RobotModel pending_model_;
  actuation::ActuationConfig pending_act_;
  bool has_pending_ = false;
  sim::Terrain terrain_;
  sim::Terrain fixed_terrain_;
  bool has_fixed_terrain_ = false;
  bool flat_ready_ = false;
  sim::RobotState state_;
  actuation::LatencyBuffer latency_;
  sim::Vec4 lag_state_ = sim::Vec4::Zero();
  HistoryBuffer history_;
  Rng rng_;
  double command_ = 0.0;
  bool fixed_command_ = false;
  sim::Vec4 action_ = sim::Vec4::Zero();
  sim::Vec4 prev_action_ = sim::Vec4::Zero();
  RewardContext reward_ctx_;
  Eigen::VectorXd obs_;
  std::int64_t sim_ticks_ = 0;
  int steps_ = 0;
  int horizon_override_ = 0;
  Push push_;
  std::function<void(const SubstepRecord&)> recorder_;
};

}  // namespace lfmc::env
