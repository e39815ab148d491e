#pragma once

#include <array>
#include <cmath>

#include "lfmc/common.hpp"
#include "lfmc/sim/robot.hpp"

namespace lfmc::env {

using sim::Vec4;

/// Per-second reward rates. reward_step scales them by the substep length,
/// so a control step's reward is the sum over its substeps.
struct RewardConfig {
  double tracking = 1.0;
  double tracking_sharpness = 4.0;  // exp(-sharpness * e^2)
  double pitch_rate = 0.01;
  double torque = 2e-4;
  double smoothness = 0.02;
  double smoothness_reference_frequency = 10.0;  // smoothness weight scales as f_t / this
  double nominal_pose = 0.05;
  double base_height = 0.0;
  double base_height_target = 0.45;
  double foot_slip = 0.05;  // squared horizontal speed of feet in contact
  // Paid once per touchdown, not per second: weight * (min(air time, cap) - target),
  // only while the command asks for motion.
  double air_time = 0.5;
  double air_time_target = 0.0;
  double air_time_cap = 0.5;
  double air_time_min_command = 0.1;
  double termination = -10.0;
  // Per-frequency overrides; negative = derive from the defaults above.
  double smoothness_override = -1.0;
  double nominal_pose_override = -1.0;

  void validate() const {
    if (!(tracking > 0.0)) throw ConfigError("reward: tracking weight must be positive");
    if (!(tracking_sharpness > 0.0)) throw ConfigError("reward: tracking sharpness must be positive");
    if (pitch_rate < 0.0 || torque < 0.0 || foot_slip < 0.0 || air_time < 0.0 || smoothness < 0.0 || nominal_pose < 0.0 || base_height < 0.0) {
      throw ConfigError("reward: penalty weights must be non-negative");
    }
    if (air_time_target < 0.0 || air_time_cap < air_time_target) throw ConfigError("reward: need 0 <= air_time_target <= air_time_cap");
    if (!(smoothness_reference_frequency > 0.0)) throw ConfigError("reward: smoothness reference frequency must be positive");
  }

  double smoothness_weight(double control_frequency) const {
    return smoothness_override >= 0.0 ? smoothness_override
                                      : smoothness * control_frequency / smoothness_reference_frequency;
  }
  double nominal_pose_weight() const { return nominal_pose_override >= 0.0 ? nominal_pose_override : nominal_pose; }
};

/// Breakdown of one substep's reward; every term is already scaled by dt.
struct RewardTerms {
  double tracking = 0.0;
  double pitch_rate = 0.0;
  double torque = 0.0;
  double smoothness = 0.0;
  double nominal_pose = 0.0;
  double base_height = 0.0;
  double foot_slip = 0.0;
  double air_time = 0.0;

  double total() const {
    return tracking + pitch_rate + torque + smoothness + nominal_pose + base_height + foot_slip + air_time;
  }

  RewardTerms& operator+=(const RewardTerms& o) {
    tracking += o.tracking;
    pitch_rate += o.pitch_rate;
    torque += o.torque;
    smoothness += o.smoothness;
    nominal_pose += o.nominal_pose;
    base_height += o.base_height;
    foot_slip += o.foot_slip;
    air_time += o.air_time;
    return *this;
  }
};

struct RewardContext {
  double control_frequency = 10.0;
  Vec4 nominal_joints = Vec4::Zero();
  double ground_height = 0.0;  // terrain under the base, for the height term
  double foot_slip = 0.0;      // sum of squared horizontal speeds of feet in contact
  std::array<double, 2> air{};  // time since each foot left the ground
  std::array<double, 2> touchdown_air{};  // air time of feet landing this substep, else 0
};

inline RewardTerms reward_terms(const RewardConfig& cfg, const RewardContext& ctx, const sim::RobotState& s,
                                const Vec4& torques, const Vec4& action, const Vec4& prev_action, double command,
                                double dt) {
  RewardTerms r;
  const double err = command - s.v[sim::kX];
  r.tracking = dt * cfg.tracking * std::exp(-cfg.tracking_sharpness * err * err);
  r.pitch_rate = -dt * cfg.pitch_rate * s.v[sim::kPitch] * s.v[sim::kPitch];
  r.torque = -dt * cfg.torque * torques.squaredNorm();
  r.smoothness = -dt * cfg.smoothness_weight(ctx.control_frequency) * (action - prev_action).squaredNorm();
  r.nominal_pose = -dt * cfg.nominal_pose_weight() * (s.joint_pos() - ctx.nominal_joints).squaredNorm();
  const double dh = s.q[sim::kZ] - ctx.ground_height - cfg.base_height_target;
  r.base_height = -dt * cfg.base_height * dh * dh;
  r.foot_slip = -dt * cfg.foot_slip * ctx.foot_slip;
  if (cfg.air_time > 0.0 && std::abs(command) > cfg.air_time_min_command) {
    for (double a : ctx.touchdown_air) {
      if (a > 0.0) r.air_time += cfg.air_time * (std::min(a, cfg.air_time_cap) - cfg.air_time_target);
    }
  }
  return r;
}

/// Reward earned over one simulation substep of length dt.
inline double reward_step(const RewardConfig& cfg, const RewardContext& ctx, const sim::RobotState& s,
                          const Vec4& torques, const Vec4& action, const Vec4& prev_action, double command, double dt) {
  return reward_terms(cfg, ctx, s, torques, action, prev_action, command, dt).total();
}

}  // namespace lfmc::env
