#pragma once

#include <array>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "lfmc/common.hpp"

namespace lfmc::sim {

inline constexpr int kNumJoints = 4;
inline constexpr int kNumDof = 7;

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Matrix<double, kNumJoints, 1>;
using Vec7 = Eigen::Matrix<double, kNumDof, 1>;
using Mat7 = Eigen::Matrix<double, kNumDof, kNumDof>;

// Generalized coordinate layout.
enum Coord : int { kX = 0, kZ = 1, kPitch = 2, kFrontHip = 3, kFrontKnee = 4, kHindHip = 5, kHindKnee = 6 };

enum class Foot : int { Front = 0, Hind = 1 };

/// Planar quadruped analog: floating base (x, z, pitch) with a front and a
/// hind leg, each a hip + knee pair. Joint angles are measured from the
/// base's downward axis, positive rotating the foot forward.
struct RobotModel {
  double base_mass = 14.0;
  double thigh_mass = 2.0;
  double shank_mass = 1.0;
  double base_length = 0.6;
  double thigh_length = 0.25;
  double shank_length = 0.25;
  double base_inertia = 14.0 * 0.6 * 0.6 / 12.0;
  double thigh_inertia = 2.0 * 0.25 * 0.25 / 12.0;
  double shank_inertia = 1.0 * 0.25 * 0.25 / 12.0;
  double joint_armature = 0.01;  // reflected rotor inertia per joint
  double torque_limit = 40.0;
  double hip_min = -1.8, hip_max = 1.8;
  double knee_min = -2.8, knee_max = 0.2;
  double foot_radius = 0.02;
  double gravity = 9.81;
  // contact
  double contact_stiffness = 1e4;
  double contact_damping = 200.0;
  double friction = 0.7;
  double tangential_stiffness = 1e4;  // stick spring toward the contact anchor
  double tangential_damping = 100.0;
  // nominal stand
  double nominal_hip = 0.5;
  double nominal_knee = -1.0;

  double total_mass() const { return base_mass + 2.0 * (thigh_mass + shank_mass); }

  Vec4 nominal_joints() const { return Vec4(nominal_hip, nominal_knee, nominal_hip, nominal_knee); }

  /// Base height at which the nominal pose puts both feet exactly at the contact threshold on flat ground.
  double nominal_height() const {
    return thigh_length * std::cos(nominal_hip) + shank_length * std::cos(nominal_hip + nominal_knee) + foot_radius;
  }

  double joint_min(int j) const { return (j % 2 == 0) ? hip_min : knee_min; }
  double joint_max(int j) const { return (j % 2 == 0) ? hip_max : knee_max; }

  void validate() const {
    for (double v : {base_mass, thigh_mass, shank_mass, base_length, thigh_length, shank_length, base_inertia,
                     thigh_inertia, shank_inertia, foot_radius}) {
      if (!(v > 0.0)) throw ConfigError("robot model: masses, lengths, inertias and foot radius must be positive");
    }
    if (!(torque_limit > 0.0)) throw ConfigError("robot model: torque limit must be positive");
    if (!(hip_max > hip_min) || !(knee_max > knee_min)) throw ConfigError("robot model: empty joint limit interval");
    if (joint_armature < 0.0 || contact_stiffness < 0.0 || contact_damping < 0.0 || friction < 0.0 ||
        tangential_stiffness < 0.0 || tangential_damping < 0.0 || gravity < 0.0) {
      throw ConfigError("robot model: contact, armature and gravity parameters must be non-negative");
    }
  }
};

/// Stick-slip bookkeeping for one foot: where the tangential spring is anchored.
struct FootContact {
  bool active = false;
  double anchor_x = 0.0;

  bool operator==(const FootContact&) const = default;
};

struct RobotState {
  Vec7 q = Vec7::Zero();
  Vec7 v = Vec7::Zero();
  double time = 0.0;
  std::array<FootContact, 2> feet{};

  double pitch() const { return q[kPitch]; }
  Vec4 joint_pos() const { return q.tail<kNumJoints>(); }
  Vec4 joint_vel() const { return v.tail<kNumJoints>(); }
  bool finite() const { return q.allFinite() && v.allFinite() && std::isfinite(time); }

  bool operator==(const RobotState& o) const { return q == o.q && v == o.v && time == o.time && feet == o.feet; }
};

/// Nominal standing state with feet touching flat ground at `ground` height.
inline RobotState standing_state(const RobotModel& m, double ground = 0.0) {
  RobotState s;
  s.q[kZ] = ground + m.nominal_height();
  s.q.tail<kNumJoints>() = m.nominal_joints();
  return s;
}

}  // namespace lfmc::sim
