#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "lfmc/common.hpp"
#include "lfmc/sim/dynamics.hpp"

namespace lfmc::env {

enum class TerminationReason { None, Orientation, BaseContact, KneeContact, JointLimit, TimeLimit, Fault };

inline std::string to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::None: return "none";
    case TerminationReason::Orientation: return "orientation";
    case TerminationReason::BaseContact: return "base_contact";
    case TerminationReason::KneeContact: return "knee_contact";
    case TerminationReason::JointLimit: return "joint_limit";
    case TerminationReason::TimeLimit: return "time_limit";
    case TerminationReason::Fault: return "fault";
  }
  return "none";
}

/// An early termination is any invalid-state reason (time limits are not).
inline bool is_failure(TerminationReason r) { return r != TerminationReason::None && r != TerminationReason::TimeLimit; }

struct TerminationConfig {
  double max_pitch = 0.4 * kPi;
  double base_clearance = 0.05;  // half-thickness of the base body
};

/// Invalid-state check: base orientation, base/knee ground collision,
/// and joint-limit violation (standing in for self-collision).
inline std::pair<bool, TerminationReason> terminate(const sim::RobotState& s, const sim::RobotModel& m,
                                                    const sim::Terrain& terrain, const TerminationConfig& cfg = {}) {
  if (std::abs(s.pitch()) > cfg.max_pitch) return {true, TerminationReason::Orientation};
  const sim::Kinematics k = sim::kinematics(m, s.q, s.v);
  auto clearance = [&](const sim::Vec2& p) { return p.y() - terrain.height(p.x()); };
  if (clearance(k.base.pos) <= cfg.base_clearance || clearance(k.legs[0].hip.pos) <= cfg.base_clearance ||
      clearance(k.legs[1].hip.pos) <= cfg.base_clearance) {
    return {true, TerminationReason::BaseContact};
  }
  for (const auto& leg : k.legs) {
    if (clearance(leg.knee.pos) <= 0.0) return {true, TerminationReason::KneeContact};
  }
  for (int j = 0; j < sim::kNumJoints; ++j) {
    const double q = s.q[sim::kFrontHip + j];
    if (q < m.joint_min(j) || q > m.joint_max(j)) return {true, TerminationReason::JointLimit};
  }
  return {false, TerminationReason::None};
}

}  // namespace lfmc::env
