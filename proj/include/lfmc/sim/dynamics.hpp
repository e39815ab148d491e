#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "lfmc/sim/robot.hpp"
#include "lfmc/sim/terrain.hpp"

namespace lfmc::sim {

using Jac2 = Eigen::Matrix<double, 2, kNumDof>;

/// Position of a body point with its Jacobian and velocity-product
/// acceleration (J̇ q̇).
struct PointKinematics {
  Vec2 pos = Vec2::Zero();
  Jac2 jac = Jac2::Zero();
  Vec2 bias = Vec2::Zero();

  Vec2 velocity(const Vec7& v) const { return jac * v; }
};

struct LegKinematics {
  PointKinematics hip, thigh_com, knee, shank_com, foot;
  double thigh_angle = 0.0;  // absolute, from world vertical-down
  double shank_angle = 0.0;
};

struct Kinematics {
  PointKinematics base;
  std::array<LegKinematics, 2> legs;  // front, hind
};

namespace detail {

inline Vec2 down_dir(double a) { return {std::sin(a), -std::cos(a)}; }
inline Vec2 down_dir_deriv(double a) { return {std::cos(a), std::sin(a)}; }

// Append a rigid segment of length `len` at absolute angle `a` (rate `rate`),
// whose angle depends on the generalized coordinates listed in `cols`.
template <std::size_t N>
inline PointKinematics extend(const PointKinematics& from, double len, double a, double rate,
                              const std::array<int, N>& cols) {
  PointKinematics p = from;
  p.pos += len * down_dir(a);
  const Vec2 d = len * down_dir_deriv(a);
  for (int c : cols) p.jac.col(c) += d;
  p.bias -= len * rate * rate * down_dir(a);
  return p;
}

}  // namespace detail

inline Kinematics kinematics(const RobotModel& m, const Vec7& q, const Vec7& v) {
  Kinematics k;
  const double pitch = q[kPitch], pitch_rate = v[kPitch];
  const Vec2 axis(std::cos(pitch), std::sin(pitch));
  const Vec2 axis_perp(-std::sin(pitch), std::cos(pitch));

  k.base.pos = Vec2(q[kX], q[kZ]);
  k.base.jac(0, kX) = 1.0;
  k.base.jac(1, kZ) = 1.0;

  for (int leg = 0; leg < 2; ++leg) {
    const double side = leg == 0 ? 1.0 : -1.0;
    const int hip = leg == 0 ? kFrontHip : kHindHip;
    const int knee = hip + 1;
    auto& L = k.legs[static_cast<std::size_t>(leg)];

    L.hip = k.base;
    const double r = side * 0.5 * m.base_length;
    L.hip.pos += r * axis;
    L.hip.jac.col(kPitch) += r * axis_perp;
    L.hip.bias -= r * pitch_rate * pitch_rate * axis;

    L.thigh_angle = pitch + q[hip];
    const double thigh_rate = pitch_rate + v[hip];
    const std::array<int, 2> thigh_cols{kPitch, hip};
    L.thigh_com = detail::extend(L.hip, 0.5 * m.thigh_length, L.thigh_angle, thigh_rate, thigh_cols);
    L.knee = detail::extend(L.hip, m.thigh_length, L.thigh_angle, thigh_rate, thigh_cols);

    L.shank_angle = L.thigh_angle + q[knee];
    const double shank_rate = thigh_rate + v[knee];
    const std::array<int, 3> shank_cols{kPitch, hip, knee};
    L.shank_com = detail::extend(L.knee, 0.5 * m.shank_length, L.shank_angle, shank_rate, shank_cols);
    L.foot = detail::extend(L.knee, m.shank_length, L.shank_angle, shank_rate, shank_cols);
  }
  return k;
}

/// Joint-space mass matrix (including rotor armature), velocity-product
/// forces and gravity forces for the articulated planar body.
struct DynamicsTerms {
  Mat7 mass = Mat7::Zero();
  Vec7 bias = Vec7::Zero();     // Coriolis/centripetal, left-hand side
  Vec7 gravity = Vec7::Zero();  // generalized gravity force, right-hand side
};

inline DynamicsTerms dynamics_terms(const RobotModel& m, const Kinematics& k) {
  DynamicsTerms d;
  auto add_link = [&](const PointKinematics& com, double mass, double inertia, std::initializer_list<int> rot_cols) {
    d.mass.noalias() += mass * com.jac.transpose() * com.jac;
    d.bias.noalias() += mass * com.jac.transpose() * com.bias;
    d.gravity -= mass * m.gravity * com.jac.row(1).transpose();
    for (int a : rot_cols) {
      for (int b : rot_cols) d.mass(a, b) += inertia;
    }
  };
  add_link(k.base, m.base_mass, m.base_inertia, {kPitch});
  add_link(k.legs[0].thigh_com, m.thigh_mass, m.thigh_inertia, {kPitch, kFrontHip});
  add_link(k.legs[0].shank_com, m.shank_mass, m.shank_inertia, {kPitch, kFrontHip, kFrontKnee});
  add_link(k.legs[1].thigh_com, m.thigh_mass, m.thigh_inertia, {kPitch, kHindHip});
  add_link(k.legs[1].shank_com, m.shank_mass, m.shank_inertia, {kPitch, kHindHip, kHindKnee});
  for (int j = kFrontHip; j < kNumDof; ++j) d.mass(j, j) += m.joint_armature;
  return d;
}

/// Penalty contact at one foot point. Normal follows the local terrain slope.
struct ContactForce {
  Vec2 force = Vec2::Zero();
  double normal = 0.0;
  double tangential = 0.0;
  double penetration = 0.0;
};

/// Spring-damper normal force (clamped non-negative) and a stick spring
/// toward the foot's contact anchor, Coulomb-clamped to mu * normal. When the
/// clamp is active the anchor slides so the spring sits on the friction cone.
inline ContactForce contact_force(const RobotModel& m, const Terrain& terrain, const Vec2& foot_pos,
                                  const Vec2& foot_vel, FootContact& book) {
  ContactForce c;
  const double slope = terrain.slope(foot_pos.x());
  const double inv_norm = 1.0 / std::sqrt(1.0 + slope * slope);
  const double vertical_gap = foot_pos.y() - terrain.height(foot_pos.x()) - m.foot_radius;
  c.penetration = -vertical_gap * inv_norm;
  if (!(c.penetration > 0.0)) {
    c.penetration = 0.0;
    book.active = false;
    return c;
  }
  if (!book.active) {
    book.active = true;
    book.anchor_x = foot_pos.x();
  }
  const Vec2 n(-slope * inv_norm, inv_norm);
  const Vec2 t(inv_norm, slope * inv_norm);
  const double penetration_rate = -n.dot(foot_vel);
  c.normal = std::max(0.0, m.contact_stiffness * c.penetration + m.contact_damping * penetration_rate);
  const double limit = m.friction * c.normal;
  const double slip = (foot_pos.x() - book.anchor_x) / inv_norm;  // arc length along the surface
  const double trial = -m.tangential_stiffness * slip - m.tangential_damping * t.dot(foot_vel);
  c.tangential = std::clamp(trial, -limit, limit);
  if (c.tangential != trial && m.tangential_stiffness > 0.0) {
    // Sliding: re-anchor so the spring alone would produce the clamped force.
    book.anchor_x = foot_pos.x() + c.tangential / m.tangential_stiffness * inv_norm;
  }
  c.force = c.normal * n + c.tangential * t;
  return c;
}

/// Anchor-free variant: a fresh contact with no accumulated slip.
inline ContactForce contact_force(const RobotModel& m, const Terrain& terrain, const Vec2& foot_pos,
                                  const Vec2& foot_vel) {
  FootContact fresh;
  return contact_force(m, terrain, foot_pos, foot_vel, fresh);
}

/// Advance one step of length dt with position-Verlet (drift, kick, drift):
/// one force evaluation per step at the mid-step configuration, exact for
/// constant accelerations. `external` is an optional generalized force
/// (e.g. a base push) added to the right-hand side.
inline RobotState dynamics_step(const RobotModel& m, const RobotState& s, const Vec4& joint_torques,
                                const Terrain& terrain, double dt, const Vec7& external = Vec7::Zero()) {
  if (!s.finite() || !joint_torques.allFinite()) throw IntegrationError("dynamics_step: non-finite input state or torque");
  if (!(dt > 0.0)) throw ConfigError("dynamics_step: dt must be positive");

  const Vec7 q_mid = s.q + 0.5 * dt * s.v;
  const Kinematics k = kinematics(m, q_mid, s.v);
  const DynamicsTerms d = dynamics_terms(m, k);

  Vec7 rhs = d.gravity - d.bias + external;
  rhs.tail<kNumJoints>() += joint_torques.cwiseMax(-m.torque_limit).cwiseMin(m.torque_limit);
  RobotState next;
  next.feet = s.feet;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& foot = k.legs[i].foot;
    const ContactForce c = contact_force(m, terrain, foot.pos, foot.velocity(s.v), next.feet[i]);
    if (c.penetration > 0.0) rhs.noalias() += foot.jac.transpose() * c.force;
  }

  const Vec7 acc = d.mass.llt().solve(rhs);
  next.v = s.v + dt * acc;
  next.q = q_mid + 0.5 * dt * next.v;
  next.time = s.time + dt;
  if (!next.finite()) throw IntegrationError("dynamics_step: integration diverged");
  return next;
}

/// Foot i is in contact iff its point height above terrain is at most the foot radius.
inline std::array<bool, 2> contact_flags(const RobotModel& m, const RobotState& s, const Terrain& terrain) {
  const Kinematics k = kinematics(m, s.q, s.v);
  std::array<bool, 2> flags{};
  for (std::size_t i = 0; i < 2; ++i) {
    const Vec2& p = k.legs[i].foot.pos;
    flags[i] = p.y() - terrain.height(p.x()) <= m.foot_radius;
  }
  return flags;
}

/// Kinetic (incl. rotor armature) plus gravitational potential energy.
/// The terrain only fixes the potential-energy datum at z = 0.
inline double mechanical_energy(const RobotModel& m, const RobotState& s, const Terrain& /*terrain*/) {
  const Kinematics k = kinematics(m, s.q, s.v);
  const DynamicsTerms d = dynamics_terms(m, k);
  const double kinetic = 0.5 * s.v.dot(d.mass * s.v);
  double potential = m.base_mass * k.base.pos.y();
  for (const auto& leg : k.legs) potential += m.thigh_mass * leg.thigh_com.pos.y() + m.shank_mass * leg.shank_com.pos.y();
  return kinetic + m.gravity * potential;
}

/// Generalized momentum conjugate to base x (total horizontal linear momentum).
inline double horizontal_momentum(const RobotModel& m, const Vec7& q, const Vec7& v) {
  const DynamicsTerms d = dynamics_terms(m, kinematics(m, q, v));
  return d.mass.row(kX).dot(v);
}

}  // namespace lfmc::sim
