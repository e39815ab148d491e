#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <string>

#include <Eigen/Core>

#include "lfmc/common.hpp"
#include "lfmc/sim/robot.hpp"

namespace lfmc::actuation {

using sim::Vec4;

struct ActuationConfig {
  double kp = 150.0;
  double kd = 3.0;
  double torque_limit = 40.0;
  double latency = 0.0;  // s
  double lag = 0.0;      // first-order time constant T_lag (s); 0 = ideal
  double frequency = 1.0 / kSimStep;

  double step() const { return 1.0 / frequency; }
  int latency_steps() const { return static_cast<int>(std::lround(latency / step())); }

  void validate() const {
    if (kp < 0.0 || kd < 0.0) throw ConfigError("actuation: kp and kd must be non-negative");
    if (!(torque_limit > 0.0)) throw ConfigError("actuation: torque limit must be positive");
    if (latency < 0.0) throw ConfigError("actuation: latency must be non-negative");
    if (lag < 0.0) throw ConfigError("actuation: lag time constant must be non-negative");
    if (!(frequency > 0.0)) throw ConfigError("actuation: frequency must be positive");
  }

  /// Every motion-control frequency must not exceed the tracker rate.
  void validate_motion_frequency(double f_m) const {
    if (!(f_m > 0.0) || f_m > frequency + 1e-9) {
      throw ConfigError("actuation: motion control frequency must be in (0, f_a]");
    }
  }
};

/// Impedance law tau = kp (q* - q) - kd qdot, clamped to the torque limit.
template <typename Derived>
Eigen::Matrix<double, Derived::RowsAtCompileTime, 1> pd_torque(const ActuationConfig& c,
                                                                const Eigen::MatrixBase<Derived>& q_desired,
                                                                const Eigen::MatrixBase<Derived>& q,
                                                                const Eigen::MatrixBase<Derived>& qdot) {
  if (q_desired.size() != q.size() || q.size() != qdot.size()) {
    throw ContractViolation("pd_torque: dimension mismatch");
  }
  return (c.kp * (q_desired - q) - c.kd * qdot).cwiseMax(-c.torque_limit).cwiseMin(c.torque_limit);
}

inline Eigen::VectorXd pd_torque(const ActuationConfig& c, const Eigen::VectorXd& q_desired, const Eigen::VectorXd& q,
                                 const Eigen::VectorXd& qdot) {
  return pd_torque<Eigen::VectorXd>(c, q_desired, q, qdot);
}

/// FIFO of desired-joint-position commands keyed by actuation tick.
class LatencyBuffer {
 public:
  LatencyBuffer(const Vec4& initial, double tick) : initial_(initial), tick_(tick) {
    if (!(tick > 0.0)) throw ConfigError("latency buffer: tick must be positive");
  }

  /// Pushes `command` stamped at `now`; returns the newest command stamped at
  /// or before now - latency, or the initial setpoint if none has matured.
  Vec4 delayed_setpoint(const Vec4& command, double now, double latency) {
    const std::int64_t t = std::llround(now / tick_);
    const std::int64_t lag = std::llround(latency / tick_);
    if (!queue_.empty() && t < queue_.back().tick) throw ContractViolation("latency buffer: time went backwards");
    if (!queue_.empty() && queue_.back().tick == t) {
      queue_.back().command = command;
    } else {
      queue_.push_back({t, command});
    }
    const std::int64_t due = t - lag;
    // Drop entries superseded by a newer matured one.
    while (queue_.size() > 1 && queue_[1].tick <= due) queue_.pop_front();
    if (queue_.front().tick <= due) return queue_.front().command;
    return initial_;
  }

  void reset(const Vec4& initial) {
    initial_ = initial;
    queue_.clear();
  }

  std::size_t size() const { return queue_.size(); }

 private:
  struct Entry {
    std::int64_t tick;
    Vec4 command;
  };
  Vec4 initial_;
  double tick_;
  std::deque<Entry> queue_;
};

/// First-order actuator lag; updates `state` in place and returns it.
template <typename Vec>
Vec actuator_lag(const Vec& commanded, Vec& state, double dt, double time_constant) {
  if (time_constant < 0.0) throw ConfigError("actuator_lag: negative time constant");
  if (!(dt > 0.0)) throw ConfigError("actuator_lag: dt must be positive");
  if (time_constant == 0.0) {
    state = commanded;
    return state;
  }
  // dt > T_lag would overshoot; saturate the gain at 1.
  const double alpha = std::min(1.0, dt / time_constant);
  state = state + alpha * (commanded - state);
  return state;
}

inline double actuator_lag(double commanded, double& state, double dt, double time_constant) {
  Eigen::Matrix<double, 1, 1> c(commanded), s(state);
  actuator_lag(c, s, dt, time_constant);
  state = s[0];
  return state;
}

}  // namespace lfmc::actuation
