#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lfmc/common.hpp"
#include "lfmc/sim/dynamics.hpp"

namespace lfmc::env {

using sim::Vec4;

enum class ObservationMode { Blind, Perceptive };

inline std::string to_string(ObservationMode m) { return m == ObservationMode::Blind ? "blind" : "perceptive"; }

inline ObservationMode observation_mode_from_string(const std::string& s) {
  if (s == "blind") return ObservationMode::Blind;
  if (s == "perceptive") return ObservationMode::Perceptive;
  throw ConfigError("unknown observation mode '" + s + "'");
}

inline constexpr int kBaseObsDim = 18;
inline constexpr int kHistorySampleDim = 8;

/// Named contiguous slice of the observation vector.
struct ObservationBlock {
  std::string name;
  int offset;
  int size;
};

struct ObservationSpec {
  ObservationMode mode = ObservationMode::Blind;
  int history = 0;
  double history_frequency = 200.0;
  double scan_half_span = 0.8;
  double scan_resolution = 0.1;

  int scan_size() const { return static_cast<int>(std::ceil(2.0 * scan_half_span / scan_resolution - 1e-9)) + 1; }

  int dim() const {
    return kBaseObsDim + history * kHistorySampleDim + (mode == ObservationMode::Perceptive ? scan_size() : 0);
  }

  void validate() const {
    if (history < 0) throw ConfigError("observation: history length must be >= 0");
    if (!(history_frequency > 0.0)) throw ConfigError("observation: history frequency must be positive");
    if (!(scan_resolution > 0.0) || !(scan_half_span > 0.0)) throw ConfigError("observation: scan span and resolution must be positive");
  }

  /// Layout used for saliency column labels.
  std::vector<ObservationBlock> blocks() const {
    std::vector<ObservationBlock> b = {{"gravity", 0, 2},      {"joint_pos", 2, 4},  {"base_lin_vel", 6, 2},
                                       {"pitch_rate", 8, 1},   {"joint_vel", 9, 4},  {"joint_pos_err", 13, 4},
                                       {"command", 17, 1}};
    int off = kBaseObsDim;
    for (int k = 1; k <= history; ++k) {
      b.push_back({"hist" + std::to_string(k) + "_pos", off, 4});
      b.push_back({"hist" + std::to_string(k) + "_vel", off + 4, 4});
      off += kHistorySampleDim;
    }
    if (mode == ObservationMode::Perceptive) b.push_back({"terrain_scan", off, scan_size()});
    return b;
  }

  /// One label per observation column.
  std::vector<std::string> column_labels() const {
    std::vector<std::string> out;
    for (const auto& blk : blocks()) {
      for (int i = 0; i < blk.size; ++i) out.push_back(blk.size == 1 ? blk.name : blk.name + "[" + std::to_string(i) + "]");
    }
    return out;
  }
};

/// Ring of (q_j, qdot_j) samples recorded every 1/f_j seconds.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(int capacity = 0) : samples_(static_cast<std::size_t>(std::max(capacity, 0) + 1)) { clear(); }

  void clear() {
    for (auto& s : samples_) s.setZero();
    count_ = 0;
    head_ = 0;
  }

  void push(const Vec4& q, const Vec4& qdot) {
    head_ = (head_ + 1) % samples_.size();
    samples_[head_] << q, qdot;
    ++count_;
  }

  /// Sample recorded k ticks before the newest one (k = 0 is the newest);
  /// zeros until that many samples exist.
  Eigen::Matrix<double, 8, 1> at(int k) const {
    if (k < 0 || static_cast<std::size_t>(k) >= samples_.size()) throw ContractViolation("history index out of range");
    if (static_cast<std::size_t>(k) >= count_) return Eigen::Matrix<double, 8, 1>::Zero();
    return samples_[(head_ + samples_.size() - static_cast<std::size_t>(k)) % samples_.size()];
  }

  std::size_t count() const { return count_; }
  int capacity() const { return static_cast<int>(samples_.size()) - 1; }

 private:
  std::vector<Eigen::Matrix<double, 8, 1>> samples_;
  std::size_t count_ = 0;
  std::size_t head_ = 0;
};

/// Terrain heights relative to the base at evenly spaced horizontal offsets
/// across [-half_span, half_span] around the base.
inline Eigen::VectorXd terrain_scan(const sim::RobotState& s, const sim::Terrain& terrain, const ObservationSpec& spec) {
  const int n = spec.scan_size();
  Eigen::VectorXd out(n);
  const double x = s.q[sim::kX], z = s.q[sim::kZ];
  for (int i = 0; i < n; ++i) out[i] = terrain.height(x - spec.scan_half_span + spec.scan_resolution * i) - z;
  return out;
}

/// Assemble the policy observation:
/// [gravity(2), q(4), base-frame lin vel(2), pitch rate, qdot(4), q* - q(4), command,
///  history samples t_j-1..t_j-H, terrain scan].
inline Eigen::VectorXd observe(const ObservationSpec& spec, const sim::RobotState& s, const HistoryBuffer& history,
                               double command, const Vec4& desired_joints, const sim::Terrain& terrain) {
  if (history.capacity() < spec.history) throw ContractViolation("observe: history buffer shorter than spec");
  Eigen::VectorXd o(spec.dim());
  const double c = std::cos(s.pitch()), sn = std::sin(s.pitch());
  o[0] = -sn;
  o[1] = -c;
  o.segment<4>(2) = s.joint_pos();
  o[6] = c * s.v[sim::kX] + sn * s.v[sim::kZ];
  o[7] = -sn * s.v[sim::kX] + c * s.v[sim::kZ];
  o[8] = s.v[sim::kPitch];
  o.segment<4>(9) = s.joint_vel();
  o.segment<4>(13) = desired_joints - s.joint_pos();
  o[17] = command;
  int off = kBaseObsDim;
  for (int k = 1; k <= spec.history; ++k, off += kHistorySampleDim) o.segment<8>(off) = history.at(k);
  if (spec.mode == ObservationMode::Perceptive) o.segment(off, spec.scan_size()) = terrain_scan(s, terrain, spec);
  return o;
}

}  // namespace lfmc::env
