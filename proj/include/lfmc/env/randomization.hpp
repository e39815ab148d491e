#pragma once

#include <utility>

#include "lfmc/actuation.hpp"
#include "lfmc/common.hpp"
#include "lfmc/sim/robot.hpp"

namespace lfmc::env {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Per-episode dynamics randomization ranges.
struct RandomizationRanges {
  Range mass_scale{0.9, 1.1};
  Range friction{0.4, 1.0};
  Range gain_scale{0.9, 1.1};
  Range latency{0.0, 0.020};
  Range lag{0.0, 0.0};

  void validate() const {
    for (const Range* r : {&mass_scale, &friction, &gain_scale, &latency, &lag}) {
      if (r->hi < r->lo) throw ConfigError("randomization: range upper bound below lower bound");
    }
    if (!(mass_scale.lo > 0.0) || friction.lo < 0.0 || !(gain_scale.lo >= 0.0) || latency.lo < 0.0 || lag.lo < 0.0) {
      throw ConfigError("randomization: ranges must stay physical (positive mass scale, non-negative others)");
    }
  }
};

/// Resample link masses (one common scale), friction, PD gains (one common
/// scale), latency and lag constant. Degenerate ranges leave values untouched.
inline std::pair<sim::RobotModel, actuation::ActuationConfig> apply_dynamics_randomization(
    Rng& rng, const sim::RobotModel& model, const actuation::ActuationConfig& act, const RandomizationRanges& r) {
  sim::RobotModel m = model;
  actuation::ActuationConfig a = act;
  auto draw = [&](const Range& range, double identity) { return range.width() > 0.0 ? uniform(rng, range.lo, range.hi) : identity; };

  const double mass_scale = draw(r.mass_scale, 1.0);
  m.base_mass *= mass_scale;
  m.thigh_mass *= mass_scale;
  m.shank_mass *= mass_scale;
  m.base_inertia *= mass_scale;
  m.thigh_inertia *= mass_scale;
  m.shank_inertia *= mass_scale;

  m.friction = draw(r.friction, model.friction);
  const double gain = draw(r.gain_scale, 1.0);
  a.kp *= gain;
  a.kd *= gain;
  a.latency = draw(r.latency, act.latency);
  a.lag = draw(r.lag, act.lag);
  return {m, a};
}

}  // namespace lfmc::env
