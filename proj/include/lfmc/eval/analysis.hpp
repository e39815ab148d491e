#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lfmc/common.hpp"
#include "lfmc/eval/rollout.hpp"
#include "lfmc/parallel.hpp"

namespace lfmc::eval {

/// SR = 1 - early terminations / rollouts.
inline double success_rate_from_counts(int early_terminations, int rollouts) {
  if (rollouts < 1) throw ConfigError("success rate: need at least one rollout");
  if (early_terminations < 0 || early_terminations > rollouts) throw ContractViolation("success rate: bad failure count");
  return 1.0 - static_cast<double>(early_terminations) / rollouts;
}

inline std::uint64_t rollout_seed(std::uint64_t seed, int i) { return derive_seed(seed, "eval/rollout", static_cast<std::uint64_t>(i)); }

struct SuccessRate {
  double sr = 0.0;
  int failures = 0;
  int rollouts = 0;
  std::uint64_t seed = 0;
  double horizon = 0.0;
  std::vector<RolloutResult> runs;
};

/// N_T rollouts of fixed horizon; rollout i is seeded from (seed, i) only, so
/// every policy sees the same terrains, commands and initial states.
/// `base` supplies overrides (latency, dynamics, push, fixed command).
inline SuccessRate success_rate(const rl::Policy& policy, const env::EnvConfig& cfg, int n_t, std::uint64_t seed,
                                double horizon = 10.0, const RolloutOptions& base = {}, int workers = 1) {
  if (n_t < 1) throw ConfigError("success rate: N_T must be >= 1");
  SuccessRate out;
  out.rollouts = n_t;
  out.seed = seed;
  out.horizon = horizon;
  out.runs.resize(static_cast<std::size_t>(n_t));
  WorkerPool pool(workers);
  pool.parallel_for(n_t, [&](int i) {
    RolloutOptions o = base;
    o.seed = rollout_seed(seed, i);
    o.horizon = horizon;
    out.runs[static_cast<std::size_t>(i)] = rollout(policy, cfg, o);
  });
  for (const auto& r : out.runs) out.failures += r.failed ? 1 : 0;
  out.sr = success_rate_from_counts(out.failures, n_t);
  return out;
}

struct LatencySweep {
  double limit = 0.0;  // s, a multiple of the resolution
  bool failed_at_zero = false;
  double resolution = 0.005;
  double threshold = 0.9;
  int rollouts = 20;
  std::uint64_t seed = 0;
  std::vector<std::pair<double, double>> points;  // (latency, SR) in sweep order

  int limit_ms() const { return static_cast<int>(std::lround(limit * 1000.0)); }
};

/// Raise injected actuation latency in `resolution` steps until SR drops below
/// `threshold`; the limit is the last latency that still met it.
inline LatencySweep latency_limit(const rl::Policy& policy, const env::EnvConfig& cfg, std::uint64_t seed,
                                  double resolution = 0.005, int rollouts = 20, double threshold = 0.9,
                                  double max_latency = 0.3, double horizon = 10.0, int workers = 1) {
  if (!(resolution > 0.0)) throw ConfigError("latency sweep: resolution must be positive");
  LatencySweep out;
  out.resolution = resolution;
  out.threshold = threshold;
  out.rollouts = rollouts;
  out.seed = seed;
  const int max_k = static_cast<int>(std::floor(max_latency / resolution + 1e-9));
  int last_ok = -1;
  for (int k = 0; k <= max_k; ++k) {
    RolloutOptions o;
    actuation::ActuationConfig a = cfg.actuation;
    a.latency = k * resolution;
    o.actuation = a;
    const SuccessRate sr = success_rate(policy, cfg, rollouts, seed, horizon, o, workers);
    out.points.emplace_back(a.latency, sr.sr);
    if (sr.sr < threshold) break;
    last_ok = k;
  }
  out.failed_at_zero = last_ok < 0;
  out.limit = std::max(0, last_ok) * resolution;
  return out;
}

struct Interval {
  double start = 0.0;
  double end = 0.0;
  bool stance = false;
  double duration() const { return end - start; }
};

struct FootGait {
  std::vector<Interval> intervals;  // partition of [0, duration]
  double mean_stance = 0.0;
  double mean_swing = 0.0;
  double stance_fraction = 0.0;
};

/// Merge a contact signal sampled every dt (sample i covers [i dt, (i+1) dt))
/// into alternating stance/swing intervals. Means use interior intervals only,
/// since the first and last are cut by the recording window; when a phase has
/// no interior interval, all intervals of that phase are used.
inline FootGait intervals_from_contacts(const std::vector<bool>& contact, double dt) {
  if (!(dt > 0.0)) throw ConfigError("gait: dt must be positive");
  FootGait g;
  const std::size_t n = contact.size();
  if (n == 0) return g;
  std::size_t begin = 0;
  std::size_t stance_samples = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i == n || contact[i] != contact[begin]) {
      g.intervals.push_back({static_cast<double>(begin) * dt, static_cast<double>(i) * dt, contact[begin]});
      begin = i;
    }
  }
  for (bool c : contact) stance_samples += c ? 1 : 0;
  g.stance_fraction = static_cast<double>(stance_samples) / static_cast<double>(n);

  auto mean_of = [&](bool stance) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 1; i + 1 < g.intervals.size(); ++i) {
      if (g.intervals[i].stance == stance) {
        sum += g.intervals[i].duration();
        ++count;
      }
    }
    if (count == 0) {
      for (const auto& iv : g.intervals) {
        if (iv.stance == stance) {
          sum += iv.duration();
          ++count;
        }
      }
    }
    return count ? sum / count : 0.0;
  };
  g.mean_stance = mean_of(true);
  g.mean_swing = mean_of(false);
  return g;
}

struct GaitReport {
  std::array<FootGait, 2> feet;  // front, hind
  double duration = 0.0;
  double command = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::vector<double> time;
  std::array<std::vector<bool>, 2> contacts;

  double mean_stance() const { return 0.5 * (feet[0].mean_stance + feet[1].mean_stance); }
  double mean_swing() const { return 0.5 * (feet[0].mean_swing + feet[1].mean_swing); }
};

/// Contact flags sampled every simulation step over a fixed-command rollout.
inline GaitReport gait_sequence(const rl::Policy& policy, const env::EnvConfig& cfg, double duration, std::uint64_t seed,
                                double command, const std::function<void(const env::SubstepRecord&)>& tap = {}) {
  if (!(duration > 0.0)) throw ConfigError("gait: duration must be positive");
  GaitReport g;
  g.duration = duration;
  g.command = command;
  g.seed = seed;
  RolloutOptions o;
  o.seed = derive_seed(seed, "eval/gait");
  o.horizon = duration;
  o.command = command;
  o.recorder = [&](const env::SubstepRecord& r) {
    g.time.push_back(r.time);
    for (int f = 0; f < 2; ++f) g.contacts[static_cast<std::size_t>(f)].push_back(r.contacts[static_cast<std::size_t>(f)]);
    if (tap) tap(r);
  };
  g.failed = rollout(policy, cfg, o).failed;
  for (std::size_t f = 0; f < 2; ++f) g.feet[f] = intervals_from_contacts(g.contacts[f], cfg.sim_step());
  return g;
}

enum class SaliencyAggregate { Mean, Max };

struct Saliency {
  Eigen::MatrixXd matrix;  // action dim x observation dim, elementwise >= 0
  std::vector<std::string> labels;
  std::vector<std::pair<std::string, double>> blocks;  // block name, mean saliency over its columns
  int samples = 0;
  std::uint64_t seed = 0;
  double duration = 0.0;
};

inline std::vector<std::pair<std::string, double>> block_aggregates(const Eigen::MatrixXd& s,
                                                                    const env::ObservationSpec& spec) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& b : spec.blocks()) out.emplace_back(b.name, s.middleCols(b.offset, b.size).mean());
  return out;
}

/// |d pi(s) / d s| aggregated over a rollout's control steps.
inline Saliency jacobian_saliency(const rl::Policy& policy, const env::EnvConfig& cfg, double duration, std::uint64_t seed,
                                  std::optional<double> command = std::nullopt,
                                  SaliencyAggregate agg = SaliencyAggregate::Mean) {
  Saliency s;
  s.seed = seed;
  s.duration = duration;
  s.matrix = Eigen::MatrixXd::Zero(rl::kActionDim, policy.obs_dim());
  RolloutOptions o;
  o.seed = derive_seed(seed, "eval/jacobian");
  o.horizon = duration;
  o.command = command;
  o.on_observation = [&](const Eigen::VectorXd& obs) {
    const Eigen::MatrixXd j = policy.observation_jacobian(obs).cwiseAbs();
    if (agg == SaliencyAggregate::Mean) {
      s.matrix += j;
    } else {
      s.matrix = s.matrix.cwiseMax(j);
    }
    ++s.samples;
  };
  rollout(policy, cfg, o);
  if (agg == SaliencyAggregate::Mean && s.samples > 0) s.matrix /= s.samples;
  s.labels = cfg.observation.column_labels();
  s.blocks = block_aggregates(s.matrix, cfg.observation);
  return s;
}

struct PdToyConfig {
  std::vector<double> kp{50.0, 65.0, 80.0, 95.0};
  double kd = 2.0;
  double inertia = 0.05;        // kg m^2
  double amplitude = 0.5;       // rad
  double frequency = 1.0;       // Hz, setpoint sinusoid
  double duration = 2.0;        // s
  double dt = 1e-4;             // plant integration step
};

struct PdToyTrace {
  double update_frequency = 0.0;
  std::vector<double> time;                  // update instants
  std::vector<double> setpoint;              // setpoint held before each instant
  std::vector<std::vector<double>> position; // per gain, at each instant
  double mean_spread = 0.0;                  // mean over instants of max - min across gains
  double max_spread = 0.0;
};

/// 1-DoF plant I qdd = kp (q* - q) - kd qd tracking a sinusoid whose samples
/// are held between updates. Spread is measured at the update instants, just
/// before the next setpoint takes effect.
inline PdToyTrace pd_toy_study(const PdToyConfig& c, double update_frequency) {
  if (c.kp.empty() || !(c.inertia > 0.0) || !(c.dt > 0.0) || !(update_frequency > 0.0) || !(c.duration > 0.0)) {
    throw ConfigError("pd study: invalid configuration");
  }
  const int per_update = exact_ticks(1.0 / update_frequency, c.dt, "pd study update period");
  const int updates = exact_ticks(c.duration, 1.0 / update_frequency, "pd study duration");
  PdToyTrace t;
  t.update_frequency = update_frequency;
  t.position.assign(c.kp.size(), {});
  std::vector<double> q(c.kp.size(), 0.0), qd(c.kp.size(), 0.0);
  for (int u = 0; u < updates; ++u) {
    const double target = c.amplitude * std::sin(2.0 * kPi * c.frequency * u / update_frequency);
    for (int k = 0; k < per_update; ++k) {
      for (std::size_t g = 0; g < c.kp.size(); ++g) {
        const double acc = (c.kp[g] * (target - q[g]) - c.kd * qd[g]) / c.inertia;
        qd[g] += c.dt * acc;  // semi-implicit Euler
        q[g] += c.dt * qd[g];
      }
    }
    t.time.push_back((u + 1) / update_frequency);
    t.setpoint.push_back(target);
    double lo = q[0], hi = q[0];
    for (std::size_t g = 0; g < c.kp.size(); ++g) {
      t.position[g].push_back(q[g]);
      lo = std::min(lo, q[g]);
      hi = std::max(hi, q[g]);
    }
    t.mean_spread += hi - lo;
    t.max_spread = std::max(t.max_spread, hi - lo);
  }
  t.mean_spread /= updates;
  return t;
}

struct TrackingReport {
  double command = 0.0;
  double mean_velocity = 0.0;
  double max_velocity = 0.0;
  double rmse = 0.0;
  double distance = 0.0;           // x_end - x_start
  double integrated_velocity = 0.0;  // trapezoid of v over simulation steps
  double time_to_2m = -1.0;          // s, -1 if never reached
  bool failed = false;
  std::uint64_t seed = 0;
  std::vector<double> time, position, velocity;  // per simulation step
};

/// Constant-command tracking statistics. RMSE and the velocity statistics
/// use the rollout after `settle` seconds.
inline TrackingReport velocity_tracking_report(const rl::Policy& policy, const env::EnvConfig& cfg, double command,
                                               double duration, std::uint64_t seed, double settle = 1.0) {
  TrackingReport rep;
  rep.command = command;
  rep.seed = seed;
  RolloutOptions o;
  o.seed = derive_seed(seed, "eval/tracking");
  o.horizon = duration;
  o.command = command;
  double x0 = 0.0, v0 = 0.0, t0 = 0.0;
  o.on_reset = [&](const sim::RobotState& st) {
    x0 = st.q[sim::kX];
    v0 = st.v[sim::kX];
    t0 = st.time;
  };
  o.recorder = [&](const env::SubstepRecord& r) {
    rep.time.push_back(r.time);
    rep.position.push_back(r.state->q[sim::kX]);
    rep.velocity.push_back(r.state->v[sim::kX]);
  };
  rep.failed = rollout(policy, cfg, o).failed;
  if (rep.time.empty()) return rep;

  rep.distance = rep.position.back() - x0;
  double prev_v = v0, prev_t = t0;
  for (std::size_t i = 0; i < rep.time.size(); ++i) {
    rep.integrated_velocity += 0.5 * (prev_v + rep.velocity[i]) * (rep.time[i] - prev_t);
    prev_v = rep.velocity[i];
    prev_t = rep.time[i];
    if (rep.time_to_2m < 0.0 && rep.position[i] - x0 >= 2.0) rep.time_to_2m = rep.time[i];
  }
  double sum = 0.0, sq = 0.0;
  int n = 0;
  rep.max_velocity = -1e300;
  for (std::size_t i = 0; i < rep.time.size(); ++i) {
    if (rep.time[i] < settle) continue;
    sum += rep.velocity[i];
    sq += (rep.velocity[i] - command) * (rep.velocity[i] - command);
    rep.max_velocity = std::max(rep.max_velocity, rep.velocity[i]);
    ++n;
  }
  if (n > 0) {
    rep.mean_velocity = sum / n;
    rep.rmse = std::sqrt(sq / n);
  } else {
    rep.max_velocity = 0.0;
  }
  return rep;
}

/// Fraction of the tracking-reward ceiling earned over fixed-horizon rollouts
/// with commands drawn from the env range (failed rollouts earn nothing after
/// termination).
inline double tracking_ratio(const SuccessRate& sr, const env::EnvConfig& cfg) {
  double sum = 0.0;
  for (const auto& r : sr.runs) sum += r.tracking;
  return sum / (sr.horizon * cfg.reward.tracking * static_cast<double>(sr.runs.size()));
}

struct SweepPoint {
  double value = 0.0;
  double sr = 0.0;
};

/// SR under a base impulse (N s, along +x) applied at `push_time`.
inline std::vector<SweepPoint> push_sweep(const rl::Policy& policy, const env::EnvConfig& cfg,
                                          const std::vector<double>& impulses, int n_t, std::uint64_t seed,
                                          double push_time = 2.0, double horizon = 10.0, int workers = 1) {
  std::vector<SweepPoint> out;
  for (double j : impulses) {
    RolloutOptions o;
    o.push = {push_time, j, 0.0};
    out.push_back({j, success_rate(policy, cfg, n_t, seed, horizon, o, workers).sr});
  }
  return out;
}

enum class DynamicsParam { MassScale, Friction, GainScale };

inline std::string to_string(DynamicsParam p) {
  switch (p) {
    case DynamicsParam::MassScale: return "mass_scale";
    case DynamicsParam::Friction: return "friction";
    case DynamicsParam::GainScale: return "gain_scale";
  }
  return "?";
}

inline DynamicsParam dynamics_param_from_string(const std::string& s) {
  if (s == "mass_scale") return DynamicsParam::MassScale;
  if (s == "friction") return DynamicsParam::Friction;
  if (s == "gain_scale") return DynamicsParam::GainScale;
  throw ConfigError("unknown dynamics parameter '" + s + "'");
}

/// SR with one physical parameter offset from nominal for the whole rollout.
inline std::vector<SweepPoint> dynamics_sweep(const rl::Policy& policy, const env::EnvConfig& cfg, DynamicsParam param,
                                              const std::vector<double>& values, int n_t, std::uint64_t seed,
                                              double horizon = 10.0, int workers = 1) {
  std::vector<SweepPoint> out;
  for (double v : values) {
    sim::RobotModel m = cfg.model;
    actuation::ActuationConfig a = cfg.actuation;
    if (param == DynamicsParam::MassScale) {
      m.base_mass *= v;
      m.thigh_mass *= v;
      m.shank_mass *= v;
      m.base_inertia *= v;
      m.thigh_inertia *= v;
      m.shank_inertia *= v;
    } else if (param == DynamicsParam::Friction) {
      m.friction = v;
    } else {
      a.kp *= v;
      a.kd *= v;
    }
    RolloutOptions o;
    o.model = m;
    o.actuation = a;
    out.push_back({v, success_rate(policy, cfg, n_t, seed, horizon, o, workers).sr});
  }
  return out;
}

struct AblationEntry {
  std::string label;
  std::optional<rl::Policy> policy;  // empty = checkpoint missing
};

struct AblationCell {
  std::string policy;
  std::string terrain;
  std::optional<double> sr;  // empty = absent
};

/// SR for every (policy, terrain) pair; missing checkpoints give absent cells.
inline std::vector<AblationCell> ablation_table(const std::vector<AblationEntry>& grid,
                                                const std::vector<sim::TerrainKind>& terrains,
                                                const env::EnvConfig& base, int n_t, std::uint64_t seed,
                                                double horizon = 10.0, int workers = 1) {
  std::vector<AblationCell> out;
  for (const auto& e : grid) {
    for (sim::TerrainKind t : terrains) {
      AblationCell c{e.label, sim::to_string(t), std::nullopt};
      if (e.policy) {
        env::EnvConfig cfg = env_config_for(*e.policy, base);
        cfg.terrain_kind = t;
        c.sr = success_rate(*e.policy, cfg, n_t, seed, horizon, {}, workers).sr;
      }
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace lfmc::eval
