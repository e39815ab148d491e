#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lfmc/eval/analysis.hpp"
#include "lfmc/rl/trainer.hpp"

namespace lfmc::app {

/// Settings for the evaluation subcommands.
struct EvalSettings {
  std::uint64_t seed = 1;
  int rollouts = 100;  // N_T
  double horizon = 10.0;
  // latency sweep
  bool latency = true;
  double latency_resolution = 0.005;
  int latency_rollouts = 20;
  double latency_threshold = 0.9;
  double latency_max = 0.3;
  // tracking report
  double tracking_command = 1.0;
  double tracking_duration = 10.0;
  // perturbation sweeps (empty = skipped)
  std::vector<double> push_impulses;
  double push_time = 2.0;
  std::vector<double> mass_scales;
  std::vector<double> frictions;
  std::vector<double> gain_scales;
  // gait / jacobian
  double gait_duration = 4.0;
  double gait_command = 0.5;
  double jacobian_duration = 2.0;
  std::string jacobian_aggregate = "mean";
  // ablation
  std::vector<std::string> terrains{"perlin", "stairs", "bricks"};
  std::vector<std::string> checkpoints;  // label=path

  void validate() const {
    if (rollouts < 1 || latency_rollouts < 1) throw ConfigError("eval: rollout counts must be >= 1");
    if (!(horizon > 0.0) || !(tracking_duration > 0.0) || !(gait_duration > 0.0) || !(jacobian_duration > 0.0)) {
      throw ConfigError("eval: durations must be positive");
    }
    if (!(latency_resolution > 0.0)) throw ConfigError("eval: latency resolution must be positive");
    if (!(latency_threshold >= 0.0 && latency_threshold <= 1.0)) throw ConfigError("eval: latency threshold must be in [0, 1]");
    if (jacobian_aggregate != "mean" && jacobian_aggregate != "max") {
      throw ConfigError("eval: jacobian_aggregate must be mean or max");
    }
    for (const auto& t : terrains) (void)sim::terrain_kind_from_string(t);
  }
};

struct PdStudySettings {
  eval::PdToyConfig plant;
  std::vector<double> update_frequencies{5.0, 200.0};
};

struct Config {
  rl::TrainConfig train;
  EvalSettings eval;
  PdStudySettings pd;
  std::vector<double> sweep_frequencies{5.0, 8.0, 10.0, 25.0, 50.0, 100.0, 200.0};

  void validate() const {
    train.validate();
    eval.validate();
    if (pd.update_frequencies.empty()) throw ConfigError("pd_study: need at least one update frequency");
    for (double f : sweep_frequencies) {
      if (!(f > 0.0)) throw ConfigError("sweep: frequencies must be positive");
    }
  }
};

// ---- value text ----

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto t = trim(s);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

template <class Int>
Int parse_integer(const std::string& s) {
  Int v = 0;
  const auto t = trim(s);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) throw ConfigError("expected an integer, got '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s) {
  const auto t = trim(s);
  if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
  if (t == "false" || t == "no" || t == "off" || t == "0") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

inline std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(parse_double(item));
  return out;
}

inline env::Range parse_range(const std::string& s) {
  const auto v = parse_doubles(s);
  if (v.size() != 2) throw ConfigError("expected 'lo, hi', got '" + s + "'");
  return {v[0], v[1]};
}

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

inline std::string format_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
  return out;
}

inline std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
  return out;
}

// ---- key table ----

struct Binding {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

namespace detail {

inline Binding num(std::string sec, std::string key, double& v) {
  return {std::move(sec), std::move(key), [&v](const std::string& s) { v = parse_double(s); },
          [&v] { return format_double(v); }};
}

template <class Int>
Binding integer(std::string sec, std::string key, Int& v) {
  return {std::move(sec), std::move(key), [&v](const std::string& s) { v = parse_integer<Int>(s); },
          [&v] { return std::to_string(v); }};
}

inline Binding flag(std::string sec, std::string key, bool& v) {
  return {std::move(sec), std::move(key), [&v](const std::string& s) { v = parse_bool(s); },
          [&v] { return std::string(v ? "true" : "false"); }};
}

inline Binding range(std::string sec, std::string key, env::Range& v) {
  return {std::move(sec), std::move(key), [&v](const std::string& s) { v = parse_range(s); },
          [&v] { return format_double(v.lo) + ", " + format_double(v.hi); }};
}

inline Binding nums(std::string sec, std::string key, std::vector<double>& v) {
  return {std::move(sec), std::move(key), [&v](const std::string& s) { v = parse_doubles(s); },
          [&v] { return format_doubles(v); }};
}

inline Binding words(std::string sec, std::string key, std::vector<std::string>& v) {
  return {std::move(sec), std::move(key), [&v](const std::string& s) { v = split_list(s); }, [&v] { return join(v); }};
}

inline Binding text(std::string sec, std::string key, std::string& v) {
  return {std::move(sec), std::move(key), [&v](const std::string& s) { v = trim(s); }, [&v] { return v; }};
}

}  // namespace detail

/// Every configurable key, in the order they are echoed.
inline std::vector<Binding> bindings(Config& c) {
  using namespace detail;
  rl::TrainConfig& t = c.train;
  env::EnvConfig& e = t.env;
  std::vector<Binding> b;

  b.push_back(num("train", "control_frequency", e.control_frequency));
  b.push_back(num("train", "episode_length", e.episode_length));
  b.push_back(num("train", "half_life", t.half_life));
  b.push_back(integer("train", "batch_size", t.batch_size));
  b.push_back(num("train", "gae_lambda", t.gae_lambda));
  b.push_back(integer("train", "iterations", t.iterations));
  b.push_back(integer("train", "seed", t.seed));
  b.push_back({"train", "hidden",
               [&t](const std::string& s) {
                 t.hidden.clear();
                 for (const auto& w : split_list(s)) t.hidden.push_back(parse_integer<int>(w));
               },
               [&t] {
                 std::string out;
                 for (std::size_t i = 0; i < t.hidden.size(); ++i) out += (i ? ", " : "") + std::to_string(t.hidden[i]);
                 return out;
               }});
  b.push_back(num("train", "initial_log_std", t.initial_log_std));
  b.push_back(integer("train", "workers", t.workers));
  b.push_back(integer("train", "checkpoint_interval", t.checkpoint_interval));
  b.push_back(flag("train", "actuator_lag", t.actuator_lag));
  b.push_back(range("train", "lag_range", t.lag_range));

  b.push_back(num("ppo", "clip", t.ppo.clip));
  b.push_back(integer("ppo", "epochs", t.ppo.epochs));
  b.push_back(integer("ppo", "minibatches", t.ppo.minibatches));
  b.push_back(num("ppo", "learning_rate", t.ppo.learning_rate));
  b.push_back(num("ppo", "value_coef", t.ppo.value_coef));
  b.push_back(num("ppo", "entropy_coef", t.ppo.entropy_coef));
  b.push_back(num("ppo", "max_grad_norm", t.ppo.max_grad_norm));
  b.push_back(flag("ppo", "adaptive_lr", t.ppo.adaptive_lr));
  b.push_back(num("ppo", "desired_kl", t.ppo.desired_kl));
  b.push_back(num("ppo", "lr_min", t.ppo.lr_min));
  b.push_back(num("ppo", "lr_max", t.ppo.lr_max));

  b.push_back({"env", "terrain", [&e](const std::string& s) { e.terrain_kind = sim::terrain_kind_from_string(trim(s)); },
               [&e] { return sim::to_string(e.terrain_kind); }});
  b.push_back(range("env", "command", e.command));
  b.push_back(num("env", "command_resample_interval", e.command_resample_interval));
  b.push_back(num("env", "init_joint_noise", e.init_joint_noise));
  b.push_back(num("env", "init_height_noise", e.init_height_noise));
  b.push_back(num("env", "action_scale", e.action_scale));
  b.push_back(num("env", "max_pitch", e.termination.max_pitch));
  b.push_back(num("env", "base_clearance", e.termination.base_clearance));

  b.push_back({"observation", "mode",
               [&e](const std::string& s) { e.observation.mode = env::observation_mode_from_string(trim(s)); },
               [&e] { return env::to_string(e.observation.mode); }});
  b.push_back(integer("observation", "history", e.observation.history));
  b.push_back(num("observation", "history_frequency", e.observation.history_frequency));
  b.push_back(num("observation", "scan_half_span", e.observation.scan_half_span));
  b.push_back(num("observation", "scan_resolution", e.observation.scan_resolution));

  env::RewardConfig& r = e.reward;
  b.push_back(num("reward", "tracking", r.tracking));
  b.push_back(num("reward", "tracking_sharpness", r.tracking_sharpness));
  b.push_back(num("reward", "pitch_rate", r.pitch_rate));
  b.push_back(num("reward", "torque", r.torque));
  b.push_back(num("reward", "smoothness", r.smoothness));
  b.push_back(num("reward", "smoothness_reference_frequency", r.smoothness_reference_frequency));
  b.push_back(num("reward", "smoothness_override", r.smoothness_override));
  b.push_back(num("reward", "nominal_pose", r.nominal_pose));
  b.push_back(num("reward", "nominal_pose_override", r.nominal_pose_override));
  b.push_back(num("reward", "base_height", r.base_height));
  b.push_back(num("reward", "base_height_target", r.base_height_target));
  b.push_back(num("reward", "foot_slip", r.foot_slip));
  b.push_back(num("reward", "air_time", r.air_time));
  b.push_back(num("reward", "air_time_target", r.air_time_target));
  b.push_back(num("reward", "air_time_cap", r.air_time_cap));
  b.push_back(num("reward", "air_time_min_command", r.air_time_min_command));
  b.push_back(num("reward", "termination", r.termination));

  actuation::ActuationConfig& a = e.actuation;
  b.push_back(num("actuation", "kp", a.kp));
  b.push_back(num("actuation", "kd", a.kd));
  b.push_back(num("actuation", "torque_limit", a.torque_limit));
  b.push_back(num("actuation", "latency", a.latency));
  b.push_back(num("actuation", "lag", a.lag));
  b.push_back(num("actuation", "frequency", a.frequency));

  sim::RobotModel& m = e.model;
  b.push_back(num("robot", "base_mass", m.base_mass));
  b.push_back(num("robot", "thigh_mass", m.thigh_mass));
  b.push_back(num("robot", "shank_mass", m.shank_mass));
  b.push_back(num("robot", "base_length", m.base_length));
  b.push_back(num("robot", "thigh_length", m.thigh_length));
  b.push_back(num("robot", "shank_length", m.shank_length));
  b.push_back(num("robot", "base_inertia", m.base_inertia));
  b.push_back(num("robot", "thigh_inertia", m.thigh_inertia));
  b.push_back(num("robot", "shank_inertia", m.shank_inertia));
  b.push_back(num("robot", "joint_armature", m.joint_armature));
  b.push_back(num("robot", "torque_limit", m.torque_limit));
  b.push_back(num("robot", "foot_radius", m.foot_radius));
  b.push_back(num("robot", "gravity", m.gravity));
  b.push_back(num("robot", "contact_stiffness", m.contact_stiffness));
  b.push_back(num("robot", "contact_damping", m.contact_damping));
  b.push_back(num("robot", "friction", m.friction));
  b.push_back(num("robot", "tangential_stiffness", m.tangential_stiffness));
  b.push_back(num("robot", "tangential_damping", m.tangential_damping));
  b.push_back(num("robot", "nominal_hip", m.nominal_hip));
  b.push_back(num("robot", "nominal_knee", m.nominal_knee));

  sim::TerrainParams& tp = e.terrain_params;
  b.push_back(num("terrain", "x_min", tp.x_min));
  b.push_back(num("terrain", "x_max", tp.x_max));
  b.push_back(num("terrain", "spacing", tp.spacing));
  b.push_back(num("terrain", "max_extrusion", tp.max_extrusion));
  b.push_back(num("terrain", "feature_length", tp.feature_length));
  b.push_back(integer("terrain", "octaves", tp.octaves));
  b.push_back(num("terrain", "persistence", tp.persistence));
  b.push_back(num("terrain", "stair_start", tp.stair_start));
  b.push_back(num("terrain", "stair_rise", tp.stair_rise));
  b.push_back(num("terrain", "stair_run", tp.stair_run));
  b.push_back(num("terrain", "brick_start", tp.brick_start));
  b.push_back(num("terrain", "brick_height_min", tp.brick_height_min));
  b.push_back(num("terrain", "brick_height_max", tp.brick_height_max));
  b.push_back(num("terrain", "brick_width_min", tp.brick_width_min));
  b.push_back(num("terrain", "brick_width_max", tp.brick_width_max));
  b.push_back(num("terrain", "brick_gap_max", tp.brick_gap_max));

  b.push_back(flag("randomization", "enabled", t.domain_randomization));
  b.push_back(range("randomization", "mass_scale", t.ranges.mass_scale));
  b.push_back(range("randomization", "friction", t.ranges.friction));
  b.push_back(range("randomization", "gain_scale", t.ranges.gain_scale));
  b.push_back(range("randomization", "latency", t.ranges.latency));
  b.push_back(range("randomization", "lag", t.ranges.lag));

  EvalSettings& v = c.eval;
  b.push_back(integer("eval", "seed", v.seed));
  b.push_back(integer("eval", "rollouts", v.rollouts));
  b.push_back(num("eval", "horizon", v.horizon));
  b.push_back(flag("eval", "latency", v.latency));
  b.push_back(num("eval", "latency_resolution", v.latency_resolution));
  b.push_back(integer("eval", "latency_rollouts", v.latency_rollouts));
  b.push_back(num("eval", "latency_threshold", v.latency_threshold));
  b.push_back(num("eval", "latency_max", v.latency_max));
  b.push_back(num("eval", "tracking_command", v.tracking_command));
  b.push_back(num("eval", "tracking_duration", v.tracking_duration));
  b.push_back(nums("eval", "push_impulses", v.push_impulses));
  b.push_back(num("eval", "push_time", v.push_time));
  b.push_back(nums("eval", "mass_scales", v.mass_scales));
  b.push_back(nums("eval", "frictions", v.frictions));
  b.push_back(nums("eval", "gain_scales", v.gain_scales));
  b.push_back(num("eval", "gait_duration", v.gait_duration));
  b.push_back(num("eval", "gait_command", v.gait_command));
  b.push_back(num("eval", "jacobian_duration", v.jacobian_duration));
  b.push_back(text("eval", "jacobian_aggregate", v.jacobian_aggregate));
  b.push_back(words("eval", "terrains", v.terrains));
  b.push_back(words("eval", "checkpoints", v.checkpoints));

  eval::PdToyConfig& pd = c.pd.plant;
  b.push_back(nums("pd_study", "kp", pd.kp));
  b.push_back(num("pd_study", "kd", pd.kd));
  b.push_back(num("pd_study", "inertia", pd.inertia));
  b.push_back(num("pd_study", "amplitude", pd.amplitude));
  b.push_back(num("pd_study", "frequency", pd.frequency));
  b.push_back(num("pd_study", "duration", pd.duration));
  b.push_back(num("pd_study", "dt", pd.dt));
  b.push_back(nums("pd_study", "update_frequencies", c.pd.update_frequencies));

  b.push_back(nums("sweep", "frequencies", c.sweep_frequencies));
  return b;
}

/// Apply `section/key = value` lines from `is` on top of `c`. Comments start
/// with '#' or ';'. A [randomization] section switches DR on unless it sets
/// `enabled = false`.
inline void parse_config(std::istream& is, Config& c, const std::string& source = "config") {
  auto table = bindings(c);
  std::map<std::string, Binding*> index;
  std::map<std::string, bool> sections;
  for (auto& b : table) {
    index[b.section + "." + b.key] = &b;
    sections[b.section] = true;
  }
  std::string line, section;
  int lineno = 0;
  bool dr_section = false, dr_enabled_set = false;
  auto fail = [&](const std::string& msg) { throw ConfigError(source + ":" + std::to_string(lineno) + ": " + msg); };
  while (std::getline(is, line)) {
    ++lineno;
    const auto cut = line.find_first_of("#;");
    const std::string body = trim(cut == std::string::npos ? line : line.substr(0, cut));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') fail("malformed section header '" + body + "'");
      section = trim(body.substr(1, body.size() - 2));
      if (!sections.count(section)) fail("unknown section [" + section + "]");
      if (section == "randomization") dr_section = true;
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) fail("expected 'key = value', got '" + body + "'");
    const std::string key = trim(body.substr(0, eq));
    if (section.empty()) fail("key '" + key + "' appears before any section header");
    const auto it = index.find(section + "." + key);
    if (it == index.end()) fail("unknown key '" + key + "' in section [" + section + "]");
    if (section == "randomization" && key == "enabled") dr_enabled_set = true;
    try {
      it->second->set(body.substr(eq + 1));
    } catch (const ConfigError& e) {
      fail("key '" + key + "': " + e.what());
    }
  }
  if (dr_section && !dr_enabled_set) c.train.domain_randomization = true;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Config c;
  parse_config(in, c, path);
  return c;
}

inline Config parse_config_string(const std::string& text) {
  std::istringstream in(text);
  Config c;
  parse_config(in, c);
  return c;
}

/// Full effective configuration in the same grammar; reading it back gives
/// an identical Config.
inline void write_config(std::ostream& os, Config& c) {
  std::string section;
  for (const auto& b : bindings(c)) {
    if (b.section != section) {
      os << (section.empty() ? "" : "\n") << "[" << b.section << "]\n";
      section = b.section;
    }
    os << b.key << " = " << b.get() << "\n";
  }
}

inline std::string config_text(const Config& c) {
  Config copy = c;
  std::ostringstream os;
  write_config(os, copy);
  return os.str();
}

/// Quantities derived from the training section.
inline std::string derived_summary(const rl::TrainConfig& t) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "control_frequency = %g Hz\ngamma = %.9f\nn_env = %d\nsteps_per_env = %d\nsubsteps = %d\n"
                "batch_size = %lld\n",
                t.env.control_frequency, t.gamma(), t.n_envs(), t.steps_per_env(), t.env.substeps(),
                static_cast<long long>(t.batch_size));
  return buf;
}

}  // namespace lfmc::app
