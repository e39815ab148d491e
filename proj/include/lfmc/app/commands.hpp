#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lfmc/app/config.hpp"

#ifndef LFMC_VERSION
#define LFMC_VERSION "dev"
#endif

namespace lfmc::app {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kAnalysisFailed = 1, kUsageError = 2 };

/// Where a subcommand writes, and how chatty it is.
struct RunContext {
  fs::path out_dir;
  bool force = false;
  bool trajectory = false;  // gait: also dump the rollout to trajectory.csv
  std::string command_line;
  std::ostream* log = &std::cerr;
};

/// Default output root: $LFMC_OUTPUT_ROOT, else ./runs.
inline fs::path output_root() {
  const char* env = std::getenv("LFMC_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

/// Create the output directory; refuse to reuse a non-empty one unless forced.
inline void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output path '" + dir.string() + "' is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw ConfigError("output directory '" + dir.string() + "' already holds results; pass --force to overwrite");
    }
  }
  fs::create_directories(dir);
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  return os;
}

/// config.ini (full effective config) and manifest.txt (what ran, on what).
inline void write_manifest(const RunContext& ctx, const std::string& subcommand, const Config& c,
                           const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  {
    auto os = open_out(ctx.out_dir / "config.ini");
    os << config_text(c);
  }
  auto os = open_out(ctx.out_dir / "manifest.txt");
  os << "lfmc_version = " << LFMC_VERSION << "\n";
  os << "subcommand = " << subcommand << "\n";
  if (!ctx.command_line.empty()) os << "command_line = " << ctx.command_line << "\n";
  os << "train_seed = " << c.train.seed << "\n";
  os << "eval_seed = " << c.eval.seed << "\n";
  os << "workers = " << c.train.workers << "\n";
  for (const auto& [k, v] : extra) os << k << " = " << v << "\n";
  os << "config = config.ini\n";
  os << "seed_derivation = derive_seed(root, tag, index): FNV-1a of tag mixed with root and index by splitmix64\n";
}

inline void write_derived(std::ostream& os, const Config& c) { os << derived_summary(c.train); }

// ---- train ----

inline int cmd_train(const Config& c, const RunContext& ctx) {
  prepare_output_dir(ctx.out_dir, ctx.force);
  write_manifest(ctx, "train", c);
  {
    auto os = open_out(ctx.out_dir / "derived.txt");
    write_derived(os, c);
  }
  std::ostream& log = *ctx.log;
  const rl::TrainResult r = rl::train(c.train, ctx.out_dir.string(), [&](const rl::IterationStats& s) {
    if ((s.iteration + 1) % 10 == 0 || s.iteration == 0) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "iter %5d  return %8.4f  tracking %.3f  failures %.2f  lr %.2e\n", s.iteration + 1,
                    s.mean_return, s.tracking_ratio, s.failure_fraction, s.ppo.learning_rate);
      log << buf << std::flush;
    }
  });
  if (r.halted) {
    log << "training halted: " << r.error << "\n";
    return kAnalysisFailed;
  }
  return kOk;
}

// ---- eval ----

struct EvalSummary {
  double sr = 0.0;
  int failures = 0;
  int rollouts = 0;
  double tracking_ratio = 0.0;
  std::optional<eval::LatencySweep> latency;
};

inline EvalSummary run_eval(const rl::Policy& p, const Config& c, const fs::path& dir, std::ostream& log) {
  const EvalSettings& v = c.eval;
  const env::EnvConfig cfg = eval::env_config_for(p, c.train.env);
  const int workers = c.train.workers;
  EvalSummary sum;

  const eval::SuccessRate sr = eval::success_rate(p, cfg, v.rollouts, v.seed, v.horizon, {}, workers);
  sum.sr = sr.sr;
  sum.failures = sr.failures;
  sum.rollouts = sr.rollouts;
  sum.tracking_ratio = eval::tracking_ratio(sr, cfg);
  {
    auto os = open_out(dir / "rollouts.csv");
    os << "index,seed,command,failed,reason,steps,seconds,total_reward,tracking\n";
    for (std::size_t i = 0; i < sr.runs.size(); ++i) {
      const auto& r = sr.runs[i];
      os << i << "," << eval::rollout_seed(v.seed, static_cast<int>(i)) << "," << fmt(r.command) << "," << r.failed
         << "," << env::to_string(r.reason) << "," << r.steps << "," << fmt(r.seconds) << "," << fmt(r.total_reward)
         << "," << fmt(r.tracking) << "\n";
    }
  }
  log << "success rate " << sr.sr << " (" << sr.failures << "/" << sr.rollouts << " early terminations)\n";

  if (v.latency) {
    sum.latency = eval::latency_limit(p, cfg, v.seed, v.latency_resolution, v.latency_rollouts, v.latency_threshold,
                                      v.latency_max, v.horizon, workers);
    auto os = open_out(dir / "latency.csv");
    os << "latency_ms,success_rate\n";
    for (const auto& [lat, s] : sum.latency->points) os << fmt(lat * 1000.0) << "," << fmt(s) << "\n";
    log << "latency limit " << sum.latency->limit_ms() << " ms\n";
  }

  const eval::TrackingReport tr =
      eval::velocity_tracking_report(p, cfg, v.tracking_command, v.tracking_duration, v.seed);
  {
    auto os = open_out(dir / "tracking.csv");
    os << "time,distance,velocity\n";
    const double x0 = tr.position.empty() ? 0.0 : tr.position.back() - tr.distance;
    for (std::size_t i = 0; i < tr.time.size(); ++i) {
      os << fmt(tr.time[i]) << "," << fmt(tr.position[i] - x0) << "," << fmt(tr.velocity[i]) << "\n";
    }
  }

  std::vector<std::pair<std::string, std::vector<eval::SweepPoint>>> sweeps;
  if (!v.push_impulses.empty()) {
    sweeps.emplace_back("push_impulse",
                        eval::push_sweep(p, cfg, v.push_impulses, v.rollouts, v.seed, v.push_time, v.horizon, workers));
  }
  const std::pair<eval::DynamicsParam, const std::vector<double>*> dyn[] = {
      {eval::DynamicsParam::MassScale, &v.mass_scales},
      {eval::DynamicsParam::Friction, &v.frictions},
      {eval::DynamicsParam::GainScale, &v.gain_scales}};
  for (const auto& [param, values] : dyn) {
    if (values->empty()) continue;
    sweeps.emplace_back(eval::to_string(param),
                        eval::dynamics_sweep(p, cfg, param, *values, v.rollouts, v.seed, v.horizon, workers));
  }
  if (!sweeps.empty()) {
    auto os = open_out(dir / "perturbation.csv");
    os << "parameter,value,success_rate\n";
    for (const auto& [name, pts] : sweeps) {
      for (const auto& pt : pts) os << name << "," << fmt(pt.value) << "," << fmt(pt.sr) << "\n";
    }
  }

  auto os = open_out(dir / "summary.csv");
  os << "metric,value\n";
  os << "policy," << p.meta.label() << "\n";
  os << "control_frequency," << fmt(p.meta.control_frequency) << "\n";
  os << "terrain," << sim::to_string(cfg.terrain_kind) << "\n";
  os << "seed," << v.seed << "\n";
  os << "horizon_s," << fmt(v.horizon) << "\n";
  os << "rollouts," << sr.rollouts << "\n";
  os << "early_terminations," << sr.failures << "\n";
  os << "success_rate," << fmt(sr.sr) << "\n";
  os << "tracking_ratio," << fmt(sum.tracking_ratio) << "\n";
  if (sum.latency) {
    os << "latency_limit_ms," << sum.latency->limit_ms() << "\n";
    os << "latency_failed_at_zero," << sum.latency->failed_at_zero << "\n";
    os << "latency_threshold," << fmt(v.latency_threshold) << "\n";
    os << "latency_rollouts," << v.latency_rollouts << "\n";
  }
  os << "tracking_command," << fmt(tr.command) << "\n";
  os << "tracking_mean_velocity," << fmt(tr.mean_velocity) << "\n";
  os << "tracking_max_velocity," << fmt(tr.max_velocity) << "\n";
  os << "tracking_rmse," << fmt(tr.rmse) << "\n";
  os << "tracking_distance," << fmt(tr.distance) << "\n";
  os << "tracking_time_to_2m," << fmt(tr.time_to_2m) << "\n";
  os << "tracking_failed," << tr.failed << "\n";
  return sum;
}

inline int cmd_eval(const std::string& checkpoint, const Config& c, const RunContext& ctx) {
  const rl::Policy p = rl::load_checkpoint(checkpoint);
  prepare_output_dir(ctx.out_dir, ctx.force);
  write_manifest(ctx, "eval", c, {{"checkpoint", checkpoint}, {"policy", p.meta.label()}});
  run_eval(p, c, ctx.out_dir, *ctx.log);
  return kOk;
}

// ---- gait ----

inline int cmd_gait(const std::string& checkpoint, const Config& c, const RunContext& ctx) {
  const rl::Policy p = rl::load_checkpoint(checkpoint);
  prepare_output_dir(ctx.out_dir, ctx.force);
  write_manifest(ctx, "gait", c, {{"checkpoint", checkpoint}, {"policy", p.meta.label()}});
  const env::EnvConfig cfg = eval::env_config_for(p, c.train.env);
  std::ofstream traj;
  std::function<void(const env::SubstepRecord&)> tap;
  if (ctx.trajectory) {
    traj = open_out(ctx.out_dir / "trajectory.csv");
    traj << "time,x,z,pitch,hip_front,knee_front,hip_hind,knee_hind,vx,vz,pitch_rate,dhip_front,dknee_front,dhip_hind,"
            "dknee_hind,tau_hip_front,tau_knee_front,tau_hip_hind,tau_knee_hind,target_hip_front,target_knee_front,"
            "target_hip_hind,target_knee_hind,reward,contact_front,contact_hind,command\n";
    tap = [&traj](const env::SubstepRecord& r) {
      traj << fmt(r.time);
      for (int i = 0; i < sim::kNumDof; ++i) traj << "," << fmt(r.state->q[i]);
      for (int i = 0; i < sim::kNumDof; ++i) traj << "," << fmt(r.state->v[i]);
      for (int i = 0; i < 4; ++i) traj << "," << fmt(r.torques[i]);
      for (int i = 0; i < 4; ++i) traj << "," << fmt(r.action[i]);
      traj << "," << fmt(r.reward) << "," << r.contacts[0] << "," << r.contacts[1] << "," << fmt(r.command) << "\n";
    };
  }
  const eval::GaitReport g = eval::gait_sequence(p, cfg, c.eval.gait_duration, c.eval.seed, c.eval.gait_command, tap);
  static const char* kFeet[] = {"front", "hind"};
  {
    auto os = open_out(ctx.out_dir / "gait_intervals.csv");
    os << "foot,phase,start,end,duration\n";
    for (std::size_t f = 0; f < 2; ++f) {
      for (const auto& iv : g.feet[f].intervals) {
        os << kFeet[f] << "," << (iv.stance ? "stance" : "swing") << "," << fmt(iv.start) << "," << fmt(iv.end) << ","
           << fmt(iv.duration()) << "\n";
      }
    }
  }
  {
    auto os = open_out(ctx.out_dir / "gait_contacts.csv");
    os << "time,front,hind\n";
    for (std::size_t i = 0; i < g.time.size(); ++i) {
      os << fmt(g.time[i]) << "," << g.contacts[0][i] << "," << g.contacts[1][i] << "\n";
    }
  }
  auto os = open_out(ctx.out_dir / "gait_summary.csv");
  os << "foot,mean_stance,mean_swing,stance_fraction\n";
  for (std::size_t f = 0; f < 2; ++f) {
    os << kFeet[f] << "," << fmt(g.feet[f].mean_stance) << "," << fmt(g.feet[f].mean_swing) << ","
       << fmt(g.feet[f].stance_fraction) << "\n";
  }
  os << "mean," << fmt(g.mean_stance()) << "," << fmt(g.mean_swing()) << ","
     << fmt(0.5 * (g.feet[0].stance_fraction + g.feet[1].stance_fraction)) << "\n";
  *ctx.log << "mean stance " << g.mean_stance() << " s, mean swing " << g.mean_swing() << " s"
           << (g.failed ? " (rollout terminated early)" : "") << "\n";
  return kOk;
}

// ---- jacobian ----

inline int cmd_jacobian(const std::string& checkpoint, const Config& c, const RunContext& ctx) {
  const rl::Policy p = rl::load_checkpoint(checkpoint);
  prepare_output_dir(ctx.out_dir, ctx.force);
  write_manifest(ctx, "jacobian", c, {{"checkpoint", checkpoint}, {"policy", p.meta.label()}});
  const env::EnvConfig cfg = eval::env_config_for(p, c.train.env);
  const auto agg = c.eval.jacobian_aggregate == "max" ? eval::SaliencyAggregate::Max : eval::SaliencyAggregate::Mean;
  const eval::Saliency s = eval::jacobian_saliency(p, cfg, c.eval.jacobian_duration, c.eval.seed,
                                                   c.eval.gait_command, agg);
  {
    auto os = open_out(ctx.out_dir / "saliency.csv");
    os << "action";
    for (const auto& l : s.labels) os << "," << l;
    os << "\n";
    for (Eigen::Index a = 0; a < s.matrix.rows(); ++a) {
      os << a;
      for (Eigen::Index j = 0; j < s.matrix.cols(); ++j) os << "," << fmt(s.matrix(a, j));
      os << "\n";
    }
  }
  auto os = open_out(ctx.out_dir / "saliency_blocks.csv");
  os << "block,mean_saliency\n";
  for (const auto& [name, val] : s.blocks) os << name << "," << fmt(val) << "\n";
  *ctx.log << "saliency over " << s.samples << " control steps\n";
  return kOk;
}

// ---- pd-study ----

inline int cmd_pd_study(const Config& c, const RunContext& ctx) {
  prepare_output_dir(ctx.out_dir, ctx.force);
  write_manifest(ctx, "pd-study", c);
  auto traces = open_out(ctx.out_dir / "pd_study.csv");
  traces << "update_frequency,time,setpoint";
  for (double kp : c.pd.plant.kp) traces << ",q_kp" << format_double(kp);
  traces << "\n";
  auto summary = open_out(ctx.out_dir / "pd_summary.csv");
  summary << "update_frequency,mean_spread,max_spread,amplitude\n";
  for (double f : c.pd.update_frequencies) {
    const eval::PdToyTrace t = eval::pd_toy_study(c.pd.plant, f);
    for (std::size_t i = 0; i < t.time.size(); ++i) {
      traces << fmt(f) << "," << fmt(t.time[i]) << "," << fmt(t.setpoint[i]);
      for (const auto& q : t.position) traces << "," << fmt(q[i]);
      traces << "\n";
    }
    summary << fmt(f) << "," << fmt(t.mean_spread) << "," << fmt(t.max_spread) << "," << fmt(c.pd.plant.amplitude)
            << "\n";
    *ctx.log << f << " Hz updates: mean spread " << t.mean_spread << " rad\n";
  }
  return kOk;
}

// ---- ablate ----

inline std::pair<std::string, std::string> split_labelled(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) return {fs::path(s).parent_path().filename().string() + "/" + fs::path(s).stem().string(), s};
  return {trim(s.substr(0, eq)), trim(s.substr(eq + 1))};
}

/// Table II layout: one row per checkpoint, one column per terrain. A
/// checkpoint that cannot be read gives an `absent` row and a nonzero exit.
inline int cmd_ablate(const std::vector<std::string>& checkpoints, const Config& c, const RunContext& ctx) {
  if (checkpoints.empty()) throw ConfigError("ablate: no checkpoints given (use -p label=path or [eval] checkpoints)");
  prepare_output_dir(ctx.out_dir, ctx.force);
  write_manifest(ctx, "ablate", c, {{"checkpoints", join(checkpoints)}});
  std::vector<eval::AblationEntry> grid;
  bool missing = false;
  for (const auto& item : checkpoints) {
    const auto [label, path] = split_labelled(item);
    eval::AblationEntry e{label, std::nullopt};
    try {
      e.policy = rl::load_checkpoint(path);
    } catch (const std::exception& ex) {
      *ctx.log << "ablate: " << label << ": " << ex.what() << " (cells marked absent)\n";
      missing = true;
    }
    grid.push_back(std::move(e));
  }
  std::vector<sim::TerrainKind> terrains;
  for (const auto& t : c.eval.terrains) terrains.push_back(sim::terrain_kind_from_string(t));
  const auto cells =
      eval::ablation_table(grid, terrains, c.train.env, c.eval.rollouts, c.eval.seed, c.eval.horizon, c.train.workers);
  auto os = open_out(ctx.out_dir / "ablation.csv");
  os << "policy";
  for (auto t : terrains) os << "," << sim::to_string(t);
  os << "\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    os << grid[i].label;
    for (std::size_t j = 0; j < terrains.size(); ++j) {
      const auto& cell = cells[i * terrains.size() + j];
      os << "," << (cell.sr ? fmt(*cell.sr) : std::string("absent"));
    }
    os << "\n";
  }
  return missing ? kAnalysisFailed : kOk;
}

// ---- sweep ----

inline std::string frequency_tag(double f) { return "f" + format_double(f) + "hz"; }

/// Train and evaluate one policy per frequency with the same b_s and seeds.
/// A failing frequency is recorded and the sweep moves on.
inline int cmd_sweep(const Config& base, const RunContext& ctx) {
  prepare_output_dir(ctx.out_dir, ctx.force);
  write_manifest(ctx, "sweep", base, {{"frequencies", format_doubles(base.sweep_frequencies)}});
  auto cmp = open_out(ctx.out_dir / "comparison.csv");
  cmp << "frequency,status,gamma,n_env,iterations,final_mean_return,final_tracking_ratio,success_rate,"
         "eval_tracking_ratio,latency_limit_ms,error\n";
  auto curves = open_out(ctx.out_dir / "returns_combined.csv");
  curves << "frequency,iteration,mean_return,mean_episode_length,failure_fraction,tracking_ratio\n";
  bool any_failed = false;
  for (double f : base.sweep_frequencies) {
    Config c = base;
    c.train.env.control_frequency = f;
    const fs::path dir = ctx.out_dir / frequency_tag(f);
    std::string status = "ok", error;
    double gamma = 0.0, final_return = 0.0, final_tracking = 0.0;
    int n_env = 0, iterations = 0;
    EvalSummary ev;
    try {
      gamma = c.train.gamma();
      n_env = c.train.n_envs();
      c.validate();
      *ctx.log << "== " << f << " Hz: gamma " << gamma << ", " << n_env << " envs\n";
      prepare_output_dir(dir, ctx.force);
      RunContext sub = ctx;
      sub.out_dir = dir;
      write_manifest(sub, "sweep/train+eval", c);
      const rl::TrainResult r = rl::train(c.train, dir.string());
      for (const auto& s : r.curve) {
        curves << fmt(f) << "," << s.iteration << "," << fmt(s.mean_return) << "," << fmt(s.mean_episode_length) << ","
               << fmt(s.failure_fraction) << "," << fmt(s.tracking_ratio) << "\n";
      }
      iterations = static_cast<int>(r.curve.size());
      if (!r.curve.empty()) {
        final_return = r.curve.back().mean_return;
        final_tracking = r.curve.back().tracking_ratio;
      }
      if (r.halted) throw rl::TrainingError(r.error);
      ev = run_eval(r.policy, c, dir, *ctx.log);
    } catch (const std::exception& ex) {
      status = "failed";
      error = ex.what();
      for (char& ch : error) {
        if (ch == ',' || ch == '\n') ch = ';';
      }
      any_failed = true;
      *ctx.log << f << " Hz failed: " << ex.what() << "\n";
    }
    cmp << fmt(f) << "," << status << "," << fmt(gamma) << "," << n_env << "," << iterations << "," << fmt(final_return)
        << "," << fmt(final_tracking) << "," << fmt(ev.sr) << "," << fmt(ev.tracking_ratio) << ","
        << (ev.latency ? std::to_string(ev.latency->limit_ms()) : std::string("")) << "," << error << "\n";
    cmp.flush();
    curves.flush();
  }
  return any_failed ? kAnalysisFailed : kOk;
}

// ---- terrain ----

inline int cmd_terrain(const Config& c, std::uint64_t seed, const RunContext& ctx) {
  prepare_output_dir(ctx.out_dir, ctx.force);
  write_manifest(ctx, "terrain", c, {{"terrain_seed", std::to_string(seed)}});
  const sim::Terrain t = sim::generate_terrain(c.train.env.terrain_kind, seed, c.train.env.terrain_params);
  auto os = open_out(ctx.out_dir / "terrain.csv");
  sim::write_terrain_csv(t, os);
  return kOk;
}

}  // namespace lfmc::app
