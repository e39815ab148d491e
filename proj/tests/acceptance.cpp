// Acceptance checks, one line per criterion. Trained policies are cached
// under $LFMC_ACCEPTANCE_CACHE (default: <build>/acceptance_cache), keyed by
// the full training config, so reruns only evaluate.
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "lfmc/app/commands.hpp"
#include "lfmc/rl/gae.hpp"
#include "lfmc/rl/hyper.hpp"

#ifndef LFMC_SOURCE_DIR
#define LFMC_SOURCE_DIR "."
#endif
#ifndef LFMC_DEFAULT_CACHE
#define LFMC_DEFAULT_CACHE "acceptance_cache"
#endif

using namespace lfmc;
namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string f(const char* format, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, format, a);
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

fs::path cache_dir() {
  const char* env = std::getenv("LFMC_ACCEPTANCE_CACHE");
  return env && *env ? fs::path(env) : fs::path(LFMC_DEFAULT_CACHE);
}

app::Config base_config() {
  return app::load_config(std::string(LFMC_SOURCE_DIR) + "/configs/acceptance.ini");
}

/// Trained policy for `f_t`, reusing a cached checkpoint of the same config.
rl::Policy trained_policy(double f_t) {
  app::Config c = base_config();
  c.train.env.control_frequency = f_t;
  c.validate();
  const std::string text = app::config_text(c);
  char key[32];
  std::snprintf(key, sizeof key, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  const fs::path dir = cache_dir() / (app::frequency_tag(f_t) + "-" + key);
  const fs::path ckpt = dir / "policy.txt";
  if (fs::exists(ckpt)) return rl::load_checkpoint(ckpt.string());
  std::fprintf(stderr, "training %g Hz policy (%d iterations) into %s\n", f_t, c.train.iterations, dir.c_str());
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "config.ini") << text;
  const auto t0 = std::chrono::steady_clock::now();
  const rl::TrainResult r = rl::train(c.train, dir.string(), [&](const rl::IterationStats& s) {
    if ((s.iteration + 1) % 50 == 0) {
      const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "  %g Hz iter %d  return %.3f  tracking %.3f  (%.0f s)\n", f_t, s.iteration + 1,
                   s.mean_return, s.tracking_ratio, el);
    }
  });
  if (r.halted) throw std::runtime_error("training at " + std::to_string(f_t) + " Hz halted: " + r.error);
  return r.policy;
}

// ---- 1 ----
Outcome discount_scaling() {
  double worst = 0.0;
  for (double ft : {5.0, 8.0, 10.0, 25.0, 50.0, 100.0, 200.0}) {
    const double g = rl::discount_for(ft, 3.0);
    worst = std::max(worst, std::abs(std::pow(g, ft * 3.0) - 0.5) / 0.5);
  }
  const double hl = rl::half_life_steps(0.98);
  return {worst <= 1e-12 && std::abs(hl - 34.0) <= 0.5,
          "max rel |gamma^(3 f_t) - 0.5| = " + f("%.2e", worst) + ", half-life(0.98) = " + f("%.3f", hl) + " steps"};
}

// ---- 2 ----
Outcome batch_scaling() {
  const int a = rl::n_envs_for(48000, 200.0, 1.0);
  const int b = rl::n_envs_for(48000, 5.0, 1.0);
  return {a == 240 && b == 9600, "200 Hz -> " + std::to_string(a) + " envs, 5 Hz -> " + std::to_string(b) + " envs"};
}

// ---- 3 ----
Outcome physics_sanity() {
  const sim::RobotModel m;
  const sim::Terrain ground = sim::generate_terrain(sim::TerrainKind::Flat, 0);
  const double dt = kSimStep;

  sim::RobotState s = sim::standing_state(m);
  s.q[sim::kZ] = 5.0;
  s.v << 0.5, 2.0, 0.8, 3.0, -4.0, -2.0, 5.0;
  const double e0 = sim::mechanical_energy(m, s, ground);
  double drift = 0.0;
  for (int i = 0; i < 400; ++i) {
    s = sim::dynamics_step(m, s, sim::Vec4::Zero(), ground, dt);
    drift = std::max(drift, std::abs(sim::mechanical_energy(m, s, ground) - e0) / std::abs(e0));
  }
  const double drift_per_s = drift / (400 * dt);

  sim::RobotState b = sim::standing_state(m);
  b.q[sim::kZ] = 3.0;
  b.v[sim::kX] = 0.7;
  b.v[sim::kZ] = 1.3;
  const double x0 = b.q[sim::kX], z0 = b.q[sim::kZ];
  double worst = 0.0;
  for (int n = 1; n <= 100; ++n) {
    b = sim::dynamics_step(m, b, sim::Vec4::Zero(), ground, dt);
    const double t = n * dt;
    worst = std::max({worst, std::abs(b.q[sim::kZ] - (z0 + 1.3 * t - 0.5 * m.gravity * t * t)),
                      std::abs(b.q[sim::kX] - (x0 + 0.7 * t))});
  }
  return {drift_per_s <= 1e-3 && worst <= 1e-6,
          "energy drift " + f("%.2e", drift_per_s) + " /s, ballistic error " + f("%.2e", worst) + " m"};
}

// ---- 4 ----
double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-10}); }

Outcome gradient_correctness() {
  Rng rng(derive_seed(4, "acceptance/gradients"));
  const int obs_dim = 35;
  rl::Policy p(obs_dim, {128, 128});
  p.init(rng, -0.5);
  p.actor.init(rng, 1.0);
  VectorXd mean(obs_dim), var(obs_dim);
  for (int i = 0; i < obs_dim; ++i) {
    mean[i] = uniform(rng, -0.5, 0.5);
    var[i] = uniform(rng, 0.2, 3.0);
  }
  p.norm.set(mean, var, 100.0);

  double worst_param = 0.0, worst_jac = 0.0;
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    VectorXd x(obs_dim);
    for (int i = 0; i < obs_dim; ++i) x[i] = uniform(rng, -2.0, 2.0);
    const MatrixXd xn = p.norm.normalize(MatrixXd(x));

    // Parameter gradients of L = w . net(x) + 0.5 |net(x)|^2, along a random direction.
    for (const rl::Mlp* net : {&p.actor, &p.critic}) {
      rl::Mlp::Cache cache;
      const MatrixXd out = net->forward(xn, cache);
      MatrixXd w(out.rows(), 1);
      for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = uniform(rng, -1.0, 1.0);
      rl::Mlp::Grad g = net->zero_grad();
      net->backward(cache, w + out, g);
      const VectorXd grad = rl::Mlp::flat(g);
      VectorXd dir(grad.size());
      for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = uniform(rng, -1.0, 1.0);
      auto loss = [&](double eps) {
        rl::Mlp q = *net;
        q.set_flat(net->flat() + eps * dir);
        const MatrixXd o = q.forward(xn);
        return (o.cwiseProduct(w)).sum() + 0.5 * o.squaredNorm();
      };
      worst_param = std::max(worst_param, rel(grad.dot(dir), (loss(h) - loss(-h)) / (2.0 * h)));
    }

    // Observation Jacobian (the saliency kernel), all columns.
    const MatrixXd j = p.observation_jacobian(x);
    MatrixXd fd(rl::kActionDim, obs_dim);
    for (int i = 0; i < obs_dim; ++i) {
      VectorXd a = x, b = x;
      a[i] += h;
      b[i] -= h;
      fd.col(i) = (p.act(a) - p.act(b)) / (2.0 * h);
    }
    worst_jac = std::max(worst_jac, (j - fd).norm() / std::max(fd.norm(), 1e-12));
  }

  // jacobian_saliency itself: its mean over one sampled state equals |J| there.
  rl::Policy q(18, {128, 128}, {50.0, env::ObservationMode::Blind, 0, false});
  q.init(rng, -0.5);
  q.actor.init(rng, 1.0);
  const env::EnvConfig cfg = eval::env_config_for(q, {});
  VectorXd first;
  const eval::Saliency s = eval::jacobian_saliency(q, cfg, 1.0 / 50.0, 3, 0.5);
  {
    eval::RolloutOptions o;
    o.seed = derive_seed(3, "eval/jacobian");
    o.horizon = 1.0 / 50.0;
    o.command = 0.5;
    o.on_observation = [&](const VectorXd& obs) { first = obs; };
    eval::rollout(q, cfg, o);
  }
  MatrixXd fd(rl::kActionDim, first.size());
  for (Eigen::Index i = 0; i < first.size(); ++i) {
    VectorXd a = first, b = first;
    a[i] += h;
    b[i] -= h;
    fd.col(i) = ((q.act(a) - q.act(b)) / (2.0 * h)).cwiseAbs();
  }
  const double sal_err = (s.matrix - fd).norm() / std::max(fd.norm(), 1e-12);
  return {worst_param < 1e-4 && worst_jac < 1e-4 && sal_err < 1e-4,
          "max rel err: parameters " + f("%.2e", worst_param) + ", observation Jacobian " + f("%.2e", worst_jac) +
              ", saliency " + f("%.2e", sal_err) + " (100 inputs, 2x128 nets)"};
}

// ---- 5 ----
Outcome reward_invariance() {
  // Record 2 s of open-loop stepping at the finest control rate, so the
  // trajectory contains touchdowns as well as the per-second terms.
  env::EnvConfig cfg;
  cfg.control_frequency = 200.0;
  cfg.terrain_kind = sim::TerrainKind::Flat;
  cfg.episode_length = 2.0;
  env::Environment e(cfg);
  std::vector<env::RecordedSubstep> traj;
  int touchdowns = 0;
  std::array<bool, 2> was{true, true};
  e.set_recorder([&](const env::SubstepRecord& r) {
    traj.push_back({*r.state, r.torques, r.command});
    for (std::size_t i = 0; i < 2; ++i) {
      touchdowns += r.contacts[i] && !was[i];
      was[i] = r.contacts[i];
    }
  });
  e.reset({.seed = 17, .fixed_command = true, .command = 0.5});
  const sim::Vec4 nominal = e.model().nominal_joints();
  for (int k = 0;; ++k) {
    sim::Vec4 q = nominal;
    for (int leg = 0; leg < 2; ++leg) {
      const double ph = 2.0 * std::numbers::pi * (3.0 * k / 200.0 + 0.5 * leg);
      q[2 * leg] += 0.1 * std::sin(ph);
      q[2 * leg + 1] -= 0.25 * std::max(0.0, std::cos(ph));
    }
    if (e.step(q).done) break;
  }
  traj.resize(traj.size() - traj.size() % 40);  // whole 10 Hz steps
  const double r10 = env::score_trajectory(traj, cfg.reward, e.model(), e.terrain(), 10.0, cfg.sim_step());
  const double r200 = env::score_trajectory(traj, cfg.reward, e.model(), e.terrain(), 200.0, cfg.sim_step());
  const double d = std::abs(r10 - r200) / std::max(std::abs(r10), 1e-12);
  return {d <= 1e-9 && traj.size() >= 400 && touchdowns > 0,
          "cumulative reward " + f("%.12f", r10) + " (10 Hz) vs " + f("%.12f", r200) + " (200 Hz), rel diff " +
              f("%.1e", d) + " over " + std::to_string(traj.size()) + " substeps, " + std::to_string(touchdowns) +
              " touchdowns"};
}

// ---- 6 ----
Outcome trainability() {
  const app::Config c = base_config();
  const rl::Policy p = trained_policy(10.0);
  env::EnvConfig cfg = eval::env_config_for(p, c.train.env);
  cfg.terrain_kind = sim::TerrainKind::Flat;
  const eval::SuccessRate sr = eval::success_rate(p, cfg, 100, c.eval.seed, 10.0);
  const double tr = eval::tracking_ratio(sr, cfg);
  return {sr.sr >= 0.9 && tr >= 0.7 && c.train.iterations <= 2000 && c.train.batch_size == 4800,
          "10 Hz, " + std::to_string(c.train.iterations) + " iterations: SR " + f("%.2f", sr.sr) +
              ", tracking " + f("%.3f", tr) + " of ceiling (100 rollouts of 10 s)"};
}

// ---- 7 ----
Outcome latency_trend() {
  const app::Config c = base_config();
  std::vector<int> limits;
  std::string detail;
  for (double ft : {10.0, 50.0, 200.0}) {
    const rl::Policy p = trained_policy(ft);
    const env::EnvConfig cfg = eval::env_config_for(p, c.train.env);
    const eval::LatencySweep s = eval::latency_limit(p, cfg, c.eval.seed, 0.005, c.eval.latency_rollouts,
                                                     c.eval.latency_threshold, c.eval.latency_max, 10.0);
    limits.push_back(s.failed_at_zero ? -1 : s.limit_ms());
    detail += (detail.empty() ? "" : ", ") + f("%g Hz ", ft) + (s.failed_at_zero ? "fails at 0" : std::to_string(s.limit_ms()) + " ms");
  }
  const bool ok = limits[0] >= 0 && limits[1] >= 0 && limits[2] >= 0 && limits[0] >= limits[1] && limits[1] >= limits[2];
  return {ok, detail};
}

// ---- 8 ----
Outcome pd_study() {
  const eval::PdToyConfig c;
  const double slow = eval::pd_toy_study(c, 5.0).mean_spread;
  const double fast = eval::pd_toy_study(c, 200.0).mean_spread;
  return {slow < fast, "spread at update instants: 5 Hz " + f("%.2e", slow) + " rad, 200 Hz " + f("%.2e", fast) + " rad"};
}

// ---- 9 ----
Outcome gait_trend() {
  const app::Config c = base_config();
  const rl::Policy p10 = trained_policy(10.0), p100 = trained_policy(100.0);
  const double dur = 10.0;
  const eval::GaitReport g10 = eval::gait_sequence(p10, eval::env_config_for(p10, c.train.env), dur, c.eval.seed, 0.5);
  const eval::GaitReport g100 =
      eval::gait_sequence(p100, eval::env_config_for(p100, c.train.env), dur, c.eval.seed, 0.5);
  return {g10.mean_stance() > g100.mean_stance() && !g10.failed && !g100.failed,
          "mean stance at 0.5 m/s: 10 Hz " + f("%.3f", g10.mean_stance()) + " s, 100 Hz " +
              f("%.3f", g100.mean_stance()) + " s (swing " + f("%.3f", g10.mean_swing()) + " / " +
              f("%.3f", g100.mean_swing()) + " s)"};
}

// ---- 10 ----
std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  app::Config c = app::parse_config_string(R"(
[train]
control_frequency = 20
episode_length = 0.5
batch_size = 80
iterations = 3
hidden = 16, 16
seed = 9
workers = 1
[eval]
rollouts = 3
horizon = 1
latency_rollouts = 2
latency_max = 0.02
tracking_duration = 1
gait_duration = 1
jacobian_duration = 0.5
terrains = flat, perlin
push_impulses = 5
mass_scales = 1.1
[sweep]
frequencies = 10, 20
)");
  const fs::path root = fs::temp_directory_path() / "lfmc_acceptance_determinism";
  fs::remove_all(root);
  std::ostringstream sink;
  auto run_all = [&](const fs::path& base) {
    auto ctx = [&](const char* name) {
      app::RunContext r;
      r.out_dir = base / name;
      r.log = &sink;
      return r;
    };
    int rc = app::cmd_train(c, ctx("train"));
    const std::string ckpt = (base / "train" / "policy.txt").string();
    rc |= app::cmd_eval(ckpt, c, ctx("eval"));
    rc |= app::cmd_gait(ckpt, c, ctx("gait"));
    rc |= app::cmd_jacobian(ckpt, c, ctx("jacobian"));
    rc |= app::cmd_pd_study(c, ctx("pd-study"));
    rc |= app::cmd_ablate({"a=" + ckpt}, c, ctx("ablate"));
    rc |= app::cmd_sweep(c, ctx("sweep"));
    rc |= app::cmd_terrain(c, 4, ctx("terrain"));
    return rc;
  };
  const int rc1 = run_all(root / "a");
  const int rc2 = run_all(root / "b");
  int files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (e.path().extension() != ".csv") continue;
    ++files;
    const fs::path other = root / "b" / fs::relative(e.path(), root / "a");
    if (!fs::exists(other) || slurp(other) != slurp(e.path())) ++differing;
  }
  fs::remove_all(root);
  return {rc1 == 0 && rc2 == 0 && files >= 15 && differing == 0,
          std::to_string(files) + " CSV files from 8 subcommands, " + std::to_string(differing) + " differ between reruns"};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select criteria by number; default is all of them.
  std::vector<bool> selected(11, argc <= 1);
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k >= 1 && k <= 10) selected[static_cast<std::size_t>(k)] = true;
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"discount scaling", discount_scaling},
      {"batch scaling", batch_scaling},
      {"physics sanity", physics_sanity},
      {"gradient correctness", gradient_correctness},
      {"reward frequency invariance", reward_invariance},
      {"trainability (10 Hz)", trainability},
      {"latency trend", latency_trend},
      {"PD toy study", pd_study},
      {"gait trend", gait_trend},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i + 1]) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %2zu %-28s %s  %s\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
