#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lfmc/common.hpp"
#include "lfmc/env/environment.hpp"
#include "lfmc/parallel.hpp"
#include "lfmc/rl/gae.hpp"
#include "lfmc/rl/hyper.hpp"
#include "lfmc/rl/policy.hpp"
#include "lfmc/rl/ppo.hpp"

namespace lfmc::rl {

struct TrainConfig {
  env::EnvConfig env;  // env.control_frequency is f_t, env.episode_length is N
  double half_life = 3.0;  // n_half, seconds
  std::int64_t batch_size = 4800;
  double gae_lambda = 0.95;
  PpoConfig ppo;
  int iterations = 300;
  std::uint64_t seed = 1;
  std::vector<int> hidden{128, 128};
  double initial_log_std = -0.5;
  bool domain_randomization = false;
  env::RandomizationRanges ranges;
  bool actuator_lag = false;
  env::Range lag_range{0.005, 0.02};
  int workers = 1;
  int checkpoint_interval = 100;  // iterations; 0 disables periodic checkpoints

  double control_frequency() const { return env.control_frequency; }
  double gamma() const { return discount_for(env.control_frequency, half_life); }
  int n_envs() const { return n_envs_for(batch_size, env.control_frequency, env.episode_length); }
  int steps_per_env() const { return env.episode_steps(); }

  void validate() const {
    env.validate();
    ppo.validate();
    ranges.validate();
    (void)gamma();
    (void)n_envs();
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("train: lambda must be in [0, 1]");
    if (iterations < 0) throw ConfigError("train: iterations must be non-negative");
    if (hidden.empty()) throw ConfigError("train: need at least one hidden layer");
    if (workers < 1) throw ConfigError("train: workers must be >= 1");
    if (checkpoint_interval < 0) throw ConfigError("train: checkpoint interval must be non-negative");
    if (lag_range.hi < lag_range.lo || lag_range.lo < 0.0) throw ConfigError("train: invalid lag range");
  }

  PolicyMeta meta() const {
    return {env.control_frequency, env.observation.mode, env.observation.history, domain_randomization};
  }
};

struct IterationStats {
  int iteration = 0;
  double mean_return = 0.0;          // over episodes finished this iteration
  double mean_episode_length = 0.0;  // s
  int episodes = 0;
  double failure_fraction = 0.0;     // finished episodes that ended in an invalid state
  double tracking_ratio = 0.0;       // tracking reward per second / tracking weight
  std::int64_t steps = 0;
  PpoStats ppo;
};

/// Rollout collection over n_env persistent environments plus PPO updates.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg)
      : cfg_((cfg.validate(), std::move(cfg))),
        n_env_(cfg_.n_envs()),
        horizon_(cfg_.steps_per_env()),
        gamma_(cfg_.gamma()),
        pool_(cfg_.workers),
        policy_(cfg_.env.observation.dim(), cfg_.hidden, cfg_.meta()),
        learner_((init_policy(), policy_), cfg_.ppo),
        action_rng_(make_rng(cfg_.seed, "train/actions")),
        shuffle_rng_(make_rng(cfg_.seed, "train/minibatch")) {
    envs_.reserve(static_cast<std::size_t>(n_env_));
    for (int e = 0; e < n_env_; ++e) envs_.push_back(std::make_unique<env::Environment>(cfg_.env));
    episode_index_.assign(static_cast<std::size_t>(n_env_), 0);
    episode_return_.assign(static_cast<std::size_t>(n_env_), 0.0);
    episode_steps_.assign(static_cast<std::size_t>(n_env_), 0);
    obs_ = MatrixXd(policy_.obs_dim(), n_env_);
    pool_.parallel_for(n_env_, [&](int e) { obs_.col(e) = reset_env(e); });
  }

  const TrainConfig& config() const { return cfg_; }
  const Policy& policy() const { return policy_; }
  Policy& policy() { return policy_; }
  int n_envs() const { return n_env_; }
  int iteration() const { return iteration_; }

  IterationStats iterate() {
    const Eigen::Index T = horizon_, B = T * n_env_;
    const int od = policy_.obs_dim();
    Batch batch;
    batch.obs.resize(od, B);
    batch.actions.resize(kActionDim, B);
    batch.old_mean.resize(kActionDim, B);
    batch.old_log_std = policy_.log_std;
    batch.old_log_prob.resize(B);
    MatrixXd raw(od, B);
    std::vector<double> rewards(static_cast<std::size_t>(B)), values(static_cast<std::size_t>(B));
    std::vector<bool> done(static_cast<std::size_t>(B)), terminal(static_cast<std::size_t>(B));
    std::vector<Eigen::Index> truncated;  // columns needing a bootstrap from final_obs
    MatrixXd final_obs(od, 0);
    std::vector<StepOut> out(static_cast<std::size_t>(n_env_));

    IterationStats st;
    st.iteration = iteration_;
    double tracking = 0.0, ret_sum = 0.0, len_sum = 0.0;
    int failures = 0;
    const VectorXd std_dev = policy_.log_std.array().exp();
    std::normal_distribution<double> normal(0.0, 1.0);

    for (Eigen::Index t = 0; t < T; ++t) {
      const MatrixXd nobs = policy_.norm.normalize(obs_);
      const MatrixXd mean = policy_.actor.forward(nobs);
      const MatrixXd val = policy_.critic.forward(nobs);
      MatrixXd act(kActionDim, n_env_);
      for (int e = 0; e < n_env_; ++e) {
        for (int k = 0; k < kActionDim; ++k) act(k, e) = mean(k, e) + std_dev[k] * normal(action_rng_);
      }
      pool_.parallel_for(n_env_, [&](int e) { out[static_cast<std::size_t>(e)] = step_env(e, act.col(e)); });

      for (int e = 0; e < n_env_; ++e) {
        const Eigen::Index c = t * n_env_ + e;
        const auto& o = out[static_cast<std::size_t>(e)];
        batch.obs.col(c) = nobs.col(e);
        raw.col(c) = obs_.col(e);
        batch.actions.col(c) = act.col(e);
        batch.old_mean.col(c) = mean.col(e);
        batch.old_log_prob[c] = gaussian_log_prob(mean.col(e), policy_.log_std, act.col(e));
        values[static_cast<std::size_t>(c)] = val(0, e);
        rewards[static_cast<std::size_t>(c)] = o.reward;
        done[static_cast<std::size_t>(c)] = o.done;
        terminal[static_cast<std::size_t>(c)] = o.terminal;
        tracking += o.tracking;
        if (o.done) {
          ++st.episodes;
          ret_sum += o.episode_return;
          len_sum += o.episode_seconds;
          if (o.terminal) ++failures;
          if (!o.terminal) {
            truncated.push_back(c);
            final_obs.conservativeResize(od, final_obs.cols() + 1);
            final_obs.col(final_obs.cols() - 1) = o.final_obs;
          }
        }
        obs_.col(e) = o.next_obs;
      }
    }

    // Bootstrap values: successor state of every transition.
    const MatrixXd last_v = policy_.value(obs_);
    const MatrixXd trunc_v = final_obs.cols() ? policy_.value(final_obs) : MatrixXd(1, 0);
    std::vector<double> next_values(static_cast<std::size_t>(B), 0.0);
    for (Eigen::Index c = 0; c < B; ++c) {
      const Eigen::Index t = c / n_env_, e = c % n_env_;
      next_values[static_cast<std::size_t>(c)] = t + 1 < T ? values[static_cast<std::size_t>(c + n_env_)] : last_v(0, e);
    }
    for (std::size_t i = 0; i < truncated.size(); ++i) {
      next_values[static_cast<std::size_t>(truncated[i])] = trunc_v(0, static_cast<Eigen::Index>(i));
    }

    batch.advantages.resize(B);
    batch.returns.resize(B);
    std::vector<double> r(static_cast<std::size_t>(T)), v(r), nv(r);
    std::vector<bool> d(static_cast<std::size_t>(T)), term(d);
    for (int e = 0; e < n_env_; ++e) {
      for (Eigen::Index t = 0; t < T; ++t) {
        const auto c = static_cast<std::size_t>(t * n_env_ + e);
        const auto ti = static_cast<std::size_t>(t);
        r[ti] = rewards[c];
        v[ti] = values[c];
        nv[ti] = next_values[c];
        d[ti] = done[c];
        term[ti] = terminal[c];
      }
      const GaeResult g = gae(r, v, nv, d, term, gamma_, cfg_.gae_lambda);
      for (Eigen::Index t = 0; t < T; ++t) {
        batch.advantages[t * n_env_ + e] = g.advantages[static_cast<std::size_t>(t)];
        batch.returns[t * n_env_ + e] = g.returns[static_cast<std::size_t>(t)];
      }
    }
    std::vector<double> adv(batch.advantages.data(), batch.advantages.data() + B);
    normalize_advantages(adv);
    batch.advantages = Eigen::Map<VectorXd>(adv.data(), B);

    st.ppo = learner_.update(policy_, batch, shuffle_rng_);
    policy_.norm.update(raw);

    st.steps = B;
    st.mean_return = st.episodes ? ret_sum / st.episodes : std::nan("");
    st.mean_episode_length = st.episodes ? len_sum / st.episodes : std::nan("");
    st.failure_fraction = st.episodes ? static_cast<double>(failures) / st.episodes : 0.0;
    const double seconds = static_cast<double>(B) / cfg_.control_frequency();
    st.tracking_ratio = tracking / seconds / cfg_.env.reward.tracking;
    ++iteration_;
    return st;
  }

 private:
  struct StepOut {
    double reward = 0.0;
    double tracking = 0.0;
    bool done = false;
    bool terminal = false;
    double episode_return = 0.0;
    double episode_seconds = 0.0;
    VectorXd final_obs;
    VectorXd next_obs;
  };

  void init_policy() {
    Rng rng = make_rng(cfg_.seed, "train/init");
    policy_.init(rng, cfg_.initial_log_std);
  }

  VectorXd reset_env(int e) {
    const auto i = static_cast<std::size_t>(e);
    const std::uint64_t seed = derive_seed(derive_seed(cfg_.seed, "train/env", i), "episode", episode_index_[i]++);
    auto& env = *envs_[i];
    if (cfg_.domain_randomization || cfg_.actuator_lag) {
      env::RandomizationRanges r = cfg_.ranges;
      if (!cfg_.domain_randomization) {
        r.mass_scale = {1.0, 1.0};
        r.friction = {cfg_.env.model.friction, cfg_.env.model.friction};
        r.gain_scale = {1.0, 1.0};
        r.latency = {cfg_.env.actuation.latency, cfg_.env.actuation.latency};
      }
      if (cfg_.actuator_lag) r.lag = cfg_.lag_range;
      Rng rng(derive_seed(seed, "dr"));
      const auto [m, a] = env::apply_dynamics_randomization(rng, cfg_.env.model, cfg_.env.actuation, r);
      env.set_dynamics(m, a);
    }
    episode_return_[i] = 0.0;
    episode_steps_[i] = 0;
    return env.reset({.seed = seed});
  }

  StepOut step_env(int e, const VectorXd& action) {
    const auto i = static_cast<std::size_t>(e);
    auto& env = *envs_[i];
    const env::StepResult r = env.step(env.desired_from_action(action));
    StepOut o;
    o.reward = r.reward;
    o.tracking = r.terms.tracking;
    o.done = r.done;
    o.terminal = r.terminal;
    episode_return_[i] += r.reward;
    ++episode_steps_[i];
    if (r.done) {
      o.episode_return = episode_return_[i];
      o.episode_seconds = episode_steps_[i] / cfg_.control_frequency();
      o.final_obs = r.observation;
      o.next_obs = reset_env(e);
    } else {
      o.next_obs = r.observation;
    }
    return o;
  }

  TrainConfig cfg_;
  int n_env_;
  int horizon_;
  double gamma_;
  WorkerPool pool_;
  Policy policy_;
  PpoLearner learner_;
  Rng action_rng_;
  Rng shuffle_rng_;
  std::vector<std::unique_ptr<env::Environment>> envs_;
  std::vector<std::uint64_t> episode_index_;
  std::vector<double> episode_return_;
  std::vector<int> episode_steps_;
  MatrixXd obs_;
  int iteration_ = 0;
};

inline void write_returns_header(std::ostream& os) {
  os << "iteration,mean_return,mean_episode_length,episodes,failure_fraction,tracking_ratio,steps,"
        "surrogate_loss,value_loss,entropy,approx_kl,clip_fraction,learning_rate\n";
}

inline void write_returns_row(std::ostream& os, const IterationStats& s) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%d,%.17g,%.17g,%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.iteration,
                s.mean_return, s.mean_episode_length, s.episodes, s.failure_fraction, s.tracking_ratio,
                static_cast<long long>(s.steps), s.ppo.surrogate, s.ppo.value, s.ppo.entropy, s.ppo.approx_kl,
                s.ppo.clip_fraction, s.ppo.learning_rate);
  os << buf;
}

struct TrainResult {
  Policy policy;
  std::vector<IterationStats> curve;
  bool halted = false;
  std::string error;
};

/// Runs cfg.iterations iterations. With a non-empty `out_dir` writes
/// returns.csv, periodic checkpoint_<i>.txt and the final policy.txt; a fault
/// saves policy_halt.txt and stops.
inline TrainResult train(const TrainConfig& cfg, const std::string& out_dir = "",
                         const std::function<void(const IterationStats&)>& on_iteration = {}) {
  Trainer trainer(cfg);
  TrainResult res;
  std::ofstream csv;
  namespace fs = std::filesystem;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    csv.open(fs::path(out_dir) / "returns.csv");
    if (!csv) throw ConfigError("cannot write " + (fs::path(out_dir) / "returns.csv").string());
    write_returns_header(csv);
  }
  for (int it = 0; it < cfg.iterations; ++it) {
    try {
      const IterationStats s = trainer.iterate();
      res.curve.push_back(s);
      if (csv.is_open()) {
        write_returns_row(csv, s);
        csv.flush();
      }
      if (on_iteration) on_iteration(s);
    } catch (const std::exception& e) {  // TrainingError, EnvironmentFault
      res.halted = true;
      res.error = e.what();
      if (!out_dir.empty()) save_checkpoint((fs::path(out_dir) / "policy_halt.txt").string(), trainer.policy());
      break;
    }
    if (!out_dir.empty() && cfg.checkpoint_interval > 0 && (it + 1) % cfg.checkpoint_interval == 0) {
      save_checkpoint((fs::path(out_dir) / ("checkpoint_" + std::to_string(it + 1) + ".txt")).string(), trainer.policy());
    }
  }
  res.policy = trainer.policy();
  if (!out_dir.empty() && !res.halted) save_checkpoint((fs::path(out_dir) / "policy.txt").string(), res.policy);
  return res;
}

}  // namespace lfmc::rl
