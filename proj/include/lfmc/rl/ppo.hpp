#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lfmc/common.hpp"
#include "lfmc/rl/policy.hpp"

namespace lfmc::rl {

/// Raised when the optimizer produces a non-finite loss or gradient.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PpoConfig {
  double clip = 0.2;
  int epochs = 5;
  int minibatches = 4;
  double learning_rate = 1e-3;
  double value_coef = 1.0;
  double entropy_coef = 0.002;
  double max_grad_norm = 1.0;
  // Step-size rule: Adam, optionally with the rate adapted to keep the
  // per-minibatch KL divergence near `desired_kl`.
  bool adaptive_lr = true;
  double desired_kl = 0.01;
  double lr_min = 1e-5;
  double lr_max = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("ppo: clip must be in (0, 1)");
    if (epochs < 1 || minibatches < 1) throw ConfigError("ppo: epochs and minibatches must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("ppo: learning rate must be positive");
    if (value_coef < 0.0 || entropy_coef < 0.0) throw ConfigError("ppo: loss coefficients must be non-negative");
    if (!(max_grad_norm > 0.0)) throw ConfigError("ppo: max_grad_norm must be positive");
    if (adaptive_lr && !(desired_kl > 0.0 && lr_min > 0.0 && lr_max >= lr_min)) {
      throw ConfigError("ppo: invalid adaptive learning-rate bounds");
    }
  }
};

/// One iteration's transitions. Observations are already normalized.
struct Batch {
  MatrixXd obs;       // obs_dim x n
  MatrixXd actions;   // 4 x n
  MatrixXd old_mean;  // 4 x n
  VectorXd old_log_std;
  VectorXd old_log_prob;
  VectorXd advantages;
  VectorXd returns;

  Eigen::Index size() const { return obs.cols(); }
};

struct PpoLoss {
  double total = 0.0;
  double surrogate = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  VectorXd grad;  // flat, in policy_params order
};

struct PpoStats {
  double surrogate = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double learning_rate = 0.0;
  int updates = 0;
};

/// Flat trainable parameters: actor, log-std, critic.
inline VectorXd policy_params(const Policy& p) {
  const VectorXd a = p.actor.flat(), c = p.critic.flat();
  VectorXd out(a.size() + p.log_std.size() + c.size());
  out << a, p.log_std, c;
  return out;
}

inline void set_policy_params(Policy& p, const VectorXd& flat) {
  const Eigen::Index na = p.actor.num_params(), ns = p.log_std.size(), nc = p.critic.num_params();
  if (flat.size() != na + ns + nc) throw ContractViolation("ppo: parameter vector size mismatch");
  p.actor.set_flat(flat.head(na));
  p.log_std = flat.segment(na, ns);
  p.critic.set_flat(flat.tail(nc));
}

/// Clipped surrogate + value MSE - entropy bonus on the selected columns,
/// with its exact gradient.
inline PpoLoss ppo_loss(const Policy& p, const Batch& b, const std::vector<Eigen::Index>& idx, const PpoConfig& cfg) {
  const auto m = static_cast<Eigen::Index>(idx.size());
  if (m == 0) throw ContractViolation("ppo_loss: empty minibatch");
  MatrixXd obs(b.obs.rows(), m), act(kActionDim, m);
  VectorXd adv(m), ret(m), old_lp(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::Index i = idx[static_cast<std::size_t>(j)];
    obs.col(j) = b.obs.col(i);
    act.col(j) = b.actions.col(i);
    adv[j] = b.advantages[i];
    ret[j] = b.returns[i];
    old_lp[j] = b.old_log_prob[i];
  }

  Mlp::Cache ca, cc;
  const MatrixXd mean = p.actor.forward(obs, ca);
  const MatrixXd value = p.critic.forward(obs, cc);
  const VectorXd inv_var = (-2.0 * p.log_std.array()).exp();
  const double inv_m = 1.0 / static_cast<double>(m);

  PpoLoss out;
  MatrixXd d_mean = MatrixXd::Zero(kActionDim, m);
  VectorXd d_log_std = VectorXd::Zero(kActionDim);
  MatrixXd d_value(1, m);
  int clipped = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const VectorXd diff = act.col(j) - mean.col(j);
    const double lp = gaussian_log_prob(mean.col(j), p.log_std, act.col(j));
    const double ratio = std::exp(lp - old_lp[j]);
    const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const double s1 = ratio * adv[j], s2 = clipped_ratio * adv[j];
    out.surrogate -= std::min(s1, s2) * inv_m;
    if (std::abs(ratio - 1.0) > cfg.clip) ++clipped;
    if (s1 <= s2) {
      // d(-ratio * A)/d logp = -ratio * A
      const double g = -adv[j] * ratio * inv_m;
      d_mean.col(j) = g * diff.cwiseProduct(inv_var);
      d_log_std += g * (diff.array().square() * inv_var.array() - 1.0).matrix();
    }
    const double err = value(0, j) - ret[j];
    out.value += cfg.value_coef * err * err * inv_m;
    d_value(0, j) = 2.0 * cfg.value_coef * err * inv_m;
  }
  out.entropy = gaussian_entropy(p.log_std);
  d_log_std.array() -= cfg.entropy_coef;
  out.total = out.surrogate + out.value - cfg.entropy_coef * out.entropy;
  out.clip_fraction = clipped * inv_m;

  Mlp::Grad ga = p.actor.zero_grad(), gc = p.critic.zero_grad();
  p.actor.backward(ca, d_mean, ga);
  p.critic.backward(cc, d_value, gc);
  const VectorXd fa = Mlp::flat(ga), fc = Mlp::flat(gc);
  out.grad.resize(fa.size() + d_log_std.size() + fc.size());
  out.grad << fa, d_log_std, fc;
  return out;
}

class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index n, double beta1, double beta2, double eps)
      : m_(VectorXd::Zero(n)), v_(VectorXd::Zero(n)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(VectorXd& params, const VectorXd& grad, double lr) {
    if (grad.size() != m_.size() || params.size() != m_.size()) throw ContractViolation("adam: size mismatch");
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, t_), c2 = 1.0 - std::pow(beta2_, t_);
    params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

  int steps() const { return t_; }

 private:
  VectorXd m_, v_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int t_ = 0;
};

/// Mean KL(old || new) between diagonal Gaussians over the selected columns.
inline double mean_kl(const Batch& b, const std::vector<Eigen::Index>& idx, const MatrixXd& new_mean,
                      const VectorXd& new_log_std) {
  const VectorXd old_var = (2.0 * b.old_log_std.array()).exp();
  const VectorXd new_var = (2.0 * new_log_std.array()).exp();
  double kl = 0.0;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const VectorXd d = b.old_mean.col(idx[j]) - new_mean.col(static_cast<Eigen::Index>(j));
    kl += (new_log_std - b.old_log_std).sum() +
          ((old_var.array() + d.array().square()) / (2.0 * new_var.array())).sum() - 0.5 * kActionDim;
  }
  return kl / static_cast<double>(idx.size());
}

/// Owns the optimizer state; applies PPO epochs to a policy.
class PpoLearner {
 public:
  PpoLearner(const Policy& p, PpoConfig cfg)
      : cfg_(cfg), adam_(policy_params(p).size(), cfg.beta1, cfg.beta2, cfg.adam_eps), lr_(cfg.learning_rate) {
    cfg_.validate();
  }

  double learning_rate() const { return lr_; }
  const PpoConfig& config() const { return cfg_; }

  PpoStats update(Policy& p, const Batch& b, Rng& rng) {
    const Eigen::Index n = b.size();
    if (n == 0) throw ContractViolation("ppo: empty batch");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    PpoStats s;
    const int mb = std::min<int>(cfg_.minibatches, static_cast<int>(n));
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::shuffle(order.begin(), order.end(), rng);
      for (int k = 0; k < mb; ++k) {
        const auto lo = static_cast<std::size_t>(n * k / mb), hi = static_cast<std::size_t>(n * (k + 1) / mb);
        const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                            order.begin() + static_cast<std::ptrdiff_t>(hi));
        PpoLoss loss = ppo_loss(p, b, idx, cfg_);
        if (!std::isfinite(loss.total) || !loss.grad.allFinite()) {
          throw TrainingError("ppo: non-finite loss (surrogate " + std::to_string(loss.surrogate) + ", value " +
                              std::to_string(loss.value) + ")");
        }
        const double norm = loss.grad.norm();
        if (norm > cfg_.max_grad_norm) loss.grad *= cfg_.max_grad_norm / norm;
        VectorXd params = policy_params(p);
        adam_.step(params, loss.grad, lr_);
        set_policy_params(p, params);

        MatrixXd sel(b.obs.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j) sel.col(static_cast<Eigen::Index>(j)) = b.obs.col(idx[j]);
        const double kl = mean_kl(b, idx, p.actor.forward(sel), p.log_std);
        if (cfg_.adaptive_lr) {
          if (kl > 2.0 * cfg_.desired_kl) {
            lr_ = std::max(cfg_.lr_min, lr_ / 1.5);
          } else if (kl < 0.5 * cfg_.desired_kl) {
            lr_ = std::min(cfg_.lr_max, lr_ * 1.5);
          }
        }
        s.surrogate += loss.surrogate;
        s.value += loss.value;
        s.entropy += loss.entropy;
        s.approx_kl += kl;
        s.clip_fraction += loss.clip_fraction;
        ++s.updates;
      }
    }
    const double inv = 1.0 / s.updates;
    s.surrogate *= inv;
    s.value *= inv;
    s.entropy *= inv;
    s.approx_kl *= inv;
    s.clip_fraction *= inv;
    s.learning_rate = lr_;
    return s;
  }

 private:
  PpoConfig cfg_;
  Adam adam_;
  double lr_;
};

}  // namespace lfmc::rl
