#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "lfmc/rl/gae.hpp"
#include "lfmc/rl/hyper.hpp"
#include "lfmc/rl/trainer.hpp"

using namespace lfmc;
using namespace lfmc::rl;

namespace {

MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * uniform(rng, -1.0, 1.0);
  return m;
}

// Scalar test loss with a nonlinear dependence on the output.
double scalar_loss(const MatrixXd& out, const MatrixXd& w) { return (out.cwiseProduct(w)).sum() + 0.5 * out.squaredNorm(); }

double rel_err(const VectorXd& a, const VectorXd& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

}  // namespace

TEST(Discount, PaperFormulaExamples) {
  EXPECT_NEAR(discount_for(5.0, 3.0), 0.954841, 1e-6);
  EXPECT_NEAR(discount_for(200.0, 3.0), 0.998845, 1e-6);
  EXPECT_NEAR(discount_for(10.0, 3.0), 0.977159, 1e-6);
}

TEST(Discount, HalvesOverHalfLife) {
  for (double f : {5.0, 8.0, 10.0, 25.0, 50.0, 100.0, 200.0}) {
    for (double n : {0.5, 1.0, 3.0, 7.5}) {
      const double g = discount_for(f, n);
      EXPECT_NEAR(std::pow(g, f * n), 0.5, 0.5e-12) << f << " " << n;
    }
  }
}

TEST(Discount, HalfLifeOfPoint98IsAbout34Steps) { EXPECT_NEAR(half_life_steps(0.98), 34.0, 0.5); }

TEST(Discount, RejectsNonPositive) {
  EXPECT_THROW(discount_for(0.0, 3.0), ConfigError);
  EXPECT_THROW(discount_for(10.0, -1.0), ConfigError);
}

TEST(BatchScaling, PaperPairs) {
  EXPECT_EQ(n_envs_for(48000, 200.0, 1.0), 240);
  EXPECT_EQ(n_envs_for(48000, 5.0, 1.0), 9600);
  EXPECT_EQ(n_envs_for(48000, 10.0, 1.0), 4800);
  EXPECT_EQ(n_envs_for(4800, 8.0, 1.0), 600);
}

TEST(BatchScaling, IndivisibleSuggestsNearestBatch) {
  try {
    n_envs_for(4810, 25.0, 1.0);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("4800"), std::string::npos) << e.what();
  }
}

TEST(Mlp, ZeroWeightsGiveZeroOutput) {
  const Mlp net({6, 8, 8, 3});
  Rng rng(1);
  EXPECT_EQ(net.forward(random_matrix(rng, 6, 5)), MatrixXd::Zero(3, 5));
}

TEST(Mlp, PureAndShapeChecked) {
  Mlp net({5, 7, 2});
  Rng rng(2);
  net.init(rng, 1.0);
  const VectorXd x = random_matrix(rng, 5, 1);
  EXPECT_EQ(net.forward(x), net.forward(x));
  EXPECT_THROW(net.forward(VectorXd(VectorXd::Zero(4))), ContractViolation);
}

TEST(Mlp, FlatRoundTrip) {
  Mlp net({3, 4, 2});
  Rng rng(3);
  net.init(rng, 1.0);
  Mlp copy({3, 4, 2});
  copy.set_flat(net.flat());
  EXPECT_TRUE(copy == net);
  EXPECT_EQ(net.flat()[1], net.weight(0)(0, 1));  // row-major
}

// Oracle: central finite differences of a scalar loss over every parameter.
TEST(Mlp, ParameterGradientMatchesFiniteDifferences) {
  Rng rng(4);
  for (const std::vector<int>& dims : {std::vector<int>{18, 32, 32, 4}, std::vector<int>{18, 32, 32, 1}}) {
    Mlp net(dims);
    net.init(rng, 1.0);
    const MatrixXd x = random_matrix(rng, dims.front(), 3, 2.0);
    const MatrixXd w = random_matrix(rng, dims.back(), 3);
    Mlp::Cache c;
    const MatrixXd out = net.forward(x, c);
    Mlp::Grad g = net.zero_grad();
    net.backward(c, w + out, g);
    const VectorXd analytic = Mlp::flat(g);

    const VectorXd p = net.flat();
    VectorXd numeric(p.size());
    const double eps = 1e-5;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      VectorXd q = p;
      q[i] += eps;
      net.set_flat(q);
      const double up = scalar_loss(net.forward(x), w);
      q[i] -= 2 * eps;
      net.set_flat(q);
      const double down = scalar_loss(net.forward(x), w);
      numeric[i] = (up - down) / (2 * eps);
    }
    net.set_flat(p);
    EXPECT_LT(rel_err(analytic, numeric), 1e-6);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      ASSERT_NEAR(analytic[i], numeric[i], 1e-4 * std::max(std::abs(numeric[i]), 1e-3)) << i;
    }
  }
}

TEST(Mlp, InputJacobianMatchesFiniteDifferences) {
  Rng rng(5);
  Mlp net({10, 16, 16, 4});
  net.init(rng, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const VectorXd x = random_matrix(rng, 10, 1, 2.0);
    const MatrixXd j = net.input_jacobian(x);
    MatrixXd fd(4, 10);
    for (int i = 0; i < 10; ++i) {
      VectorXd a = x, b = x;
      a[i] += 1e-5;
      b[i] -= 1e-5;
      fd.col(i) = (net.forward(a) - net.forward(b)) / 2e-5;
    }
    EXPECT_LT((j - fd).norm() / fd.norm(), 1e-8);
  }
}

TEST(Gaussian, LogProbMatchesDensity) {
  const VectorXd mean = (VectorXd(2) << 0.3, -1.0).finished();
  const VectorXd log_std = (VectorXd(2) << std::log(0.5), std::log(2.0)).finished();
  const VectorXd a = (VectorXd(2) << 0.1, 0.5).finished();
  auto pdf = [](double x, double m, double s) { return std::exp(-0.5 * (x - m) * (x - m) / (s * s)) / (s * std::sqrt(2 * kPi)); };
  EXPECT_NEAR(gaussian_log_prob(mean, log_std, a), std::log(pdf(0.1, 0.3, 0.5) * pdf(0.5, -1.0, 2.0)), 1e-12);
  EXPECT_NEAR(gaussian_entropy(VectorXd::Zero(1)), 0.5 * std::log(2 * kPi * std::exp(1.0)), 1e-12);
}

TEST(Gae, TdResidualWhenLambdaZero) {
  const auto g = gae({0.5}, {0.2, 0.7}, {false}, 0.9, 0.0);
  EXPECT_NEAR(g.advantages[0], 0.5 + 0.9 * 0.7 - 0.2, 1e-15);
  const auto t = gae({0.5}, {0.2, 0.7}, {true}, 0.9, 0.0);
  EXPECT_NEAR(t.advantages[0], 0.5 - 0.2, 1e-15);
}

TEST(Gae, ZeroRewardsAndValues) {
  const auto g = gae({0, 0, 0}, {0, 0, 0, 0}, {false, false, true}, 0.99, 0.95);
  for (double a : g.advantages) EXPECT_EQ(a, 0.0);
}

TEST(Gae, DiscountedSumsOracle) {
  // Hand-rolled: 1 + 0.9 + 0.81, 1 + 0.9, 1.
  const auto g = gae({1, 1, 1}, {0, 0, 0, 0}, {false, false, true}, 0.9, 1.0);
  EXPECT_NEAR(g.returns[0], 2.71, 1e-12);
  EXPECT_NEAR(g.returns[1], 1.9, 1e-12);
  EXPECT_NEAR(g.returns[2], 1.0, 1e-12);
}

TEST(Gae, TruncationBootstrapsAndCutsRecursion) {
  // Episode A truncated after step 0 (bootstrap 2.0), episode B terminal at step 1.
  const auto g = gae({1.0, 1.0}, {0.0, 0.0}, {2.0, 5.0}, {true, true}, {false, true}, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(g.returns[0], 1.0 + 0.5 * 2.0);
  EXPECT_DOUBLE_EQ(g.returns[1], 1.0);
}

TEST(Gae, AdvantageNormalization) {
  std::vector<double> a{1.0, 2.0, 3.0, 6.0};
  normalize_advantages(a);
  double m = 0, v = 0;
  for (double x : a) m += x / 4;
  for (double x : a) v += (x - m) * (x - m) / 4;
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(v, 1.0, 1e-6);
  std::vector<double> z(5, 0.0);
  normalize_advantages(z);
  for (double x : z) EXPECT_EQ(x, 0.0);
}

TEST(Normalizer, ConstantInputDrivesVarianceToZero) {
  RunningNormalizer n(3);
  const MatrixXd batch = MatrixXd::Constant(3, 100, 2.5);
  for (int i = 0; i < 50; ++i) n.update(batch);
  EXPECT_NEAR(n.mean()[0], 2.5, 1e-6);
  EXPECT_LT(n.var().maxCoeff(), 1e-6);
}

TEST(Normalizer, MergeMatchesPooledStatistics) {
  Rng rng(8);
  const MatrixXd a = random_matrix(rng, 2, 40, 3.0), b = random_matrix(rng, 2, 60, 1.0).array() + 4.0;
  RunningNormalizer n(2);
  n.set(VectorXd::Zero(2), VectorXd::Ones(2), 0.0);
  n.update(a);
  n.update(b);
  MatrixXd all(2, 100);
  all << a, b;
  const VectorXd mean = all.rowwise().mean();
  const VectorXd var = (all.colwise() - mean).array().square().rowwise().mean();
  EXPECT_LT((n.mean() - mean).norm(), 1e-12);
  EXPECT_LT((n.var() - var).norm(), 1e-12);
}

namespace {

Batch synthetic_batch(const Policy& p, Rng& rng, int n, double adv_scale) {
  Batch b;
  b.obs = random_matrix(rng, p.obs_dim(), n);
  b.old_mean = p.actor.forward(b.obs);
  b.old_log_std = p.log_std;
  b.actions = b.old_mean + random_matrix(rng, kActionDim, n, 0.5);
  b.old_log_prob.resize(n);
  for (int i = 0; i < n; ++i) b.old_log_prob[i] = gaussian_log_prob(b.old_mean.col(i), p.log_std, b.actions.col(i));
  b.advantages = adv_scale * random_matrix(rng, n, 1);
  b.returns = random_matrix(rng, n, 1);
  return b;
}

std::vector<Eigen::Index> all_indices(Eigen::Index n) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  return idx;
}

}  // namespace

TEST(Ppo, LossGradientMatchesFiniteDifferencesInsideClipBand) {
  Rng rng(9);
  Policy p(6, {12, 12});
  p.init(rng, -0.5);
  const Batch b = synthetic_batch(p, rng, 16, 1.0);
  // Move the policy slightly so ratios differ from 1 but stay inside the band.
  VectorXd theta = policy_params(p);
  theta += 1e-3 * random_matrix(rng, theta.size(), 1);
  set_policy_params(p, theta);
  PpoConfig cfg;
  cfg.entropy_coef = 0.01;
  const auto idx = all_indices(16);
  const PpoLoss l = ppo_loss(p, b, idx, cfg);
  ASSERT_EQ(l.clip_fraction, 0.0);
  VectorXd fd(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    VectorXd q = theta;
    q[i] += 1e-6;
    set_policy_params(p, q);
    const double up = ppo_loss(p, b, idx, cfg).total;
    q[i] -= 2e-6;
    set_policy_params(p, q);
    fd[i] = (up - ppo_loss(p, b, idx, cfg).total) / 2e-6;
  }
  EXPECT_LT(rel_err(l.grad, fd), 1e-5);
}

TEST(Ppo, ClippedSamplesContributeNoPolicyGradient) {
  Rng rng(10);
  Policy p(4, {8});
  p.init(rng, 0.0);
  Batch b = synthetic_batch(p, rng, 1, 1.0);
  b.advantages[0] = 1.0;
  b.old_log_prob[0] -= 1.0;  // ratio e > 1 + clip with a positive advantage
  PpoConfig cfg;
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;
  const PpoLoss l = ppo_loss(p, b, {0}, cfg);
  EXPECT_EQ(l.clip_fraction, 1.0);
  EXPECT_EQ(l.grad.norm(), 0.0);
}

TEST(Ppo, ZeroAdvantagesLeaveActorUntouched) {
  Rng rng(11);
  Policy p(5, {8, 8});
  p.init(rng, -0.5);
  Batch b = synthetic_batch(p, rng, 32, 0.0);
  PpoConfig cfg;
  cfg.entropy_coef = 0.0;
  cfg.adaptive_lr = false;
  const Mlp actor = p.actor;
  const VectorXd log_std = p.log_std;
  const Mlp critic = p.critic;
  PpoLearner learner(p, cfg);
  Rng shuffle(1);
  learner.update(p, b, shuffle);
  EXPECT_TRUE(p.actor == actor);
  EXPECT_EQ(p.log_std, log_std);
  EXPECT_FALSE(p.critic == critic);
}

TEST(Ppo, UpdateDecreasesLossOnFixedBatch) {
  Rng rng(12);
  Policy p(6, {16, 16});
  p.init(rng, -0.5);
  const Batch b = synthetic_batch(p, rng, 64, 1.0);
  PpoConfig cfg;
  cfg.epochs = 1;
  cfg.minibatches = 1;
  cfg.learning_rate = 1e-3;
  cfg.adaptive_lr = false;
  const auto idx = all_indices(64);
  const double before = ppo_loss(p, b, idx, cfg).total;
  PpoLearner learner(p, cfg);
  Rng shuffle(2);
  learner.update(p, b, shuffle);
  EXPECT_LT(ppo_loss(p, b, idx, cfg).total, before);
}

TEST(Ppo, NonFiniteLossAborts) {
  Rng rng(13);
  Policy p(3, {4});
  p.init(rng, 0.0);
  Batch b = synthetic_batch(p, rng, 4, 1.0);
  b.returns[0] = std::nan("");
  PpoLearner learner(p, PpoConfig{});
  Rng shuffle(3);
  EXPECT_THROW(learner.update(p, b, shuffle), TrainingError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(14);
  Policy p(18, {16, 16}, {50.0, env::ObservationMode::Blind, 0, true});
  p.init(rng, -0.7);
  p.norm.update(random_matrix(rng, 18, 30, 3.0));
  std::stringstream ss;
  write_checkpoint(ss, p);
  EXPECT_EQ(ss.str().rfind("LFMC-POLICY v1\nactivation tanh\n", 0), 0u);
  const Policy q = read_checkpoint(ss);
  EXPECT_TRUE(q == p);
  std::stringstream again;
  write_checkpoint(again, q);
  std::stringstream first;
  write_checkpoint(first, p);
  EXPECT_EQ(again.str(), first.str());
}

TEST(Checkpoint, RejectsCorruptInput) {
  std::stringstream bad("LFMC-POLICY v2\n");
  EXPECT_THROW(read_checkpoint(bad), ConfigError);
  Rng rng(15);
  Policy p(18, {8});
  p.init(rng, 0.0);
  std::stringstream ss;
  write_checkpoint(ss, p);
  std::string text = ss.str();
  text.resize(text.size() / 2);
  std::stringstream cut(text);
  EXPECT_THROW(read_checkpoint(cut), ConfigError);
}

namespace {

TrainConfig tiny_config(double f_t) {
  TrainConfig c;
  c.env.control_frequency = f_t;
  c.env.episode_length = 0.5;
  c.batch_size = static_cast<std::int64_t>(f_t * 0.5) * 4;
  c.hidden = {16, 16};
  c.iterations = 2;
  c.ppo.epochs = 2;
  c.ppo.minibatches = 2;
  c.seed = 21;
  return c;
}

}  // namespace

TEST(Trainer, CollectsExactlyBatchSizePerIteration) {
  for (double f : {10.0, 50.0, 200.0}) {
    const TrainConfig c = tiny_config(f);
    Trainer t(c);
    EXPECT_EQ(t.n_envs(), 4);
    EXPECT_EQ(t.iterate().steps, c.batch_size) << f;
  }
}

TEST(Trainer, SingleWorkerRunsAreBitIdentical) {
  TrainConfig c = tiny_config(20.0);
  c.domain_randomization = true;
  const TrainResult a = train(c), b = train(c);
  ASSERT_EQ(a.curve.size(), 2u);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_EQ(a.curve[i].mean_return, b.curve[i].mean_return);
    EXPECT_EQ(a.curve[i].ppo.value, b.curve[i].ppo.value);
  }
  EXPECT_TRUE(a.policy == b.policy);
}

TEST(Trainer, WorkerCountDoesNotChangeResults) {
  TrainConfig c = tiny_config(20.0);
  const TrainResult a = train(c);
  c.workers = 3;
  const TrainResult b = train(c);
  EXPECT_EQ(a.error, b.error);
  EXPECT_TRUE(a.policy.norm == b.policy.norm);
  EXPECT_TRUE(a.policy.actor == b.policy.actor);
  EXPECT_TRUE(a.policy == b.policy);
}

TEST(Trainer, InvalidBatchRejected) {
  TrainConfig c = tiny_config(10.0);
  c.batch_size = 21;
  EXPECT_THROW(Trainer{c}, ConfigError);
}
