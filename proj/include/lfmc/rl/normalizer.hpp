#pragma once

#include <Eigen/Core>

#include "lfmc/common.hpp"

namespace lfmc::rl {

/// Running per-feature mean and (population) variance, merged batch-wise.
class RunningNormalizer {
 public:
  RunningNormalizer() = default;
  explicit RunningNormalizer(int dim) : mean_(Eigen::VectorXd::Zero(dim)), var_(Eigen::VectorXd::Ones(dim)) {}

  int dim() const { return static_cast<int>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& var() const { return var_; }
  double count() const { return count_; }

  void set(const Eigen::VectorXd& mean, const Eigen::VectorXd& var, double count) {
    if (mean.size() != var.size()) throw ContractViolation("normalizer: mean/var size mismatch");
    if ((var.array() < 0.0).any()) throw ConfigError("normalizer: negative variance");
    mean_ = mean;
    var_ = var;
    count_ = count;
  }

  /// Merge a batch (one sample per column).
  void update(const Eigen::MatrixXd& batch) {
    if (batch.rows() != dim()) throw ContractViolation("normalizer: dimension mismatch");
    const double n = static_cast<double>(batch.cols());
    if (n == 0.0) return;
    const Eigen::VectorXd bmean = batch.rowwise().mean();
    const Eigen::VectorXd bvar = (batch.colwise() - bmean).array().square().rowwise().sum() / n;
    const double total = count_ + n;
    const Eigen::VectorXd delta = bmean - mean_;
    mean_ += delta * (n / total);
    var_ = (var_ * count_ + bvar * n + delta.array().square().matrix() * (count_ * n / total)) / total;
    count_ = total;
  }

  Eigen::VectorXd inv_std() const { return (var_.array() + kEps).rsqrt(); }

  Eigen::MatrixXd normalize(const Eigen::MatrixXd& x) const {
    if (x.rows() != dim()) throw ContractViolation("normalizer: dimension mismatch");
    return inv_std().asDiagonal() * (x.colwise() - mean_);
  }

  bool operator==(const RunningNormalizer& o) const {
    return dim() == o.dim() && count_ == o.count_ && mean_ == o.mean_ && var_ == o.var_;
  }

  static constexpr double kEps = 1e-8;

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd var_;
  double count_ = 1e-4;  // prior weight of the initial (0, 1) estimate
};

}  // namespace lfmc::rl
