#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lfmc/common.hpp"

namespace lfmc::rl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Fully connected network: tanh hidden layers, linear output.
/// Batches are column-major: one sample per column.
class Mlp {
 public:
  struct Cache {
    std::vector<MatrixXd> act;  // act[0] = input, act[l] = output of layer l
  };

  /// Parameter-shaped gradient accumulator.
  struct Grad {
    std::vector<MatrixXd> W;
    std::vector<VectorXd> b;
  };

  Mlp() = default;

  /// Zero-initialized network with the given layer widths (input first).
  explicit Mlp(std::vector<int> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw ConfigError("mlp: need at least input and output widths");
    for (int d : dims_) {
      if (d <= 0) throw ConfigError("mlp: layer widths must be positive");
    }
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      W_.push_back(MatrixXd::Zero(dims_[l + 1], dims_[l]));
      b_.push_back(VectorXd::Zero(dims_[l + 1]));
    }
  }

  /// Uniform fan-in scaled weights; the output layer is scaled by `out_gain`.
  void init(Rng& rng, double out_gain) {
    for (std::size_t l = 0; l < W_.size(); ++l) {
      const double bound = std::sqrt(6.0 / static_cast<double>(W_[l].cols() + W_[l].rows()));
      const double gain = l + 1 == W_.size() ? out_gain : 1.0;
      for (Eigen::Index i = 0; i < W_[l].size(); ++i) W_[l].data()[i] = gain * uniform(rng, -bound, bound);
      b_[l].setZero();
    }
  }

  int in_dim() const { return dims_.empty() ? 0 : dims_.front(); }
  int out_dim() const { return dims_.empty() ? 0 : dims_.back(); }
  const std::vector<int>& dims() const { return dims_; }
  std::size_t layers() const { return W_.size(); }
  MatrixXd& weight(std::size_t l) { return W_[l]; }
  const MatrixXd& weight(std::size_t l) const { return W_[l]; }
  VectorXd& bias(std::size_t l) { return b_[l]; }
  const VectorXd& bias(std::size_t l) const { return b_[l]; }

  MatrixXd forward(const MatrixXd& x) const {
    Cache c;
    return forward(x, c);
  }

  VectorXd forward(const VectorXd& x) const { return forward(MatrixXd(x)).col(0); }

  MatrixXd forward(const MatrixXd& x, Cache& cache) const {
    if (x.rows() != in_dim()) {
      throw ContractViolation("mlp: input has " + std::to_string(x.rows()) + " rows, expected " + std::to_string(in_dim()));
    }
    cache.act.resize(W_.size() + 1);
    cache.act[0] = x;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      MatrixXd z = W_[l] * cache.act[l];
      z.colwise() += b_[l];
      if (l + 1 < W_.size()) z = z.array().tanh().matrix();
      cache.act[l + 1] = std::move(z);
    }
    return cache.act.back();
  }

  Grad zero_grad() const {
    Grad g;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      g.W.push_back(MatrixXd::Zero(W_[l].rows(), W_[l].cols()));
      g.b.push_back(VectorXd::Zero(b_[l].size()));
    }
    return g;
  }

  /// Accumulates dLoss/dparams into `g` given dLoss/doutput; returns dLoss/dinput.
  MatrixXd backward(const Cache& cache, const MatrixXd& d_out, Grad& g) const {
    if (cache.act.size() != W_.size() + 1 || d_out.rows() != out_dim() || d_out.cols() != cache.act[0].cols()) {
      throw ContractViolation("mlp: backward shape mismatch");
    }
    MatrixXd dz = d_out;
    for (std::size_t l = W_.size(); l-- > 0;) {
      g.W[l].noalias() += dz * cache.act[l].transpose();
      g.b[l] += dz.rowwise().sum();
      MatrixXd da = W_[l].transpose() * dz;
      if (l > 0) da.array() *= 1.0 - cache.act[l].array().square();
      dz = std::move(da);
    }
    return dz;
  }

  /// d output / d input at a single point (out_dim x in_dim).
  MatrixXd input_jacobian(const VectorXd& x) const {
    Cache c;
    forward(MatrixXd(x), c);
    MatrixXd j = W_[0];
    for (std::size_t l = 1; l < W_.size(); ++l) {
      const VectorXd slope = 1.0 - c.act[l].col(0).array().square();
      j = W_[l] * (slope.asDiagonal() * j);
    }
    return j;
  }

  /// Parameters in declared order: per layer W row-major, then b.
  Eigen::Index num_params() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) n += W_[l].size() + b_[l].size();
    return n;
  }

  VectorXd flat() const {
    VectorXd out(num_params());
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) pack(W_[l], b_[l], out, off);
    return out;
  }

  void set_flat(const VectorXd& p) {
    if (p.size() != num_params()) throw ContractViolation("mlp: parameter vector size mismatch");
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      for (Eigen::Index r = 0; r < W_[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < W_[l].cols(); ++c) W_[l](r, c) = p[off++];
      }
      for (Eigen::Index r = 0; r < b_[l].size(); ++r) b_[l][r] = p[off++];
    }
  }

  static VectorXd flat(const Grad& g) {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < g.W.size(); ++l) n += g.W[l].size() + g.b[l].size();
    VectorXd out(n);
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < g.W.size(); ++l) pack(g.W[l], g.b[l], out, off);
    return out;
  }

  bool operator==(const Mlp&) const = default;

 private:
  static void pack(const MatrixXd& w, const VectorXd& b, VectorXd& out, Eigen::Index& off) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) out[off++] = w(r, c);
    }
    for (Eigen::Index r = 0; r < b.size(); ++r) out[off++] = b[r];
  }

  std::vector<int> dims_;
  std::vector<MatrixXd> W_;
  std::vector<VectorXd> b_;
};

}  // namespace lfmc::rl
