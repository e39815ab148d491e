#pragma once

#include <cmath>
#include <vector>

#include "lfmc/common.hpp"

namespace lfmc::rl {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Generalized advantage estimation over one environment's sequence.
/// `next_values[t]` is V of the state reached after step t (the bootstrap
/// for truncated episodes); it is ignored where `terminal[t]`. `done[t]`
/// cuts the recursion between episodes.
inline GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
                     const std::vector<double>& next_values, const std::vector<bool>& done,
                     const std::vector<bool>& terminal, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || next_values.size() != n || done.size() != n || terminal.size() != n) {
    throw ContractViolation("gae: sequence lengths differ");
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double bootstrap = terminal[i] ? 0.0 : gamma * next_values[i];
    const double delta = rewards[i] + bootstrap - values[i];
    running = delta + (done[i] ? 0.0 : gamma * lambda * running);
    out.advantages[i] = running;
    out.returns[i] = running + values[i];
  }
  return out;
}

/// Convenience form: `values` carries one extra trailing bootstrap value and
/// `dones` marks terminal steps.
inline GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
                     const std::vector<bool>& dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1 || dones.size() != n) throw ContractViolation("gae: expected values of length n + 1");
  std::vector<double> v(values.begin(), values.end() - 1), next(values.begin() + 1, values.end());
  return gae(rewards, v, next, dones, dones, gamma, lambda);
}

/// In-place zero-mean, unit-variance standardization.
inline void normalize_advantages(std::vector<double>& a) {
  if (a.empty()) return;
  double mean = 0.0;
  for (double x : a) mean += x;
  mean /= static_cast<double>(a.size());
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  var /= static_cast<double>(a.size());
  const double inv = 1.0 / (std::sqrt(var) + 1e-8);
  for (double& x : a) x = (x - mean) * inv;
}

}  // namespace lfmc::rl
