#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "lfmc/common.hpp"

namespace lfmc::rl {

/// Discount whose weight halves after `n_half` seconds at control rate f_t.
inline double discount_for(double f_t, double n_half) {
  if (!(f_t > 0.0) || !(n_half > 0.0)) throw ConfigError("discount_for: f_t and n_half must be positive");
  return std::exp(std::log(0.5) / (f_t * n_half));
}

/// Number of control steps over which a discount halves.
inline double half_life_steps(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("half_life_steps: gamma must be in (0, 1)");
  return std::log(0.5) / std::log(gamma);
}

/// Environments needed so that one iteration (one episode length per env)
/// collects exactly b_s control steps.
inline int n_envs_for(std::int64_t batch_size, double f_t, double episode_length) {
  if (batch_size <= 0) throw ConfigError("n_envs_for: batch size must be positive");
  if (!(f_t > 0.0) || !(episode_length > 0.0)) throw ConfigError("n_envs_for: f_t and N must be positive");
  const double steps = f_t * episode_length;
  const auto per_env = static_cast<std::int64_t>(std::llround(steps));
  if (per_env <= 0 || std::abs(steps - static_cast<double>(per_env)) > 1e-9 * steps) {
    throw ConfigError("n_envs_for: f_t * N = " + std::to_string(steps) + " is not a whole number of control steps");
  }
  if (batch_size % per_env != 0) {
    const std::int64_t lo = batch_size / per_env * per_env;
    const std::int64_t hi = lo + per_env;
    const std::int64_t suggest = (lo > 0 && batch_size - lo <= hi - batch_size) ? lo : hi;
    throw ConfigError("n_envs_for: batch size " + std::to_string(batch_size) + " is not divisible by f_t * N = " +
                      std::to_string(per_env) + "; nearest valid batch size is " + std::to_string(suggest));
  }
  return static_cast<int>(batch_size / per_env);
}

}  // namespace lfmc::rl
