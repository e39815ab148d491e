#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lfmc {

/// Raised when a parameter set violates its invariants.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised on dimension mismatches and other caller bugs.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when the integrator is handed (or produces) a non-finite state.
class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an environment cannot continue (non-finite action, diverged physics).
class EnvironmentFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kPi = 3.14159265358979323846;

/// Simulation / actuation step used throughout (400 Hz).
inline constexpr double kSimStep = 0.0025;

using Rng = std::mt19937_64;

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Per-component seed derivation: every random stream is keyed by
/// (root seed, component tag, index) so sub-analyses can be replayed alone.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return detail::splitmix64(detail::splitmix64(root ^ h) + index);
}

inline Rng make_rng(std::uint64_t root, std::string_view tag, std::uint64_t index = 0) {
  return Rng(derive_seed(root, tag, index));
}

/// Uniform draw in [lo, hi]; returns lo exactly for degenerate ranges.
inline double uniform(Rng& rng, double lo, double hi) {
  if (!(hi > lo)) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Integer number of `step`-sized ticks in `duration`, rejecting non-integral ratios.
inline int exact_ticks(double duration, double step, const char* what) {
  const double ratio = duration / step;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, std::abs(ratio))) {
    throw ConfigError(std::string(what) + ": " + std::to_string(duration) +
                      " is not a whole multiple of " + std::to_string(step));
  }
  return static_cast<int>(rounded);
}

}  // namespace lfmc
