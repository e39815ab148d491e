#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lfmc/common.hpp"

namespace lfmc::sim {

enum class TerrainKind { Flat, Perlin, Stairs, Bricks };

inline std::string to_string(TerrainKind k) {
  switch (k) {
    case TerrainKind::Flat: return "flat";
    case TerrainKind::Perlin: return "perlin";
    case TerrainKind::Stairs: return "stairs";
    case TerrainKind::Bricks: return "bricks";
  }
  return "flat";
}

inline TerrainKind terrain_kind_from_string(const std::string& s) {
  if (s == "flat") return TerrainKind::Flat;
  if (s == "perlin" || s == "rough") return TerrainKind::Perlin;
  if (s == "stairs") return TerrainKind::Stairs;
  if (s == "bricks") return TerrainKind::Bricks;
  throw ConfigError("unknown terrain kind '" + s + "'");
}

struct TerrainParams {
  double x_min = -5.0;
  double x_max = 35.0;
  double spacing = 0.02;
  // perlin
  double max_extrusion = 0.15;
  double feature_length = 1.0;  // wavelength of the lowest octave (m)
  int octaves = 3;
  double persistence = 0.5;
  // stairs: flat run-up, then ascending steps
  double stair_start = 1.0;
  double stair_rise = 0.08;
  double stair_run = 0.3;
  // bricks: random blocks on flat ground
  double brick_start = 0.8;
  double brick_height_min = 0.02;
  double brick_height_max = 0.08;
  double brick_width_min = 0.2;
  double brick_width_max = 0.6;
  double brick_gap_max = 0.4;
};

/// Uniformly sampled heightfield, queried by linear interpolation.
class Terrain {
 public:
  Terrain() : Terrain(TerrainKind::Flat, 0, -1.0, 1.0, std::vector<double>{0.0, 0.0}) {}

  Terrain(TerrainKind kind, std::uint64_t seed, double x0, double spacing, std::vector<double> heights,
          TerrainParams params = {})
      : kind_(kind), seed_(seed), x0_(x0), spacing_(spacing), heights_(std::move(heights)),
        params_(params) {
    if (!(spacing_ > 0.0)) throw ConfigError("terrain sample spacing must be positive");
    if (heights_.empty()) throw ConfigError("terrain needs at least one sample");
  }

  TerrainKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  double x0() const { return x0_; }
  double spacing() const { return spacing_; }
  const std::vector<double>& heights() const { return heights_; }
  const TerrainParams& params() const { return params_; }
  double x_end() const { return x0_ + spacing_ * static_cast<double>(heights_.size() - 1); }

  /// Piecewise-linear height; constant extension past either end.
  double height(double x) const {
    const double u = (x - x0_) / spacing_;
    if (!(u > 0.0)) return heights_.front();
    const auto last = heights_.size() - 1;
    if (u >= static_cast<double>(last)) return heights_.back();
    const auto i = static_cast<std::size_t>(u);
    const double t = u - static_cast<double>(i);
    return heights_[i] + t * (heights_[i + 1] - heights_[i]);
  }

  /// dh/dx of the segment containing x (0 outside the span).
  double slope(double x) const {
    const double u = (x - x0_) / spacing_;
    const auto last = heights_.size() - 1;
    if (!(u > 0.0) || u >= static_cast<double>(last)) return 0.0;
    const auto i = static_cast<std::size_t>(u);
    return (heights_[i + 1] - heights_[i]) / spacing_;
  }

  bool operator==(const Terrain&) const = default;

 private:
  TerrainKind kind_;
  std::uint64_t seed_;
  double x0_;
  double spacing_;
  std::vector<double> heights_;
  TerrainParams params_;
};

namespace detail {

// Improved-noise style 1D gradient noise: quintic fade, seeded permutation,
// gradients drawn from {-1, +1} scaled by a per-lattice magnitude.
class PerlinNoise1D {
 public:
  explicit PerlinNoise1D(std::uint64_t seed) {
    std::iota(perm_.begin(), perm_.begin() + 256, 0);
    Rng rng(seed);
    for (int i = 255; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(perm_[static_cast<std::size_t>(i)], perm_[static_cast<std::size_t>(pick(rng))]);
    }
    for (std::size_t i = 0; i < 256; ++i) perm_[256 + i] = perm_[i];
  }

  double operator()(double x) const {
    const double fl = std::floor(x);
    const int xi = static_cast<int>(fl) & 255;
    const double t = x - fl;
    const double g0 = gradient(perm_[static_cast<std::size_t>(xi)]);
    const double g1 = gradient(perm_[static_cast<std::size_t>(xi + 1)]);
    const double fade = t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
    const double n0 = g0 * t;
    const double n1 = g1 * (t - 1.0);
    return n0 + fade * (n1 - n0);
  }

 private:
  static double gradient(int hash) {
    // 8 distinct slopes in [-1, 1] excluding 0
    const double mag = 0.25 + 0.25 * static_cast<double>((hash >> 1) & 3);
    return (hash & 1) ? mag : -mag;
  }

  std::array<int, 512> perm_{};
};

}  // namespace detail

inline Terrain generate_terrain(TerrainKind kind, std::uint64_t seed, const TerrainParams& p = {}) {
  if (!(p.spacing > 0.0)) throw ConfigError("terrain spacing must be positive");
  if (!(p.x_max > p.x_min)) throw ConfigError("terrain span must be non-empty");
  const auto n = static_cast<std::size_t>(std::floor((p.x_max - p.x_min) / p.spacing + 1e-9)) + 1;
  std::vector<double> h(n, 0.0);
  auto xs = [&](std::size_t i) { return p.x_min + p.spacing * static_cast<double>(i); };

  switch (kind) {
    case TerrainKind::Flat:
      break;
    case TerrainKind::Perlin: {
      if (!(p.max_extrusion > 0.0)) throw ConfigError("perlin terrain requires max_extrusion > 0");
      if (!(p.feature_length > 0.0)) throw ConfigError("perlin terrain requires feature_length > 0");
      if (p.octaves < 1) throw ConfigError("perlin terrain requires octaves >= 1");
      detail::PerlinNoise1D noise(derive_seed(seed, "terrain/perlin"));
      for (std::size_t i = 0; i < n; ++i) {
        double freq = 1.0 / p.feature_length, amp = 1.0, v = 0.0;
        for (int o = 0; o < p.octaves; ++o) {
          v += amp * noise(xs(i) * freq + 17.0 * o);
          freq *= 2.0;
          amp *= p.persistence;
        }
        h[i] = v;
      }
      const auto [lo, hi] = std::minmax_element(h.begin(), h.end());
      const double lo_v = *lo, range = *hi - *lo;
      if (!(range > 0.0)) throw ConfigError("perlin terrain degenerated to a constant");
      for (double& v : h) v = std::clamp((v - lo_v) / range, 0.0, 1.0) * p.max_extrusion;
      break;
    }
    case TerrainKind::Stairs: {
      if (!(p.stair_rise > 0.0) || !(p.stair_run > 0.0)) throw ConfigError("stairs require positive rise and run");
      for (std::size_t i = 0; i < n; ++i) {
        const double x = xs(i);
        if (x >= p.stair_start) h[i] = p.stair_rise * (1.0 + std::floor((x - p.stair_start) / p.stair_run));
      }
      break;
    }
    case TerrainKind::Bricks: {
      if (!(p.brick_height_max >= p.brick_height_min) || !(p.brick_height_min > 0.0) ||
          !(p.brick_width_max >= p.brick_width_min) || !(p.brick_width_min > 0.0) || p.brick_gap_max < 0.0) {
        throw ConfigError("bricks require positive, ordered height and width ranges");
      }
      Rng rng(derive_seed(seed, "terrain/bricks"));
      double x = p.brick_start;
      while (x < p.x_max) {
        const double w = uniform(rng, p.brick_width_min, p.brick_width_max);
        const double height = uniform(rng, p.brick_height_min, p.brick_height_max);
        for (std::size_t i = 0; i < n; ++i) {
          if (xs(i) >= x && xs(i) < x + w) h[i] = height;
        }
        x += w + uniform(rng, 0.0, p.brick_gap_max);
      }
      break;
    }
  }
  return Terrain(kind, seed, p.x_min, p.spacing, std::move(h), p);
}

/// Two-column CSV: x,height (17 significant digits).
inline void write_terrain_csv(const Terrain& t, std::ostream& os) {
  os << "x,height\n" << std::setprecision(17);
  for (std::size_t i = 0; i < t.heights().size(); ++i) {
    os << t.x0() + t.spacing() * static_cast<double>(i) << ',' << t.heights()[i] << '\n';
  }
}

inline Terrain read_terrain_csv(std::istream& is, TerrainKind kind = TerrainKind::Flat, std::uint64_t seed = 0) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("x,height", 0) != 0) throw ConfigError("terrain CSV: missing 'x,height' header");
  std::vector<double> xs, hs;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError("terrain CSV: malformed row '" + line + "'");
    xs.push_back(std::stod(line.substr(0, comma)));
    hs.push_back(std::stod(line.substr(comma + 1)));
  }
  if (xs.size() < 2) throw ConfigError("terrain CSV: need at least two rows");
  const double spacing = (xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (std::abs(xs[i] - xs[0] - spacing * static_cast<double>(i)) > 1e-9) {
      throw ConfigError("terrain CSV: samples are not uniformly spaced");
    }
  }
  return Terrain(kind, seed, xs.front(), spacing, std::move(hs));
}

}  // namespace lfmc::sim
