#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "lfmc/sim/terrain.hpp"

using namespace lfmc;
using namespace lfmc::sim;

TEST(Terrain, FlatIsZeroEverywhere) {
  const Terrain t = generate_terrain(TerrainKind::Flat, 123);
  for (double x : {-100.0, -5.0, 0.0, 3.2, 12.345, 35.0, 400.0}) EXPECT_EQ(t.height(x), 0.0);
}

TEST(Terrain, LinearInterpolationAndExtension) {
  const Terrain t(TerrainKind::Flat, 0, 0.0, 0.1, {0.0, 0.1, 0.3});
  EXPECT_DOUBLE_EQ(t.height(0.05), 0.05);
  EXPECT_DOUBLE_EQ(t.height(0.15), 0.2);
  EXPECT_EQ(t.height(-1.0), 0.0);
  EXPECT_EQ(t.height(0.2), 0.3);
  EXPECT_EQ(t.height(7.0), 0.3);
  EXPECT_DOUBLE_EQ(t.slope(0.15), 2.0);
  EXPECT_EQ(t.slope(5.0), 0.0);
}

TEST(Terrain, PerlinRespectsMaxExtrusion) {
  TerrainParams p;
  p.max_extrusion = 0.15;
  const Terrain t = generate_terrain(TerrainKind::Perlin, 7, p);
  const auto [lo, hi] = std::minmax_element(t.heights().begin(), t.heights().end());
  EXPECT_GE(*lo, 0.0);
  EXPECT_LE(*hi, 0.15);
  EXPECT_GT(*hi - *lo, 0.1);  // non-degenerate
}

TEST(Terrain, GenerationIsDeterministicAndSeedDependent) {
  const Terrain a = generate_terrain(TerrainKind::Perlin, 7);
  const Terrain b = generate_terrain(TerrainKind::Perlin, 7);
  const Terrain c = generate_terrain(TerrainKind::Perlin, 8);
  EXPECT_EQ(a.heights(), b.heights());
  EXPECT_NE(a.heights(), c.heights());
  EXPECT_EQ(generate_terrain(TerrainKind::Bricks, 3).heights(), generate_terrain(TerrainKind::Bricks, 3).heights());
}

TEST(Terrain, InvalidParamsRejected) {
  TerrainParams p;
  p.max_extrusion = 0.0;
  EXPECT_THROW(generate_terrain(TerrainKind::Perlin, 1, p), ConfigError);
  p = {};
  p.spacing = 0.0;
  EXPECT_THROW(generate_terrain(TerrainKind::Flat, 1, p), ConfigError);
  p = {};
  p.stair_rise = -0.1;
  EXPECT_THROW(generate_terrain(TerrainKind::Stairs, 1, p), ConfigError);
}

TEST(Terrain, StairsAndBricksShapes) {
  TerrainParams p;
  const Terrain stairs = generate_terrain(TerrainKind::Stairs, 0, p);
  EXPECT_EQ(stairs.height(0.0), 0.0);
  EXPECT_NEAR(stairs.height(p.stair_start + 0.5 * p.stair_run), p.stair_rise, 1e-12);
  EXPECT_NEAR(stairs.height(p.stair_start + 2.5 * p.stair_run), 3 * p.stair_rise, 1e-12);

  const Terrain bricks = generate_terrain(TerrainKind::Bricks, 11, p);
  for (double h : bricks.heights()) {
    EXPECT_TRUE(h == 0.0 || (h >= p.brick_height_min && h <= p.brick_height_max));
  }
  EXPECT_EQ(bricks.height(0.0), 0.0);
}

// Continuity: adjacent queries differ by at most max|slope| * dx.
TEST(Terrain, HeightIsContinuous) {
  const Terrain t = generate_terrain(TerrainKind::Perlin, 99);
  double max_slope = 0.0;
  for (std::size_t i = 1; i < t.heights().size(); ++i) {
    max_slope = std::max(max_slope, std::abs(t.heights()[i] - t.heights()[i - 1]) / t.spacing());
  }
  const double dx = 1e-4;
  for (double x = -4.0; x < 30.0; x += 0.0137) {
    EXPECT_LE(std::abs(t.height(x + dx) - t.height(x)), max_slope * dx + 1e-12);
  }
}

TEST(Terrain, CsvRoundTripIsExact) {
  const Terrain t = generate_terrain(TerrainKind::Perlin, 5);
  std::stringstream ss;
  write_terrain_csv(t, ss);
  const Terrain r = read_terrain_csv(ss, TerrainKind::Perlin, 5);
  EXPECT_EQ(r.heights(), t.heights());
  EXPECT_NEAR(r.spacing(), t.spacing(), 1e-12);
  for (double x : {-3.3, 0.0, 1.234, 20.0}) EXPECT_NEAR(r.height(x), t.height(x), 1e-12);

  std::stringstream bad("foo,bar\n1,2\n");
  EXPECT_THROW(read_terrain_csv(bad), ConfigError);
}
