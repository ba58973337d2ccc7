#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "support.hpp"

using namespace epoet;
using namespace epoet::terrain;
using testing_support::scalar_bowl;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("epoet_terrain_" + name)).string();
}

TerrainSpec spec_with(const cppn::CppnGenome& g, std::int64_t t = 0) {
  TerrainSpec s;
  s.genome = g;
  s.terrain_seed = 17;
  s.iteration = t;
  s.settings.resolution = 16;
  s.settings.bowl_coarse_resolution = 4;
  return s;
}

}  // namespace

TEST(Bowl, LargeThresholdGivesZeros) {
  const Eigen::MatrixXd b = generate_bowl({3, 4, 1.5}, 16);
  EXPECT_TRUE((b.array() == 0.0).all());
}

TEST(Bowl, ConstantFieldNormalizesToZeros) {
  const Eigen::MatrixXd b = generate_bowl_from_field(Eigen::MatrixXd::Zero(4, 4), 16, 0.0);
  EXPECT_TRUE((b.array() == 0.0).all());
}

TEST(Bowl, MatchesScalarReference) {
  const Eigen::MatrixXd b = generate_bowl({7, 4, 0.2}, 32);
  const auto ref = scalar_bowl(7, 4, 32, 0.2);
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j) ASSERT_NEAR(b(i, j), ref[i][j], 1e-12) << i << "," << j;
}

TEST(Bowl, ResolutionChecks) {
  EXPECT_THROW(generate_bowl({1, 4, 0}, 1), Error);
  EXPECT_THROW(generate_bowl({1, 8, 0}, 4), Error);
}

TEST(Bowl, ThresholdScheduleNonDecreasing) {
  TerrainSpec s = spec_with(testing_support::identity_x_genome());
  double prev = -1;
  for (int t = 0; t < 400; t += 7) {
    const double th = s.at_iteration(t).bowl_threshold();
    EXPECT_GE(th, 0.0);
    EXPECT_GE(th, prev);
    prev = th;
  }
}

TEST(Compose, FigureWeights) {
  Eigen::MatrixXd bowl = Eigen::MatrixXd::Constant(2, 2, 1.0), cp = Eigen::MatrixXd::Constant(2, 2, 0.5);
  EXPECT_DOUBLE_EQ(compose_grids(bowl, cp, 0.3, 0.7)(0, 0), 0.65);
}

TEST(Compose, RandomGridsWeightedSum) {
  Rng rng(1);
  for (int k = 0; k < 10; ++k) {
    Eigen::MatrixXd a(8, 8), b(8, 8);
    for (int i = 0; i < 64; ++i) {
      a.data()[i] = uniform01(rng);
      b.data()[i] = uniform01(rng);
    }
    const Eigen::MatrixXd c = compose_grids(a, b, 0.3, 0.7);
    for (int i = 0; i < 64; ++i) EXPECT_NEAR(c.data()[i], 0.3 * a.data()[i] + 0.7 * b.data()[i], 1e-12);
  }
}

TEST(Compose, ConstantCppnLeavesScaledBowl) {
  const TerrainSpec s = spec_with(testing_support::bare_genome(cppn::CppnActivation::identity, 3.0), 5);
  const Heightmap m = compose_heightmap(s);
  const Eigen::MatrixXd bowl = generate_bowl(s.bowl_params(), 16);
  EXPECT_TRUE(m.grid == 0.3 * bowl);
}

TEST(Compose, NormalizedRangeAndElevation) {
  const TerrainSpec s = spec_with(neat::initial_genome(2, {}));
  for (int t : {0, 1, 37, 150}) {
    const Heightmap m = compose_heightmap(s.at_iteration(t));
    EXPECT_GE(m.grid.minCoeff(), 0.0);
    EXPECT_LE(m.grid.maxCoeff(), 1.0 + 1e-12);
    EXPECT_EQ(m.elevation_z, 1.0 + 0.01 * t);
    EXPECT_LE(m.grid.maxCoeff() * m.elevation_z, 1.0 + 0.01 * t + 1e-12);
  }
}

TEST(Compose, RegenerationIsBitIdentical) {
  const TerrainSpec s = spec_with(neat::initial_genome(2, {}), 12);
  EXPECT_TRUE(compose_heightmap(s).grid == compose_heightmap(s).grid);
}

TEST(Compose, BowlReseedsEachIterationCppnFixed) {
  const TerrainSpec s = spec_with(neat::initial_genome(2, {}));
  const Eigen::MatrixXd cp = minmax_normalize(cppn::query_grid(s.genome, 16));
  for (int t = 0; t < 5; ++t) {
    const Heightmap a = compose_heightmap(s.at_iteration(t)), b = compose_heightmap(s.at_iteration(t + 1));
    EXPECT_FALSE(a.grid == b.grid);
    const Eigen::MatrixXd bowl_a = (a.grid - 0.7 * cp) / 0.3;
    EXPECT_TRUE(bowl_a.isApprox(generate_bowl(s.at_iteration(t).bowl_params(), 16), 1e-9));
  }
}

TEST(Variance, FlatAndTwoLevel) {
  Heightmap m = testing_support::flat_map(4);
  EXPECT_EQ(height_variance(m), 0.0);
  m.grid.topRows(2).setOnes();
  EXPECT_DOUBLE_EQ(height_variance(m), 0.25);
  Heightmap shifted = m;
  shifted.grid.array() += 0.3;
  EXPECT_NEAR(height_variance(shifted), 0.25, 1e-12);
}

TEST(Export, FlatPgmIsZero) {
  const std::string p = tmp_path("flat.pgm");
  export_heightmap(testing_support::flat_map(4), p, ExportFormat::pgm);
  int res = 0;
  for (auto v : import_pgm_levels(p, &res)) EXPECT_EQ(v, 0);
  EXPECT_EQ(res, 4);
}

TEST(Export, PgmLinearMap) {
  Heightmap m = testing_support::flat_map(2);
  m.elevation_z = 2.0;
  m.grid << 0.0, 1.0, 0.5, 1.0;
  const std::string p = tmp_path("lin.pgm");
  export_heightmap(m, p, ExportFormat::pgm);
  const auto px = import_pgm_levels(p);
  ASSERT_EQ(px.size(), 4u);
  EXPECT_EQ(px[0], 0);
  EXPECT_EQ(px[1], 65535);
  EXPECT_NEAR(px[2], 32768, 1);
  EXPECT_EQ(px[3], 65535);
}

TEST(Export, CsvRoundTrip) {
  const TerrainSpec s = spec_with(neat::initial_genome(6, {}), 40);
  const Heightmap m = compose_heightmap(s);
  const std::string p = tmp_path("rt.csv");
  export_heightmap(m, p, ExportFormat::csv);
  const Eigen::MatrixXd back = import_heightmap_csv(p);
  ASSERT_EQ(back.rows(), m.resolution);
  for (int i = 0; i < m.resolution; ++i)
    for (int j = 0; j < m.resolution; ++j) EXPECT_NEAR(back(i, j), m.world_height(i, j), 1e-9);
}

TEST(Export, UnwritablePathIsIoError) {
  try {
    export_heightmap(testing_support::flat_map(2), "/nonexistent-dir/x/y.csv", ExportFormat::csv);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
    EXPECT_NE(std::string(e.what()).find("/nonexistent-dir/x/y.csv"), std::string::npos);
  }
}

TEST(Heightmap, BilinearSampleAtCorners) {
  Heightmap m = testing_support::flat_map(2, 10.0);
  m.grid << 0.0, 1.0, 0.5, 1.0;
  EXPECT_DOUBLE_EQ(m.sample(0.0, -5.0), 0.0);
  EXPECT_DOUBLE_EQ(m.sample(0.0, 5.0), 1.0);
  EXPECT_DOUBLE_EQ(m.sample(10.0, -5.0), 0.5);
  EXPECT_DOUBLE_EQ(m.sample(5.0, 0.0), 0.625);
}
