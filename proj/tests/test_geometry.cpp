// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <numbers>
#include <set>

#include "mgpc/error.hpp"
#include "support.hpp"

namespace mgpc {
namespace {

using testing::cloud_of;
using testing::random_cloud;

TEST(FarthestPointSample, LineOfThreePicksTheFarEnd) {
  const auto c = cloud_of({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}});
  EXPECT_EQ(farthest_point_sample(c, 2, 0), (std::vector<std::size_t>{0, 2}));
}

TEST(FarthestPointSample, ThirdPickMaximizesMinimumDistance) {
  const auto c = cloud_of({{0, 0, 0}, {1, 0, 0}, {0.5, 0, 0}, {3, 0, 0}});
  EXPECT_EQ(farthest_point_sample(c, 3, 0), (std::vector<std::size_t>{0, 3, 1}));
}

TEST(FarthestPointSample, FullSelectionIsAPermutation) {
  Rng rng(11);
  const auto c = random_cloud(rng, 40);
  auto idx = farthest_point_sample(c, c.size(), 5);
  EXPECT_EQ(idx.front(), 5u);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(idx[i], i);
}

TEST(FarthestPointSample, MatchesExhaustiveOracleOnRandomClouds) {
  Rng rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng() % 63;
    const auto c = random_cloud(rng, n);
    const std::size_t k = 1 + rng() % n;
    const std::size_t seed = rng() % n;
    EXPECT_EQ(farthest_point_sample(c, k, seed), testing::fps_oracle(c, k, seed)) << "trial " << trial;
  }
}

TEST(FarthestPointSample, TiesGoToSmallestIndex) {
  // Points 1 and 2 are equidistant from point 0.
  const auto c = cloud_of({{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}});
  EXPECT_EQ(farthest_point_sample(c, 2, 0), (std::vector<std::size_t>{0, 1}));
}

TEST(FarthestPointSample, MinPairwiseDistanceNonIncreasingInK) {
  Rng rng(5);
  const auto c = random_cloud(rng, 64);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k = 2; k <= c.size(); ++k) {
    const auto sel = c.select(farthest_point_sample(c, k, 0));
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sel.size(); ++i)
      for (std::size_t j = i + 1; j < sel.size(); ++j) m = std::min(m, (sel[i] - sel[j]).norm());
    EXPECT_LE(m, prev + 1e-15);
    prev = m;
  }
}

TEST(FarthestPointSample, Errors) {
  EXPECT_THROW(
      {
        try {
          farthest_point_sample(PointCloud{}, 1, 0);
        } catch (const InvalidArgument& e) {
          EXPECT_NE(std::string(e.what()).find("empty input"), std::string::npos);
          throw;
        }
      },
      InvalidArgument);
  const auto c = cloud_of({{0, 0, 0}, {1, 0, 0}});
  try {
    farthest_point_sample(c, 3, 0);
    FAIL() << "expected an error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient points"), std::string::npos);
  }
}

TEST(Knn, NearerPoint) {
  const auto nn = knn(cloud_of({{0, 0, 0}, {1, 0, 0}}), cloud_of({{0.1, 0, 0}}), 1);
  ASSERT_EQ(nn.size(), 1u);
  EXPECT_EQ(nn[0].indices, (std::vector<std::size_t>{0}));
}

TEST(Knn, SelfMatchComesFirst) {
  Rng rng(3);
  const auto c = random_cloud(rng, 20);
  const auto nn = knn(c, c, 1);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(nn[i].indices[0], i);
    EXPECT_EQ(nn[i].distances[0], 0.0);
  }
}

TEST(Knn, MatchesExhaustiveSort) {
  Rng rng(77);
  const auto c = random_cloud(rng, 32);
  const auto q = c.select(std::vector<std::size_t>{0, 3, 7, 9, 14, 20, 25, 31});
  const auto nn = knn(c, q, 5);
  for (std::size_t a = 0; a < q.size(); ++a) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < c.size(); ++i) all.emplace_back((q[a] - c[i]).norm(), i);
    std::sort(all.begin(), all.end());
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_EQ(nn[a].indices[j], all[j].second);
      EXPECT_DOUBLE_EQ(nn[a].distances[j], all[j].first);
    }
  }
}

TEST(Knn, TiesByIndexAndErrors) {
  const auto c = cloud_of({{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}});
  const auto nn = knn(c, cloud_of({{0, 0, 0}}), 3);
  EXPECT_EQ(nn[0].indices, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(knn(c, c, 4), InvalidArgument);
}

TEST(Normalization, HandExample) {
  const auto r = normalize_input_centric(cloud_of({{1, 1, 1}, {3, 1, 1}}), cloud_of({{2, 1, 1}, {5, 1, 1}}));
  EXPECT_EQ(r.params.centroid, Vec3(2, 1, 1));
  EXPECT_DOUBLE_EQ(r.params.scale, 1.0);
  EXPECT_EQ(r.partial.points, (std::vector<Vec3>{{-1, 0, 0}, {1, 0, 0}}));
  EXPECT_EQ(r.complete.points, (std::vector<Vec3>{{0, 0, 0}, {3, 0, 0}}));
}

TEST(Normalization, CenteredUnitCloudIsFixedPoint) {
  const auto p = cloud_of({{1, 0, 0}, {-1, 0, 0}, {0, 0.5, 0}, {0, -0.5, 0}});
  const auto r = normalize_input_centric(p, p);
  EXPECT_NEAR(r.params.centroid.norm(), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(r.params.scale, 1.0);
  EXPECT_EQ(r.partial, p);
}

TEST(Normalization, RoundTripAndUnitBall) {
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    PointCloud p = random_cloud(rng, 50, 7.0);
    for (auto& v : p.points) v += Vec3(3, -2, 10);
    const PointCloud c = random_cloud(rng, 80, 9.0);
    const auto r = normalize_input_centric(p, c);
    EXPECT_NEAR(max_norm(r.partial), 1.0, 1e-6);
    const auto back_p = denormalize(r.partial, r.params);
    const auto back_c = denormalize(r.complete, r.params);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_LE((back_p[i] - p[i]).norm(), 1e-6 * p[i].norm());
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LE((back_c[i] - c[i]).norm(), 1e-6 * std::max(1.0, c[i].norm()));
  }
}

TEST(Normalization, CompleteMayLeaveUnitBall) {
  const auto r = normalize_input_centric(cloud_of({{-1, 0, 0}, {1, 0, 0}}), cloud_of({{4, 0, 0}}));
  EXPECT_DOUBLE_EQ(max_norm(r.complete), 4.0);
}

TEST(Normalization, DegeneratePartialIsZeroScale) {
  try {
    normalize_input_centric(cloud_of({{1, 2, 3}, {1, 2, 3}}), cloud_of({{0, 0, 0}}));
    FAIL() << "expected an error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("zero scale"), std::string::npos);
  }
}

TEST(Denormalize, OriginAndScaling) {
  EXPECT_EQ(denormalize(cloud_of({{0, 0, 0}}), {Vec3(1, 2, 3), 2.0}).points[0], Vec3(1, 2, 3));
  EXPECT_EQ(denormalize(cloud_of({{1, 0, 0}}), {Vec3(0, 0, 0), 3.0}).points[0], Vec3(3, 0, 0));
}

TEST(OutlierRemoval, RemovesFarPoint) {
  PointCloud c(fibonacci_sphere(100));
  c.points.emplace_back(10, 10, 10);
  const auto out = statistical_outlier_removal(c, 8, 2.0);
  ASSERT_EQ(out.size(), 100u);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(out[i], c[i]);
}

// With k <= 3 every grid point, corners included, has its k nearest
// neighbors at unit distance, so the statistic is constant.
TEST(OutlierRemoval, CleanGridUnchangedAndIdempotent) {
  PointCloud grid;
  for (int x = 0; x < 6; ++x)
    for (int y = 0; y < 6; ++y)
      for (int z = 0; z < 6; ++z) grid.points.emplace_back(x, y, z);
  const auto once = statistical_outlier_removal(grid, 3, 2.0);
  EXPECT_EQ(once, grid);
  EXPECT_EQ(statistical_outlier_removal(once, 3, 2.0), once);
}

TEST(OutlierRemoval, RequiresMoreThanKPoints) {
  EXPECT_THROW(statistical_outlier_removal(cloud_of({{0, 0, 0}, {1, 0, 0}}), 2, 2.0), InvalidArgument);
}

TEST(FibonacciSphere, LadderValues) {
  const auto one = fibonacci_sphere(1, 2.5);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_NEAR(one[0].y(), 0.0, 1e-15);
  EXPECT_NEAR(one[0].norm(), 2.5, 1e-12);
  const auto two = fibonacci_sphere(2);
  EXPECT_DOUBLE_EQ(two[0].y(), 0.5);
  EXPECT_DOUBLE_EQ(two[1].y(), -0.5);
  EXPECT_THROW(fibonacci_sphere(0), InvalidArgument);
}

TEST(FibonacciSphere, NormsDistinctAndDeterministic) {
  const auto a = fibonacci_sphere(200, 1.5);
  EXPECT_EQ(a, fibonacci_sphere(200, 1.5));
  std::set<std::tuple<double, double, double>> seen;
  for (const auto& v : a) {
    EXPECT_NEAR(v.norm(), 1.5, 1e-9);
    seen.emplace(v.x(), v.y(), v.z());
  }
  EXPECT_EQ(seen.size(), a.size());
}

TEST(FibonacciSphere, TwentyViewSeparation) {
  const auto v = fibonacci_sphere(20);
  double min_angle = 180.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j)
      min_angle = std::min(min_angle, std::acos(std::clamp(v[i].dot(v[j]), -1.0, 1.0)) * 180.0 / std::numbers::pi);
  EXPECT_GE(min_angle, 30.0);
  EXPECT_LE(min_angle, 45.0);
}

}  // namespace
}  // namespace mgpc
