// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace mgpc {

using Vec3 = Eigen::Vector3d;

/// Ordered set of 3D points. Coordinates are expected to be finite.
struct PointCloud {
  std::vector<Vec3> points;

  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> pts) : points(std::move(pts)) {}

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  const Vec3& operator[](std::size_t i) const { return points[i]; }
  Vec3& operator[](std::size_t i) { return points[i]; }

  bool all_finite() const noexcept;
  PointCloud select(std::span<const std::size_t> indices) const;

  friend bool operator==(const PointCloud& a, const PointCloud& b) { return a.points == b.points; }
};

/// Similarity transform recorded by input-centric normalization.
struct NormalizationParams {
  Vec3 centroid = Vec3::Zero();
  double scale = 1.0;

  friend bool operator==(const NormalizationParams&, const NormalizationParams&) = default;
};

struct NormalizedPair {
  PointCloud partial;
  PointCloud complete;
  NormalizationParams params;
};

struct NeighborList {
  std::vector<std::size_t> indices;
  std::vector<double> distances;  // Euclidean, ascending
};

struct Nearest {
  std::size_t index = 0;
  double dist2 = 0.0;
};

/// Greedy max-min subset selection starting at `seed_index`. Ties go to the
/// smallest index, so the result is a deterministic function of the input.
/// Every prefix of the result is itself the FPS result for that prefix size.
std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t k,
                                               std::size_t seed_index = 0);

/// Exact k nearest neighbors of every query point, ordered by distance and
/// then by index.
std::vector<NeighborList> knn(const PointCloud& cloud, const PointCloud& query, std::size_t k);

/// Nearest point of `cloud` for each query point; ties go to the smallest index.
std::vector<Nearest> nearest_neighbors(const PointCloud& cloud, const PointCloud& query);

/// Centers and scales both clouds by the partial's centroid and its maximum
/// radius, so the partial fits the closed unit ball.
NormalizedPair normalize_input_centric(const PointCloud& partial, const PointCloud& complete);
NormalizationParams compute_normalization(const PointCloud& partial);
PointCloud apply_normalization(const PointCloud& cloud, const NormalizationParams& params);
PointCloud denormalize(const PointCloud& cloud, const NormalizationParams& params);

inline constexpr std::size_t kSorDefaultK = 16;
inline constexpr double kSorDefaultStdRatio = 2.0;

/// Drops points whose mean distance to their k nearest neighbors exceeds
/// mean + std_ratio * stddev of that statistic over the cloud.
PointCloud statistical_outlier_removal(const PointCloud& cloud, std::size_t k = kSorDefaultK,
                                       double std_ratio = kSorDefaultStdRatio);

/// n near-uniform points on a sphere of the given radius (golden-angle spiral
/// with the y coordinate stepping from +1 to -1).
std::vector<Vec3> fibonacci_sphere(std::size_t n, double radius = 1.0);

double max_norm(const PointCloud& cloud);
Vec3 centroid(const PointCloud& cloud);

}  // namespace mgpc
