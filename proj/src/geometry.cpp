// SPDX-License-Identifier: Apache-2.0
#include "mgpc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "mgpc/error.hpp"

namespace mgpc {

bool PointCloud::all_finite() const noexcept {
  return std::all_of(points.begin(), points.end(), [](const Vec3& p) { return p.allFinite(); });
}

PointCloud PointCloud::select(std::span<const std::size_t> indices) const {
  PointCloud out;
  out.points.reserve(indices.size());
  for (std::size_t i : indices) out.points.push_back(points.at(i));
  return out;
}

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t k,
                                               std::size_t seed_index) {
  const std::size_t n = cloud.size();
  if (n == 0) throw InvalidArgument("farthest_point_sample: empty input");
  if (k == 0) throw InvalidArgument("farthest_point_sample: k must be positive");
  if (k > n) {
    throw InvalidArgument("farthest_point_sample: insufficient points (k=" + std::to_string(k) +
                          ", count=" + std::to_string(n) + ")");
  }
  if (seed_index >= n) throw InvalidArgument("farthest_point_sample: seed index out of range");

  std::vector<std::size_t> selected;
  selected.reserve(k);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::size_t current = seed_index;
  for (std::size_t step = 0; step < k; ++step) {
    selected.push_back(current);
    const Vec3 c = cloud[current];
    min_d2[current] = -1.0;
    std::size_t best = n;
    double best_d2 = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_d2[i] < 0.0) continue;
      const double d2 = (cloud[i] - c).squaredNorm();
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    current = best;
  }
  return selected;
}

namespace {

struct Candidate {
  double d2;
  std::size_t index;
  bool operator<(const Candidate& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
};

}  // namespace

std::vector<NeighborList> knn(const PointCloud& cloud, const PointCloud& query, std::size_t k) {
  if (k == 0) throw InvalidArgument("knn: k must be positive");
  if (k > cloud.size()) {
    throw InvalidArgument("knn: k=" + std::to_string(k) + " exceeds cloud size " +
                          std::to_string(cloud.size()));
  }
  std::vector<NeighborList> out(query.size());
  std::vector<Candidate> cand(cloud.size());
  for (std::size_t q = 0; q < query.size(); ++q) {
    const Vec3 p = query[q];
    for (std::size_t i = 0; i < cloud.size(); ++i) cand[i] = {(cloud[i] - p).squaredNorm(), i};
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    auto& list = out[q];
    list.indices.resize(k);
    list.distances.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
      list.indices[j] = cand[j].index;
      list.distances[j] = std::sqrt(cand[j].d2);
    }
  }
  return out;
}

std::vector<Nearest> nearest_neighbors(const PointCloud& cloud, const PointCloud& query) {
  if (cloud.empty()) throw InvalidArgument("nearest_neighbors: empty input");
  // Structure-of-arrays copy keeps the inner loop vectorizable.
  const std::size_t n = cloud.size();
  std::vector<double> xs(n), ys(n), zs(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = cloud[i].x();
    ys[i] = cloud[i].y();
    zs[i] = cloud[i].z();
  }
  std::vector<Nearest> out(query.size());
  for (std::size_t q = 0; q < query.size(); ++q) {
    const double px = query[q].x(), py = query[q].y(), pz = query[q].z();
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = xs[i] - px, dy = ys[i] - py, dz = zs[i] - pz;
      const double d2 = dx * dx + dy * dy + dz * dz;
      if (d2 < best) {
        best = d2;
        best_i = i;
      }
    }
    out[q] = {best_i, best};
  }
  return out;
}

Vec3 centroid(const PointCloud& cloud) {
  if (cloud.empty()) throw InvalidArgument("centroid: empty input");
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : cloud.points) c += p;
  return c / static_cast<double>(cloud.size());
}

double max_norm(const PointCloud& cloud) {
  double r = 0.0;
  for (const Vec3& p : cloud.points) r = std::max(r, p.norm());
  return r;
}

NormalizationParams compute_normalization(const PointCloud& partial) {
  if (partial.size() < 2) throw InvalidArgument("normalize_input_centric: need at least 2 points");
  NormalizationParams params;
  params.centroid = centroid(partial);
  double scale = 0.0;
  for (const Vec3& p : partial.points) scale = std::max(scale, (p - params.centroid).norm());
  if (!(scale > 0.0)) throw InvalidArgument("normalize_input_centric: zero scale");
  params.scale = scale;
  return params;
}

PointCloud apply_normalization(const PointCloud& cloud, const NormalizationParams& params) {
  if (!(params.scale > 0.0)) throw InvalidArgument("normalization scale must be positive");
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) out.points.push_back((p - params.centroid) / params.scale);
  return out;
}

NormalizedPair normalize_input_centric(const PointCloud& partial, const PointCloud& complete) {
  NormalizationParams params = compute_normalization(partial);
  return {apply_normalization(partial, params), apply_normalization(complete, params), params};
}

PointCloud denormalize(const PointCloud& cloud, const NormalizationParams& params) {
  if (!(params.scale > 0.0)) throw InvalidArgument("denormalize: scale must be positive");
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) out.points.push_back(p * params.scale + params.centroid);
  return out;
}

PointCloud statistical_outlier_removal(const PointCloud& cloud, std::size_t k, double std_ratio) {
  if (k == 0) throw InvalidArgument("statistical_outlier_removal: k must be positive");
  if (!(std_ratio > 0.0)) throw InvalidArgument("statistical_outlier_removal: std_ratio must be positive");
  if (cloud.size() <= k) {
    throw InvalidArgument("statistical_outlier_removal: need more than k=" + std::to_string(k) +
                          " points, got " + std::to_string(cloud.size()));
  }
  const auto neighbors = knn(cloud, cloud, k + 1);
  std::vector<double> mean_dist(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& nb = neighbors[i];
    // Exclude the point itself; with duplicates it may not sit at position 0.
    double sum = 0.0;
    std::size_t used = 0;
    bool skipped = false;
    for (std::size_t j = 0; j < nb.indices.size() && used < k; ++j) {
      if (!skipped && nb.indices[j] == i) {
        skipped = true;
        continue;
      }
      sum += nb.distances[j];
      ++used;
    }
    mean_dist[i] = sum / static_cast<double>(used);
  }
  const double n = static_cast<double>(cloud.size());
  const double mean = std::accumulate(mean_dist.begin(), mean_dist.end(), 0.0) / n;
  double var = 0.0;
  for (double d : mean_dist) var += (d - mean) * (d - mean);
  const double stddev = std::sqrt(var / (n - 1.0));
  const double threshold = mean + std_ratio * stddev;

  PointCloud out;
  out.points.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (mean_dist[i] <= threshold) out.points.push_back(cloud[i]);
  }
  return out;
}

std::vector<Vec3> fibonacci_sphere(std::size_t n, double radius) {
  if (n == 0) throw InvalidArgument("fibonacci_sphere: n must be positive");
  if (!(radius > 0.0)) throw InvalidArgument("fibonacci_sphere: radius must be positive");
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  const double step = 2.0 * std::numbers::pi * (1.0 - 1.0 / golden);
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double di = static_cast<double>(i);
    const double y = 1.0 - 2.0 * (di + 0.5) / static_cast<double>(n);
    const double ring = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = step * di;
    Vec3 d(std::cos(phi) * ring, y, std::sin(phi) * ring);
    out.push_back(radius * d / d.norm());
  }
  return out;
}

}  // namespace mgpc
