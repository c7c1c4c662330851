// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "mgpc/geometry.hpp"
#include "mgpc/mesh.hpp"
#include "mgpc/rng.hpp"

namespace mgpc {

/// Pinhole camera. The principal point is fixed at (width/2, height/2) and
/// pixel (u, v) samples the image plane at exactly (u, v).
struct CameraPose {
  Vec3 position = Vec3(0.0, 0.0, 1.0);
  Vec3 look_at = Vec3::Zero();
  Vec3 up_hint = Vec3(0.0, 1.0, 0.0);
  double focal_px = 1.0;
  std::uint32_t width = 1;
  std::uint32_t height = 1;

  /// Columns are the camera axes in world coordinates: right (+u), down (+v),
  /// forward (+depth).
  Eigen::Matrix3d rotation() const;

  friend bool operator==(const CameraPose&, const CameraPose&) = default;
};

/// Pose looking at `target`, choosing an up hint that is not parallel to the
/// viewing direction.
CameraPose look_at_pose(const Vec3& position, const Vec3& target, double focal_px,
                        std::uint32_t width, std::uint32_t height);

/// Row-major RGB raster.
struct Image {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> rgb;

  friend bool operator==(const Image&, const Image&) = default;
};

struct DepthMap {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<double> depth;  // row-major, 0 = no hit
  Image image;

  double at(std::uint32_t u, std::uint32_t v) const { return depth[std::size_t{v} * width + u]; }
};

/// Z-buffer rasterization with flat headlight shading. Depth is measured
/// along the camera forward axis.
DepthMap render_depth(const TriangleMesh& mesh, const CameraPose& pose);

/// Lifts every non-zero depth pixel to a world-space point. Noise is applied
/// along the viewing ray with standard deviation noise_sigma_rel * depth,
/// truncated at three standard deviations.
PointCloud back_project(const DepthMap& dm, const CameraPose& pose, double noise_sigma_rel, Rng& rng);

}  // namespace mgpc
