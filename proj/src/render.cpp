// SPDX-License-Identifier: Apache-2.0
#include "mgpc/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mgpc/error.hpp"

namespace mgpc {

Eigen::Matrix3d CameraPose::rotation() const {
  const Vec3 forward = (look_at - position).normalized();
  const Vec3 right = forward.cross(up_hint).normalized();
  const Vec3 down = forward.cross(right);
  Eigen::Matrix3d r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return r;
}

CameraPose look_at_pose(const Vec3& position, const Vec3& target, double focal_px,
                        std::uint32_t width, std::uint32_t height) {
  if ((position - target).norm() == 0.0) throw InvalidArgument("camera position equals look_at");
  CameraPose pose;
  pose.position = position;
  pose.look_at = target;
  const Vec3 forward = (target - position).normalized();
  pose.up_hint = std::abs(forward.y()) > 0.99 ? Vec3(0.0, 0.0, 1.0) : Vec3(0.0, 1.0, 0.0);
  pose.focal_px = focal_px;
  pose.width = width;
  pose.height = height;
  return pose;
}

DepthMap render_depth(const TriangleMesh& mesh, const CameraPose& pose) {
  if (pose.width == 0 || pose.height == 0) throw InvalidArgument("render_depth: empty image");
  if (!(pose.focal_px > 0.0)) throw InvalidArgument("render_depth: focal must be positive");
  if ((pose.position - pose.look_at).norm() == 0.0) throw InvalidArgument("camera position equals look_at");
  const std::size_t w = pose.width, h = pose.height;
  DepthMap dm;
  dm.width = pose.width;
  dm.height = pose.height;
  dm.depth.assign(w * h, 0.0);
  dm.image.width = pose.width;
  dm.image.height = pose.height;
  dm.image.rgb.assign(w * h * 3, 0);
  if (mesh.triangles.empty()) return dm;
  if (pose.position.norm() <= mesh.bounding_radius()) {
    throw InvalidArgument("render_depth: camera inside geometry");
  }

  const Eigen::Matrix3d rot_t = pose.rotation().transpose();
  const double cu = 0.5 * static_cast<double>(w);
  const double cv = 0.5 * static_cast<double>(h);
  const double f = pose.focal_px;
  std::vector<double> zbuf(w * h, std::numeric_limits<double>::infinity());
  std::vector<Vec3> cam(mesh.vertices.size());
  for (std::size_t i = 0; i < cam.size(); ++i) cam[i] = rot_t * (mesh.vertices[i] - pose.position);

  constexpr double kNear = 1e-9;
  constexpr double kEdgeEps = -1e-12;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec3& a = cam[tri[0]];
    const Vec3& b = cam[tri[1]];
    const Vec3& c = cam[tri[2]];
    if (a.z() <= kNear || b.z() <= kNear || c.z() <= kNear) continue;
    const double ax = f * a.x() / a.z() + cu, ay = f * a.y() / a.z() + cv;
    const double bx = f * b.x() / b.z() + cu, by = f * b.y() / b.z() + cv;
    const double cx = f * c.x() / c.z() + cu, cy = f * c.y() / c.z() + cv;
    const double area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    if (area == 0.0) continue;

    const long u0 = std::max(0L, static_cast<long>(std::ceil(std::min({ax, bx, cx}))));
    const long u1 = std::min(static_cast<long>(w) - 1, static_cast<long>(std::floor(std::max({ax, bx, cx}))));
    const long v0 = std::max(0L, static_cast<long>(std::ceil(std::min({ay, by, cy}))));
    const long v1 = std::min(static_cast<long>(h) - 1, static_cast<long>(std::floor(std::max({ay, by, cy}))));
    if (u0 > u1 || v0 > v1) continue;

    // Headlight Lambertian term; abs() because open meshes are two-sided.
    const Vec3 center_dir = ((a + b + c) / 3.0).normalized();
    const Vec3 normal = (b - a).cross(c - a).normalized();
    const double shade = 0.15 + 0.85 * std::abs(normal.dot(center_dir));
    const auto level = static_cast<std::uint8_t>(std::lround(std::clamp(shade, 0.0, 1.0) * 230.0));

    const double inv_area = 1.0 / area;
    for (long v = v0; v <= v1; ++v) {
      for (long u = u0; u <= u1; ++u) {
        const double px = static_cast<double>(u), py = static_cast<double>(v);
        const double l0 = ((bx - px) * (cy - py) - (by - py) * (cx - px)) * inv_area;
        const double l1 = ((cx - px) * (ay - py) - (cy - py) * (ax - px)) * inv_area;
        const double l2 = 1.0 - l0 - l1;
        if (l0 < kEdgeEps || l1 < kEdgeEps || l2 < kEdgeEps) continue;
        // 1/z is affine in screen space for a planar triangle.
        const double z = 1.0 / (l0 / a.z() + l1 / b.z() + l2 / c.z());
        const std::size_t idx = static_cast<std::size_t>(v) * w + static_cast<std::size_t>(u);
        if (z < zbuf[idx]) {
          zbuf[idx] = z;
          dm.depth[idx] = z;
          dm.image.rgb[idx * 3 + 0] = level;
          dm.image.rgb[idx * 3 + 1] = level;
          dm.image.rgb[idx * 3 + 2] = level;
        }
      }
    }
  }
  return dm;
}

PointCloud back_project(const DepthMap& dm, const CameraPose& pose, double noise_sigma_rel, Rng& rng) {
  if (dm.width != pose.width || dm.height != pose.height) {
    throw InvalidArgument("back_project: depth map does not match camera dimensions");
  }
  if (noise_sigma_rel < 0.0) throw InvalidArgument("back_project: noise must be non-negative");
  const Eigen::Matrix3d rot = pose.rotation();
  const double cu = 0.5 * static_cast<double>(dm.width);
  const double cv = 0.5 * static_cast<double>(dm.height);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PointCloud out;
  for (std::uint32_t v = 0; v < dm.height; ++v) {
    for (std::uint32_t u = 0; u < dm.width; ++u) {
      const double z = dm.at(u, v);
      if (!(z > 0.0)) continue;
      Vec3 p((static_cast<double>(u) - cu) * z / pose.focal_px,
             (static_cast<double>(v) - cv) * z / pose.focal_px, z);
      if (noise_sigma_rel > 0.0) {
        double e = gauss(rng);
        while (std::abs(e) > 3.0) e = gauss(rng);
        p += (e * noise_sigma_rel * z) * p.normalized();
      }
      out.points.push_back(pose.position + rot * p);
    }
  }
  return out;
}

}  // namespace mgpc
