// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Geometry>

#include "mgpc/geometry.hpp"
#include "mgpc/rng.hpp"

namespace mgpc {

enum class ShapeCategory : std::uint32_t {
  sphere = 0,
  hemisphere_bowl = 1,
  box = 2,
  cylinder = 3,
  cone = 4,
  capsule = 5,
  mug = 6,
  lamp = 7,
};

inline constexpr std::array<ShapeCategory, 8> kAllCategories = {
    ShapeCategory::sphere, ShapeCategory::hemisphere_bowl, ShapeCategory::box,
    ShapeCategory::cylinder, ShapeCategory::cone, ShapeCategory::capsule,
    ShapeCategory::mug, ShapeCategory::lamp};

std::string_view category_label(ShapeCategory c);
std::optional<ShapeCategory> parse_category(std::string_view label);
std::vector<std::string> all_category_labels();

using Triangle = std::array<std::uint32_t, 3>;

/// Triangle soup with shared vertices. Generated meshes are framed around the
/// origin, which is also the orbit center used for camera placement.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::uint32_t category_id = 0;
  std::string category_label;

  std::size_t vertex_count() const noexcept { return vertices.size(); }
  std::size_t triangle_count() const noexcept { return triangles.size(); }

  double triangle_area(std::size_t t) const;
  Vec3 triangle_normal(std::size_t t) const;
  /// Largest vertex distance from the origin.
  double bounding_radius() const;
  Eigen::AlignedBox3d bounds() const;

  /// Throws if an index is out of range or a triangle has zero area.
  void validate() const;

  void append(const TriangleMesh& other);
};

/// Profile point of a surface of revolution around +z: (radius, height).
struct ProfilePoint {
  double radius;
  double z;
};

/// Revolves a polyline profile around the z axis. Profile points with zero
/// radius collapse to a single pole vertex joined by a triangle fan.
TriangleMesh revolve(std::span<const ProfilePoint> profile, std::uint32_t segments);

inline constexpr std::uint32_t kSphereRings = 24;  // even, so the equator is a vertex ring
inline constexpr std::uint32_t kSphereSegments = 48;

TriangleMesh make_uv_sphere(double radius, std::uint32_t rings = kSphereRings,
                            std::uint32_t segments = kSphereSegments);
/// The upper (+z) half of make_uv_sphere with the same tessellation, open at
/// the equator. Seen from the +z side it is indistinguishable from the sphere.
TriangleMesh make_hemisphere_bowl(double radius, std::uint32_t rings = kSphereRings,
                                  std::uint32_t segments = kSphereSegments);
TriangleMesh make_box(const Vec3& extents);
TriangleMesh make_cylinder(double radius, double height, std::uint32_t segments = 48);
TriangleMesh make_cone(double radius, double height, std::uint32_t segments = 48);
TriangleMesh make_capsule(double radius, double height, std::uint32_t segments = 48);
TriangleMesh make_mug(double radius, double height, double wall, std::uint32_t segments = 48);
TriangleMesh make_lamp(double base_radius, double shade_radius, double height,
                       std::uint32_t segments = 48);

/// Randomized member of a shape family; extents are drawn from [0.5, 1.5].
/// sphere and hemisphere_bowl consume identical draws, so equal RNG states
/// give equal radii.
TriangleMesh generate_mesh(ShapeCategory category, Rng& rng);

/// Area-weighted uniform surface sampling.
PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, Rng& rng);

/// Exact Euclidean distance from a point to the closest triangle.
double point_mesh_distance(const TriangleMesh& mesh, const Vec3& p);

}  // namespace mgpc
