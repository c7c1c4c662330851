// SPDX-License-Identifier: Apache-2.0
#include "mgpc/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mgpc/error.hpp"

namespace mgpc {

namespace {

constexpr std::array<std::string_view, 8> kLabels = {
    "sphere", "hemisphere_bowl", "box", "cylinder", "cone", "capsule", "mug", "lamp"};

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

TriangleMesh tagged(TriangleMesh mesh, ShapeCategory c) {
  mesh.category_id = static_cast<std::uint32_t>(c);
  mesh.category_label = std::string(category_label(c));
  return mesh;
}

}  // namespace

std::string_view category_label(ShapeCategory c) {
  const auto i = static_cast<std::size_t>(c);
  if (i >= kLabels.size()) throw InvalidArgument("unknown shape category");
  return kLabels[i];
}

std::optional<ShapeCategory> parse_category(std::string_view label) {
  for (std::size_t i = 0; i < kLabels.size(); ++i) {
    if (kLabels[i] == label) return static_cast<ShapeCategory>(i);
  }
  return std::nullopt;
}

std::vector<std::string> all_category_labels() {
  return {kLabels.begin(), kLabels.end()};
}

double TriangleMesh::triangle_area(std::size_t t) const {
  const auto& tri = triangles[t];
  const Vec3 e1 = vertices[tri[1]] - vertices[tri[0]];
  const Vec3 e2 = vertices[tri[2]] - vertices[tri[0]];
  return 0.5 * e1.cross(e2).norm();
}

Vec3 TriangleMesh::triangle_normal(std::size_t t) const {
  const auto& tri = triangles[t];
  const Vec3 n = (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]);
  return n.normalized();
}

double TriangleMesh::bounding_radius() const {
  double r = 0.0;
  for (const Vec3& v : vertices) r = std::max(r, v.norm());
  return r;
}

Eigen::AlignedBox3d TriangleMesh::bounds() const {
  Eigen::AlignedBox3d box;
  for (const Vec3& v : vertices) box.extend(v);
  return box;
}

void TriangleMesh::validate() const {
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (std::uint32_t idx : triangles[t]) {
      if (idx >= vertices.size()) {
        throw InvalidArgument("mesh: triangle " + std::to_string(t) + " references vertex " +
                              std::to_string(idx) + " of " + std::to_string(vertices.size()));
      }
    }
    if (!(triangle_area(t) > 0.0)) {
      throw InvalidArgument("mesh: triangle " + std::to_string(t) + " is degenerate");
    }
  }
}

void TriangleMesh::append(const TriangleMesh& other) {
  const auto base = static_cast<std::uint32_t>(vertices.size());
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  for (const Triangle& t : other.triangles) triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
}

TriangleMesh revolve(std::span<const ProfilePoint> profile, std::uint32_t segments) {
  if (profile.size() < 2) throw InvalidArgument("revolve: profile needs at least 2 points");
  if (segments < 3) throw InvalidArgument("revolve: need at least 3 segments");
  TriangleMesh mesh;
  // First vertex index of each profile ring; pole rings hold one vertex.
  std::vector<std::uint32_t> ring_start;
  std::vector<bool> is_pole;
  for (const ProfilePoint& pp : profile) {
    ring_start.push_back(static_cast<std::uint32_t>(mesh.vertices.size()));
    const bool pole = pp.radius == 0.0;
    is_pole.push_back(pole);
    if (pole) {
      mesh.vertices.emplace_back(0.0, 0.0, pp.z);
      continue;
    }
    for (std::uint32_t s = 0; s < segments; ++s) {
      const double a = 2.0 * std::numbers::pi * s / segments;
      mesh.vertices.emplace_back(pp.radius * std::cos(a), pp.radius * std::sin(a), pp.z);
    }
  }
  for (std::size_t j = 0; j + 1 < profile.size(); ++j) {
    const std::uint32_t a0 = ring_start[j];
    const std::uint32_t b0 = ring_start[j + 1];
    if (is_pole[j] && is_pole[j + 1]) continue;
    for (std::uint32_t s = 0; s < segments; ++s) {
      const std::uint32_t s1 = (s + 1) % segments;
      if (is_pole[j]) {
        mesh.triangles.push_back({a0, b0 + s, b0 + s1});
      } else if (is_pole[j + 1]) {
        mesh.triangles.push_back({a0 + s, b0, a0 + s1});
      } else {
        mesh.triangles.push_back({a0 + s, b0 + s, b0 + s1});
        mesh.triangles.push_back({a0 + s, b0 + s1, a0 + s1});
      }
    }
  }
  return mesh;
}

namespace {

std::vector<ProfilePoint> sphere_profile(double radius, std::uint32_t rings, std::uint32_t last_ring) {
  std::vector<ProfilePoint> profile;
  for (std::uint32_t j = 0; j <= last_ring; ++j) {
    const double theta = std::numbers::pi * j / rings;
    // Snap the poles so their radius is exactly zero.
    const double r = (j == 0 || j == rings) ? 0.0 : radius * std::sin(theta);
    profile.push_back({r, radius * std::cos(theta)});
  }
  return profile;
}

}  // namespace

TriangleMesh make_uv_sphere(double radius, std::uint32_t rings, std::uint32_t segments) {
  if (!(radius > 0.0) || rings < 2) throw InvalidArgument("make_uv_sphere: bad parameters");
  const auto profile = sphere_profile(radius, rings, rings);
  return tagged(revolve(profile, segments), ShapeCategory::sphere);
}

TriangleMesh make_hemisphere_bowl(double radius, std::uint32_t rings, std::uint32_t segments) {
  if (!(radius > 0.0) || rings < 2 || rings % 2 != 0) {
    throw InvalidArgument("make_hemisphere_bowl: bad parameters");
  }
  const auto profile = sphere_profile(radius, rings, rings / 2);
  return tagged(revolve(profile, segments), ShapeCategory::hemisphere_bowl);
}

TriangleMesh make_box(const Vec3& extents) {
  if (!(extents.minCoeff() > 0.0)) throw InvalidArgument("make_box: extents must be positive");
  TriangleMesh mesh;
  const Vec3 h = extents / 2.0;
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.emplace_back((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(),
                               (i & 4) ? h.z() : -h.z());
  }
  // Two triangles per face.
  const std::array<std::array<std::uint32_t, 4>, 6> faces = {{
      {0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}}};
  for (const auto& f : faces) {
    mesh.triangles.push_back({f[0], f[1], f[2]});
    mesh.triangles.push_back({f[0], f[2], f[3]});
  }
  return tagged(std::move(mesh), ShapeCategory::box);
}

TriangleMesh make_cylinder(double radius, double height, std::uint32_t segments) {
  const double h = height / 2.0;
  const std::array<ProfilePoint, 4> profile = {{{0.0, h}, {radius, h}, {radius, -h}, {0.0, -h}}};
  return tagged(revolve(profile, segments), ShapeCategory::cylinder);
}

TriangleMesh make_cone(double radius, double height, std::uint32_t segments) {
  const double h = height / 2.0;
  const std::array<ProfilePoint, 3> profile = {{{0.0, h}, {radius, -h}, {0.0, -h}}};
  return tagged(revolve(profile, segments), ShapeCategory::cone);
}

TriangleMesh make_capsule(double radius, double height, std::uint32_t segments) {
  if (!(height > 2.0 * radius)) throw InvalidArgument("make_capsule: height must exceed diameter");
  const double straight = height / 2.0 - radius;
  constexpr std::uint32_t cap_rings = 8;
  std::vector<ProfilePoint> profile;
  for (std::uint32_t j = 0; j <= cap_rings; ++j) {
    const double theta = 0.5 * std::numbers::pi * j / cap_rings;
    profile.push_back({j == 0 ? 0.0 : radius * std::sin(theta), straight + radius * std::cos(theta)});
  }
  for (std::uint32_t j = 0; j <= cap_rings; ++j) {
    const double theta = 0.5 * std::numbers::pi * (1.0 + static_cast<double>(j) / cap_rings);
    profile.push_back({j == cap_rings ? 0.0 : radius * std::sin(theta),
                       -straight + radius * std::cos(theta)});
  }
  return tagged(revolve(profile, segments), ShapeCategory::capsule);
}

TriangleMesh make_mug(double radius, double height, double wall, std::uint32_t segments) {
  const double h = height / 2.0;
  const double inner = radius - wall;
  const std::array<ProfilePoint, 6> body = {{{0.0, -h + wall},
                                              {inner, -h + wall},
                                              {inner, h},
                                              {radius, h},
                                              {radius, -h},
                                              {0.0, -h}}};
  TriangleMesh mesh = revolve(body, segments);

  // Handle: outer half of a torus in the xz plane, ends buried in the wall.
  const double major = 0.3 * height;
  const double tube = 0.06 * height;
  constexpr std::uint32_t sweep = 16;
  constexpr std::uint32_t around = 12;
  TriangleMesh handle;
  for (std::uint32_t i = 0; i <= sweep; ++i) {
    const double t = std::numbers::pi * (-0.5 + static_cast<double>(i) / sweep);
    const Vec3 center(radius - 0.5 * wall + major * std::cos(t), 0.0, major * std::sin(t));
    const Vec3 radial(std::cos(t), 0.0, std::sin(t));
    const Vec3 binormal(0.0, 1.0, 0.0);
    for (std::uint32_t k = 0; k < around; ++k) {
      const double a = 2.0 * std::numbers::pi * k / around;
      handle.vertices.push_back(center + tube * (std::cos(a) * radial + std::sin(a) * binormal));
    }
  }
  for (std::uint32_t i = 0; i < sweep; ++i) {
    for (std::uint32_t k = 0; k < around; ++k) {
      const std::uint32_t k1 = (k + 1) % around;
      const std::uint32_t a = i * around, b = (i + 1) * around;
      handle.triangles.push_back({a + k, b + k, b + k1});
      handle.triangles.push_back({a + k, b + k1, a + k1});
    }
  }
  mesh.append(handle);
  return tagged(std::move(mesh), ShapeCategory::mug);
}

TriangleMesh make_lamp(double base_radius, double shade_radius, double height, std::uint32_t segments) {
  const double h = height / 2.0;
  const double base_top = -h + 0.06 * height;
  const double shade_height = 0.35 * height;
  const double pole_top = h - 0.5 * shade_height;
  const double pole_radius = 0.03;
  const std::array<ProfilePoint, 4> base = {{{0.0, base_top}, {base_radius, base_top},
                                             {base_radius, -h}, {0.0, -h}}};
  const std::array<ProfilePoint, 3> pole = {{{0.0, pole_top}, {pole_radius, pole_top},
                                             {pole_radius, base_top}}};
  const std::array<ProfilePoint, 2> shade = {{{0.6 * shade_radius, h},
                                              {shade_radius, h - shade_height}}};
  TriangleMesh mesh = revolve(base, segments);
  mesh.append(revolve(pole, segments));
  mesh.append(revolve(shade, segments));
  return tagged(std::move(mesh), ShapeCategory::lamp);
}

TriangleMesh generate_mesh(ShapeCategory category, Rng& rng) {
  TriangleMesh mesh;
  switch (category) {
    case ShapeCategory::sphere:
      mesh = make_uv_sphere(0.5 * uniform(rng, 0.5, 1.5));
      break;
    case ShapeCategory::hemisphere_bowl:
      mesh = make_hemisphere_bowl(0.5 * uniform(rng, 0.5, 1.5));
      break;
    case ShapeCategory::box: {
      const double x = uniform(rng, 0.5, 1.5);
      const double y = uniform(rng, 0.5, 1.5);
      const double z = uniform(rng, 0.5, 1.5);
      mesh = make_box(Vec3(x, y, z));
      break;
    }
    case ShapeCategory::cylinder: {
      const double d = uniform(rng, 0.5, 1.5);
      mesh = make_cylinder(0.5 * d, uniform(rng, 0.5, 1.5));
      break;
    }
    case ShapeCategory::cone: {
      const double d = uniform(rng, 0.5, 1.5);
      mesh = make_cone(0.5 * d, uniform(rng, 0.5, 1.5));
      break;
    }
    case ShapeCategory::capsule: {
      const double d = uniform(rng, 0.5, 1.0);
      mesh = make_capsule(0.5 * d, uniform(rng, d + 0.1, 1.5));
      break;
    }
    case ShapeCategory::mug: {
      const double d = uniform(rng, 0.5, 1.2);
      const double height = uniform(rng, 0.5, 1.5);
      mesh = make_mug(0.5 * d, height, 0.06 * d);
      break;
    }
    case ShapeCategory::lamp: {
      const double base = uniform(rng, 0.5, 0.9);
      const double shade = uniform(rng, 0.5, 1.2);
      mesh = make_lamp(0.5 * base, 0.5 * shade, uniform(rng, 0.8, 1.5));
      break;
    }
  }
  mesh.validate();
  return mesh;
}

PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, Rng& rng) {
  if (mesh.triangles.empty()) throw InvalidArgument("sample_surface: mesh has no triangles");
  std::vector<double> cumulative(mesh.triangle_count());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    total += mesh.triangle_area(t);
    cumulative[t] = total;
  }
  PointCloud out;
  out.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double target = uniform01(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    const std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                                                cumulative.size() - 1);
    const double r1 = std::sqrt(uniform01(rng));
    const double r2 = uniform01(rng);
    const auto& tri = mesh.triangles[t];
    out.points.push_back((1.0 - r1) * mesh.vertices[tri[0]] + r1 * (1.0 - r2) * mesh.vertices[tri[1]] +
                         r1 * r2 * mesh.vertices[tri[2]]);
  }
  return out;
}

namespace {

// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5).
Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

}  // namespace

double point_mesh_distance(const TriangleMesh& mesh, const Vec3& p) {
  if (mesh.triangles.empty()) throw InvalidArgument("point_mesh_distance: empty mesh");
  double best = std::numeric_limits<double>::infinity();
  for (const Triangle& t : mesh.triangles) {
    const Vec3 q = closest_on_triangle(p, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    best = std::min(best, (q - p).squaredNorm());
  }
  return std::sqrt(best);
}

}  // namespace mgpc
