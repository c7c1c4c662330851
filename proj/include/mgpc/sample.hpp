// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mgpc/geometry.hpp"
#include "mgpc/mesh.hpp"
#include "mgpc/render.hpp"
#include "mgpc/rng.hpp"

namespace mgpc {

struct GenConfig {
  std::size_t n_s = 512;
  std::size_t n_c = 2048;
  std::uint32_t image_width = 64;
  std::uint32_t image_height = 64;
  double noise_sigma_rel = 0.005;
  double camera_distance_factor = 2.5;  // times the mesh bounding radius
  double frame_fill = 0.7;              // projected bounding sphere diameter / image size
  std::size_t pool_factor = 4;          // dense surface pool = pool_factor * n_c
  std::size_t sor_k = kSorDefaultK;
  double sor_std_ratio = kSorDefaultStdRatio;
  double pad_jitter = 1e-4;
  // Filter thresholds (normalized units where applicable).
  double visibility_radius = 0.05;
  double min_visible_fraction = 0.05;
  double max_visible_fraction = 0.95;
  double min_extent_ratio = 1e-3;
};

/// One training pair. Clouds are stored normalized by the partial's
/// statistics, and every stored real is exactly representable as f32.
struct Sample {
  PointCloud partial;
  PointCloud complete;
  Image image;
  std::string text_label;
  NormalizationParams norm;
  CameraPose pose;
  std::uint32_t category_id = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

enum class RejectReason : std::uint8_t {
  none = 0,
  non_finite,
  too_few_raw_points,
  flat_partial,
  visible_fraction_too_low,
  visible_fraction_too_high,
};

std::string_view reject_reason_text(RejectReason r);

struct FilterResult {
  RejectReason reason = RejectReason::none;
  double visible_fraction = 0.0;

  bool accepted() const noexcept { return reason == RejectReason::none; }
};

/// Geometric quality gate on a raw (pre-padding) partial scan and its
/// complete cloud, both in world units.
FilterResult filter_sample(const PointCloud& partial_raw, const PointCloud& complete,
                           const GenConfig& config);

struct SampleResult {
  std::optional<Sample> sample;
  FilterResult filter;
};

/// Area-weighted surface pool reduced to n_c points by FPS.
PointCloud sample_complete(const TriangleMesh& mesh, std::size_t n_c, std::size_t pool_size, Rng& rng);

/// Brings a cloud to exactly n points: FPS when there are more, otherwise
/// keeps every point and appends jittered duplicates drawn with replacement.
PointCloud fit_point_count(const PointCloud& cloud, std::size_t n, double jitter, Rng& rng);

/// Renders `mesh` from `view`, builds the partial/complete pair and filters it.
SampleResult make_sample(const TriangleMesh& mesh, const CameraPose& view, const GenConfig& config,
                         Rng& rng);

/// Focal length placing the mesh bounding sphere at `frame_fill` of the image.
double framing_focal(const GenConfig& config);
/// Camera poses on a Fibonacci sphere around the mesh origin.
std::vector<CameraPose> fibonacci_views(const TriangleMesh& mesh, std::size_t views, const GenConfig& config);
/// Single camera on the +z axis looking at the origin.
CameraPose pole_view(const TriangleMesh& mesh, const GenConfig& config);

struct GenOptions {
  std::size_t meshes = 10;
  std::size_t views = 20;
  std::uint64_t seed = 0;
  std::vector<ShapeCategory> families{kAllCategories.begin(), kAllCategories.end()};
  bool pole_view_only = false;  // one +z view per mesh instead of the Fibonacci set
  std::size_t threads = 1;
  GenConfig config;
};

struct GenStats {
  std::size_t attempted = 0;
  std::size_t accepted = 0;
  std::map<RejectReason, std::size_t> rejections;
};

struct GeneratedSample {
  std::size_t mesh_index;
  std::size_t view_index;
  Sample sample;
};

struct GenOutput {
  std::vector<GeneratedSample> samples;  // ordered by (mesh, view)
  GenStats stats;
};

/// Mesh i uses family i % families.size(); every draw is seeded by
/// (seed, mesh index[, view index]) so the output does not depend on the
/// thread count.
GenOutput generate_samples(const GenOptions& options);

/// Held-out validation meshes are every tenth mesh.
inline bool is_validation_mesh(std::size_t mesh_index) { return mesh_index % 10 == 9; }

}  // namespace mgpc
