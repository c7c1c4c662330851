// SPDX-License-Identifier: Apache-2.0
#include "mgpc/sample.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <cmath>
#include <thread>

#include "mgpc/error.hpp"

namespace mgpc {

namespace {

// Kept out of line: GCC 11 SLP vectorization drops the narrowing round trip once inlined.
[[gnu::noinline]] double to_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

Vec3 to_f32(const Vec3& v) { return Vec3(to_f32(v.x()), to_f32(v.y()), to_f32(v.z())); }

PointCloud to_f32(const PointCloud& cloud) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) out.points.push_back(to_f32(p));
  return out;
}

// Salt separating the mesh-shape stream from the per-view streams.
constexpr std::uint64_t kMeshStream = 0x4d455348ULL;

}  // namespace

std::string_view reject_reason_text(RejectReason r) {
  switch (r) {
    case RejectReason::none: return "accepted";
    case RejectReason::non_finite: return "non-finite coordinate";
    case RejectReason::too_few_raw_points: return "too few raw points";
    case RejectReason::flat_partial: return "degenerate bounding box";
    case RejectReason::visible_fraction_too_low: return "visible fraction too low";
    case RejectReason::visible_fraction_too_high: return "visible fraction too high";
  }
  return "unknown";
}

FilterResult filter_sample(const PointCloud& partial_raw, const PointCloud& complete,
                           const GenConfig& config) {
  if (complete.empty()) throw InvalidArgument("filter_sample: complete cloud is empty");
  FilterResult result;
  if (!partial_raw.all_finite() || !complete.all_finite()) {
    result.reason = RejectReason::non_finite;
    return result;
  }
  if (partial_raw.size() < 2 || partial_raw.size() * 4 < config.n_s) {
    result.reason = RejectReason::too_few_raw_points;
    return result;
  }
  Eigen::AlignedBox3d box;
  for (const Vec3& p : partial_raw.points) box.extend(p);
  const Vec3 extent = box.sizes();
  if (!(extent.minCoeff() >= config.min_extent_ratio * extent.maxCoeff()) || extent.maxCoeff() == 0.0) {
    result.reason = RejectReason::flat_partial;
    return result;
  }
  const NormalizationParams params = compute_normalization(partial_raw);
  const PointCloud p_norm = apply_normalization(partial_raw, params);
  const PointCloud c_norm = apply_normalization(complete, params);
  const auto nearest = nearest_neighbors(p_norm, c_norm);
  const double r2 = config.visibility_radius * config.visibility_radius;
  std::size_t visible = 0;
  for (const Nearest& n : nearest) visible += n.dist2 <= r2 ? 1 : 0;
  result.visible_fraction = static_cast<double>(visible) / static_cast<double>(complete.size());
  if (result.visible_fraction < config.min_visible_fraction) {
    result.reason = RejectReason::visible_fraction_too_low;
  } else if (result.visible_fraction > config.max_visible_fraction) {
    result.reason = RejectReason::visible_fraction_too_high;
  }
  return result;
}

PointCloud sample_complete(const TriangleMesh& mesh, std::size_t n_c, std::size_t pool_size, Rng& rng) {
  const PointCloud pool = sample_surface(mesh, std::max(pool_size, n_c), rng);
  return pool.select(farthest_point_sample(pool, n_c, 0));
}

PointCloud fit_point_count(const PointCloud& cloud, std::size_t n, double jitter, Rng& rng) {
  if (cloud.empty()) throw InvalidArgument("fit_point_count: empty input");
  if (cloud.size() >= n) return cloud.select(farthest_point_sample(cloud, n, 0));
  PointCloud out = cloud;
  std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
  std::normal_distribution<double> gauss(0.0, jitter);
  while (out.size() < n) {
    const Vec3& src = cloud[pick(rng)];
    out.points.push_back(src + Vec3(gauss(rng), gauss(rng), gauss(rng)));
  }
  return out;
}

SampleResult make_sample(const TriangleMesh& mesh, const CameraPose& view, const GenConfig& config,
                         Rng& rng) {
  const DepthMap dm = render_depth(mesh, view);
  PointCloud raw = back_project(dm, view, config.noise_sigma_rel, rng);
  if (raw.size() > config.sor_k) raw = statistical_outlier_removal(raw, config.sor_k, config.sor_std_ratio);
  const PointCloud complete = sample_complete(mesh, config.n_c, config.pool_factor * config.n_c, rng);

  SampleResult result;
  result.filter = filter_sample(raw, complete, config);
  if (!result.filter.accepted()) return result;

  const PointCloud partial = fit_point_count(raw, config.n_s, config.pad_jitter, rng);
  NormalizedPair pair = normalize_input_centric(partial, complete);

  Sample s;
  s.partial = to_f32(pair.partial);
  s.complete = to_f32(pair.complete);
  s.norm.centroid = to_f32(pair.params.centroid);
  s.norm.scale = to_f32(pair.params.scale);
  s.pose = view;
  s.pose.position = to_f32(view.position);
  s.pose.look_at = to_f32(view.look_at);
  s.pose.up_hint = to_f32(view.up_hint);
  s.pose.focal_px = to_f32(view.focal_px);
  s.image = dm.image;
  s.text_label = mesh.category_label;
  s.category_id = mesh.category_id;
  result.sample = std::move(s);
  return result;
}

double framing_focal(const GenConfig& config) {
  const double half = 0.5 * static_cast<double>(std::min(config.image_width, config.image_height));
  const double angular_radius = std::asin(1.0 / config.camera_distance_factor);
  return config.frame_fill * half / std::tan(angular_radius);
}

std::vector<CameraPose> fibonacci_views(const TriangleMesh& mesh, std::size_t views, const GenConfig& config) {
  const double distance = config.camera_distance_factor * mesh.bounding_radius();
  std::vector<CameraPose> poses;
  for (const Vec3& p : fibonacci_sphere(views, distance)) {
    poses.push_back(look_at_pose(p, Vec3::Zero(), framing_focal(config), config.image_width,
                                 config.image_height));
  }
  return poses;
}

CameraPose pole_view(const TriangleMesh& mesh, const GenConfig& config) {
  const double distance = config.camera_distance_factor * mesh.bounding_radius();
  return look_at_pose(Vec3(0.0, 0.0, distance), Vec3::Zero(), framing_focal(config), config.image_width,
                      config.image_height);
}

GenOutput generate_samples(const GenOptions& options) {
  if (options.families.empty()) throw InvalidArgument("gen: no shape families selected");
  if (options.config.n_s == 0 || options.config.n_c == 0) throw InvalidArgument("gen: point counts must be positive");

  struct MeshResult {
    std::vector<GeneratedSample> samples;
    GenStats stats;
  };
  std::vector<MeshResult> per_mesh(options.meshes);

  auto work = [&](std::size_t m) {
    Rng mesh_rng = make_rng({options.seed, m, kMeshStream});
    const ShapeCategory family = options.families[m % options.families.size()];
    const TriangleMesh mesh = generate_mesh(family, mesh_rng);
    const auto poses = options.pole_view_only ? std::vector<CameraPose>{pole_view(mesh, options.config)}
                                              : fibonacci_views(mesh, options.views, options.config);
    MeshResult& out = per_mesh[m];
    for (std::size_t v = 0; v < poses.size(); ++v) {
      Rng rng = make_rng({options.seed, m, v});
      SampleResult r = make_sample(mesh, poses[v], options.config, rng);
      ++out.stats.attempted;
      if (r.sample) {
        ++out.stats.accepted;
        out.samples.push_back({m, v, std::move(*r.sample)});
      } else {
        ++out.stats.rejections[r.filter.reason];
      }
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, options.meshes));
  if (threads == 1) {
    for (std::size_t m = 0; m < options.meshes; ++m) work(m);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    std::exception_ptr failure;
    std::mutex failure_mu;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t m = next++; m < options.meshes; m = next++) {
          try {
            work(m);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
  }

  GenOutput output;
  for (MeshResult& r : per_mesh) {
    output.stats.attempted += r.stats.attempted;
    output.stats.accepted += r.stats.accepted;
    for (const auto& [reason, count] : r.stats.rejections) output.stats.rejections[reason] += count;
    for (GeneratedSample& s : r.samples) output.samples.push_back(std::move(s));
  }
  return output;
}

}  // namespace mgpc
