// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mgpc/geometry.hpp"

namespace mgpc::metrics {

inline constexpr double kDefaultFScoreThreshold = 0.01;
inline constexpr double kDefaultHyperAlpha = 1.0;
/// Chamfer columns in reports are multiplied by this factor.
inline constexpr double kReportCdScale = 1000.0;

/// Per-point term of the hyperbolic Chamfer distance,
/// arcosh(1 + alpha * distance). Shared with the training loss.
inline double hyperbolic_term(double distance, double alpha) { return std::acosh(1.0 + alpha * distance); }

/// Derivative of hyperbolic_term with respect to distance. Zero at distance 0,
/// where the term is not differentiable.
inline double hyperbolic_term_derivative(double distance, double alpha) {
  if (!(distance > 0.0)) return 0.0;
  const double u = alpha * distance;
  return alpha / std::sqrt(u * (u + 2.0));
}

/// Mean of squared nearest distances a->b plus the same for b->a.
double chamfer_l2(const PointCloud& a, const PointCloud& b);
/// Half the sum of the two directed mean nearest (unsquared) distances.
double chamfer_l1(const PointCloud& a, const PointCloud& b);
/// Sum of the two directed means of arcosh(1 + alpha * nearest distance).
double hyper_cd(const PointCloud& a, const PointCloud& b, double alpha = kDefaultHyperAlpha);

struct FScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

FScore f_score_detail(const PointCloud& pred, const PointCloud& gt, double threshold = kDefaultFScoreThreshold);
double f_score(const PointCloud& pred, const PointCloud& gt, double threshold = kDefaultFScoreThreshold);

struct SampleMetrics {
  double cd_l1 = 0.0;
  double cd_l2 = 0.0;
  double f_score = 0.0;
};

SampleMetrics evaluate_pair(const PointCloud& pred, const PointCloud& gt,
                            double threshold = kDefaultFScoreThreshold);

struct MetricsRow {
  std::size_t sample_id = 0;
  std::uint32_t category_id = 0;
  SampleMetrics values;
};

struct Aggregate {
  std::size_t count = 0;
  SampleMetrics mean;
};

/// Per-sample rows plus per-category and overall means (unscaled values).
struct MetricsReport {
  std::vector<MetricsRow> rows;
  std::map<std::uint32_t, Aggregate> per_category;
  Aggregate overall;
};

MetricsReport build_report(std::vector<MetricsRow> rows);

/// sample_id,category_id,cd_l1_x1000,cd_l2_x1000,f_score
void write_rows_csv(const std::string& path, const MetricsReport& report);
/// scope,category_id,count,cd_l1_x1000,cd_l2_x1000,f_score with one row per
/// category and a final "overall" row.
void write_summary_csv(const std::string& path, const MetricsReport& report);

}  // namespace mgpc::metrics
